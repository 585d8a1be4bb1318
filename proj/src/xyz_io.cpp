#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string>

#include "ioodg/data.hpp"
#include "ioodg/error.hpp"

namespace ioodg::data {

void save_xyz(const geo::PointCloud& cloud, const std::filesystem::path& path, std::string_view comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  // Every comment line gets its own '#'.
  for (std::size_t at = 0; !comment.empty() && at <= comment.size();) {
    const std::size_t nl = std::min(comment.find('\n', at), comment.size());
    out << "# " << comment.substr(at, nl - at) << '\n';
    at = nl + 1;
  }
  // Shortest round-trip formatting: load_xyz(save_xyz(c)) == c exactly.
  char buf[64];
  for (const auto& p : cloud) {
    for (int a = 0; a < 3; ++a) {
      const auto res = std::to_chars(buf, buf + sizeof buf, p[a]);
      if (a) out.put(' ');
      out.write(buf, res.ptr - buf);
    }
    out.put('\n');
  }
  if (!out.flush()) fail(ErrorCode::IoError, "failed writing " + path.string());
}

geo::PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<geo::Point> pts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const char* cur = line.data() + first;
    const char* end = line.data() + line.size();
    geo::Point p{};
    for (int a = 0; a < 3; ++a) {
      while (cur < end && (*cur == ' ' || *cur == '\t')) ++cur;
      if (cur < end && *cur == '+') ++cur;
      const auto res = std::from_chars(cur, end, p[a]);
      if (res.ec != std::errc{} || !std::isfinite(p[a]))
        fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected 3 numbers in '" +
                                        line + "'");
      cur = res.ptr;
    }
    while (cur < end && (*cur == ' ' || *cur == '\t')) ++cur;
    if (cur != end)
      fail(ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": trailing text in '" + line + "'");
    pts.push_back(p);
  }
  if (pts.empty()) fail(ErrorCode::ParseError, path.string() + ": no points");
  return geo::PointCloud(std::move(pts));
}

}  // namespace ioodg::data
