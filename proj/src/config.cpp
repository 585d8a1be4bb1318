#include "ioodg/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ioodg/error.hpp"
#include "json.hpp"

namespace ioodg::config {
namespace {

using train::TrainConfig;

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  fail(ErrorCode::BadConfig, "bad value '" + std::string(value) + "' for key " + std::string(key));
}

double to_double(std::string_view key, std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) bad_value(key, s);
  return v;
}

std::uint64_t to_uint(std::string_view key, std::string_view s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) bad_value(key, s);
  return v;
}

bool to_bool(std::string_view key, std::string_view s) {
  if (s == "true") return true;
  if (s == "false") return false;
  bad_value(key, s);
}

std::string fmt_point(const geo::Point& p) { return fmt(p[0]) + " " + fmt(p[1]) + " " + fmt(p[2]); }

geo::Point to_point(std::string_view key, std::string_view s) {
  std::istringstream in{std::string(s)};
  std::string a, b, c, extra;
  if (!(in >> a >> b >> c) || (in >> extra)) bad_value(key, s);
  return {to_double(key, a), to_double(key, b), to_double(key, c)};
}

struct Key {
  const char* name;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, std::string_view)> set;
};

#define REAL(NAME, FIELD)                                                  \
  Key {                                                                    \
    NAME, [](const TrainConfig& c) { return fmt(c.FIELD); },               \
        [](TrainConfig& c, std::string_view v) { c.FIELD = to_double(NAME, v); } \
  }
#define COUNT(NAME, FIELD)                                                   \
  Key {                                                                      \
    NAME, [](const TrainConfig& c) { return std::to_string(c.FIELD); },      \
        [](TrainConfig& c, std::string_view v) { c.FIELD = to_uint(NAME, v); } \
  }
#define FLAG(NAME, FIELD)                                                      \
  Key {                                                                        \
    NAME, [](const TrainConfig& c) { return std::string(c.FIELD ? "true" : "false"); }, \
        [](TrainConfig& c, std::string_view v) { c.FIELD = to_bool(NAME, v); }  \
  }
#define POINT(NAME, FIELD)                                                    \
  Key {                                                                       \
    NAME, [](const TrainConfig& c) { return fmt_point(c.FIELD); },            \
        [](TrainConfig& c, std::string_view v) { c.FIELD = to_point(NAME, v); } \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      COUNT("seed", seed),
      REAL("learning_rate", learning_rate),
      REAL("weight_decay", weight_decay),
      COUNT("batch_size", batch_size),
      COUNT("epochs", epochs),
      COUNT("lr_decay_every", lr_decay_every),
      REAL("lr_decay_factor", lr_decay_factor),
      REAL("alpha", weights.alpha),
      REAL("beta", weights.beta),
      REAL("gamma", weights.gamma),
      Key{"ablation", [](const TrainConfig& c) { return std::string(train::ablation_name(c.ablation)); },
          [](TrainConfig& c, std::string_view v) {
            const auto a = train::parse_ablation(v);
            if (!a) bad_value("ablation", v);
            c.ablation = *a;
          }},
      Key{"task_branch",
          [](const TrainConfig& c) {
            return std::string(c.task_branch == train::TaskBranch::Both ? "both" : "original");
          },
          [](TrainConfig& c, std::string_view v) {
            if (v == "both") c.task_branch = train::TaskBranch::Both;
            else if (v == "original") c.task_branch = train::TaskBranch::Original;
            else bad_value("task_branch", v);
          }},
      FLAG("cd_all_layers", cd_all_layers),
      FLAG("normalize_local", normalize_local),
      REAL("grad_clip", grad_clip),
      COUNT("feature_dim", model.feature_dim),
      COUNT("hidden_dim", model.hidden_dim),
      COUNT("anchors", model.anchors),
      COUNT("layers", model.layers),
      REAL("radius", model.radius),
      REAL("leaky_slope", model.leaky_slope),
      POINT("aug_rotation_lo", augment.t1.rotation_lo),
      POINT("aug_rotation_hi", augment.t1.rotation_hi),
      REAL("aug_scale_lo", augment.t1.scale_lo),
      REAL("aug_scale_hi", augment.t1.scale_hi),
      REAL("aug_translate", augment.t1.translate_max),
      REAL("aug_keep_min", augment.keep_min),
      REAL("aug_keep_max", augment.keep_max),
      REAL("aug_resample_prob", augment.resample_prob),
      Key{"classes",
          [](const TrainConfig& c) {
            std::string s;
            for (auto k : c.benchmark.classes) s += (s.empty() ? "" : ",") + std::string(data::shape_name(k));
            return s;
          },
          [](TrainConfig& c, std::string_view v) {
            std::vector<data::ShapeKind> kinds;
            std::stringstream ss{std::string(v)};
            std::string item;
            while (std::getline(ss, item, ',')) {
              const auto k = data::parse_shape(trim(item));
              if (!k) bad_value("classes", v);
              kinds.push_back(*k);
            }
            if (kinds.empty()) bad_value("classes", v);
            c.benchmark.classes = kinds;
            c.model.num_classes = kinds.size();
          }},
      COUNT("train_per_class", benchmark.train_per_class),
      COUNT("test_per_class", benchmark.test_per_class),
      COUNT("points", benchmark.points),
      REAL("crop_fraction", benchmark.suite.crop_fraction),
      REAL("jitter_sigma", benchmark.suite.jitter_sigma),
      REAL("density_bias", benchmark.suite.density_bias),
      COUNT("outlier_count", benchmark.suite.outlier_count),
      REAL("outlier_range", benchmark.suite.outlier_range),
  };
  return table;
}

#undef REAL
#undef COUNT
#undef FLAG
#undef POINT

}  // namespace

std::vector<std::pair<std::string, std::string>> entries(const TrainConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys()) out.emplace_back(k.name, k.get(config));
  return out;
}

void apply(TrainConfig& config, std::string_view key, std::string_view value) {
  for (const auto& k : keys())
    if (key == k.name) {
      k.set(config, trim(value));
      return;
    }
  fail(ErrorCode::BadConfig, "unknown config key: " + std::string(key));
}

TrainConfig parse(std::string_view text) {
  TrainConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::BadConfig, "config line " + std::to_string(line_no) + ": expected key = value");
    apply(config, trim(std::string_view(body).substr(0, eq)), trim(std::string_view(body).substr(eq + 1)));
  }
  train::validate(config);
  return config;
}

TrainConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string serialize(const TrainConfig& config) {
  std::string out;
  for (const auto& [k, v] : entries(config)) out += k + " = " + v + "\n";
  return out;
}

std::string to_json(const TrainConfig& config) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [k, v] : entries(config)) j[k] = v;
  return j.dump(2);
}

TrainConfig from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, std::string("config sidecar: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::ParseError, "config sidecar is not a JSON object");
  TrainConfig config;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) fail(ErrorCode::BadConfig, "config sidecar value for " + k + " is not a string");
    apply(config, k, v.get<std::string>());
  }
  train::validate(config);
  return config;
}

}  // namespace ioodg::config
