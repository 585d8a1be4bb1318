#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ioodg/autodiff.hpp"

namespace ioodg::ckpt {

// Binary layout, all integers u32 little-endian:
//   "IOODG001" | count | { name_len | name | rank | dims[rank] | f32 data }*
inline constexpr char kMagic[8] = {'I', 'O', 'O', 'D', 'G', '0', '0', '1'};

struct Entry {
  std::string name;
  ad::Tensor tensor;
};

/// Values are narrowed to float32 on write.
void write_checkpoint(const std::filesystem::path& path, const std::vector<Entry>& entries);

/// IoError on a missing or truncated file, BadMagic on a foreign header.
std::vector<Entry> read_checkpoint(const std::filesystem::path& path);

}  // namespace ioodg::ckpt
