#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ioodg/training.hpp"

namespace ioodg::config {

/// Every recognised key with its current value, in file order.
std::vector<std::pair<std::string, std::string>> entries(const train::TrainConfig& config);

/// Sets one key. BadConfig names the key for unknown keys and bad values.
void apply(train::TrainConfig& config, std::string_view key, std::string_view value);

/// Flat "key = value" text; '#' starts a comment. Keys not given keep their
/// defaults. Unknown keys are rejected.
train::TrainConfig parse(std::string_view text);
train::TrainConfig load(const std::filesystem::path& path);

/// Every key, one per line; parse(serialize(c)) reproduces c.
std::string serialize(const train::TrainConfig& config);

/// JSON object of the same key/value pairs (checkpoint sidecar).
std::string to_json(const train::TrainConfig& config);
train::TrainConfig from_json(std::string_view text);

}  // namespace ioodg::config
