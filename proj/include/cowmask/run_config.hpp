#pragma once

#include <json.hpp>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cowmask/dataset.hpp"
#include "cowmask/ssl.hpp"

namespace cowmask {

/// A training run: hyper-parameters plus where the data comes from.
///
/// `dataset` is one of
///   synthetic      generated from `synthetic` with the run seed
///   idx:DIR        DIR/{train,t10k}-{images-idx3,labels-idx1}-ubyte
///   cifar:DIR      DIR/data_batch_{1..5}.bin and DIR/test_batch.bin
struct RunConfig {
  TrainConfig train;
  std::string dataset = "synthetic";
  SyntheticSpec synthetic;

  void validate() const;
};

/// Config file format: one `key = value` per line; `#` starts a comment;
/// blank lines are ignored. Keys are the long CLI flag names with dashes
/// replaced by underscores (see config_keys()). `lr_schedule` takes
/// comma-separated `epoch:factor` pairs.
using Setting = std::pair<std::string, std::string>;

std::vector<Setting> parse_settings(std::string_view text);
const std::vector<std::string>& config_keys();

/// Starts from TrainConfig::defaults_for(mode), where mode is the last `mode`
/// setting (cowmix when absent), then applies every setting in order.
/// Throws ConfigError naming the offending key.
RunConfig resolve_run_config(const std::vector<Setting>& settings);
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);

nlohmann::ordered_json to_json(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const RunConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::ordered_json& j);
RunConfig run_config_from_json(const nlohmann::ordered_json& j);

/// Train and test splits named by cfg.dataset.
std::pair<Dataset, Dataset> load_run_datasets(const RunConfig& cfg);

}  // namespace cowmask
