#include "cowmask/run_config.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>

#include "cowmask/error.hpp"

namespace cowmask {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key, "expected a number, got '" + v + "'");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key, "expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t to_uint64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

int to_int32(const std::string& key, const std::string& v) {
  const long long x = to_int(key, v);
  if (x < -2147483647LL || x > 2147483647LL) throw ConfigError(key, "integer out of range");
  return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "expected true/false, got '" + v + "'");
}

std::vector<nn::LrMilestone> to_schedule(const std::string& key, const std::string& v) {
  std::vector<nn::LrMilestone> out;
  std::string_view rest = v;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const std::string item = trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(key, "expected epoch:factor, got '" + item + "'");
    out.push_back({to_int32(key, trim(item.substr(0, colon))), to_double(key, trim(item.substr(colon + 1)))});
  }
  return out;
}

std::string shortest(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string schedule_text(const std::vector<nn::LrMilestone>& s) {
  std::string out;
  for (const auto& m : s) {
    if (!out.empty()) out += ',';
    out += std::to_string(m.epoch) + ':' + shortest(m.factor);
  }
  return out;
}

using Applier = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Applier>& appliers() {
  static const std::map<std::string, Applier> table = {
      {"mode", [](RunConfig& c, auto& k, auto& v) { (void)k; c.train.mode = parse_train_mode(v); }},
      {"omega", [](RunConfig& c, auto& k, auto& v) { c.train.omega = to_double(k, v); }},
      {"psi", [](RunConfig& c, auto& k, auto& v) { c.train.psi = to_double(k, v); }},
      {"alpha", [](RunConfig& c, auto& k, auto& v) { c.train.alpha = to_double(k, v); }},
      {"sigma_min", [](RunConfig& c, auto& k, auto& v) { c.train.sigma_min = to_double(k, v); }},
      {"sigma_max", [](RunConfig& c, auto& k, auto& v) { c.train.sigma_max = to_double(k, v); }},
      {"p_min", [](RunConfig& c, auto& k, auto& v) { c.train.p_min = to_double(k, v); }},
      {"p_max", [](RunConfig& c, auto& k, auto& v) { c.train.p_max = to_double(k, v); }},
      {"ict_beta", [](RunConfig& c, auto& k, auto& v) { c.train.ict_beta = to_double(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = to_int32(k, v); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = to_int32(k, v); }},
      {"labels", [](RunConfig& c, auto& k, auto& v) { c.train.n_labeled = to_int32(k, v); }},
      {"class_balanced", [](RunConfig& c, auto& k, auto& v) { c.train.class_balanced = to_bool(k, v); }},
      {"lr", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); }},
      {"momentum", [](RunConfig& c, auto& k, auto& v) { c.train.momentum = to_double(k, v); }},
      {"weight_decay", [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = to_double(k, v); }},
      {"lr_schedule", [](RunConfig& c, auto& k, auto& v) { c.train.lr_schedule = to_schedule(k, v); }},
      {"pad", [](RunConfig& c, auto& k, auto& v) { c.train.pad_pixels = to_int32(k, v); }},
      {"flip_prob", [](RunConfig& c, auto& k, auto& v) { c.train.flip_prob = to_double(k, v); }},
      {"conv1", [](RunConfig& c, auto& k, auto& v) { c.train.conv1 = to_int32(k, v); }},
      {"conv2", [](RunConfig& c, auto& k, auto& v) { c.train.conv2 = to_int32(k, v); }},
      {"hidden", [](RunConfig& c, auto& k, auto& v) { c.train.hidden = to_int32(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = to_uint64(k, v); }},
      {"dataset", [](RunConfig& c, auto& k, auto& v) { (void)k; c.dataset = v; }},
      {"synthetic_classes", [](RunConfig& c, auto& k, auto& v) { c.synthetic.classes = to_int32(k, v); }},
      {"synthetic_size", [](RunConfig& c, auto& k, auto& v) { c.synthetic.size = to_int32(k, v); }},
      {"synthetic_train", [](RunConfig& c, auto& k, auto& v) { c.synthetic.train_count = to_int32(k, v); }},
      {"synthetic_test", [](RunConfig& c, auto& k, auto& v) { c.synthetic.test_count = to_int32(k, v); }},
      {"synthetic_noise", [](RunConfig& c, auto& k, auto& v) { c.synthetic.noise_level = to_double(k, v); }},
      {"synthetic_contrast", [](RunConfig& c, auto& k, auto& v) { c.synthetic.contrast = to_double(k, v); }},
      {"synthetic_jitter", [](RunConfig& c, auto& k, auto& v) { c.synthetic.amplitude_jitter = to_double(k, v); }},
      {"synthetic_gap", [](RunConfig& c, auto& k, auto& v) { c.synthetic.band_gap = to_double(k, v); }},
  };
  return table;
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (dataset == "synthetic") {
    synthetic.validate();
  } else if (!dataset.starts_with("idx:") && !dataset.starts_with("cifar:")) {
    throw ConfigError("dataset", "expected synthetic, idx:DIR or cifar:DIR");
  }
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, fn] : appliers()) k.push_back(name);
    return k;
  }();
  return keys;
}

std::vector<Setting> parse_settings(std::string_view text) {
  std::vector<Setting> out;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no), "expected key = value");
    out.emplace_back(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
  }
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = appliers();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(key, "unknown configuration key");
  it->second(cfg, key, value);
}

RunConfig resolve_run_config(const std::vector<Setting>& settings) {
  TrainMode mode = TrainMode::cowmix;
  for (const auto& [k, v] : settings)
    if (k == "mode") mode = parse_train_mode(v);
  RunConfig cfg;
  cfg.train = TrainConfig::defaults_for(mode);
  for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
  return cfg;
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(to_string(c.mode));
  j["omega"] = c.omega;
  j["psi"] = c.psi;
  j["alpha"] = c.alpha;
  j["sigma_min"] = c.sigma_min;
  j["sigma_max"] = c.sigma_max;
  j["p_min"] = c.p_min;
  j["p_max"] = c.p_max;
  j["ict_beta"] = c.ict_beta;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["labels"] = c.n_labeled;
  j["class_balanced"] = c.class_balanced;
  j["lr"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["lr_schedule"] = schedule_text(c.resolved_schedule());
  j["pad"] = c.pad_pixels;
  j["flip_prob"] = c.flip_prob;
  j["conv1"] = c.conv1;
  j["conv2"] = c.conv2;
  j["hidden"] = c.hidden;
  j["seed"] = c.seed;
  return j;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j = to_json(c.train);
  j["dataset"] = c.dataset;
  j["synthetic_classes"] = c.synthetic.classes;
  j["synthetic_size"] = c.synthetic.size;
  j["synthetic_train"] = c.synthetic.train_count;
  j["synthetic_test"] = c.synthetic.test_count;
  j["synthetic_noise"] = c.synthetic.noise_level;
  j["synthetic_contrast"] = c.synthetic.contrast;
  j["synthetic_jitter"] = c.synthetic.amplitude_jitter;
  j["synthetic_gap"] = c.synthetic.band_gap;
  return j;
}

namespace {

std::vector<Setting> settings_from_json(const nlohmann::ordered_json& j) {
  std::vector<Setting> s;
  for (const auto& [key, value] : j.items()) {
    std::string text;
    if (value.is_string()) text = value.get<std::string>();
    else if (value.is_boolean()) text = value.get<bool>() ? "true" : "false";
    else if (value.is_number_unsigned()) text = std::to_string(value.get<std::uint64_t>());
    else if (value.is_number_integer()) text = std::to_string(value.get<long long>());
    else if (value.is_number_float()) text = shortest(value.get<double>());
    else {
      throw ConfigError(key, "unsupported JSON value");
    }
    s.emplace_back(key, text);
  }
  return s;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ConfigError("manifest", "expected a JSON object");
  return resolve_run_config(settings_from_json(j));
}

TrainConfig train_config_from_json(const nlohmann::ordered_json& j) {
  return run_config_from_json(j).train;
}

std::pair<Dataset, Dataset> load_run_datasets(const RunConfig& cfg) {
  if (cfg.dataset == "synthetic") return make_synthetic(cfg.synthetic, cfg.train.seed);
  namespace fs = std::filesystem;
  if (cfg.dataset.starts_with("idx:")) {
    const fs::path dir = cfg.dataset.substr(4);
    Dataset train = load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    Dataset test = load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    const int k = std::max(train.num_classes, test.num_classes);
    train.num_classes = test.num_classes = k;
    for (auto& id : test.ids) id += train.size();
    return {std::move(train), std::move(test)};
  }
  if (cfg.dataset.starts_with("cifar:")) {
    const fs::path dir = cfg.dataset.substr(6);
    std::vector<Dataset> parts;
    for (int b = 1; b <= 5; ++b) {
      const fs::path p = dir / ("data_batch_" + std::to_string(b) + ".bin");
      if (fs::exists(p)) parts.push_back(load_cifar_binary(p));
    }
    if (parts.empty()) throw DataError(DataErrorKind::io, "no CIFAR training batches in " + dir.string());
    Dataset train = concat(std::move(parts));
    Dataset test = load_cifar_binary(dir / "test_batch.bin");
    for (auto& id : test.ids) id += train.size();
    return {std::move(train), std::move(test)};
  }
  throw ConfigError("dataset", "expected synthetic, idx:DIR or cifar:DIR");
}

}  // namespace cowmask
