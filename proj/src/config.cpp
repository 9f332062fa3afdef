#include <charconv>
#include <fstream>
#include <sstream>

#include "rseg/harness.hpp"

namespace rseg {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size())
    throw ConfigError("config: invalid value '" + value + "' for key '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: invalid boolean '" + value + "' for key '" + key + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::string_view rest = value;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    out.push_back(parse_number<int>(key, std::string(trim(rest.substr(0, comma)))));
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  return out;
}

// Keys shared by train and suite configs; returns false when the key is not one of them.
bool apply_common(NetworkSpec& net, AdamConfig& adam, int& epochs, int& warmup, int& batch, double& clamp_eps,
                  const std::string& key, const std::string& value) {
  if (key == "in_channels") net.in_channels = parse_number<int>(key, value);
  else if (key == "num_classes") net.num_classes = parse_number<int>(key, value);
  else if (key == "base_width") net.base_width = parse_number<int>(key, value);
  else if (key == "depth") net.depth = parse_number<int>(key, value);
  else if (key == "optimizer") {
    if (value != "adam") throw ConfigError("config: only optimizer=adam is supported");
  } else if (key == "lr") adam.lr = parse_number<double>(key, value);
  else if (key == "adam_beta1") adam.beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") adam.beta2 = parse_number<double>(key, value);
  else if (key == "adam_eps") adam.eps = parse_number<double>(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "warmup_epochs") warmup = parse_number<int>(key, value);
  else if (key == "batch_size") batch = parse_number<int>(key, value);
  else if (key == "clamp_eps") clamp_eps = parse_number<double>(key, value);
  else return false;
  return true;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (out.count(key)) throw ConfigError("config: duplicate key '" + key + "'");
    out[key] = std::string(trim(line.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

void apply_train_config(TrainConfig& config, const KeyValues& values) {
  for (const auto& [key, value] : values) {
    if (apply_common(config.network, config.optimizer, config.epochs, config.warmup_epochs, config.batch_size,
                     config.loss.clamp_eps, key, value))
      continue;
    if (key == "data_dir") config.data_dir = value;
    else if (key == "loss") config.loss.kind = parse_loss_kind(value);
    else if (key == "beta") config.loss.beta = parse_number<double>(key, value);
    else if (key == "rare_class_threshold") config.loss.rare_class_threshold = parse_number<double>(key, value);
    else if (key == "rare_class_set") config.loss.rare_class_set = parse_int_list(key, value);
    else if (key == "seed") config.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "label_source") config.label_source = parse_label_source(value);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

void apply_suite_config(SuiteConfig& config, const KeyValues& values) {
  for (const auto& [key, value] : values) {
    if (apply_common(config.network, config.optimizer, config.epochs, config.warmup_epochs, config.batch_size,
                     config.clamp_eps, key, value))
      continue;
    if (key == "count") config.count = parse_number<std::size_t>(key, value);
    else if (key == "resolution") config.resolution = parse_number<Index>(key, value);
    else if (key == "noise_preset") config.noise_preset = value;
    else if (key == "beta") config.beta = parse_number<double>(key, value);
    else if (key == "include_hybrid") config.include_hybrid = parse_bool(key, value);
    else if (key == "hybrid_rare_classes") config.hybrid_rare_classes = parse_int_list(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

}  // namespace rseg
