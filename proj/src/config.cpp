#include "ssbjam/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ssbjam {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream in(s);
  while (std::getline(in, part, sep)) out.push_back(trim(part));
  return out;
}

template <typename V>
bool parse_number(const std::string& s, V& out) {
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto [end, ec] = std::from_chars(b, e, out);
  return b != e && ec == std::errc{} && end == e;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& source) {
  KeyValueConfig cfg;
  cfg.source_ = source;
  std::istringstream in(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(std::string_view(raw).substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(source + ": expected key=value", line);
    const std::string key = trim(std::string_view(s).substr(0, eq));
    if (key.empty()) throw ParseError(source + ": empty key", line);
    cfg.values_[key] = {trim(std::string_view(s).substr(eq + 1)), line};
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) { values_[key] = {value, 0}; }

const KeyValueConfig::Entry* KeyValueConfig::find(const std::string& key) const {
  const auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void KeyValueConfig::fail(const std::string& key, const std::string& what) const {
  const Entry* e = find(key);
  throw ParseError(source_ + ": key '" + key + "': " + what, e ? e->line : 0);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const Entry* e = find(key);
  return e ? e->value : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  double v = 0.0;
  if (!parse_number(e->value, v) || !std::isfinite(v)) fail(key, "expected a number, got '" + e->value + "'");
  return v;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::size_t v = 0;
  if (!parse_number(e->value, v)) fail(key, "expected a nonnegative integer, got '" + e->value + "'");
  return v;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  std::uint64_t v = 0;
  if (!parse_number(e->value, v)) fail(key, "expected a nonnegative integer, got '" + e->value + "'");
  return v;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  fail(key, "expected true or false, got '" + e->value + "'");
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  const auto parts = split(e->value, e->value.find(':') != std::string::npos ? ':' : ',');
  std::vector<double> nums;
  for (const auto& p : parts) {
    double v = 0.0;
    if (!parse_number(p, v) || !std::isfinite(v)) fail(key, "expected numbers, got '" + p + "'");
    nums.push_back(v);
  }
  if (e->value.find(':') != std::string::npos) {
    if (nums.size() != 3) fail(key, "range form is first:last:step");
    try {
      return linear_grid(nums[0], nums[1], nums[2]);
    } catch (const InvalidArgument& ex) {
      fail(key, ex.what());
    }
  }
  if (nums.empty()) fail(key, "empty list");
  return nums;
}

std::vector<std::string> KeyValueConfig::get_strings(const std::string& key,
                                                     const std::vector<std::string>& fallback) const {
  const Entry* e = find(key);
  if (!e) return fallback;
  auto parts = split(e->value, ',');
  if (parts.empty() || std::any_of(parts.begin(), parts.end(), [](const auto& p) { return p.empty(); })) {
    fail(key, "expected a comma-separated list");
  }
  return parts;
}

void KeyValueConfig::require_known(const std::vector<std::string>& known) const {
  for (const auto& [key, entry] : values_) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParseError(source_ + ": unknown key '" + key + "'", entry.line);
    }
  }
}

std::vector<std::string> KeyValueConfig::keys() const {
  std::vector<std::string> k;
  for (const auto& [key, entry] : values_) k.push_back(key);
  return k;
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "dataset.n_obs_per_class", "dataset.seed", "dataset.n_fft", "dataset.scs_hz", "dataset.sjnr_grid_db",
      "dataset.distance_grid_m", "dataset.modulations", "dataset.band_subcarriers", "dataset.tx_power_db",
      "dataset.noise_temperature_k", "dataset.feasibility_margin_db", "dataset.threads",
      "dataset.receiver_agc",
      "channel.profile", "channel.delay_spread_ns", "channel.n_taps", "channel.carrier_hz",
      "channel.los_k_factor_db",
      "jammer.kind", "jammer.coverage",
      "train.batch_size", "train.learning_rate", "train.momentum", "train.max_epochs",
      "train.validation_fraction", "train.validation_frequency", "train.seed",
      "model.conv_channels", "model.fc_hidden",
      "detector.delta_fa", "detector.sjnr_cutoff_db", "detector.calibration_fraction"};
  return keys;
}

ScenarioConfig scenario_from_config(const KeyValueConfig& c, ScenarioConfig s) {
  s.n_obs_per_class = c.get_size("dataset.n_obs_per_class", s.n_obs_per_class);
  s.master_seed = c.get_u64("dataset.seed", s.master_seed);
  s.n_fft = c.get_size("dataset.n_fft", s.n_fft);
  s.scs_hz = c.get_double("dataset.scs_hz", s.scs_hz);
  s.sjnr_grid_db = c.get_doubles("dataset.sjnr_grid_db", s.sjnr_grid_db);
  s.distance_grid_m = c.get_doubles("dataset.distance_grid_m", s.distance_grid_m);
  if (c.has("dataset.modulations")) {
    s.modulations.clear();
    for (const auto& m : c.get_strings("dataset.modulations", {})) s.modulations.push_back(parse_modulation(m));
  }
  s.band_subcarriers = c.get_size("dataset.band_subcarriers", s.band_subcarriers);
  s.tx_power_db = c.get_double("dataset.tx_power_db", s.tx_power_db);
  s.noise_temperature_k = c.get_double("dataset.noise_temperature_k", s.noise_temperature_k);
  s.feasibility_margin_db = c.get_double("dataset.feasibility_margin_db", s.feasibility_margin_db);
  s.threads = c.get_size("dataset.threads", s.threads);
  s.receiver_agc = c.get_bool("dataset.receiver_agc", s.receiver_agc);
  if (c.has("channel.profile")) s.channel.profile = parse_channel_profile(c.get_string("channel.profile", ""));
  s.channel.delay_spread_ns = c.get_double("channel.delay_spread_ns", s.channel.delay_spread_ns);
  s.channel.n_taps = c.get_size("channel.n_taps", s.channel.n_taps);
  s.channel.carrier_hz = c.get_double("channel.carrier_hz", s.channel.carrier_hz);
  s.channel.los_k_factor_db = c.get_double("channel.los_k_factor_db", s.channel.los_k_factor_db);
  if (c.has("jammer.kind")) s.jammer.kind = parse_jammer_kind(c.get_string("jammer.kind", ""));
  if (c.has("jammer.coverage")) s.jammer.coverage = parse_jammer_coverage(c.get_string("jammer.coverage", ""));
  s.validate();
  return s;
}

TrainConfig train_config_from(const KeyValueConfig& c, TrainConfig t) {
  t.batch_size = c.get_size("train.batch_size", t.batch_size);
  t.learning_rate = c.get_double("train.learning_rate", t.learning_rate);
  t.momentum = c.get_double("train.momentum", t.momentum);
  t.max_epochs = c.get_size("train.max_epochs", t.max_epochs);
  t.validation_fraction = c.get_double("train.validation_fraction", t.validation_fraction);
  t.validation_frequency = c.get_size("train.validation_frequency", t.validation_frequency);
  t.seed = c.get_u64("train.seed", t.seed);
  return t;
}

ModelLayout layout_from_config(const KeyValueConfig& c, ModelLayout m) {
  if (c.has("model.conv_channels")) {
    std::vector<std::size_t> ch;
    for (double v : c.get_doubles("model.conv_channels", {})) {
      if (v < 1 || v != std::floor(v)) throw ParseError("key 'model.conv_channels': channel counts must be positive integers", 0);
      ch.push_back(static_cast<std::size_t>(v));
    }
    if (ch.size() != m.conv.size()) {
      throw ParseError("key 'model.conv_channels': expected " + std::to_string(m.conv.size()) + " values", 0);
    }
    m = m.with_channels(ch);
  }
  m.fc_hidden = c.get_size("model.fc_hidden", m.fc_hidden);
  return m;
}

DetectorSettings detector_settings_from(const KeyValueConfig& c, DetectorSettings d) {
  d.delta_fa = c.get_double("detector.delta_fa", d.delta_fa);
  d.sjnr_cutoff_db = c.get_double("detector.sjnr_cutoff_db", d.sjnr_cutoff_db);
  d.calibration_fraction = c.get_double("detector.calibration_fraction", d.calibration_fraction);
  return d;
}

}  // namespace ssbjam
