#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssbjam/dataset.hpp"
#include "ssbjam/dnn.hpp"

namespace ssbjam {

// `section.key = value` lines; `#` starts a comment. Later lines override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& source = "<text>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // "a,b,c" or the range form "first:last:step".
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key, const std::vector<std::string>& fallback) const;

  // Throws naming the first key outside `known`.
  void require_known(const std::vector<std::string>& known) const;
  std::vector<std::string> keys() const;

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };
  const Entry* find(const std::string& key) const;
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::string source_;
  std::map<std::string, Entry> values_;
};

struct DetectorSettings {
  double delta_fa = 0.05;
  double sjnr_cutoff_db = 10.0;        // second network trains on jammed data at or above this
  double calibration_fraction = 0.5;   // share of the validation split used for thresholds
};

// Every key the tools understand, grouped by section.
const std::vector<std::string>& known_config_keys();

ScenarioConfig scenario_from_config(const KeyValueConfig& c, ScenarioConfig base = {});
TrainConfig train_config_from(const KeyValueConfig& c, TrainConfig base = {});
ModelLayout layout_from_config(const KeyValueConfig& c, ModelLayout base = {});
DetectorSettings detector_settings_from(const KeyValueConfig& c, DetectorSettings base = {});

}  // namespace ssbjam
