#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ivcheck {

/// Documented configuration keys with their defaults and help text.
struct ConfigKey {
  const char* name;
  const char* default_value;
  const char* help;
};

const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` settings. Lines starting with '#' are comments. Unknown
/// keys are rejected unless they live under the `sim.` namespace, which
/// custom study files extend.
class Config {
 public:
  Config();  // populated with defaults

  static Config from_file(const std::filesystem::path& path);
  void merge_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::vector<double> parse_double_list(const std::string& text);
std::vector<std::string> parse_name_list(const std::string& text);

}  // namespace ivcheck
