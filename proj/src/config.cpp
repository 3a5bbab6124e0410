#include "ivcheck/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "ivcheck/error.hpp"

namespace ivcheck {

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"grid.count", "100", "number of conditioning grid points"},
      {"grid.centiles", "0.01,0.99", "lower and upper quantile levels spanned by the grid"},
      {"test.alpha_levels", "0.10,0.05,0.01", "significance levels reported by the test"},
      {"npreg.method", "auto",
       "conditional mean estimator: series | local-linear | cell-means | auto (series, cell means for discrete z)"},
      {"npreg.series_order", "auto", "polynomial order; auto = ceil(2 n^(1/5)) capped at 12"},
      {"npreg.bandwidth", "auto", "local-linear bandwidth; auto = scale * 1.06 sd(z) n^(-1/5)"},
      {"npreg.bandwidth_scale", "1.0", "multiplier applied to the rule-of-thumb bandwidth"},
      {"npreg.kernel", "epanechnikov", "local-linear kernel: epanechnikov | gaussian"},
      {"sim.replications", "200", "Monte Carlo replications per study cell"},
      {"sim.multiplier_draws", "1000", "simulated draws of the standardized process (R)"},
      {"rng.seed", "", "master seed; empty draws an entropy seed that is logged in the manifest"},
  };
  return keys;
}

Config::Config() {
  for (const auto& key : config_keys()) values_[key.name] = key.default_value;
}

Config Config::from_file(const std::filesystem::path& path) {
  Config cfg;
  cfg.merge_file(path);
  return cfg;
}

void Config::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + " expected key = value");
    auto strip = [](std::string s) {
      auto b = s.find_first_not_of(" \t\r");
      auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    set(strip(line.substr(0, eq)), strip(line.substr(eq + 1)));
  }
}

void Config::set(const std::string& key, const std::string& value) {
  const bool known = std::any_of(config_keys().begin(), config_keys().end(),
                                 [&](const ConfigKey& k) { return key == k.name; });
  if (!known && key.rfind("sim.", 0) != 0) throw Error(ErrorKind::InvalidArgument, "unknown config key " + key);
  values_[key] = value;
}

std::string Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error(ErrorKind::InvalidArgument, "config key not set: " + key);
  return it->second;
}

namespace {
double to_double(const std::string& text, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorKind::ParseError, what + ": '" + text + "' is not a number");
  return v;
}
}  // namespace

double Config::get_double(const std::string& key) const { return to_double(get(key), key); }

std::int64_t Config::get_int(const std::string& key) const {
  const auto text = get(key);
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorKind::ParseError, key + ": '" + text + "' is not an integer");
  return v;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const auto text = get(key);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw Error(ErrorKind::ParseError, key + ": '" + text + "' is not an unsigned integer");
  return v;
}

std::vector<double> Config::get_doubles(const std::string& key) const { return parse_double_list(get(key)); }

std::vector<std::string> parse_name_list(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto pos = text.find(',', start);
    auto item = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    auto b = item.find_first_not_of(" \t");
    auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : parse_name_list(text)) out.push_back(to_double(item, "list"));
  return out;
}

}  // namespace ivcheck
