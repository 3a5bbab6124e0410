#include "ivcheck/report.hpp"

#include <charconv>
#include <iomanip>
#include <map>
#include <sstream>

#include "ivcheck/rng.hpp"

namespace ivcheck {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), width_(header.size()) {
  if (!out_) throw Error(ErrorKind::Io, "cannot write " + path.string());
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw Error(ErrorKind::InvalidArgument, "CSV row width does not match header");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    const std::string& c = cells[i];
    if (c.find_first_of(",\"\n") != std::string::npos) {
      out_ << '"';
      for (char ch : c) out_ << (ch == '"' ? "\"\"" : std::string(1, ch));
      out_ << '"';
    } else {
      out_ << c;
    }
  }
  out_ << '\n';
}

std::string make_run_id(const std::vector<std::string>& args, std::uint64_t seed) {
  std::uint64_t h = mix64(seed);
  for (const auto& a : args) {
    for (unsigned char c : a) h = mix64(h ^ c);
    h = mix64(h ^ 0xffu);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

const std::vector<std::string>& test_summary_columns() {
  static const std::vector<std::string> cols{
      "run_id",        "coordinate",   "conditioning",  "alpha",          "k_crit",         "k_crit_full",
      "theta_corrected", "reject",     "argmax_moment", "argmax_v",       "gamma_prime",    "kappa",
      "theta_hat_sup", "selected_set_size", "method",   "series_order",   "bandwidth",      "cells",
      "draws",         "seed",         "stream",        "n",              "grid_requested", "grid_used",
      "dropped_points", "discrete_grid"};
  return cols;
}

const std::vector<std::string>& test_grid_columns() {
  static const std::vector<std::string> cols{"run_id", "coordinate", "moment", "v", "theta", "se", "selected"};
  return cols;
}

const std::vector<std::string>& test_fit_columns() {
  static const std::vector<std::string> cols{"run_id", "key", "value"};
  return cols;
}

const std::vector<std::string>& study_long_columns() {
  static const std::vector<std::string> cols{"run_id", "study", "dgp_index", "family", "n",        "lambda",
                                             "L",      "sigma", "rho",       "method", "alpha",    "reps",
                                             "failures", "rejections", "rate", "mc_se"};
  return cols;
}

const std::vector<std::string>& curve_columns() {
  static const std::vector<std::string> cols{"run_id", "n", "method", "alpha", "rate", "mc_se"};
  return cols;
}

std::vector<std::filesystem::path> write_test_report(const std::filesystem::path& dir,
                                                     const std::vector<TestReport>& reports,
                                                     const std::string& run_id) {
  std::filesystem::create_directories(dir);
  const auto summary_path = dir / "test_summary.csv", grid_path = dir / "test_grid.csv",
             fit_path = dir / "test_fit.csv";
  CsvWriter summary(summary_path, test_summary_columns());
  CsvWriter grid(grid_path, test_grid_columns());
  CsvWriter fit(fit_path, test_fit_columns());
  for (std::size_t c = 0; c < reports.size(); ++c) {
    const TestReport& r = reports[c];
    std::string sizes;
    for (std::size_t j = 0; j < r.selected_set_size.size(); ++j)
      sizes += (j ? ";" : "") + r.moment_labels[j] + ":" + std::to_string(r.selected_set_size[j]);
    for (const auto& l : r.levels) {
      const GridPoint& at = r.grid[l.argmax];
      summary.row({run_id, std::to_string(c), r.conditioning_name, format_double(l.alpha), format_double(l.k_crit),
                   format_double(l.k_crit_full), format_double(l.theta_corrected), l.reject ? "1" : "0",
                   r.moment_labels[at.moment], format_double(at.v), format_double(r.gamma_prime),
                   format_double(r.kappa), format_double(r.theta_hat_sup), sizes, std::string(to_string(r.method)),
                   std::to_string(r.series_order), format_double(r.bandwidth), std::to_string(r.cells),
                   std::to_string(r.draws), std::to_string(r.rng.seed), std::to_string(r.rng.stream),
                   std::to_string(r.n), std::to_string(r.grid_requested), std::to_string(r.grid.size()),
                   std::to_string(r.dropped_points), r.discrete_grid ? "1" : "0"});
    }
    for (const auto& g : r.grid)
      grid.row({run_id, std::to_string(c), r.moment_labels[g.moment], format_double(g.v), format_double(g.theta),
                format_double(g.se), g.selected ? "1" : "0"});
  }
  if (!reports.empty() && reports.front().first_step) {
    const FirstStep& fs = *reports.front().first_step;
    fit.row({run_id, "estimator", fs.description});
    for (Eigen::Index k = 0; k < fs.coefficients.size(); ++k)
      fit.row({run_id, "coef:" + fs.names[static_cast<std::size_t>(k)], format_double(fs.coefficients(k))});
    fit.row({run_id, "sigma2_hat", format_double(fs.sigma2_hat)});
    if (fs.first_stage_f) fit.row({run_id, "first_stage_f", format_double(*fs.first_stage_f)});
    fit.row({run_id, "relevance_warning", fs.relevance_warning ? "1" : "0"});
  }
  return {summary_path, grid_path, fit_path};
}

std::string describe_test_report(const std::vector<TestReport>& reports) {
  std::ostringstream os;
  if (!reports.empty() && reports.front().first_step) {
    const FirstStep& fs = *reports.front().first_step;
    os << "first step: " << fs.description << "\n";
    for (Eigen::Index k = 0; k < fs.coefficients.size(); ++k)
      os << "  " << std::left << std::setw(14) << fs.names[static_cast<std::size_t>(k)] << fs.coefficients(k) << "\n";
    if (fs.first_stage_f) os << "  first-stage F " << *fs.first_stage_f << (fs.relevance_warning ? "  (weak)" : "") << "\n";
  }
  for (const auto& r : reports) {
    os << "conditioning on " << r.conditioning_name << ": " << to_string(r.method);
    if (r.method == NpregMethod::Series) os << " order " << r.series_order;
    if (r.method == NpregMethod::LocalLinear) os << " bandwidth " << r.bandwidth;
    if (r.method == NpregMethod::CellMeans) os << " " << r.cells << " cells";
    os << ", " << r.grid.size() << " grid rows, " << r.draws << " draws, seed " << r.rng.seed << "\n";
    os << "  sup theta_hat " << r.theta_hat_sup << ", kappa " << r.kappa << ", selected";
    for (std::size_t j = 0; j < r.selected_set_size.size(); ++j)
      os << " " << r.moment_labels[j] << "=" << r.selected_set_size[j];
    os << "\n";
    for (const auto& l : r.levels)
      os << "  alpha " << std::setw(5) << l.alpha << "  k " << std::setw(9) << l.k_crit << "  theta_corrected "
         << std::setw(11) << l.theta_corrected << "  " << (l.reject ? "REJECT" : "do not reject") << "\n";
  }
  return os.str();
}

std::vector<std::filesystem::path> write_study(const std::filesystem::path& dir, const StudyResult& result,
                                               const std::string& run_id) {
  std::filesystem::create_directories(dir);
  const auto long_path = dir / "study_long.csv", wide_path = dir / "study_wide.csv";
  const StudyConfig& cfg = result.config;
  {
    CsvWriter out(long_path, study_long_columns());
    for (const auto& c : result.cells) {
      const DgpSpec& d = cfg.dgps[c.dgp];
      out.row({run_id, cfg.name, std::to_string(c.dgp), std::string(to_string(d.family)), std::to_string(d.n),
               format_double(d.lambda), format_double(d.L), format_double(d.sigma), format_double(d.rho), c.method,
               format_double(c.alpha), std::to_string(c.reps), std::to_string(c.failures),
               std::to_string(c.rejections), format_double(c.rate), format_double(c.mc_se)});
    }
  }
  std::vector<std::string> header{"run_id", "family", "n", "lambda", "L", "sigma", "rho"};
  const auto names = method_names(cfg);
  for (const auto& m : names)
    for (double a : cfg.alpha_levels) header.push_back(m + "@" + format_double(a));
  CsvWriter wide(wide_path, header);
  for (std::size_t d = 0; d < cfg.dgps.size(); ++d) {
    const DgpSpec& s = cfg.dgps[d];
    std::vector<std::string> row{run_id,
                                 std::string(to_string(s.family)),
                                 std::to_string(s.n),
                                 format_double(s.lambda),
                                 format_double(s.L),
                                 format_double(s.sigma),
                                 format_double(s.rho)};
    for (const auto& m : names)
      for (double a : cfg.alpha_levels) row.push_back(format_double(result.cell(d, m, a).rate));
    wide.row(row);
  }
  return {long_path, wide_path};
}

std::filesystem::path write_curve(const std::filesystem::path& dir, const std::vector<CurveRow>& rows,
                                  const std::string& run_id) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "curve.csv";
  CsvWriter out(path, curve_columns());
  for (const auto& r : rows)
    out.row({run_id, std::to_string(r.n), r.method, format_double(r.alpha), format_double(r.rate),
             format_double(r.mc_se)});
  return path;
}

std::string Manifest::get(const std::string& key) const {
  for (const auto& [k, v] : entries)
    if (k == key) return v;
  throw Error(ErrorKind::MissingColumn, "manifest has no key '" + key + "'");
}

void Manifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& [k, v] : entries) out << k << " = " << v << "\n";
  for (std::size_t i = 0; i < args.size(); ++i) out << "arg." << i << " = " << args[i] << "\n";
}

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  Manifest m;
  std::map<std::size_t, std::string> args;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (key.rfind("arg.", 0) == 0) {
      args[std::stoul(key.substr(4))] = value;
    } else {
      m.entries.emplace_back(key, value);
    }
  }
  for (auto& [i, a] : args) m.args.push_back(std::move(a));
  return m;
}

}  // namespace ivcheck
