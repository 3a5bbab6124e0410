#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "ivcheck/clr.hpp"
#include "ivcheck/overid.hpp"
#include "ivcheck/simulation.hpp"

namespace ivcheck {

/// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream out_;
  std::size_t width_ = 0;
};

/// Stable identifier of a run derived from its arguments and seed; written
/// into every result file and the manifest.
std::string make_run_id(const std::vector<std::string>& args, std::uint64_t seed);

/// Column layouts of the result files (pinned by a golden test).
const std::vector<std::string>& test_summary_columns();
const std::vector<std::string>& test_grid_columns();
const std::vector<std::string>& test_fit_columns();
const std::vector<std::string>& study_long_columns();
const std::vector<std::string>& curve_columns();

/// test_summary.csv, test_grid.csv and test_fit.csv.
std::vector<std::filesystem::path> write_test_report(const std::filesystem::path& dir,
                                                     const std::vector<TestReport>& reports,
                                                     const std::string& run_id);

std::string describe_test_report(const std::vector<TestReport>& reports);

/// study_long.csv (one row per cell) and study_wide.csv (one row per DGP,
/// one rate column per method and level).
std::vector<std::filesystem::path> write_study(const std::filesystem::path& dir, const StudyResult& result,
                                               const std::string& run_id);

std::filesystem::path write_curve(const std::filesystem::path& dir, const std::vector<CurveRow>& rows,
                                  const std::string& run_id);

/// Flat `key = value` run record. Arguments are stored one per line so a run
/// can be replayed.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::string> args;

  void add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }
  std::string get(const std::string& key) const;
  void write(const std::filesystem::path& path) const;
  static Manifest read(const std::filesystem::path& path);
};

}  // namespace ivcheck
