#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "ivcheck/dataset.hpp"
#include "ivcheck/moments.hpp"
#include "ivcheck/npreg.hpp"
#include "ivcheck/rng.hpp"

namespace ivcheck {

struct NpregConfig {
  NpregMethod method = NpregMethod::Series;
  /// Switch to cell means when the conditioning grid collapses onto a
  /// discrete support.
  bool cells_for_discrete = true;
  int series_order = 0;  // 0: default_series_order(n)
  double bandwidth = 0.0;  // <= 0: rule of thumb
  double bandwidth_scale = 1.0;
  Kernel kernel = Kernel::Epanechnikov;
};

struct TestConfig {
  std::size_t grid_count = 100;
  double centile_lo = 0.01;
  double centile_hi = 0.99;
  std::vector<double> alpha_levels{0.10, 0.05, 0.01};
  NpregConfig npreg;
  int draws = 1000;
  RngSpec rng;
  int jobs = 1;
};

inline constexpr int kMinDraws = 200;

struct GridPoint {
  std::size_t moment = 0;
  double v = 0.0;
  double theta = 0.0;
  double se = 0.0;
  bool selected = false;
};

struct LevelResult {
  double alpha = 0.0;
  /// Critical value from the sup over the selected set.
  double k_crit = 0.0;
  /// Critical value from the sup over the whole grid; never below k_crit.
  double k_crit_full = 0.0;
  double theta_corrected = 0.0;
  bool reject = false;
  /// Grid row attaining theta_corrected (lowest index on ties).
  std::size_t argmax = 0;
};

struct TestReport {
  std::vector<std::string> moment_labels;
  std::vector<GridPoint> grid;
  std::vector<std::size_t> selected_set_size;  // per moment
  std::vector<LevelResult> levels;              // in the order requested
  double gamma_prime = 0.0;
  double kappa = 0.0;
  double theta_hat_sup = 0.0;

  NpregMethod method = NpregMethod::Series;
  int series_order = 0;
  double bandwidth = 0.0;
  std::size_t cells = 0;
  int draws = 0;
  RngSpec rng;
  Eigen::Index n = 0;
  std::string conditioning_name;
  std::size_t grid_requested = 0;
  bool discrete_grid = false;
  /// Grid rows with no data support (empty kernel window, unseen cell).
  std::size_t dropped_points = 0;
  std::optional<FirstStep> first_step;

  const LevelResult& level(double alpha) const;
  bool reject(double alpha) const { return level(alpha).reject; }
  bool reject_any() const;
};

/// Throws std::logic_error when a report breaks the decision invariants:
/// reject iff theta_corrected > 0, k_crit nonincreasing and theta_corrected
/// nondecreasing in alpha, k_crit <= k_crit_full.
void check_report_invariants(const TestReport& report);

/// gamma' = 1 - 0.1 / log n.
double selection_level(Eigen::Index n);

TestReport run_test(const MomentSystem& ms, const std::vector<double>& grid, const NpregConfig& npreg,
                    const std::vector<double>& alpha_levels, int draws, const RngSpec& rng, int jobs = 1);

/// Builds the conditioning grid from `ms.conditioning` and runs the test.
TestReport run_test(const MomentSystem& ms, const TestConfig& cfg);

/// First-step fit, moment construction and test on one conditioning
/// coordinate.
TestReport test_model(const Dataset& ds, const ModelSpec& spec, const TestConfig& cfg, Eigen::Index coordinate = 0);

/// One report per conditioning coordinate. With several instruments each
/// coordinate is tested separately (a projection of the joint conditional
/// restriction).
std::vector<TestReport> test_model_all(const Dataset& ds, const ModelSpec& spec, const TestConfig& cfg);

struct IdentifiedSet {
  std::vector<std::vector<double>> theta_grid;
  std::vector<std::size_t> accepted;  // indices into theta_grid
  std::vector<double> theta_corrected;
  double alpha = 0.05;
  bool empty = true;
};

IdentifiedSet identified_set(const Dataset& ds, const ModelSpec& spec,
                             const std::vector<std::vector<double>>& theta_grid, double alpha,
                             const TestConfig& cfg);

}  // namespace ivcheck
