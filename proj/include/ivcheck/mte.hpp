#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ivcheck/dataset.hpp"
#include "ivcheck/npreg.hpp"
#include "ivcheck/rng.hpp"

namespace ivcheck {

struct PropensityConfig {
  NpregMethod method = NpregMethod::LocalLinear;  // LocalLinear or CellMeans
  /// Z column used by the local linear fit. Cell means use every column.
  Eigen::Index z_index = 0;
  std::size_t z_grid = 101;
  std::size_t x_grid = 201;
  double bandwidth = 0.0;  // <= 0: rule of thumb on Z
  double bandwidth_scale = 1.0;
  Kernel kernel = Kernel::Epanechnikov;
};

/// Estimated P(z, x) = P(X <= x | Z = z) on a (z, x) grid.
class PropensityFit {
 public:
  /// Isotonized surface value, bilinear between grid nodes. For cell means
  /// `z` must match a cell exactly (throws OffSupport otherwise).
  double evaluate(const Eigen::RowVectorXd& z, double x) const;
  double evaluate(double z, double x) const;

  /// P(Z_i, X_i) for every row of the fitted data.
  const Eigen::VectorXd& v_hat() const { return v_hat_; }

  /// [min, max] of P(Z_i, x) over rows whose X lies within the x-window of x.
  /// nullopt when no row is close to x.
  std::optional<std::pair<double, double>> support_p_given_x(double x) const;

  /// Per z node: fraction of grid pairs x < x' with raw P(z, x) > P(z, x').
  const std::vector<double>& monotonicity_report() const { return monotonicity_; }

  /// Generalized inverse of the isotonized P(z, .): the smallest x with
  /// P(z, x) >= v, interpolated linearly between x nodes.
  double inverse(std::size_t z_node, double v) const;

  NpregMethod method() const { return method_; }
  const Eigen::MatrixXd& z_nodes() const { return z_nodes_; }
  const std::vector<double>& x_nodes() const { return x_nodes_; }
  const Eigen::MatrixXd& surface() const { return surface_; }
  const Eigen::MatrixXd& raw_surface() const { return raw_; }
  double bandwidth() const { return bandwidth_; }
  /// Cell index of each data row (cell means) or nearest z node.
  const std::vector<std::size_t>& row_node() const { return row_node_; }

  friend PropensityFit fit_propensity(const Dataset& ds, const PropensityConfig& cfg);

 private:
  double node_value(std::size_t node, double x) const;
  std::size_t cell_of(const Eigen::RowVectorXd& z) const;

  NpregMethod method_ = NpregMethod::LocalLinear;
  Eigen::MatrixXd z_nodes_;  // nodes x kz
  std::vector<double> x_nodes_;
  Eigen::MatrixXd raw_;      // nodes x x_nodes, clipped to [0, 1]
  Eigen::MatrixXd surface_;  // isotonized in x
  Eigen::VectorXd v_hat_;
  Eigen::VectorXd x_;
  double x_window_ = 0.0;
  double bandwidth_ = 0.0;
  std::vector<double> monotonicity_;
  std::vector<std::size_t> row_node_;
};

/// Requires scalar X.
PropensityFit fit_propensity(const Dataset& ds, const PropensityConfig& cfg = {});

struct UniformityReport {
  double ks_overall = 0.0;
  std::vector<double> ks_by_bin;
  double ks_max_within = 0.0;
};

/// KS distance of v_hat to U[0, 1], overall and within Z bins (the cells for
/// cell means, otherwise `bins` equal-count bins of the fitted Z column).
UniformityReport uniformity_diagnostic(const PropensityFit& pf, std::size_t bins = 5);

struct ControlFunctionConfig {
  double bandwidth_x = 0.0;  // <= 0: 1.06 sd n^(-1/6)
  double bandwidth_p = 0.0;
  double bandwidth_scale = 1.0;
  std::size_t y_grid = 50;
  double min_effective = 5.0;
};

/// Bivariate local linear regression on (X, v_hat) with a product
/// Epanechnikov kernel.
class ControlFunctionFit {
 public:
  /// E[Y | X = x, P = p]; nullopt off support.
  std::optional<double> cond_mean(double x, double p) const;
  /// P(Y <= y | X = x, P = p): clipped, isotonized over the y grid and
  /// interpolated linearly. nullopt off support.
  std::optional<double> cond_cdf(double x, double p, double y) const;
  bool on_support(double x, double p) const;

  /// Support flags on a grid, rows = xs, cols = ps.
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> support_mask(const std::vector<double>& xs,
                                                                   const std::vector<double>& ps) const;

  double bandwidth_x() const { return hx_; }
  double bandwidth_p() const { return hp_; }
  const std::vector<double>& y_nodes() const { return y_nodes_; }

  /// Randomized probability integral transform F(Y_i- | X_i, V_i) + W (F(Y_i)
  /// - F(Y_i-)), W ~ U[0, 1], for rows on support.
  std::vector<double> smoothed_ranks(const RngSpec& rng) const;

  friend ControlFunctionFit fit_control_function(const Dataset& ds, const PropensityFit& pf,
                                                 const ControlFunctionConfig& cfg);

 private:
  std::optional<Eigen::VectorXd> weights(double x, double p) const;

  Eigen::VectorXd y_, x_, v_;
  double hx_ = 0.0, hp_ = 0.0;
  double min_effective_ = 5.0;
  std::vector<double> y_nodes_;
};

ControlFunctionFit fit_control_function(const Dataset& ds, const PropensityFit& pf,
                                        const ControlFunctionConfig& cfg = {});

/// E[Y | X = x, P = p] - E[Y | X = x', P = p]. Throws OffSupport.
double estimate_mte(const ControlFunctionFit& cf, double p, double x, double x_prime);

/// Integration grid {0.01, ..., 0.99}.
std::vector<double> default_p_grid();

inline constexpr double kFullSupportLo = 0.02;
inline constexpr double kFullSupportHi = 0.98;

struct AsfResult {
  double p_lo = 0.0;
  double p_hi = 1.0;
  bool full_support = false;
  std::optional<double> point;
  double lower = 0.0;
  double upper = 0.0;
};

/// ASF(x) = integral of cond_mean(x, p) over p. With partial p-support the
/// missing mass is bounded by `outcome_bounds` (MissingBounds if absent).
AsfResult estimate_asf(const ControlFunctionFit& cf, const PropensityFit& pf, double x,
                       std::optional<std::pair<double, double>> outcome_bounds = std::nullopt);

/// Same with the p-support supplied directly.
AsfResult estimate_asf(const ControlFunctionFit& cf, double x, std::pair<double, double> p_support,
                       std::optional<std::pair<double, double>> outcome_bounds = std::nullopt);

struct FlaggedPair {
  double v = 0.0;
  std::size_t z_a = 0;
  std::size_t z_b = 0;
  double x = 0.0;
  /// Two-sample KS distance of Y near (x, z_a) versus near (x, z_b); NaN when
  /// either side has fewer than 5 rows.
  double ks = 0.0;
};

struct Condition1Report {
  std::vector<double> v_grid;
  /// Per v: (max - min) of h*_v(z) over z nodes, divided by the X range.
  std::vector<double> coverage;
  /// Share of the X range covered by the union of all h*_v images.
  double union_coverage = 0.0;
  std::size_t injectivity_violations = 0;
  std::vector<FlaggedPair> flagged;
  double tolerance = 0.0;
  double max_raw_monotonicity_violation = 0.0;
  std::string summary;
};

Condition1Report condition1_diagnostic(const PropensityFit& pf, const Dataset& ds,
                                       std::vector<double> v_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9});

enum class QuantileInverse { LeftContinuous, RightContinuous };

/// Rows where Q(F(X)) != X within each Z cell. Discrete Z (at most 50
/// distinct rows) defines the cells; otherwise `bins` equal-count bins of Z's
/// first column.
std::size_t quantile_roundtrip_check(const Dataset& ds,
                                     QuantileInverse inverse = QuantileInverse::LeftContinuous,
                                     std::size_t bins = 10);

}  // namespace ivcheck
