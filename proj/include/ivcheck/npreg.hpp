#pragma once

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ivcheck/error.hpp"

namespace ivcheck {

enum class NpregMethod { Series, LocalLinear, CellMeans };
enum class Kernel { Epanechnikov, Gaussian };

std::string_view to_string(NpregMethod m);
NpregMethod parse_npreg_method(std::string_view text);

struct PointEstimate {
  double theta = 0.0;
  double se = 0.0;
};

/// Standard errors below 1e-12 * (1 + |theta|) are clamped to that floor.
double se_floor(double theta);

/// Fitted conditional mean v -> E[W | Z = v] with pointwise standard errors.
///
/// Every method is a linear smoother, so the estimation error at v has the
/// first-order representation sum_i a_i(v) e_i(v); `influence(v)` returns the
/// vector of those terms and se(v) is its Euclidean norm. The clr-test
/// module builds its simulated process from these vectors.
class CondMeanFit {
 public:
  NpregMethod method() const;
  Eigen::Index n() const;

  /// nullopt when v has no data support (empty kernel window, unknown cell).
  std::optional<PointEstimate> evaluate(double v) const;

  /// Length-n vector a_i(v) e_i(v). Throws EmptyWindow off support.
  Eigen::VectorXd influence(double v) const;

  // Series only.
  int order() const;
  Eigen::VectorXd basis(double v) const;
  const Eigen::VectorXd& coef() const;
  /// Heteroskedasticity-robust coefficient covariance (HC0).
  const Eigen::MatrixXd& coef_cov() const;
  /// n x (order+1) per-observation coefficient influence; coef_cov = S'S.
  const Eigen::MatrixXd& coef_scores() const;

  // LocalLinear only.
  double bandwidth() const;

  // CellMeans only.
  std::vector<double> cells() const;

  /// Short human-readable description (order, bandwidth or cell count).
  std::string describe() const;

  struct State;
  explicit CondMeanFit(std::shared_ptr<const State> state) : state_(std::move(state)) {}

 private:
  std::shared_ptr<const State> state_;
};

/// ceil(2 n^(1/5)) capped at 12.
int default_series_order(Eigen::Index n);

/// 1.06 * sd(z) * n^(-1/5) * scale.
double rule_of_thumb_bandwidth(const Eigen::VectorXd& z, double scale = 1.0);

/// Polynomial series regression on (1, t, ..., t^order) with t the affine map
/// of z onto [-1, 1]. The standardization range defaults to [min z, max z].
CondMeanFit fit_series(const Eigen::VectorXd& w, const Eigen::VectorXd& z, int order,
                       std::optional<std::pair<double, double>> range = std::nullopt);

/// Local linear regression; bandwidth <= 0 selects the rule of thumb.
CondMeanFit fit_local_linear(const Eigen::VectorXd& w, const Eigen::VectorXd& z, double bandwidth,
                             Kernel kernel = Kernel::Epanechnikov, double bandwidth_scale = 1.0);

/// Equivalent-kernel weights l_i(v) of the local linear fit at v: the fitted
/// value is sum_i l_i(v) w_i. nullopt when the window is empty or degenerate.
std::optional<Eigen::VectorXd> local_linear_weights(const Eigen::VectorXd& z, double v, double h,
                                                    Kernel kernel = Kernel::Epanechnikov);

double kernel_weight(Kernel kernel, double u);

inline constexpr std::size_t kMaxCells = 50;

/// Within-cell means for discrete z (at most kMaxCells distinct values).
CondMeanFit fit_cell_means(const Eigen::VectorXd& w, const Eigen::VectorXd& z);

}  // namespace ivcheck
