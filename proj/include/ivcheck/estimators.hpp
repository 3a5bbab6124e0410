#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <vector>

#include "ivcheck/dataset.hpp"

namespace ivcheck {

enum class FitMethod { OLS, IV, GMM2Step };

enum class VcovKind { Robust, Homoskedastic };

struct LinearFit {
  FitMethod method = FitMethod::OLS;
  bool intercept = true;
  /// (intercept, x_1, ..., x_k) when `intercept`, otherwise (x_1, ..., x_k).
  Eigen::VectorXd beta;
  Eigen::MatrixXd vcov;
  Eigen::VectorXd residuals;
  /// Mean of squared residuals (1/n normalization).
  double sigma2_hat = 0.0;
  /// IV only: first-stage F statistic for the excluded instruments.
  std::optional<double> first_stage_f;
  bool relevance_warning = false;
  /// GMM only: first-step (2SLS) coefficients.
  std::optional<Eigen::VectorXd> first_step_beta;

  Eigen::VectorXd robust_se() const { return vcov.diagonal().cwiseSqrt(); }
};

/// Maps one instrument row z_i to the vector h(z_i) of instrument functions.
/// The intercept column is added by the estimators, not by h.
using InstrumentFn = std::function<Eigen::VectorXd(const Eigen::RowVectorXd&)>;

/// h(z) = (z, z^2, ..., z^degree) applied to every instrument column.
InstrumentFn polynomial_instruments(int degree);

/// Evaluates `h` on every row of `z`, prepending a column of ones when
/// `intercept` is set.
Eigen::MatrixXd instrument_matrix(const Eigen::MatrixXd& z, const InstrumentFn& h, bool intercept);

Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& x, bool intercept);

LinearFit fit_ols(const Dataset& ds, bool intercept = true, VcovKind vcov = VcovKind::Robust);

/// Just-identified IV: beta = E_n[Z X']^{-1} E_n[Z Y] with Z = [1, z].
LinearFit fit_iv(const Dataset& ds, bool intercept = true, VcovKind vcov = VcovKind::Robust);

/// Two-step efficient GMM on E[(1, h(Z)) U] = 0. The first step uses the
/// 2SLS weight (E_n[hh'])^{-1}; the second the inverse of the first-step
/// residual moment covariance.
LinearFit fit_gmm2step(const Dataset& ds, const InstrumentFn& h, bool intercept = true);

/// 2SLS on instruments [1, h(Z)]: the first GMM step.
LinearFit fit_2sls(const Dataset& ds, const InstrumentFn& h, bool intercept = true);

/// x^(lambda) = (x^lambda - 1) / lambda, or log x at lambda = 0. Requires x > 0.
double box_cox(double x, double lambda);
Eigen::VectorXd box_cox(const Eigen::VectorXd& x, double lambda);

struct BoxCoxFit {
  double lambda = 1.0;
  double beta0 = 0.0;
  double beta1 = 0.0;
  Eigen::VectorXd residuals;
  /// (lambda, criterion): SSE for least squares, the 2SLS criterion u'P_H u
  /// for the instrumented fit.
  std::vector<std::pair<double, double>> profile_sse_curve;
  bool use_iv = false;
  LinearFit linear;  // the linear step at the selected lambda
};

/// 81 points on [-2, 2] with step 0.05; lambda = 0 is represented exactly.
std::vector<double> default_lambda_grid();

/// Profile fit of Y = b0 + b1 X^(lambda) + U over `lambda_grid` (scalar X).
/// With `use_iv` the linear step is 2SLS on instruments (1, Z, Z^2), since
/// the just-identified (1, Z) criterion vanishes at every lambda.
BoxCoxFit fit_boxcox(const Dataset& ds, const std::vector<double>& lambda_grid, bool use_iv);

}  // namespace ivcheck
