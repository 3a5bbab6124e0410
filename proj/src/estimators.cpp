#include "ivcheck/estimators.hpp"

#include <cmath>
#include <limits>

namespace ivcheck {

namespace {

// Rank tolerance: n * eps * largest singular value.
void require_full_rank(const Eigen::MatrixXd& m, const char* what) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) throw Error(ErrorKind::RankDeficient, std::string(what) + " is empty");
  const double tol = static_cast<double>(std::max(m.rows(), m.cols())) *
                     std::numeric_limits<double>::epsilon() * sv(0);
  if (sv.size() < m.cols() || sv(sv.size() - 1) <= tol)
    throw Error(ErrorKind::RankDeficient, std::string(what) + " does not have full column rank");
}

Eigen::MatrixXd meat(const Eigen::MatrixXd& m, const Eigen::VectorXd& u) {
  Eigen::MatrixXd mu = m.array().colwise() * u.array();
  return mu.transpose() * mu;
}

double min_first_stage_f(const Eigen::MatrixXd& x, const Eigen::MatrixXd& zd, bool intercept) {
  const auto n = static_cast<double>(x.rows());
  const auto k = static_cast<double>(zd.cols());
  const auto q = static_cast<double>(zd.cols() - (intercept ? 1 : 0));
  double best = std::numeric_limits<double>::infinity();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(zd);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const Eigen::VectorXd xj = x.col(j);
    const double rss_u = (xj - zd * qr.solve(xj)).squaredNorm();
    const double rss_r = intercept ? (xj.array() - xj.mean()).matrix().squaredNorm() : xj.squaredNorm();
    if (rss_u <= 0.0) return std::numeric_limits<double>::infinity();
    best = std::min(best, ((rss_r - rss_u) / q) / (rss_u / (n - k)));
  }
  return best;
}

}  // namespace

InstrumentFn polynomial_instruments(int degree) {
  if (degree < 1) throw Error(ErrorKind::InvalidArgument, "polynomial degree must be >= 1");
  return [degree](const Eigen::RowVectorXd& z) {
    Eigen::VectorXd h(z.size() * degree);
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      double p = 1.0;
      for (int d = 0; d < degree; ++d) {
        p *= z(j);
        h(j * degree + d) = p;
      }
    }
    return h;
  };
}

Eigen::MatrixXd design_matrix(const Eigen::MatrixXd& x, bool intercept) {
  if (!intercept) return x;
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

Eigen::MatrixXd instrument_matrix(const Eigen::MatrixXd& z, const InstrumentFn& h, bool intercept) {
  if (z.rows() == 0) throw Error(ErrorKind::EmptyData, "no instrument rows");
  const Eigen::VectorXd first = h(z.row(0));
  const Eigen::Index off = intercept ? 1 : 0;
  Eigen::MatrixXd out(z.rows(), first.size() + off);
  if (intercept) out.col(0).setOnes();
  out.row(0).tail(first.size()) = first.transpose();
  for (Eigen::Index i = 1; i < z.rows(); ++i) out.row(i).tail(first.size()) = h(z.row(i)).transpose();
  return out;
}

LinearFit fit_ols(const Dataset& ds, bool intercept, VcovKind vcov) {
  const Eigen::MatrixXd xd = design_matrix(ds.x(), intercept);
  if (ds.n() <= xd.cols()) throw Error(ErrorKind::InsufficientData, "OLS needs more rows than regressors");
  require_full_rank(xd, "OLS design");
  LinearFit fit;
  fit.method = FitMethod::OLS;
  fit.intercept = intercept;
  fit.beta = xd.colPivHouseholderQr().solve(ds.y());
  fit.residuals = ds.y() - xd * fit.beta;
  fit.sigma2_hat = fit.residuals.squaredNorm() / static_cast<double>(ds.n());
  const Eigen::MatrixXd bread = (xd.transpose() * xd).inverse();
  fit.vcov = vcov == VcovKind::Robust ? Eigen::MatrixXd(bread * meat(xd, fit.residuals) * bread)
                                      : Eigen::MatrixXd(fit.sigma2_hat * bread);
  return fit;
}

LinearFit fit_iv(const Dataset& ds, bool intercept, VcovKind vcov) {
  if (ds.kz() != ds.kx())
    throw Error(ErrorKind::InvalidArgument, "fit_iv is just-identified: need as many instruments as regressors");
  const Eigen::MatrixXd xd = design_matrix(ds.x(), intercept);
  const Eigen::MatrixXd zd = design_matrix(ds.z(), intercept);
  if (ds.n() <= xd.cols()) throw Error(ErrorKind::InsufficientData, "IV needs more rows than regressors");
  const Eigen::MatrixXd zx = zd.transpose() * xd / static_cast<double>(ds.n());
  require_full_rank(zd, "instrument design");
  require_full_rank(zx, "E_n[Z X']");
  LinearFit fit;
  fit.method = FitMethod::IV;
  fit.intercept = intercept;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(zx);
  fit.beta = lu.solve(zd.transpose() * ds.y() / static_cast<double>(ds.n()));
  fit.residuals = ds.y() - xd * fit.beta;
  fit.sigma2_hat = fit.residuals.squaredNorm() / static_cast<double>(ds.n());
  const double n = static_cast<double>(ds.n());
  const Eigen::MatrixXd zx_inv = lu.inverse();
  const Eigen::MatrixXd middle = vcov == VcovKind::Robust
                                     ? Eigen::MatrixXd(meat(zd, fit.residuals) / n)
                                     : Eigen::MatrixXd(fit.sigma2_hat * zd.transpose() * zd / n);
  fit.vcov = zx_inv * middle * zx_inv.transpose() / n;
  fit.first_stage_f = min_first_stage_f(ds.x(), zd, intercept);
  fit.relevance_warning = *fit.first_stage_f < 10.0;
  return fit;
}

LinearFit fit_2sls(const Dataset& ds, const InstrumentFn& h, bool intercept) {
  const Eigen::MatrixXd xd = design_matrix(ds.x(), intercept);
  const Eigen::MatrixXd hd = instrument_matrix(ds.z(), h, intercept);
  if (hd.cols() < xd.cols())
    throw Error(ErrorKind::InvalidArgument, "need at least as many instruments as regressors");
  if (ds.n() <= hd.cols()) throw Error(ErrorKind::InsufficientData, "2SLS needs more rows than instruments");
  require_full_rank(hd, "instrument matrix");
  const double n = static_cast<double>(ds.n());
  const Eigen::MatrixXd hh_inv = (hd.transpose() * hd / n).inverse();
  const Eigen::MatrixXd hx = hd.transpose() * xd / n;
  const Eigen::MatrixXd a = hx.transpose() * hh_inv * hx;
  require_full_rank(a, "2SLS normal matrix");
  LinearFit fit;
  fit.method = FitMethod::IV;
  fit.intercept = intercept;
  const Eigen::MatrixXd a_inv = a.inverse();
  fit.beta = a_inv * hx.transpose() * hh_inv * (hd.transpose() * ds.y() / n);
  fit.residuals = ds.y() - xd * fit.beta;
  fit.sigma2_hat = fit.residuals.squaredNorm() / n;
  const Eigen::MatrixXd s = meat(hd, fit.residuals) / n;
  const Eigen::MatrixXd proj = a_inv * hx.transpose() * hh_inv;
  fit.vcov = proj * s * proj.transpose() / n;
  fit.first_stage_f = min_first_stage_f(ds.x(), hd, intercept);
  fit.relevance_warning = *fit.first_stage_f < 10.0;
  return fit;
}

LinearFit fit_gmm2step(const Dataset& ds, const InstrumentFn& h, bool intercept) {
  LinearFit first = fit_2sls(ds, h, intercept);
  const Eigen::MatrixXd xd = design_matrix(ds.x(), intercept);
  const Eigen::MatrixXd hd = instrument_matrix(ds.z(), h, intercept);
  const double n = static_cast<double>(ds.n());
  const Eigen::MatrixXd s = meat(hd, first.residuals) / n;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
  const auto& sv = svd.singularValues();
  if (sv(sv.size() - 1) <= static_cast<double>(s.rows()) * std::numeric_limits<double>::epsilon() * sv(0))
    throw Error(ErrorKind::SingularWeight, "second-step moment covariance is singular");
  const Eigen::MatrixXd w = s.inverse();
  const Eigen::MatrixXd hx = hd.transpose() * xd / n;
  const Eigen::MatrixXd a = hx.transpose() * w * hx;
  require_full_rank(a, "GMM normal matrix");
  const Eigen::MatrixXd a_inv = a.inverse();
  LinearFit fit;
  fit.method = FitMethod::GMM2Step;
  fit.intercept = intercept;
  fit.beta = a_inv * hx.transpose() * w * (hd.transpose() * ds.y() / n);
  fit.residuals = ds.y() - xd * fit.beta;
  fit.sigma2_hat = fit.residuals.squaredNorm() / n;
  fit.vcov = a_inv / n;
  fit.first_stage_f = first.first_stage_f;
  fit.relevance_warning = first.relevance_warning;
  fit.first_step_beta = first.beta;
  return fit;
}

double box_cox(double x, double lambda) {
  if (!(x > 0.0)) throw Error(ErrorKind::DomainError, "Box-Cox transform needs x > 0");
  if (std::abs(lambda) < 1e-12) return std::log(x);
  return (std::pow(x, lambda) - 1.0) / lambda;
}

Eigen::VectorXd box_cox(const Eigen::VectorXd& x, double lambda) {
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) out(i) = box_cox(x(i), lambda);
  return out;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = -40; i <= 40; ++i) grid.push_back(static_cast<double>(i) / 20.0);
  return grid;
}

BoxCoxFit fit_boxcox(const Dataset& ds, const std::vector<double>& lambda_grid, bool use_iv) {
  if (lambda_grid.empty()) throw Error(ErrorKind::InvalidArgument, "lambda grid is empty");
  if (!std::is_sorted(lambda_grid.begin(), lambda_grid.end()))
    throw Error(ErrorKind::InvalidArgument, "lambda grid must be sorted");
  if (ds.kx() != 1) throw Error(ErrorKind::InvalidArgument, "Box-Cox fit needs a scalar regressor");
  if ((ds.x().array() <= 0.0).any()) throw Error(ErrorKind::DomainError, "Box-Cox fit needs all X > 0");

  const auto h = polynomial_instruments(2);
  Eigen::MatrixXd hd;
  Eigen::MatrixXd hh_inv;
  if (use_iv) {
    hd = instrument_matrix(ds.z(), h, true);
    hh_inv = (hd.transpose() * hd).inverse();
  }
  BoxCoxFit best;
  best.use_iv = use_iv;
  double best_crit = std::numeric_limits<double>::infinity();
  for (double lambda : lambda_grid) {
    Eigen::MatrixXd xt(ds.n(), 1);
    xt.col(0) = box_cox(Eigen::VectorXd(ds.x().col(0)), lambda);
    const Dataset transformed(ds.y(), std::move(xt), ds.z(), ds.y_name(), ds.x_names(), ds.z_names());
    LinearFit lin = use_iv ? fit_2sls(transformed, h, true) : fit_ols(transformed, true);
    double crit = 0.0;
    if (use_iv) {
      const Eigen::VectorXd hu = hd.transpose() * lin.residuals;
      crit = hu.dot(hh_inv * hu);
    } else {
      crit = lin.residuals.squaredNorm();
    }
    best.profile_sse_curve.emplace_back(lambda, crit);
    if (crit < best_crit) {
      best_crit = crit;
      best.lambda = lambda;
      best.beta0 = lin.beta(0);
      best.beta1 = lin.beta(1);
      best.residuals = lin.residuals;
      best.linear = std::move(lin);
    }
  }
  return best;
}

}  // namespace ivcheck
