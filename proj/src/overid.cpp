#include "ivcheck/overid.hpp"

#include "ivcheck/stats.hpp"

namespace ivcheck {

std::string_view to_string(OveridMethod m) { return m == OveridMethod::Sargan ? "sargan" : "hansen"; }

namespace {

int overid_dof(const Eigen::MatrixXd& hd, const Eigen::MatrixXd& xd) {
  const auto dof = static_cast<int>(hd.cols() - xd.cols());
  if (dof < 0) throw Error(ErrorKind::InvalidArgument, "model is under-identified: fewer instruments than regressors");
  return dof;
}

OveridReport finish(OveridMethod method, double stat, int dof) {
  OveridReport r;
  r.method = method;
  r.dof = dof;
  if (dof == 0 || stat < kJustIdentifiedTol) {
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  r.statistic = stat;
  r.p_value = stats::chi2_upper(stat, dof);
  return r;
}

}  // namespace

OveridReport sargan(const Dataset& ds, const InstrumentFn& h, bool intercept) {
  const Eigen::MatrixXd hd = instrument_matrix(ds.z(), h, intercept);
  const int dof = overid_dof(hd, design_matrix(ds.x(), intercept));
  const LinearFit fit = fit_2sls(ds, h, intercept);
  const Eigen::VectorXd& u = fit.residuals;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(hd);
  const Eigen::VectorXd fitted = hd * qr.solve(u);
  const double uu = u.squaredNorm();
  const double stat = uu > 0.0 ? static_cast<double>(ds.n()) * u.dot(fitted) / uu : 0.0;
  return finish(OveridMethod::Sargan, stat, dof);
}

OveridReport hansen_j(const Dataset& ds, const InstrumentFn& h, bool intercept) {
  const Eigen::MatrixXd hd = instrument_matrix(ds.z(), h, intercept);
  const int dof = overid_dof(hd, design_matrix(ds.x(), intercept));
  if (dof == 0) return finish(OveridMethod::HansenJ, 0.0, 0);
  const LinearFit fit = fit_gmm2step(ds, h, intercept);
  const double n = static_cast<double>(ds.n());
  const Eigen::VectorXd u1 = ds.y() - design_matrix(ds.x(), intercept) * *fit.first_step_beta;
  const Eigen::MatrixXd scores = hd.array().colwise() * u1.array();
  const Eigen::MatrixXd s = scores.transpose() * scores / n;
  const Eigen::VectorXd gbar = hd.transpose() * fit.residuals / n;
  const double stat = n * gbar.dot(s.ldlt().solve(gbar));
  return finish(OveridMethod::HansenJ, stat, dof);
}

OveridReport overid_test(OveridMethod method, const Dataset& ds, const InstrumentFn& h, bool intercept) {
  return method == OveridMethod::Sargan ? sargan(ds, h, intercept) : hansen_j(ds, h, intercept);
}

}  // namespace ivcheck
