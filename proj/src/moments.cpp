#include "ivcheck/moments.hpp"

#include <cmath>

namespace ivcheck {

UserModel linear_model(Eigen::Index kx) {
  UserModel model;
  model.parameter_names.push_back("b0");
  for (Eigen::Index j = 0; j < kx; ++j) model.parameter_names.push_back("b" + std::to_string(j + 1));
  model.m = [kx](const Eigen::RowVectorXd& x, std::span<const double> theta) {
    if (static_cast<Eigen::Index>(theta.size()) != kx + 1)
      throw Error(ErrorKind::EvaluatorDomainError, "linear model expects k_x + 1 parameters");
    double out = theta[0];
    for (Eigen::Index j = 0; j < kx; ++j) out += theta[static_cast<std::size_t>(j) + 1] * x(j);
    return out;
  };
  return model;
}

UserModel boxcox_model() {
  UserModel model;
  model.parameter_names = {"b0", "b1", "lambda"};
  model.m = [](const Eigen::RowVectorXd& x, std::span<const double> theta) {
    if (theta.size() != 3) throw Error(ErrorKind::EvaluatorDomainError, "Box-Cox model expects (b0, b1, lambda)");
    if (!(x(0) > 0.0)) throw Error(ErrorKind::EvaluatorDomainError, "Box-Cox model needs x > 0");
    return theta[0] + theta[1] * box_cox(x(0), theta[2]);
  };
  return model;
}

void ModelSpec::validate() const {
  if (!exogeneity && !homoskedasticity) throw Error(ErrorKind::InvalidArgument, "assumption set is empty");
  if (homoskedasticity && !exogeneity)
    throw Error(ErrorKind::InvalidArgument, "homoskedasticity is tested jointly with exogeneity");
  if (form == Form::UserParametric && !user)
    throw Error(ErrorKind::InvalidArgument, "user-parametric form needs an evaluator");
  if (form == Form::BoxCox && lambda_grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty lambda grid");
}

FirstStep first_step(const LinearFit& fit, const Dataset& ds) {
  FirstStep out;
  switch (fit.method) {
    case FitMethod::OLS: out.description = "ols"; break;
    case FitMethod::IV: out.description = "iv"; break;
    case FitMethod::GMM2Step: out.description = "gmm2step"; break;
  }
  if (fit.intercept) out.names.push_back("(intercept)");
  for (const auto& name : ds.x_names()) out.names.push_back(name);
  out.coefficients = fit.beta;
  out.residuals = fit.residuals;
  out.sigma2_hat = fit.sigma2_hat;
  out.first_stage_f = fit.first_stage_f;
  out.relevance_warning = fit.relevance_warning;
  return out;
}

FirstStep first_step(const BoxCoxFit& fit) {
  FirstStep out;
  out.description = fit.use_iv ? "boxcox-iv" : "boxcox-ls";
  out.names = {"b0", "b1", "lambda"};
  out.coefficients = Eigen::Vector3d(fit.beta0, fit.beta1, fit.lambda);
  out.residuals = fit.residuals;
  out.sigma2_hat = fit.residuals.squaredNorm() / static_cast<double>(fit.residuals.size());
  out.first_stage_f = fit.linear.first_stage_f;
  out.relevance_warning = fit.linear.relevance_warning;
  return out;
}

FirstStep first_step(const Dataset& ds, const ModelSpec& spec) {
  spec.validate();
  const bool instrumented = spec.conditioning == Conditioning::OnZ;
  switch (spec.form) {
    case Form::Linear: {
      if (!instrumented) return first_step(fit_ols(ds, spec.intercept), ds);
      if (ds.kz() == ds.kx()) return first_step(fit_iv(ds, spec.intercept), ds);
      const InstrumentFn identity = [](const Eigen::RowVectorXd& z) { return Eigen::VectorXd(z.transpose()); };
      return first_step(fit_2sls(ds, identity, spec.intercept), ds);
    }
    case Form::BoxCox:
      return first_step(fit_boxcox(ds, spec.lambda_grid, instrumented));
    case Form::UserParametric:
      throw Error(ErrorKind::InvalidArgument, "user-parametric models are tested through identified_set");
  }
  throw Error(ErrorKind::InvalidArgument, "unknown model form");
}

Eigen::VectorXd conditioning_column(const Dataset& ds, const ModelSpec& spec, Eigen::Index coordinate) {
  const Eigen::MatrixXd& block = spec.conditioning == Conditioning::OnZ ? ds.z() : ds.x();
  if (coordinate < 0 || coordinate >= block.cols())
    throw Error(ErrorKind::InvalidArgument, "conditioning coordinate out of range");
  return block.col(coordinate);
}

namespace {

std::string conditioning_name(const Dataset& ds, const ModelSpec& spec, Eigen::Index coordinate) {
  const auto& names = spec.conditioning == Conditioning::OnZ ? ds.z_names() : ds.x_names();
  return names[static_cast<std::size_t>(coordinate)];
}

MomentSystem exogeneity_pair(const Eigen::VectorXd& resid, const Dataset& ds, const ModelSpec& spec,
                             Eigen::Index coordinate) {
  if (resid.size() != ds.n()) throw Error(ErrorKind::InvalidArgument, "residual length does not match data");
  MomentSystem ms;
  ms.conditioning = conditioning_column(ds, spec, coordinate);
  ms.conditioning_name = conditioning_name(ds, spec, coordinate);
  ms.moments.push_back({"U", resid});
  ms.moments.push_back({"-U", -resid});
  ms.v_set_desc = "{(v, j): v in grid over " + ms.conditioning_name + ", j in {U, -U}}";
  return ms;
}

}  // namespace

MomentSystem build_exogeneity(const FirstStep& fit, const Dataset& ds, const ModelSpec& spec,
                              Eigen::Index coordinate) {
  return exogeneity_pair(fit.residuals, ds, spec, coordinate);
}

MomentSystem build_homoskedasticity(const FirstStep& fit, const Dataset& ds, const ModelSpec& spec,
                                    Eigen::Index coordinate) {
  if (!spec.homoskedasticity) throw Error(ErrorKind::InvalidArgument, "spec does not assume homoskedasticity");
  MomentSystem ms = exogeneity_pair(fit.residuals, ds, spec, coordinate);
  const Eigen::VectorXd sq = fit.residuals.array().square().matrix();
  const double sigma2 = sq.mean();
  const Eigen::VectorXd centered = (sq.array() - sigma2).matrix();
  ms.moments.push_back({"U^2-s2", centered});
  ms.moments.push_back({"s2-U^2", -centered});
  ms.v_set_desc = "{(v, j): v in grid over " + ms.conditioning_name + ", j in {U, -U, U^2-s2, s2-U^2}}";
  return ms;
}

MomentSystem build_moments(const FirstStep& fit, const Dataset& ds, const ModelSpec& spec,
                           Eigen::Index coordinate) {
  spec.validate();
  return spec.homoskedasticity ? build_homoskedasticity(fit, ds, spec, coordinate)
                               : build_exogeneity(fit, ds, spec, coordinate);
}

MomentSystem build_parametric_grid(const Dataset& ds, const ModelSpec& spec, std::span<const double> theta,
                                   Eigen::Index coordinate) {
  if (!spec.user) throw Error(ErrorKind::InvalidArgument, "parametric grid needs a user model");
  Eigen::VectorXd resid(ds.n());
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const double m = spec.user->m(ds.x().row(i), theta);
    if (!std::isfinite(m)) throw Error(ErrorKind::EvaluatorDomainError, "m(x, theta) is not finite");
    resid(i) = ds.y()(i) - m;
  }
  return exogeneity_pair(resid, ds, spec, coordinate);
}

}  // namespace ivcheck
