#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ivcheck/dataset.hpp"
#include "ivcheck/estimators.hpp"

namespace ivcheck {

enum class Form { Linear, BoxCox, UserParametric };
enum class Conditioning { OnZ, OnX };

/// m(x, theta) for a user-supplied separable model Y = m(X, theta) + U.
/// Implementations throw Error(EvaluatorDomainError) outside their domain.
using Evaluator = std::function<double(const Eigen::RowVectorXd& x, std::span<const double> theta)>;

struct UserModel {
  std::vector<std::string> parameter_names;
  Evaluator m;
};

/// theta = (b0, b1, ..., bk): b0 + x'b.
UserModel linear_model(Eigen::Index kx);
/// theta = (b0, b1, lambda): b0 + b1 x^(lambda), scalar x > 0.
UserModel boxcox_model();

struct ModelSpec {
  Form form = Form::Linear;
  bool intercept = true;
  bool exogeneity = true;
  bool homoskedasticity = false;
  Conditioning conditioning = Conditioning::OnZ;
  /// Box-Cox profile grid (Form::BoxCox only).
  std::vector<double> lambda_grid = default_lambda_grid();
  std::optional<UserModel> user;

  /// Throws InvalidArgument when the assumption set is empty or inconsistent.
  void validate() const;
};

struct Moment {
  std::string label;
  /// W_j evaluated on every data row.
  Eigen::VectorXd values;
};

/// Signed moment functions W_j together with the scalar conditioning column.
/// Moments come in (W, -W) pairs: two for exogeneity, four with
/// homoskedasticity.
struct MomentSystem {
  std::vector<Moment> moments;
  Eigen::VectorXd conditioning;
  std::string conditioning_name;
  std::string v_set_desc;
};

/// Residuals of whichever first-step fit the spec calls for.
struct FirstStep {
  std::string description;
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residuals;
  double sigma2_hat = 0.0;
  std::optional<double> first_stage_f;
  bool relevance_warning = false;
};

FirstStep first_step(const Dataset& ds, const ModelSpec& spec);
FirstStep first_step(const LinearFit& fit, const Dataset& ds);
FirstStep first_step(const BoxCoxFit& fit);

/// Column used for conditioning; `coordinate` picks the instrument or
/// regressor column.
Eigen::VectorXd conditioning_column(const Dataset& ds, const ModelSpec& spec, Eigen::Index coordinate = 0);

/// W1 = U_hat, W2 = -U_hat.
MomentSystem build_exogeneity(const FirstStep& fit, const Dataset& ds, const ModelSpec& spec,
                              Eigen::Index coordinate = 0);

/// The exogeneity pair plus W3 = U_hat^2 - sigma2_hat and W4 = -W3, with
/// sigma2_hat = E_n[U_hat^2].
MomentSystem build_homoskedasticity(const FirstStep& fit, const Dataset& ds, const ModelSpec& spec,
                                    Eigen::Index coordinate = 0);

/// Dispatches on the spec's assumption set.
MomentSystem build_moments(const FirstStep& fit, const Dataset& ds, const ModelSpec& spec,
                           Eigen::Index coordinate = 0);

/// W1 = Y - m(X, theta), W2 = -W1 at a fixed parameter point (no estimation).
MomentSystem build_parametric_grid(const Dataset& ds, const ModelSpec& spec, std::span<const double> theta,
                                   Eigen::Index coordinate = 0);

}  // namespace ivcheck
