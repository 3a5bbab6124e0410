#include <doctest.h>

#include "helpers.hpp"
#include "ivcheck/moments.hpp"
#include "ivcheck/npreg.hpp"
#include "ivcheck/simulation.hpp"

using namespace ivcheck;
using ivtest::vec;

TEST_SUITE("moments") {
  TEST_CASE("exogeneity pair is sign symmetric") {
    const Dataset ds = ivtest::iv_null(200, 1);
    const ModelSpec spec;
    const MomentSystem ms = build_moments(first_step(ds, spec), ds, spec);
    REQUIRE(ms.moments.size() == 2);
    CHECK(ms.moments[0].label == "U");
    CHECK(ms.moments[1].label == "-U");
    CHECK((ms.moments[0].values + ms.moments[1].values).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ms.conditioning == ds.z().col(0));
    // Sign symmetry carries through each smoother.
    const CondMeanFit a = fit_series(ms.moments[0].values, ms.conditioning, 6);
    const CondMeanFit b = fit_series(ms.moments[1].values, ms.conditioning, 6);
    for (double v : {-2.0, 0.0, 1.5}) CHECK(a.evaluate(v)->theta == -b.evaluate(v)->theta);
  }

  TEST_CASE("homoskedasticity moments on a four-row example") {
    const Eigen::VectorXd x = vec({0.0, 1.0, 2.0, 3.0});
    const Eigen::VectorXd y = vec({1.0, 1.0, 5.0, 5.0});
    const Dataset ds = ivtest::make_dataset(y, x, x);
    ModelSpec spec;
    spec.conditioning = Conditioning::OnX;
    spec.homoskedasticity = true;
    const FirstStep fs = first_step(ds, spec);
    // OLS by hand: slope 1.6, intercept 0.6, residuals (0.4, -1.2, 1.2, -0.4).
    const Eigen::VectorXd u = vec({0.4, -1.2, 1.2, -0.4});
    CHECK((fs.residuals - u).cwiseAbs().maxCoeff() < 1e-12);
    const double s2 = (0.16 + 1.44 + 1.44 + 0.16) / 4.0;
    CHECK(fs.sigma2_hat == doctest::Approx(s2).epsilon(1e-12));
    const MomentSystem ms = build_moments(fs, ds, spec);
    REQUIRE(ms.moments.size() == 4);
    const Eigen::VectorXd w3 = vec({0.16 - 0.8, 1.44 - 0.8, 1.44 - 0.8, 0.16 - 0.8});
    CHECK((ms.moments[2].values - w3).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ms.moments[3].values + w3).cwiseAbs().maxCoeff() < 1e-12);
  }

  TEST_CASE("variance moment is flat under homoskedasticity and tilts under the rho design") {
    const auto edge_dev = [](double rho, DgpFamily family) {
      const Dataset ds = generate({family, 20000, 0.0, 0.0, 1.0, rho}, RngSpec{21, 0});
      const ModelSpec spec = model_for({family, 20000, 0.0, 0.0, 1.0, rho});
      ModelSpec hs = spec;
      hs.homoskedasticity = true;
      hs.conditioning = Conditioning::OnX;
      const MomentSystem ms = build_moments(first_step(ds, hs), ds, hs);
      const CondMeanFit fit = fit_series(ms.moments[2].values, ms.conditioning, 4);
      double sup = 0.0;
      for (double v = -2.8; v <= 2.8; v += 0.2) sup = std::max(sup, std::abs(fit.evaluate(v)->theta));
      return std::make_pair(sup, fit.evaluate(2.9)->theta);
    };
    const auto [flat_sup, flat_edge] = edge_dev(0.0, DgpFamily::LinearOLS_Null);
    CHECK(flat_sup < 0.25);
    const auto [tilt_sup, tilt_edge] = edge_dev(0.9, DgpFamily::Hetero_Power);
    CHECK(tilt_edge > 1.0);
    CHECK(tilt_sup > 4.0 * flat_sup);
  }

  TEST_CASE("parametric grid at the IV estimate matches the estimated path") {
    const Dataset ds = ivtest::iv_null(300, 2);
    ModelSpec spec;
    const FirstStep fs = first_step(ds, spec);
    const MomentSystem est = build_exogeneity(fs, ds, spec);
    ModelSpec user = spec;
    user.form = Form::UserParametric;
    user.user = linear_model(1);
    const std::vector<double> theta{fs.coefficients(0), fs.coefficients(1)};
    const MomentSystem grid = build_parametric_grid(ds, user, theta);
    CHECK((grid.moments[0].values - est.moments[0].values).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((grid.moments[1].values - est.moments[1].values).cwiseAbs().maxCoeff() < 1e-10);

    const std::vector<double> far{5.0, -1.0};
    const MomentSystem off = build_parametric_grid(ds, user, far);
    double mean = 0.0;
    for (Eigen::Index i = 0; i < ds.n(); ++i) mean += ds.y()(i) - 5.0 + ds.x()(i, 0);
    mean /= static_cast<double>(ds.n());
    CHECK(off.moments[0].values.mean() == doctest::Approx(mean).epsilon(1e-12));
    CHECK(std::abs(mean) > 1.0);
  }

  TEST_CASE("Box-Cox evaluator at the truth leaves zero residuals") {
    Eigen::VectorXd x(30), y(30);
    for (int i = 0; i < 30; ++i) {
      x(i) = 0.5 + 0.3 * i;
      y(i) = 2.0 * (x(i) - 1.0);
    }
    const Dataset ds = ivtest::make_dataset(y, x, x);
    ModelSpec spec;
    spec.form = Form::UserParametric;
    spec.user = boxcox_model();
    const std::vector<double> theta{0.0, 2.0, 1.0};
    CHECK(build_parametric_grid(ds, spec, theta).moments[0].values.cwiseAbs().maxCoeff() < 1e-12);
    const Dataset bad = ivtest::make_dataset(y, (x.array() - 1.0).matrix(), x);
    CHECK_THROWS_AS(build_parametric_grid(bad, spec, theta), Error);
  }

  TEST_CASE("scale equivariance of the moment system") {
    const Dataset ds = generate({DgpFamily::LinearOLS_Null, 500}, RngSpec{4, 0});
    ModelSpec spec;
    spec.conditioning = Conditioning::OnX;
    spec.homoskedasticity = true;
    const double c = 3.0;
    const MomentSystem a = build_moments(first_step(ds, spec), ds, spec);
    const Dataset scaled = ds.with_y(c * ds.y());
    const MomentSystem b = build_moments(first_step(scaled, spec), scaled, spec);
    for (std::size_t j = 0; j < 4; ++j) {
      const double f = j < 2 ? c : c * c;
      CHECK((b.moments[j].values - f * a.moments[j].values).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  TEST_CASE("model spec validation") {
    ModelSpec spec;
    spec.exogeneity = false;
    CHECK_THROWS_AS(spec.validate(), Error);
    spec.homoskedasticity = true;
    CHECK_THROWS_AS(spec.validate(), Error);
    ModelSpec user;
    user.form = Form::UserParametric;
    CHECK_THROWS_AS(user.validate(), Error);
  }
}
