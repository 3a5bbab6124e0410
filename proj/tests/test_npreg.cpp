#include <doctest.h>

#include <map>

#include "helpers.hpp"
#include "ivcheck/estimators.hpp"
#include "ivcheck/npreg.hpp"
#include "ivcheck/simulation.hpp"
#include "ivcheck/stats.hpp"

using namespace ivcheck;
using ivtest::vec;

namespace {

Eigen::VectorXd uniform_draws(Eigen::Index n, double lo, double hi, std::uint64_t seed) {
  Rng rng(RngSpec{seed, 5});
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z(i) = rng.uniform(lo, hi);
  return z;
}

}  // namespace

TEST_SUITE("npreg") {
  TEST_CASE("series reproduces an exact polynomial") {
    const Eigen::VectorXd z = uniform_draws(60, -2.0, 3.0, 1);
    const Eigen::VectorXd w = (2.0 + 3.0 * z.array()).matrix();
    const CondMeanFit fit = fit_series(w, z, 3);
    for (double v : {-1.5, 0.0, 0.7, 2.5}) {
      const auto e = fit.evaluate(v);
      REQUIRE(e);
      CHECK(std::abs(e->theta - (2.0 + 3.0 * v)) < 1e-10);
      CHECK(e->se <= 1e-10);
    }
    const Eigen::VectorXd cubic = (z.array() * z.array() * z.array() - z.array()).matrix();
    const CondMeanFit fit3 = fit_series(cubic, z, 5);
    CHECK(std::abs(fit3.evaluate(1.3)->theta - (1.3 * 1.3 * 1.3 - 1.3)) < 1e-9);
  }

  TEST_CASE("series fit and robust se match the normal equations on raw powers") {
    const Eigen::Index n = 200;
    const Eigen::VectorXd z = uniform_draws(n, -2.0, 2.0, 2);
    Rng rng(RngSpec{2, 6});
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) w(i) = z(i) * z(i) + rng.normal();
    const CondMeanFit fit = fit_series(w, z, 4);
    // The fitted function does not depend on the polynomial basis, so raw
    // powers give an independent oracle.
    Eigen::MatrixXd B(n, 5);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int d = 0; d <= 4; ++d) B(i, d) = std::pow(z(i), d);
    const Eigen::MatrixXd Q = B.transpose() * B;
    const Eigen::VectorXd g = Q.ldlt().solve(B.transpose() * w);
    const Eigen::VectorXd e = w - B * g;
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(5, 5);
    for (Eigen::Index i = 0; i < n; ++i) meat += e(i) * e(i) * B.row(i).transpose() * B.row(i);
    const Eigen::MatrixXd Qi = Q.inverse();
    const Eigen::MatrixXd V = Qi * meat * Qi;
    for (double v : {0.0, 0.9, -1.7}) {
      Eigen::VectorXd b(5);
      for (int d = 0; d <= 4; ++d) b(d) = std::pow(v, d);
      const auto est = fit.evaluate(v);
      REQUIRE(est);
      CHECK(std::abs(est->theta - b.dot(g)) < 1e-10);
      CHECK(est->se == doctest::Approx(std::sqrt(b.dot(V * b))).epsilon(1e-8));
      CHECK(fit.influence(v).norm() == doctest::Approx(est->se).epsilon(1e-10));
    }
  }

  TEST_CASE("series sup |theta| on null residuals shrinks with n") {
    const auto median_sup = [](Eigen::Index n) {
      std::vector<double> sups;
      for (int r = 0; r < 20; ++r) {
        const Dataset ds = generate({DgpFamily::LinearIV_Null, n}, RngSpec{31, 0}.child(static_cast<std::uint64_t>(n)).child(r));
        const LinearFit iv = fit_iv(ds);
        const Eigen::VectorXd z = ds.z().col(0);
        const CondMeanFit fit = fit_series(iv.residuals, z, default_series_order(n));
        const auto grid = conditioning_grid(z, 0.01, 0.99);
        double s = 0.0;
        for (double v : grid.points) s = std::max(s, std::abs(fit.evaluate(v)->theta));
        sups.push_back(s);
      }
      return stats::median(sups);
    };
    CHECK(median_sup(3000) < median_sup(500));
  }

  TEST_CASE("default series order and bandwidth rules") {
    CHECK(default_series_order(1000) == 8);
    CHECK(default_series_order(200) == 6);
    CHECK(default_series_order(100000000) == 12);
    const Eigen::VectorXd z = vec({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const double sd = std::sqrt((z.array() - 4.5).square().sum() / 9.0);
    CHECK(rule_of_thumb_bandwidth(z) == doctest::Approx(1.06 * sd * std::pow(10.0, -0.2)));
    CHECK(rule_of_thumb_bandwidth(z, 2.0) == doctest::Approx(2.0 * 1.06 * sd * std::pow(10.0, -0.2)));
  }

  TEST_CASE("local linear on a constant outcome is exact") {
    const Eigen::VectorXd z = uniform_draws(100, 0.0, 1.0, 3);
    const CondMeanFit fit = fit_local_linear(Eigen::VectorXd::Constant(100, 4.25), z, 0.2);
    for (double v = 0.05; v < 1.0; v += 0.1) {
      const auto e = fit.evaluate(v);
      REQUIRE(e);
      CHECK(std::abs(e->theta - 4.25) < 1e-12);
    }
    CHECK_FALSE(fit.evaluate(5.0));
    CHECK_THROWS_AS(fit.influence(5.0), Error);
  }

  TEST_CASE("local linear weights match the 2x2 weighted normal equations") {
    const Eigen::VectorXd z = vec({-0.9, -0.4, 0.1, 0.3, 0.8, 1.4, 2.5});
    const Eigen::VectorXd w = vec({1.0, 0.2, 0.9, 1.7, 2.2, 3.1, 9.0});
    const double v = 0.2, h = 1.0;
    double a11 = 0, a12 = 0, a22 = 0, r1 = 0, r2 = 0;
    for (int i = 0; i < 7; ++i) {
      const double u = (z(i) - v) / h;
      const double k = std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
      const double d = z(i) - v;
      a11 += k;
      a12 += k * d;
      a22 += k * d * d;
      r1 += k * w(i);
      r2 += k * d * w(i);
    }
    const double intercept = (a22 * r1 - a12 * r2) / (a11 * a22 - a12 * a12);
    const auto l = local_linear_weights(z, v, h);
    REQUIRE(l);
    CHECK(std::abs(l->dot(w) - intercept) < 1e-10);
    CHECK(std::abs(l->sum() - 1.0) < 1e-12);
  }

  TEST_CASE("local linear tracks sin(z)") {
    const Eigen::Index n = 5000;
    const Eigen::VectorXd z = uniform_draws(n, -3.0, 3.0, 4);
    const Eigen::VectorXd w = z.array().sin().matrix();
    const CondMeanFit fit = fit_local_linear(w, z, 0.0);
    double worst = 0.0;
    for (double v : conditioning_grid(z, 0.01, 0.99).points) worst = std::max(worst, std::abs(fit.evaluate(v)->theta - std::sin(v)));
    CHECK(worst < 0.1);
  }

  TEST_CASE("cell means are exact group averages") {
    const Eigen::VectorXd z = vec({0, 1, 2, 0, 1, 2, 0, 1, 2});
    const Eigen::VectorXd w = vec({0.5, 2, 2.5, 1.5, 1, 3.5, 1, 3, 3});
    const CondMeanFit fit = fit_cell_means(w, z);
    CHECK(fit.evaluate(0.0)->theta == 1.0);
    CHECK(fit.evaluate(1.0)->theta == 2.0);
    CHECK(fit.evaluate(2.0)->theta == 3.0);
    CHECK_FALSE(fit.evaluate(0.5));
    CHECK(fit.cells() == std::vector<double>{0, 1, 2});

    Rng rng(RngSpec{9, 9});
    Eigen::VectorXd zz(400), ww(400);
    std::map<double, std::pair<double, int>> oracle;
    for (int i = 0; i < 400; ++i) {
      zz(i) = std::floor(rng.uniform(0.0, 7.0));
      ww(i) = rng.normal() + zz(i);
      oracle[zz(i)].first += ww(i);
      ++oracle[zz(i)].second;
    }
    const CondMeanFit f2 = fit_cell_means(ww, zz);
    for (const auto& [v, acc] : oracle) CHECK(f2.evaluate(v)->theta == doctest::Approx(acc.first / acc.second).epsilon(1e-13));

    Eigen::VectorXd many(60);
    for (int i = 0; i < 60; ++i) many(i) = i;
    CHECK_THROWS_AS(fit_cell_means(Eigen::VectorXd::Zero(60), many), Error);
  }

  TEST_CASE("cell means of binary-instrument IV residuals vanish") {
    Rng rng(RngSpec{10, 0});
    Eigen::VectorXd y(300), x(300), z(300);
    for (int i = 0; i < 300; ++i) {
      z(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
      const double u = rng.normal();
      x(i) = 2.0 * z(i) + u + rng.normal();
      y(i) = x(i) + u;
    }
    const LinearFit iv = fit_iv(ivtest::make_dataset(y, x, z));
    const CondMeanFit fit = fit_cell_means(iv.residuals, z);
    CHECK(std::abs(fit.evaluate(0.0)->theta) < 1e-10);
    CHECK(std::abs(fit.evaluate(1.0)->theta) < 1e-10);
  }

  TEST_CASE("every smoother is linear in W and se scales with |a|") {
    const Eigen::Index n = 300;
    const Eigen::VectorXd zc = uniform_draws(n, -1.0, 1.0, 11);
    Eigen::VectorXd zd(n);
    for (Eigen::Index i = 0; i < n; ++i) zd(i) = std::floor((zc(i) + 1.0) * 2.0);
    Rng rng(RngSpec{11, 1});
    Eigen::VectorXd w1(n), w2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      w1(i) = rng.normal();
      w2(i) = zc(i) + rng.normal();
    }
    const double a = -1.7, b = 0.6;
    const Eigen::VectorXd comb = a * w1 + b * w2;
    const auto fits = [&](const Eigen::VectorXd& w) {
      return std::vector<CondMeanFit>{fit_series(w, zc, 5), fit_local_linear(w, zc, 0.3), fit_cell_means(w, zd)};
    };
    const auto f1 = fits(w1), f2 = fits(w2), fc = fits(comb), fa = fits(a * w1);
    const std::vector<std::vector<double>> points{{-0.5, 0.0, 0.4}, {-0.5, 0.0, 0.4}, {0.0, 1.0, 3.0}};
    for (std::size_t m = 0; m < 3; ++m)
      for (double v : points[m]) {
        CHECK(fc[m].evaluate(v)->theta ==
              doctest::Approx(a * f1[m].evaluate(v)->theta + b * f2[m].evaluate(v)->theta).epsilon(1e-10));
        CHECK(fa[m].evaluate(v)->se == doctest::Approx(std::abs(a) * f1[m].evaluate(v)->se).epsilon(1e-10));
      }
  }
}
