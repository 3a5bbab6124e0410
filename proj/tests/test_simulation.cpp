#include <doctest.h>

#include "helpers.hpp"
#include "ivcheck/report.hpp"
#include "ivcheck/simulation.hpp"
#include "ivcheck/stats.hpp"

using namespace ivcheck;

namespace {

StudyConfig one_cell(const DgpSpec& d, std::size_t reps, std::uint64_t seed) {
  StudyConfig cfg;
  cfg.dgps = {d};
  cfg.reps = reps;
  cfg.rng = RngSpec{seed, 0};
  return cfg;
}

bool same_cells(const StudyResult& a, const StudyResult& b) {
  if (a.cells.size() != b.cells.size()) return false;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    const StudyCell &x = a.cells[i], &y = b.cells[i];
    if (x.dgp != y.dgp || x.method != y.method || x.alpha != y.alpha || x.rejections != y.rejections ||
        x.failures != y.failures || x.rate != y.rate || x.mc_se != y.mc_se)
      return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("simulation") {
  TEST_CASE("null design: Cov(X, Z) = 3 Var(Z) = 9") {
    const Dataset ds = generate({DgpFamily::LinearIV_Null, 100000}, RngSpec{1, 0});
    const Eigen::VectorXd x = ds.x().col(0), z = ds.z().col(0);
    const double cov = ((x.array() - x.mean()) * (z.array() - z.mean())).sum() / (ds.n() - 1.0);
    CHECK(std::abs(cov - 9.0) < 0.2);
    CHECK(z.minCoeff() >= -3.0);
    CHECK(z.maxCoeff() <= 3.0);
  }

  TEST_CASE("power design with L = 0 carries no bump") {
    const DgpSpec a{DgpFamily::LinearIV_Power, 100000, 0.0, 0.0, 0.25};
    const DgpSpec b{DgpFamily::LinearIV_Power, 100000, 0.0, 0.0, 1.0};
    const Dataset da = generate(a, RngSpec{2, 0}), db = generate(b, RngSpec{2, 0});
    CHECK(da == db);
    const Dataset other = generate(a, RngSpec{3, 0});
    const Eigen::VectorXd ua = da.y() - 2.0 * da.x().col(0), ub = other.y() - 2.0 * other.x().col(0);
    CHECK(stats::ks_two_sample({ua.data(), ua.data() + ua.size()}, {ub.data(), ub.data() + ub.size()}) < 0.02);
    std::vector<double> pit;
    for (Eigen::Index i = 0; i < ua.size(); ++i) pit.push_back(stats::normal_cdf(ua(i)));
    CHECK(stats::ks_uniform(pit) < 0.02);
  }

  TEST_CASE("binned E[U | Z] follows the bump L / sigma phi(z / sigma)") {
    const DgpSpec d{DgpFamily::LinearIV_Power, 1000000, 0.0, 1.0, 0.5};
    const Dataset ds = generate(d, RngSpec{4, 0});
    const int bins = 30;
    std::vector<double> sum(bins, 0.0), bump(bins, 0.0);
    std::vector<int> count(bins, 0);
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
      const double z = ds.z()(i, 0);
      const int b = std::min(bins - 1, static_cast<int>((z + 3.0) / 6.0 * bins));
      sum[b] += ds.y()(i) - 2.0 * ds.x()(i, 0);
      bump[b] += d.L / d.sigma * stats::normal_pdf(z / d.sigma);
      ++count[b];
    }
    double worst = 0.0;
    for (int b = 0; b < bins; ++b) worst = std::max(worst, std::abs((sum[b] - bump[b]) / count[b]));
    CHECK(worst < 0.02);
  }

  TEST_CASE("DGP validation") {
    CHECK_THROWS_AS(DgpSpec({DgpFamily::LinearIV_Power, 1000, 0.0, -1.0, 1.0}).validate(), Error);
    CHECK_THROWS_AS(DgpSpec({DgpFamily::LinearIV_Power, 1000, 0.0, 1.0, 0.0}).validate(), Error);
    CHECK_THROWS_AS(DgpSpec({DgpFamily::Hetero_Power, 1000, 0.0, 0.0, 1.0, 1.5}).validate(), Error);
    CHECK_THROWS_AS(DgpSpec({DgpFamily::LinearIV_Null, 10}).validate(), Error);
    for (const char* name : {"LinearIV_Null", "LinearOLS_Null", "BoxCoxIV_Null", "BoxCoxOLS_Null", "LinearIV_Power",
                             "LinearOLS_Power", "BoxCox_Power", "Hetero_Power"}) {
      const DgpFamily f = parse_dgp_family(name);
      CHECK(to_string(f) == name);
      const Dataset ds = generate({f, 200, 0.0, 0.5, 0.5, 0.5}, RngSpec{5, 0});
      CHECK(ds.n() == 200);
      CHECK(ds.y().allFinite());
    }
    CHECK_THROWS_AS(parse_dgp_family("nope"), Error);
  }

  TEST_CASE("a method that always rejects has rate one") {
    StudyConfig cfg = one_cell({DgpFamily::LinearIV_Null, 100}, 50, 6);
    cfg.methods.clear();
    cfg.custom.push_back({"always", [](const Dataset&, double, const RngSpec&) { return true; }});
    const StudyResult r = run_study(cfg);
    for (const auto& c : r.cells) {
      CHECK(c.rate == 1.0);
      CHECK(c.mc_se == 0.0);
      CHECK(c.rejections == 50);
    }
  }

  TEST_CASE("failed replications are counted and excluded from the rate") {
    StudyConfig cfg = one_cell({DgpFamily::LinearIV_Null, 100}, 60, 7);
    cfg.methods.clear();
    cfg.alpha_levels = {0.05};
    cfg.custom.push_back({"flaky", [](const Dataset& ds, double, const RngSpec&) {
                            if (ds.y()(0) > 0.0) throw Error(ErrorKind::DomainError, "boom");
                            return ds.y()(1) > 0.0;
                          }});
    const StudyResult r = run_study(cfg);
    const StudyCell& c = r.cell(0, "flaky", 0.05);
    CHECK(c.failures > 0);
    CHECK(c.failures < 60);
    CHECK(c.reps == 60);
    CHECK(c.rate == doctest::Approx(static_cast<double>(c.rejections) / (60.0 - c.failures)));
    CHECK_FALSE(r.failure_messages.empty());
  }

  TEST_CASE("study configuration checks") {
    StudyConfig cfg = one_cell({DgpFamily::LinearIV_Null, 100}, 10, 8);
    CHECK_THROWS_AS(run_study(cfg), Error);
    cfg.smoke = true;
    cfg.reps = 1;
    const StudyResult smoke = run_study(cfg);
    CHECK(smoke.cells.size() == 3);
    cfg.dgps.clear();
    CHECK_THROWS_AS(run_study(cfg), Error);
  }

  TEST_CASE("study results do not depend on the worker count") {
    StudyConfig cfg = one_cell({DgpFamily::LinearIV_Power, 300, 0.0, 0.5, 0.5}, 50, 9);
    cfg.dgps.push_back({DgpFamily::Hetero_Power, 300, 0.0, 0.0, 1.0, 0.5});
    cfg.methods = {TestMethod::CMI, TestMethod::Sargan, TestMethod::HansenJ};
    const StudyResult serial = run_study_serial(cfg);
    for (int jobs : {2, 4}) {
      cfg.jobs = jobs;
      CHECK(same_cells(serial, run_study_parallel(cfg)));
    }
  }

  TEST_CASE("power curve: smoke run and monotone rates") {
    StudyConfig cfg;
    cfg.smoke = true;
    cfg.reps = 1;
    cfg.methods = {TestMethod::CMI, TestMethod::Sargan};
    cfg.alpha_levels = {0.05};
    const DgpSpec base{DgpFamily::LinearIV_Power, 0, 0.0, 0.5, 0.25};
    const auto rows = power_curve(base, {100, 200}, cfg);
    CHECK(rows.size() == 4);
    for (const auto& r : rows) CHECK((r.rate == 0.0 || r.rate == 1.0));
    CHECK_THROWS_AS(power_curve(base, {200, 100}, cfg), Error);

    cfg.smoke = false;
    cfg.reps = 100;
    cfg.methods = {TestMethod::CMI};
    cfg.rng = RngSpec{10, 0};
    const auto curve = power_curve(base, {250, 500, 1000}, cfg);
    for (std::size_t i = 1; i < curve.size(); ++i)
      CHECK(curve[i].rate >= curve[i - 1].rate - 2.0 * std::max(curve[i].mc_se, curve[i - 1].mc_se));
  }

  TEST_CASE("presets and custom studies") {
    for (const auto& name : study_preset_names()) CHECK_FALSE(study_preset(name).dgps.empty());
    CHECK(study_preset("table1").dgps.size() == 5);
    CHECK(study_preset("table3").dgps.size() == 12);
    CHECK(study_preset("figure1").methods.size() == 2);
    CHECK_THROWS_AS(study_preset("table9"), Error);

    Config c;
    c.set("sim.family", "LinearIV_Power");
    c.set("sim.n", "500,1000");
    c.set("sim.L", "0.1,0.5,1");
    c.set("sim.methods", "cmi,hansen");
    const StudyConfig s = custom_study(c);
    CHECK(s.dgps.size() == 6);
    CHECK(s.methods.size() == 2);
    CHECK(s.dgps[5].n == 1000);
    CHECK(s.dgps[5].L == 1.0);
  }
}

// Target rejection rates on the simulation designs; each runs 100 to 200
// replications.
TEST_SUITE("reference_rates") {
  TEST_CASE("size on the IV null design at n = 3000") {
    StudyConfig cfg = one_cell({DgpFamily::LinearIV_Null, 3000}, 200, 21);
    const StudyResult r = run_study(cfg);
    CHECK(r.cell(0, "cmi", 0.05).rate <= 0.10);
    CHECK(r.cell(0, "cmi", 0.10).rate <= 0.15);
    CHECK(std::abs(r.cell(0, "cmi", 0.05).rate - 0.046) <= 0.04);
  }

  TEST_CASE("power against a peaked bump") {
    const StudyResult r = run_study(one_cell({DgpFamily::LinearIV_Power, 1000, 0.0, 1.0, 0.25}, 100, 22));
    CHECK(r.cell(0, "cmi", 0.05).rate >= 0.95);
    CHECK(r.cell(0, "cmi", 0.01).rate >= 0.97);
  }

  TEST_CASE("power against heteroskedasticity at rho = 0.9") {
    const StudyResult r = run_study(one_cell({DgpFamily::Hetero_Power, 1000, 0.0, 0.0, 1.0, 0.9}, 100, 23));
    CHECK(r.cell(0, "cmi", 0.05).rate >= 0.95);
  }

  TEST_CASE("binary instrument never rejects") {
    StudyConfig cfg;
    cfg.reps = 100;
    cfg.alpha_levels = {0.10, 0.05, 0.01};
    cfg.dgps = {{DgpFamily::LinearIV_Null, 300}};
    cfg.methods.clear();
    cfg.custom.push_back({"binary", [](const Dataset& ds, double alpha, const RngSpec& rng) {
                            Eigen::MatrixXd zb = (ds.z().array() > 0.0).cast<double>();
                            TestConfig tc;
                            tc.alpha_levels = {alpha};
                            tc.rng = rng;
                            tc.npreg.method = NpregMethod::CellMeans;
                            const TestReport r = test_model(Dataset(ds.y(), ds.x(), zb), ModelSpec{}, tc);
                            for (const auto& g : r.grid)
                              if (std::abs(g.theta) > 1e-10) return true;
                            return r.reject_any();
                          }});
    const StudyResult r = run_study(cfg);
    for (const auto& c : r.cells) CHECK(c.rejections == 0);
  }
}
