#include "ivcheck/simulation.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "ivcheck/estimators.hpp"
#include "ivcheck/kernels.hpp"
#include "ivcheck/overid.hpp"
#include "ivcheck/stats.hpp"

namespace ivcheck {

namespace {

constexpr std::pair<DgpFamily, std::string_view> kFamilyNames[] = {
    {DgpFamily::LinearIV_Null, "LinearIV_Null"},   {DgpFamily::LinearOLS_Null, "LinearOLS_Null"},
    {DgpFamily::BoxCoxIV_Null, "BoxCoxIV_Null"},   {DgpFamily::BoxCoxOLS_Null, "BoxCoxOLS_Null"},
    {DgpFamily::LinearIV_Power, "LinearIV_Power"}, {DgpFamily::LinearOLS_Power, "LinearOLS_Power"},
    {DgpFamily::BoxCox_Power, "BoxCox_Power"},     {DgpFamily::Hetero_Power, "Hetero_Power"},
};

bool is_power(DgpFamily f) {
  return f == DgpFamily::LinearIV_Power || f == DgpFamily::LinearOLS_Power || f == DgpFamily::BoxCox_Power;
}

bool is_boxcox(DgpFamily f) {
  return f == DgpFamily::BoxCoxIV_Null || f == DgpFamily::BoxCoxOLS_Null || f == DgpFamily::BoxCox_Power;
}

bool is_instrumented(DgpFamily f) {
  return f == DgpFamily::LinearIV_Null || f == DgpFamily::LinearIV_Power || f == DgpFamily::BoxCoxIV_Null ||
         f == DgpFamily::BoxCox_Power;
}

double clamp3(double v) { return std::clamp(v, -3.0, 3.0); }

// Second coordinate of a bivariate normal with unit first variance,
// covariance 0.5 and the given second variance, from two standard normals.
double correlated(double e1, double e2, double var2) { return 0.5 * e1 + std::sqrt(var2 - 0.25) * e2; }

// U(0, 10]
double uniform_0_10(Rng& rng) { return 10.0 * (1.0 - rng.uniform()); }

}  // namespace

std::string_view to_string(DgpFamily f) {
  for (const auto& [fam, name] : kFamilyNames)
    if (fam == f) return name;
  return "unknown";
}

DgpFamily parse_dgp_family(std::string_view text) {
  for (const auto& [fam, name] : kFamilyNames)
    if (name == text) return fam;
  throw Error(ErrorKind::InvalidArgument, "unknown DGP family '" + std::string(text) + "'");
}

void DgpSpec::validate() const {
  if (n < 50) throw Error(ErrorKind::InvalidArgument, "DGP sample size must be at least 50");
  if (!(L >= 0.0)) throw Error(ErrorKind::InvalidArgument, "L must be nonnegative");
  if (!(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma must be positive");
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorKind::InvalidArgument, "rho must lie in [0, 1]");
  if (!std::isfinite(lambda)) throw Error(ErrorKind::InvalidArgument, "lambda must be finite");
}

std::string DgpSpec::label() const {
  std::ostringstream os;
  os << to_string(family);
  if (is_power(family)) os << "(L=" << L << ",sigma=" << sigma << ")";
  if (family == DgpFamily::BoxCoxIV_Null || family == DgpFamily::BoxCoxOLS_Null) os << "(lambda=" << lambda << ")";
  if (family == DgpFamily::Hetero_Power) os << "(rho=" << rho << ")";
  os << " n=" << n;
  return os.str();
}

Dataset generate(const DgpSpec& spec, const RngSpec& rng_spec) {
  spec.validate();
  Rng rng(rng_spec);
  const Eigen::Index n = spec.n;
  Eigen::VectorXd y(n), x(n), z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (spec.family) {
      case DgpFamily::LinearIV_Null: {
        z(i) = rng.uniform(-3.0, 3.0);
        const double e1 = rng.normal(), e2 = rng.normal();
        x(i) = 3.0 * z(i) + correlated(e1, e2, 2.0);
        y(i) = 2.0 * x(i) + e1;
        break;
      }
      case DgpFamily::LinearIV_Power: {
        z(i) = rng.uniform(-3.0, 3.0);
        const double e1 = rng.normal(), e2 = rng.normal();
        const double u = spec.L / spec.sigma * stats::normal_pdf(z(i) / spec.sigma) + clamp3(e1);
        x(i) = 3.0 * z(i) + correlated(e1, e2, 1.0);
        y(i) = 2.0 * x(i) + u;
        break;
      }
      case DgpFamily::LinearOLS_Null: {
        x(i) = rng.uniform(-3.0, 3.0);
        y(i) = 2.0 * x(i) + rng.normal();
        z(i) = x(i);
        break;
      }
      case DgpFamily::LinearOLS_Power: {
        x(i) = rng.uniform(-3.0, 3.0);
        const double u = spec.L / spec.sigma * stats::normal_pdf(x(i) / spec.sigma) + clamp3(rng.normal());
        y(i) = 2.0 * x(i) + u;
        z(i) = x(i);
        break;
      }
      case DgpFamily::Hetero_Power: {
        x(i) = rng.uniform(-3.0, 3.0);
        // N(0, 1 + rho/9 X^2) read with the second argument as the standard
        // deviation; the variance reading gives little power even at rho = 0.9.
        y(i) = 2.0 * x(i) + (1.0 + spec.rho / 9.0 * x(i) * x(i)) * rng.normal();
        z(i) = x(i);
        break;
      }
      case DgpFamily::BoxCoxOLS_Null: {
        x(i) = uniform_0_10(rng);
        y(i) = 2.0 * box_cox(x(i), spec.lambda) + rng.normal();
        z(i) = x(i);
        break;
      }
      case DgpFamily::BoxCoxIV_Null: {
        z(i) = uniform_0_10(rng);
        const double e1 = rng.normal(), e2 = rng.normal();
        x(i) = 2.0 * z(i) + std::max(correlated(e1, e2, 2.0), 0.0);
        y(i) = 2.0 * box_cox(x(i), spec.lambda) + e1;
        break;
      }
      case DgpFamily::BoxCox_Power: {
        z(i) = uniform_0_10(rng);
        const double e1 = rng.normal(), e2 = rng.normal();
        const double u = spec.L / spec.sigma * stats::normal_pdf(z(i) / spec.sigma) + clamp3(e1);
        x(i) = 2.0 * z(i) + std::max(correlated(e1, e2, 1.0), 0.0);
        y(i) = 2.0 * std::log(x(i)) + u;
        break;
      }
    }
  }
  const bool iv = is_instrumented(spec.family);
  return Dataset(y, x, z, "y", {"x"}, {iv ? "z" : "x_cond"});
}

ModelSpec model_for(const DgpSpec& spec) {
  ModelSpec m;
  m.form = is_boxcox(spec.family) ? Form::BoxCox : Form::Linear;
  m.conditioning = is_instrumented(spec.family) ? Conditioning::OnZ : Conditioning::OnX;
  m.homoskedasticity = spec.family == DgpFamily::Hetero_Power;
  return m;
}

Dataset overid_dataset(const DgpSpec& spec, const Dataset& ds) {
  if (!is_boxcox(spec.family)) return ds;
  const double lambda = spec.family == DgpFamily::BoxCox_Power ? 0.0 : spec.lambda;
  return Dataset(ds.y(), box_cox(Eigen::VectorXd(ds.x().col(0)), lambda), ds.z(), ds.y_name(), ds.x_names(),
                 ds.z_names());
}

std::string_view to_string(TestMethod m) {
  switch (m) {
    case TestMethod::CMI: return "cmi";
    case TestMethod::Sargan: return "sargan";
    case TestMethod::HansenJ: return "hansen";
  }
  return "unknown";
}

TestMethod parse_test_method(std::string_view text) {
  if (text == "cmi") return TestMethod::CMI;
  if (text == "sargan") return TestMethod::Sargan;
  if (text == "hansen") return TestMethod::HansenJ;
  throw Error(ErrorKind::InvalidArgument, "unknown test method '" + std::string(text) + "'");
}

const StudyCell& StudyResult::cell(std::size_t dgp, std::string_view method, double alpha) const {
  for (const auto& c : cells)
    if (c.dgp == dgp && c.method == method && std::abs(c.alpha - alpha) < 1e-12) return c;
  throw Error(ErrorKind::InvalidArgument, "no such study cell");
}

std::vector<std::string> method_names(const StudyConfig& cfg) {
  std::vector<std::string> out;
  for (auto m : cfg.methods) out.emplace_back(to_string(m));
  for (const auto& c : cfg.custom) out.push_back(c.name);
  return out;
}

Eigen::MatrixXi run_replication(const StudyConfig& cfg, std::size_t dgp, std::size_t rep, std::string* failure) {
  const auto rows = static_cast<Eigen::Index>(cfg.methods.size() + cfg.custom.size());
  const auto cols = static_cast<Eigen::Index>(cfg.alpha_levels.size());
  Eigen::MatrixXi out = Eigen::MatrixXi::Constant(rows, cols, 0);
  const DgpSpec& spec = cfg.dgps[dgp];
  const RngSpec base = cfg.rng.child(dgp).child(rep);
  try {
    const Dataset ds = generate(spec, base.child(0));
    Eigen::Index row = 0;
    for (auto method : cfg.methods) {
      if (method == TestMethod::CMI) {
        TestConfig tc = cfg.test;
        tc.alpha_levels = cfg.alpha_levels;
        tc.rng = base.child(1);
        tc.jobs = 1;
        const TestReport report = test_model(ds, model_for(spec), tc);
        for (Eigen::Index a = 0; a < cols; ++a) out(row, a) = report.levels[static_cast<std::size_t>(a)].reject;
      } else {
        const OveridMethod om = method == TestMethod::Sargan ? OveridMethod::Sargan : OveridMethod::HansenJ;
        const OveridReport r = overid_test(om, overid_dataset(spec, ds), polynomial_instruments(cfg.h_degree));
        for (Eigen::Index a = 0; a < cols; ++a) out(row, a) = r.p_value < cfg.alpha_levels[static_cast<std::size_t>(a)];
      }
      ++row;
    }
    for (const auto& custom : cfg.custom) {
      for (Eigen::Index a = 0; a < cols; ++a)
        out(row, a) = custom.reject(ds, cfg.alpha_levels[static_cast<std::size_t>(a)], base.child(2));
      ++row;
    }
  } catch (const std::exception& e) {
    if (failure) *failure = spec.label() + " rep " + std::to_string(rep) + ": " + e.what();
    out.setConstant(-1);
  }
  return out;
}

namespace {

void check_config(const StudyConfig& cfg) {
  if (cfg.dgps.empty()) throw Error(ErrorKind::InvalidArgument, "study has no DGPs");
  if (cfg.methods.empty() && cfg.custom.empty()) throw Error(ErrorKind::InvalidArgument, "study has no methods");
  if (cfg.reps == 0 || (!cfg.smoke && cfg.reps < kMinReps))
    throw Error(ErrorKind::InvalidArgument, "a study needs at least " + std::to_string(kMinReps) + " replications");
  if (cfg.alpha_levels.empty()) throw Error(ErrorKind::InvalidArgument, "no significance levels");
  for (const auto& d : cfg.dgps) d.validate();
}

StudyResult aggregate(const StudyConfig& cfg, const std::vector<Eigen::MatrixXi>& outcomes,
                      const std::vector<std::string>& failures) {
  StudyResult result;
  result.config = cfg;
  const auto names = method_names(cfg);
  for (std::size_t d = 0; d < cfg.dgps.size(); ++d) {
    for (std::size_t m = 0; m < names.size(); ++m) {
      for (std::size_t a = 0; a < cfg.alpha_levels.size(); ++a) {
        StudyCell cell;
        cell.dgp = d;
        cell.method = names[m];
        cell.alpha = cfg.alpha_levels[a];
        cell.reps = cfg.reps;
        for (std::size_t r = 0; r < cfg.reps; ++r) {
          const int v = outcomes[d * cfg.reps + r](static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(a));
          if (v < 0) ++cell.failures;
          else cell.rejections += static_cast<std::size_t>(v);
        }
        const std::size_t ok = cell.reps - cell.failures;
        if (ok > 0) {
          cell.rate = static_cast<double>(cell.rejections) / static_cast<double>(ok);
          cell.mc_se = std::sqrt(cell.rate * (1.0 - cell.rate) / static_cast<double>(ok));
        }
        result.cells.push_back(cell);
      }
    }
  }
  for (const auto& f : failures) {
    if (f.empty()) continue;
    if (result.failure_messages.size() >= 20) break;
    result.failure_messages.push_back(f);
  }
  return result;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

StudyResult run_study_serial(const StudyConfig& cfg) {
  check_config(cfg);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t total = cfg.dgps.size() * cfg.reps;
  std::vector<Eigen::MatrixXi> outcomes(total);
  std::vector<std::string> failures(total);
  for (std::size_t t = 0; t < total; ++t) outcomes[t] = run_replication(cfg, t / cfg.reps, t % cfg.reps, &failures[t]);
  StudyResult result = aggregate(cfg, outcomes, failures);
  result.wall_seconds = seconds_since(start);
  return result;
}

StudyResult run_study_parallel(const StudyConfig& cfg) {
  check_config(cfg);
  const auto start = std::chrono::steady_clock::now();
  const auto total = static_cast<std::int64_t>(cfg.dgps.size() * cfg.reps);
  std::vector<Eigen::MatrixXi> outcomes(static_cast<std::size_t>(total));
  std::vector<std::string> failures(static_cast<std::size_t>(total));
#pragma omp parallel for schedule(dynamic) num_threads(kernels::resolve_jobs(cfg.jobs))
  for (std::int64_t t = 0; t < total; ++t) {
    const auto u = static_cast<std::size_t>(t);
    outcomes[u] = run_replication(cfg, u / cfg.reps, u % cfg.reps, &failures[u]);
  }
  StudyResult result = aggregate(cfg, outcomes, failures);
  result.wall_seconds = seconds_since(start);
  return result;
}

StudyResult run_study(const StudyConfig& cfg) {
  return kernels::resolve_jobs(cfg.jobs) > 1 ? run_study_parallel(cfg) : run_study_serial(cfg);
}

std::vector<CurveRow> power_curve(const DgpSpec& base, const std::vector<Eigen::Index>& n_list,
                                  const StudyConfig& cfg) {
  if (n_list.empty()) throw Error(ErrorKind::InvalidArgument, "n_list is empty");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1]) throw Error(ErrorKind::InvalidArgument, "n_list must be strictly increasing");
  StudyConfig study = cfg;
  study.dgps.clear();
  for (Eigen::Index n : n_list) {
    DgpSpec d = base;
    d.n = n;
    study.dgps.push_back(d);
  }
  const StudyResult result = run_study(study);
  std::vector<CurveRow> rows;
  for (const auto& c : result.cells)
    rows.push_back({study.dgps[c.dgp].n, c.method, c.alpha, c.rate, c.mc_se});
  return rows;
}

std::vector<std::string> study_preset_names() {
  return {"table1", "table2", "table3", "table5", "figure1", "figure2"};
}

StudyConfig study_preset(std::string_view name) {
  StudyConfig cfg;
  cfg.name = std::string(name);
  if (name == "table1") {
    for (Eigen::Index n : {200, 500, 1000, 2000, 3000}) cfg.dgps.push_back({DgpFamily::LinearIV_Null, n});
  } else if (name == "table2") {
    for (double lambda : {0.0, -1.0, 1.0})
      for (Eigen::Index n : {200, 1000, 2000, 3000})
        cfg.dgps.push_back({DgpFamily::BoxCoxIV_Null, n, lambda});
  } else if (name == "table3") {
    for (double L : {0.1, 0.5, 1.0})
      for (double sigma : {1.0, 0.5, 0.25, 0.1})
        cfg.dgps.push_back({DgpFamily::LinearIV_Power, 1000, 0.0, L, sigma});
  } else if (name == "table5") {
    for (double rho : {0.1, 0.3, 0.5, 0.7, 0.9})
      cfg.dgps.push_back({DgpFamily::Hetero_Power, 1000, 0.0, 0.0, 1.0, rho});
  } else if (name == "figure1") {
    cfg.methods = {TestMethod::CMI, TestMethod::Sargan};
    cfg.alpha_levels = {0.05};
    for (Eigen::Index n : {250, 500, 750, 1000})
      cfg.dgps.push_back({DgpFamily::LinearIV_Power, n, 0.0, 0.5, 0.25});
  } else if (name == "figure2") {
    cfg.methods = {TestMethod::CMI, TestMethod::HansenJ};
    cfg.alpha_levels = {0.05};
    for (Eigen::Index n : {250, 500, 750, 1000})
      cfg.dgps.push_back({DgpFamily::BoxCox_Power, n, 0.0, 0.5, 0.25});
  } else {
    throw Error(ErrorKind::InvalidArgument, "unknown study '" + std::string(name) + "'");
  }
  return cfg;
}

StudyConfig custom_study(const Config& cfg) {
  StudyConfig out;
  if (!cfg.has("sim.family")) throw Error(ErrorKind::InvalidArgument, "custom study needs sim.family");
  const DgpFamily family = parse_dgp_family(cfg.get("sim.family"));
  const auto list = [&](const std::string& key, double fallback) {
    return cfg.has(key) ? cfg.get_doubles(key) : std::vector<double>{fallback};
  };
  const auto ns = list("sim.n", 1000.0);
  const auto lambdas = list("sim.lambda", 0.0);
  const auto ls = list("sim.L", 0.0);
  const auto sigmas = list("sim.sigma", 1.0);
  const auto rhos = list("sim.rho", 0.0);
  for (double n : ns)
    for (double lambda : lambdas)
      for (double L : ls)
        for (double sigma : sigmas)
          for (double rho : rhos)
            out.dgps.push_back({family, static_cast<Eigen::Index>(n), lambda, L, sigma, rho});
  if (cfg.has("sim.methods")) {
    out.methods.clear();
    for (const auto& m : parse_name_list(cfg.get("sim.methods"))) out.methods.push_back(parse_test_method(m));
  }
  if (cfg.has("sim.name")) out.name = cfg.get("sim.name");
  return out;
}

}  // namespace ivcheck
