// ivcheck: command-line front end.
//
// Exit codes: 0 success (including "do not reject"), 2 when `test` rejects at
// any requested level, 1 on errors.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ivcheck/clr.hpp"
#include "ivcheck/config.hpp"
#include "ivcheck/dataset.hpp"
#include "ivcheck/estimators.hpp"
#include "ivcheck/moments.hpp"
#include "ivcheck/mte.hpp"
#include "ivcheck/overid.hpp"
#include "ivcheck/report.hpp"
#include "ivcheck/rng.hpp"
#include "ivcheck/simulation.hpp"

namespace fs = std::filesystem;
using namespace ivcheck;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitReject = 2;

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out = "ivcheck_out";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

struct DataOpts {
  std::string path;
  std::string y;
  std::vector<std::string> x;
  std::vector<std::string> z;
  bool no_intercept = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "key = value settings file (see the key list below)");
  app->add_option("--set", c.sets, "override one setting, key=value (repeatable)");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "master seed; omitted draws an entropy seed that is logged");
  app->add_option("--jobs", c.jobs, "worker threads (0 = all)")->capture_default_str();
}

void add_data(CLI::App* app, DataOpts& d, bool z_required) {
  app->add_option("--data", d.path, "CSV file with a header row")->required();
  app->add_option("--y", d.y, "outcome column")->required();
  app->add_option("--x", d.x, "regressor column(s), comma separated")->required()->delimiter(',');
  auto* z = app->add_option("--z", d.z, "instrument column(s), comma separated")->delimiter(',');
  if (z_required) z->required();
  app->add_flag("--no-intercept", d.no_intercept, "omit the constant term");
}

Dataset load(const DataOpts& d) { return load_csv(d.path, d.y, d.x, d.z.empty() ? d.x : d.z); }

Config resolve_config(const Common& c) {
  Config cfg;
  if (!c.config_file.empty()) cfg.merge_file(c.config_file);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, "--set expects key=value, got " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::uint64_t resolve_seed(const Common& c, const Config& cfg, std::vector<std::string>& args) {
  if (c.seed) return *c.seed;
  if (!cfg.get("rng.seed").empty()) return cfg.get_u64("rng.seed");
  const std::uint64_t seed = entropy_seed();
  std::cerr << "ivcheck: no --seed given, using entropy seed " << seed << "\n";
  args.push_back("--seed");
  args.push_back(std::to_string(seed));
  return seed;
}

NpregConfig npreg_from(const Config& cfg) {
  NpregConfig np;
  const std::string method = cfg.get("npreg.method");
  if (method == "auto") {
    np.method = NpregMethod::Series;
    np.cells_for_discrete = true;
  } else {
    np.method = parse_npreg_method(method);
    np.cells_for_discrete = false;
  }
  if (cfg.get("npreg.series_order") != "auto") np.series_order = static_cast<int>(cfg.get_int("npreg.series_order"));
  if (cfg.get("npreg.bandwidth") != "auto") np.bandwidth = cfg.get_double("npreg.bandwidth");
  np.bandwidth_scale = cfg.get_double("npreg.bandwidth_scale");
  const std::string kernel = cfg.get("npreg.kernel");
  if (kernel == "epanechnikov") np.kernel = Kernel::Epanechnikov;
  else if (kernel == "gaussian") np.kernel = Kernel::Gaussian;
  else throw Error(ErrorKind::InvalidArgument, "unknown kernel '" + kernel + "'");
  return np;
}

TestConfig test_config_from(const Config& cfg, std::uint64_t seed, int jobs) {
  TestConfig tc;
  tc.grid_count = static_cast<std::size_t>(cfg.get_int("grid.count"));
  const auto centiles = cfg.get_doubles("grid.centiles");
  if (centiles.size() != 2) throw Error(ErrorKind::InvalidArgument, "grid.centiles needs two values");
  tc.centile_lo = centiles[0];
  tc.centile_hi = centiles[1];
  tc.alpha_levels = cfg.get_doubles("test.alpha_levels");
  tc.npreg = npreg_from(cfg);
  tc.draws = static_cast<int>(cfg.get_int("sim.multiplier_draws"));
  tc.rng = RngSpec{seed, 0};
  tc.jobs = jobs;
  return tc;
}

struct Run {
  std::string command;
  std::vector<std::string> args;
  Config cfg;
  std::uint64_t seed = 0;
  std::string run_id;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  Manifest manifest;

  void begin(const std::string& cmd, const std::vector<std::string>& argv, const Common& c) {
    command = cmd;
    args = argv;
    cfg = resolve_config(c);
    seed = resolve_seed(c, cfg, args);
    cfg.set("rng.seed", std::to_string(seed));
    // --out and --jobs do not change results, so they stay out of the id.
    std::vector<std::string> id_args;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if ((args[i] == "--out" || args[i] == "--jobs") && i + 1 < args.size()) {
        ++i;
        continue;
      }
      id_args.push_back(args[i]);
    }
    run_id = make_run_id(id_args, seed);
    fs::create_directories(c.out);
  }

  void finish(const fs::path& out, const std::vector<fs::path>& files) {
    manifest.entries.insert(manifest.entries.begin(),
                            {{"command", command}, {"version", IVCHECK_VERSION}, {"run_id", run_id},
                             {"seed", std::to_string(seed)}});
    for (const auto& [k, v] : cfg.values()) manifest.add("config." + k, v);
    for (const auto& f : files) manifest.add("output", f.filename().string());
    manifest.add("wall_seconds",
                 std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()));
    manifest.args = args;
    manifest.write(out / "manifest.txt");
  }
};

InstrumentFn instruments(int degree) { return polynomial_instruments(degree); }

int cmd_fit(Run& run, const Common& c, const DataOpts& d, const std::string& method, int h_degree) {
  const Dataset ds = load(d);
  const bool intercept = !d.no_intercept;
  const fs::path out = c.out;
  CsvWriter csv(out / "fit.csv", {"run_id", "term", "estimate", "se"});
  if (method == "boxcox" || method == "boxcox-iv") {
    const BoxCoxFit fit = fit_boxcox(ds, default_lambda_grid(), method == "boxcox-iv");
    std::cout << "Box-Cox " << (fit.use_iv ? "IV" : "least squares") << ": lambda " << fit.lambda << ", b0 "
              << fit.beta0 << ", b1 " << fit.beta1 << "\n";
    const Eigen::VectorXd se = fit.linear.robust_se();
    csv.row({run.run_id, "lambda", format_double(fit.lambda), ""});
    csv.row({run.run_id, "b0", format_double(fit.beta0), format_double(se(0))});
    csv.row({run.run_id, "b1", format_double(fit.beta1), format_double(se(1))});
  } else {
    LinearFit fit;
    if (method == "ols") fit = fit_ols(ds, intercept);
    else if (method == "iv") fit = fit_iv(ds, intercept);
    else if (method == "2sls") fit = fit_2sls(ds, instruments(h_degree), intercept);
    else if (method == "gmm") fit = fit_gmm2step(ds, instruments(h_degree), intercept);
    else throw Error(ErrorKind::InvalidArgument, "unknown fit method '" + method + "'");
    const FirstStep fsr = first_step(fit, ds);
    const Eigen::VectorXd se = fit.robust_se();
    for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
      std::cout << fsr.names[static_cast<std::size_t>(k)] << "  " << fit.beta(k) << "  (" << se(k) << ")\n";
      csv.row({run.run_id, fsr.names[static_cast<std::size_t>(k)], format_double(fit.beta(k)), format_double(se(k))});
    }
    if (fit.first_stage_f) {
      std::cout << "first-stage F " << *fit.first_stage_f << (fit.relevance_warning ? "  (weak instrument)" : "")
                << "\n";
      run.manifest.add("diag.first_stage_f", format_double(*fit.first_stage_f));
      run.manifest.add("diag.relevance_warning", fit.relevance_warning ? "1" : "0");
    }
  }
  run.manifest.add("diag.method", method);
  run.finish(out, {out / "fit.csv"});
  return kExitOk;
}

ModelSpec model_from(const std::string& form, const std::vector<std::string>& assume, const std::string& condition_on,
                     bool intercept) {
  ModelSpec spec;
  spec.intercept = intercept;
  if (form == "linear") spec.form = Form::Linear;
  else if (form == "boxcox") spec.form = Form::BoxCox;
  else throw Error(ErrorKind::InvalidArgument, "unknown --form '" + form + "'");
  spec.exogeneity = false;
  for (const auto& a : assume) {
    if (a == "exogeneity") spec.exogeneity = true;
    else if (a == "homoskedasticity") spec.homoskedasticity = true;
    else throw Error(ErrorKind::InvalidArgument, "unknown assumption '" + a + "'");
  }
  if (condition_on == "z") spec.conditioning = Conditioning::OnZ;
  else if (condition_on == "x") spec.conditioning = Conditioning::OnX;
  else throw Error(ErrorKind::InvalidArgument, "--condition-on must be z or x");
  spec.validate();
  return spec;
}

int cmd_test(Run& run, const Common& c, const DataOpts& d, const std::string& form,
             const std::vector<std::string>& assume, std::string condition_on) {
  const Dataset ds = load(d);
  if (condition_on.empty()) condition_on = d.z.empty() ? "x" : "z";
  const ModelSpec spec = model_from(form, assume, condition_on, !d.no_intercept);
  const TestConfig tc = test_config_from(run.cfg, run.seed, c.jobs);
  const std::vector<TestReport> reports = test_model_all(ds, spec, tc);
  std::cout << describe_test_report(reports);
  const auto files = write_test_report(c.out, reports, run.run_id);
  bool reject = false;
  for (const auto& r : reports) reject = reject || r.reject_any();
  const TestReport& first = reports.front();
  run.manifest.add("diag.npreg_method", std::string(to_string(first.method)));
  run.manifest.add("diag.series_order", std::to_string(first.series_order));
  run.manifest.add("diag.bandwidth", format_double(first.bandwidth));
  run.manifest.add("diag.gamma_prime", format_double(first.gamma_prime));
  run.manifest.add("diag.decision", reject ? "reject" : "do-not-reject");
  run.finish(c.out, files);
  return reject ? kExitReject : kExitOk;
}

int cmd_overid(Run& run, const Common& c, const DataOpts& d, const std::string& method, int h_degree) {
  const Dataset ds = load(d);
  const OveridMethod m = method == "sargan" ? OveridMethod::Sargan
                         : method == "hansen"
                             ? OveridMethod::HansenJ
                             : throw Error(ErrorKind::InvalidArgument, "--method must be sargan or hansen");
  const OveridReport r = overid_test(m, ds, instruments(h_degree), !d.no_intercept);
  std::cout << to_string(r.method) << " statistic " << r.statistic << ", dof " << r.dof << ", p-value " << r.p_value
            << "\n";
  const fs::path out = c.out;
  {
    CsvWriter csv(out / "overid.csv", {"run_id", "method", "statistic", "dof", "p_value", "h_degree"});
    csv.row({run.run_id, std::string(to_string(r.method)), format_double(r.statistic), std::to_string(r.dof),
             format_double(r.p_value), std::to_string(h_degree)});
  }
  run.finish(out, {out / "overid.csv"});
  return kExitOk;
}

// "name=lo:hi:count" or "name=v1,v2,..."
std::pair<std::string, std::vector<double>> parse_param_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw Error(ErrorKind::InvalidArgument, "--param expects name=lo:hi:count");
  const std::string name = text.substr(0, eq), body = text.substr(eq + 1);
  std::vector<double> values;
  if (body.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(body);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw Error(ErrorKind::InvalidArgument, "--param range needs lo:hi:count");
    const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
    const int count = std::stoi(parts[2]);
    if (count < 1) throw Error(ErrorKind::InvalidArgument, "--param count must be positive");
    for (int k = 0; k < count; ++k) values.push_back(count == 1 ? lo : lo + (hi - lo) * k / (count - 1));
  } else {
    values = parse_double_list(body);
  }
  return {name, values};
}

int cmd_identified_set(Run& run, const Common& c, const DataOpts& d, const std::string& model,
                       const std::vector<std::string>& params, std::string condition_on, double alpha) {
  const Dataset ds = load(d);
  if (condition_on.empty()) condition_on = d.z.empty() ? "x" : "z";
  ModelSpec spec = model_from("linear", {"exogeneity"}, condition_on, true);
  spec.form = Form::UserParametric;
  if (model == "linear") spec.user = linear_model(ds.kx());
  else if (model == "boxcox") spec.user = boxcox_model();
  else throw Error(ErrorKind::InvalidArgument, "--model must be linear or boxcox");

  std::map<std::string, std::vector<double>> axes;
  for (const auto& p : params) axes.insert(parse_param_axis(p));
  std::vector<std::vector<double>> grid{{}};
  for (const auto& name : spec.user->parameter_names) {
    const auto it = axes.find(name);
    if (it == axes.end()) throw Error(ErrorKind::InvalidArgument, "missing --param for " + name);
    std::vector<std::vector<double>> next;
    for (const auto& g : grid)
      for (double v : it->second) {
        auto e = g;
        e.push_back(v);
        next.push_back(std::move(e));
      }
    grid = std::move(next);
  }
  const TestConfig tc = test_config_from(run.cfg, run.seed, c.jobs);
  const IdentifiedSet set = identified_set(ds, spec, grid, alpha, tc);
  std::cout << set.accepted.size() << " of " << grid.size() << " parameter points not rejected at alpha " << alpha
            << (set.empty ? " (identified set is empty: model rejected)" : "") << "\n";
  const fs::path out = c.out;
  {
    std::vector<std::string> header{"run_id"};
    for (const auto& n : spec.user->parameter_names) header.push_back(n);
    header.insert(header.end(), {"theta_corrected", "accepted"});
    CsvWriter csv(out / "identified_set.csv", header);
    std::size_t next_accepted = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      std::vector<std::string> row{run.run_id};
      for (double v : grid[i]) row.push_back(format_double(v));
      const bool acc = next_accepted < set.accepted.size() && set.accepted[next_accepted] == i;
      if (acc) ++next_accepted;
      row.push_back(format_double(set.theta_corrected[i]));
      row.push_back(acc ? "1" : "0");
      csv.row(row);
    }
  }
  run.manifest.add("diag.empty", set.empty ? "1" : "0");
  run.finish(out, {out / "identified_set.csv"});
  return kExitOk;
}

int cmd_mte(Run& run, const Common& c, const DataOpts& d, const std::vector<double>& x_values,
            std::vector<double> p_grid, const std::vector<std::string>& controls,
            const std::vector<double>& y_bounds, const std::string& propensity) {
  Dataset ds = load(d);
  if (d.z.empty()) throw Error(ErrorKind::InvalidArgument, "mte needs --z");
  if (!controls.empty()) ds = partial_out(ds, load_columns(d.path, controls));
  if (x_values.empty()) throw Error(ErrorKind::InvalidArgument, "--x-values is required");
  if (p_grid.empty()) p_grid = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::optional<std::pair<double, double>> bounds;
  if (!y_bounds.empty()) {
    if (y_bounds.size() != 2) throw Error(ErrorKind::InvalidArgument, "--y-bounds needs lo,hi");
    bounds = std::make_pair(y_bounds[0], y_bounds[1]);
  }
  PropensityConfig pc;
  pc.method = parse_npreg_method(propensity);
  const PropensityFit pf = fit_propensity(ds, pc);
  const ControlFunctionFit cf = fit_control_function(ds, pf);
  const fs::path out = c.out;
  std::vector<fs::path> files{out / "mte_cond_mean.csv", out / "mte_effects.csv", out / "mte_asf.csv",
                              out / "mte_diagnostics.csv"};
  {
    CsvWriter csv(files[0], {"run_id", "x", "p", "cond_mean", "on_support"});
    for (double x : x_values)
      for (double p : p_grid) {
        const auto m = cf.cond_mean(x, p);
        csv.row({run.run_id, format_double(x), format_double(p), m ? format_double(*m) : "", m ? "1" : "0"});
      }
  }
  {
    CsvWriter csv(files[1], {"run_id", "x", "x_prime", "p", "mte"});
    for (std::size_t a = 0; a < x_values.size(); ++a)
      for (std::size_t b = a + 1; b < x_values.size(); ++b)
        for (double p : p_grid) {
          std::string value;
          try {
            value = format_double(estimate_mte(cf, p, x_values[b], x_values[a]));
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::OffSupport) throw;
          }
          csv.row({run.run_id, format_double(x_values[b]), format_double(x_values[a]), format_double(p), value});
        }
  }
  {
    CsvWriter csv(files[2], {"run_id", "x", "p_lo", "p_hi", "full_support", "point", "lower", "upper", "note"});
    for (double x : x_values) {
      try {
        const AsfResult r = estimate_asf(cf, pf, x, bounds);
        csv.row({run.run_id, format_double(x), format_double(r.p_lo), format_double(r.p_hi),
                 r.full_support ? "1" : "0", r.point ? format_double(*r.point) : "", format_double(r.lower),
                 format_double(r.upper), ""});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::MissingBounds && e.kind() != ErrorKind::OffSupport) throw;
        csv.row({run.run_id, format_double(x), "", "", "", "", "", "", std::string(to_string(e.kind()))});
      }
    }
  }
  const UniformityReport uni = uniformity_diagnostic(pf);
  const Condition1Report c1 = condition1_diagnostic(pf, ds);
  {
    CsvWriter csv(files[3], {"run_id", "key", "value"});
    csv.row({run.run_id, "propensity_method", propensity});
    csv.row({run.run_id, "propensity_bandwidth", format_double(pf.bandwidth())});
    csv.row({run.run_id, "control_bandwidth_x", format_double(cf.bandwidth_x())});
    csv.row({run.run_id, "control_bandwidth_p", format_double(cf.bandwidth_p())});
    csv.row({run.run_id, "ks_uniform_overall", format_double(uni.ks_overall)});
    csv.row({run.run_id, "ks_uniform_max_within_bin", format_double(uni.ks_max_within)});
    csv.row({run.run_id, "max_raw_monotonicity_violation", format_double(c1.max_raw_monotonicity_violation)});
    csv.row({run.run_id, "injectivity_violations", std::to_string(c1.injectivity_violations)});
    csv.row({run.run_id, "injectivity_tolerance", format_double(c1.tolerance)});
    csv.row({run.run_id, "range_coverage", format_double(c1.union_coverage)});
    csv.row({run.run_id, "quantile_roundtrip_violations", std::to_string(quantile_roundtrip_check(ds))});
    csv.row({run.run_id, "condition1_summary", c1.summary});
  }
  std::cout << "propensity KS vs U[0,1]: " << uni.ks_overall << " overall, " << uni.ks_max_within
            << " worst bin\n" << c1.summary << "\n";
  run.finish(out, files);
  return kExitOk;
}

int cmd_simulate(Run& run, const Common& c, const std::string& study, std::optional<std::size_t> reps, bool full,
                 bool smoke) {
  StudyConfig cfg;
  if (fs::path(study).extension() == ".cfg") {
    const Config file = Config::from_file(study);
    cfg = custom_study(file);
    if (!reps && file.has("sim.replications")) reps = static_cast<std::size_t>(file.get_int("sim.replications"));
  } else {
    cfg = study_preset(study);
  }
  cfg.reps = full ? 500 : reps ? *reps : static_cast<std::size_t>(run.cfg.get_int("sim.replications"));
  cfg.smoke = smoke;
  cfg.rng = RngSpec{run.seed, 0};
  cfg.jobs = c.jobs;
  const std::vector<double> alphas = cfg.alpha_levels;
  cfg.test = test_config_from(run.cfg, run.seed, 1);
  cfg.alpha_levels = alphas;
  const StudyResult result = run_study(cfg);
  const fs::path out = c.out;
  std::vector<fs::path> files = write_study(out, result, run.run_id);
  if (cfg.name.rfind("figure", 0) == 0) {
    std::vector<CurveRow> rows;
    for (const auto& cell : result.cells)
      rows.push_back({cfg.dgps[cell.dgp].n, cell.method, cell.alpha, cell.rate, cell.mc_se});
    files.push_back(write_curve(out, rows, run.run_id));
  }
  for (std::size_t dgp = 0; dgp < cfg.dgps.size(); ++dgp) {
    std::cout << cfg.dgps[dgp].label();
    for (const auto& cell : result.cells)
      if (cell.dgp == dgp) std::cout << "  " << cell.method << "@" << cell.alpha << "=" << cell.rate;
    std::cout << "\n";
  }
  std::size_t failures = 0;
  for (const auto& cell : result.cells) failures += cell.failures;
  run.manifest.add("study", cfg.name);
  run.manifest.add("reps", std::to_string(cfg.reps));
  run.manifest.add("jobs", std::to_string(c.jobs));
  run.manifest.add("diag.failed_cells", std::to_string(failures));
  for (const auto& msg : result.failure_messages) run.manifest.add("diag.failure", msg);
  run.finish(out, files);
  return kExitOk;
}

std::string config_key_help() {
  std::ostringstream os;
  os << "Configuration keys (--config file or --set key=value):\n";
  for (const auto& k : config_keys())
    os << "  " << k.name << " (default '" << k.default_value << "'): " << k.help << "\n";
  os << "Custom study files (.cfg) also accept sim.family, sim.n, sim.L, sim.sigma, sim.lambda, sim.rho,\n"
        "sim.methods and sim.name.\n"
        "Exit codes: 0 success or no rejection, 2 test rejects, 1 error.";
  return os.str();
}

int dispatch(std::vector<std::string> argv);

int replay(const std::string& manifest_path, const std::string& out_override) {
  Manifest m = Manifest::read(manifest_path);
  std::vector<std::string> args = m.args;
  if (!out_override.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--out") {
        args[i + 1] = out_override;
        replaced = true;
      }
    if (!replaced) {
      args.push_back("--out");
      args.push_back(out_override);
    }
  }
  return dispatch(args);
}

int dispatch(std::vector<std::string> argv) {
  CLI::App app{"ivcheck: specification tests for instrumental-variable and regression models"};
  app.footer(config_key_help());
  app.require_subcommand(1);

  Common common;
  DataOpts data;
  std::string method = "iv", form = "linear", condition_on, study, model = "linear", propensity = "local-linear";
  std::string manifest_path;
  int h_degree = 3;
  double alpha = 0.05;
  bool full = false, smoke = false;
  std::optional<std::size_t> reps;
  std::optional<int> draws;
  std::optional<std::string> npreg, alphas_text;
  std::vector<std::string> assume{"exogeneity"}, params, controls;
  std::vector<double> x_values, p_grid, y_bounds;

  auto* fit = app.add_subcommand("fit", "estimate a linear, IV, GMM or Box-Cox model");
  add_common(fit, common);
  add_data(fit, data, false);
  fit->add_option("--method", method, "ols | iv | 2sls | gmm | boxcox | boxcox-iv")->capture_default_str();
  fit->add_option("--h-degree", h_degree, "polynomial degree of h(Z) for 2sls/gmm")->capture_default_str();

  auto* test = app.add_subcommand("test", "conditional moment inequality test of the model assumptions");
  add_common(test, common);
  add_data(test, data, false);
  test->add_option("--assume", assume, "exogeneity[,homoskedasticity]")->delimiter(',');
  test->add_option("--alpha", alphas_text, "significance levels, comma separated (test.alpha_levels)");
  test->add_option("--form", form, "linear | boxcox")->capture_default_str();
  test->add_option("--condition-on", condition_on, "z | x (default z when --z is given)");
  test->add_option("--npreg", npreg, "series | local-linear | cell-means | auto (npreg.method)");
  test->add_option("--draws", draws, "multiplier draws R (sim.multiplier_draws)");

  auto* overid = app.add_subcommand("overid", "Sargan or Hansen overidentification test");
  add_common(overid, common);
  add_data(overid, data, true);
  overid->add_option("--method", method, "sargan | hansen")->required();
  overid->add_option("--h-degree", h_degree, "h(Z) = (Z, ..., Z^degree)")->capture_default_str();

  auto* idset = app.add_subcommand("identified-set", "grid search for parameters not rejected by the test");
  add_common(idset, common);
  add_data(idset, data, false);
  idset->add_option("--model", model, "linear | boxcox")->capture_default_str();
  idset->add_option("--param", params, "name=lo:hi:count or name=v1,v2 (one per parameter)")->required();
  idset->add_option("--condition-on", condition_on, "z | x");
  idset->add_option("--level", alpha, "significance level")->capture_default_str();
  idset->add_option("--draws", draws, "multiplier draws R");

  auto* mte = app.add_subcommand("mte", "control-function MTE and ASF estimates with diagnostics");
  add_common(mte, common);
  add_data(mte, data, true);
  mte->add_option("--x-values", x_values, "treatment levels x, comma separated")->required()->delimiter(',');
  mte->add_option("--p-grid", p_grid, "p values for cond_mean/MTE (default 0.1,...,0.9)")->delimiter(',');
  mte->add_option("--controls", controls, "covariate columns partialled out of Y, X and Z")->delimiter(',');
  mte->add_option("--y-bounds", y_bounds, "outcome bounds lo,hi for partially identified ASF")->delimiter(',');
  mte->add_option("--propensity", propensity, "local-linear | cell-means")->capture_default_str();

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo size and power studies");
  add_common(simulate, common);
  simulate->add_option("--study", study, "table1 | table2 | table3 | table5 | figure1 | figure2 | file.cfg")
      ->required();
  simulate->add_option("--reps", reps, "replications per cell (sim.replications)");
  simulate->add_flag("--full", full, "500 replications per cell");
  simulate->add_flag("--smoke", smoke, "allow fewer than 50 replications");
  simulate->add_option("--draws", draws, "multiplier draws R (sim.multiplier_draws)");

  std::string replay_out;
  auto* rep = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  rep->add_option("manifest", manifest_path, "manifest.txt of an earlier run")->required();
  rep->add_option("--out", replay_out, "write outputs here instead of the recorded directory");

  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << "\n" << app.help();
    return kExitError;
  }

  try {
    if (rep->parsed()) return replay(manifest_path, replay_out);
    Run run;
    CLI::App* sub = app.get_subcommands().front();
    run.begin(sub->get_name(), argv, common);
    if (npreg) run.cfg.set("npreg.method", *npreg);
    if (alphas_text) run.cfg.set("test.alpha_levels", *alphas_text);
    if (draws) run.cfg.set("sim.multiplier_draws", std::to_string(*draws));
    if (fit->parsed()) return cmd_fit(run, common, data, method, h_degree);
    if (test->parsed()) return cmd_test(run, common, data, form, assume, condition_on);
    if (overid->parsed()) return cmd_overid(run, common, data, method, h_degree);
    if (idset->parsed()) return cmd_identified_set(run, common, data, model, params, condition_on, alpha);
    if (mte->parsed()) return cmd_mte(run, common, data, x_values, p_grid, controls, y_bounds, propensity);
    if (simulate->parsed()) return cmd_simulate(run, common, study, reps, full, smoke);
  } catch (const Error& e) {
    std::cerr << "ivcheck: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "ivcheck: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args);
}
