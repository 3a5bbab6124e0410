#include "ivcheck/clr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "ivcheck/kernels.hpp"
#include "ivcheck/stats.hpp"

namespace ivcheck {

const LevelResult& TestReport::level(double alpha) const {
  for (const auto& l : levels)
    if (std::abs(l.alpha - alpha) < 1e-12) return l;
  throw Error(ErrorKind::InvalidArgument, "alpha level not in report");
}

bool TestReport::reject_any() const {
  return std::any_of(levels.begin(), levels.end(), [](const LevelResult& l) { return l.reject; });
}

void check_report_invariants(const TestReport& report) {
  std::vector<LevelResult> sorted = report.levels;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.alpha < b.alpha; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& l = sorted[i];
    if (l.reject != (l.theta_corrected > 0.0)) throw std::logic_error("reject flag disagrees with theta_corrected");
    if (l.k_crit > l.k_crit_full) throw std::logic_error("selected-set critical value exceeds full-grid value");
    if (i == 0) continue;
    const auto& prev = sorted[i - 1];
    if (l.k_crit > prev.k_crit) throw std::logic_error("critical value increases with alpha");
    if (l.theta_corrected < prev.theta_corrected) throw std::logic_error("theta_corrected decreases with alpha");
    if (prev.reject && !l.reject) throw std::logic_error("rejection is not monotone in alpha");
  }
}

double selection_level(Eigen::Index n) { return 1.0 - 0.1 / std::log(static_cast<double>(n)); }

namespace {

std::size_t distinct_count(const Eigen::VectorXd& v, std::size_t stop_after) {
  std::set<double> seen;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    seen.insert(v(i));
    if (seen.size() > stop_after) break;
  }
  return seen.size();
}

CondMeanFit fit_moment(const Eigen::VectorXd& w, const Eigen::VectorXd& z, NpregMethod method,
                       const NpregConfig& cfg) {
  switch (method) {
    case NpregMethod::Series: {
      const int order = cfg.series_order > 0 ? cfg.series_order : default_series_order(z.size());
      return fit_series(w, z, order);
    }
    case NpregMethod::LocalLinear:
      return fit_local_linear(w, z, cfg.bandwidth, cfg.kernel, cfg.bandwidth_scale);
    case NpregMethod::CellMeans:
      return fit_cell_means(w, z);
  }
  throw Error(ErrorKind::InvalidArgument, "unknown npreg method");
}

// Symmetric square root of a PSD matrix; tolerates the exact singularity the
// (W, -W) moment pairs produce.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& omega) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

std::size_t argmax_lowest(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace

TestReport run_test(const MomentSystem& ms, const std::vector<double>& grid, const NpregConfig& npreg,
                    const std::vector<double>& alpha_levels, int draws, const RngSpec& rng, int jobs) {
  if (draws < kMinDraws)
    throw Error(ErrorKind::SimulationBudgetTooSmall,
                "need at least " + std::to_string(kMinDraws) + " multiplier draws, got " + std::to_string(draws));
  if (grid.empty()) throw Error(ErrorKind::EmptyGrid, "conditioning grid is empty");
  if (ms.moments.empty()) throw Error(ErrorKind::InvalidArgument, "moment system is empty");
  if (alpha_levels.empty()) throw Error(ErrorKind::InvalidArgument, "no significance levels requested");
  for (double a : alpha_levels)
    if (!(a > 0.0 && a < 1.0)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in (0, 1)");

  const Eigen::Index n = ms.conditioning.size();
  NpregMethod method = npreg.method;
  if (npreg.cells_for_discrete && method != NpregMethod::CellMeans &&
      distinct_count(ms.conditioning, kDiscreteSupportMax) <= kDiscreteSupportMax)
    method = NpregMethod::CellMeans;

  TestReport report;
  report.method = method;
  report.draws = draws;
  report.rng = rng;
  report.n = n;
  report.conditioning_name = ms.conditioning_name;
  report.grid_requested = grid.size();

  std::vector<CondMeanFit> fits;
  fits.reserve(ms.moments.size());
  for (const auto& m : ms.moments) {
    if (m.values.size() != n) throw Error(ErrorKind::InvalidArgument, "moment length does not match data");
    fits.push_back(fit_moment(m.values, ms.conditioning, method, npreg));
    report.moment_labels.push_back(m.label);
  }
  switch (method) {
    case NpregMethod::Series: report.series_order = fits.front().order(); break;
    case NpregMethod::LocalLinear: report.bandwidth = fits.front().bandwidth(); break;
    case NpregMethod::CellMeans: report.cells = fits.front().cells().size(); break;
  }

  for (std::size_t j = 0; j < fits.size(); ++j) {
    for (double v : grid) {
      const auto est = fits[j].evaluate(v);
      if (!est) {
        ++report.dropped_points;
        continue;
      }
      report.grid.push_back({j, v, est->theta, est->se, false});
    }
  }
  if (report.grid.empty()) throw Error(ErrorKind::EmptyGrid, "no grid point has data support");
  const bool all_floor = std::all_of(report.grid.begin(), report.grid.end(),
                                     [](const GridPoint& g) { return g.se <= se_floor(g.theta); });
  if (all_floor) throw Error(ErrorKind::DegenerateVariance, "every standard error is at its floor");

  const auto rows = static_cast<Eigen::Index>(report.grid.size());
  Eigen::MatrixXd g;
  if (method == NpregMethod::Series) {
    const Eigen::Index k = fits.front().coef().size();
    const auto nj = static_cast<Eigen::Index>(fits.size());
    Eigen::MatrixXd scores(n, k * nj);
    for (Eigen::Index j = 0; j < nj; ++j) scores.middleCols(j * k, k) = fits[static_cast<std::size_t>(j)].coef_scores();
    const Eigen::MatrixXd root = psd_sqrt(scores.transpose() * scores);
    g.resize(rows, k * nj);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& pt = report.grid[static_cast<std::size_t>(i)];
      const Eigen::VectorXd b = fits[pt.moment].basis(pt.v);
      g.row(i) = (b.transpose() * root.middleRows(static_cast<Eigen::Index>(pt.moment) * k, k)) / pt.se;
    }
  } else {
    g.resize(rows, n);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const auto& pt = report.grid[static_cast<std::size_t>(i)];
      g.row(i) = fits[pt.moment].influence(pt.v).transpose() / pt.se;
    }
  }

  const Eigen::MatrixXd sims = kernels::simulate_process(g, draws, rng, jobs);
  const std::vector<double> sup_all = kernels::column_max(sims);

  std::vector<double> theta(report.grid.size()), se(report.grid.size());
  for (std::size_t i = 0; i < report.grid.size(); ++i) {
    theta[i] = report.grid[i].theta;
    se[i] = report.grid[i].se;
  }
  report.theta_hat_sup = *std::max_element(theta.begin(), theta.end());
  report.gamma_prime = selection_level(n);
  report.kappa = stats::quantile_type7(sup_all, report.gamma_prime);

  const double kappa = std::max(report.kappa, 0.0);
  double anchor = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < theta.size(); ++i) anchor = std::max(anchor, theta[i] - kappa * se[i]);
  std::vector<Eigen::Index> selected;
  report.selected_set_size.assign(fits.size(), 0);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (theta[i] >= anchor - 2.0 * kappa * se[i]) {
      report.grid[i].selected = true;
      selected.push_back(static_cast<Eigen::Index>(i));
      ++report.selected_set_size[report.grid[i].moment];
    }
  }
  const std::vector<double> sup_sel = kernels::column_max(sims, selected);

  std::vector<double> sorted_all = sup_all, sorted_sel = sup_sel;
  std::sort(sorted_all.begin(), sorted_all.end());
  std::sort(sorted_sel.begin(), sorted_sel.end());
  std::vector<double> corrected(theta.size());
  for (double alpha : alpha_levels) {
    LevelResult l;
    l.alpha = alpha;
    l.k_crit = stats::quantile_type7_sorted(sorted_sel, 1.0 - alpha);
    l.k_crit_full = stats::quantile_type7_sorted(sorted_all, 1.0 - alpha);
    for (std::size_t i = 0; i < theta.size(); ++i) corrected[i] = theta[i] - l.k_crit * se[i];
    l.argmax = argmax_lowest(corrected);
    l.theta_corrected = corrected[l.argmax];
    l.reject = l.theta_corrected > 0.0;
    report.levels.push_back(l);
  }
  check_report_invariants(report);
  return report;
}

TestReport run_test(const MomentSystem& ms, const TestConfig& cfg) {
  const ConditioningGrid grid = conditioning_grid(ms.conditioning, cfg.centile_lo, cfg.centile_hi, cfg.grid_count);
  TestReport report = run_test(ms, grid.points, cfg.npreg, cfg.alpha_levels, cfg.draws, cfg.rng, cfg.jobs);
  report.grid_requested = grid.requested;
  report.discrete_grid = grid.discrete;
  return report;
}

TestReport test_model(const Dataset& ds, const ModelSpec& spec, const TestConfig& cfg, Eigen::Index coordinate) {
  FirstStep fs = first_step(ds, spec);
  const MomentSystem ms = build_moments(fs, ds, spec, coordinate);
  TestReport report = run_test(ms, cfg);
  report.first_step = std::move(fs);
  return report;
}

std::vector<TestReport> test_model_all(const Dataset& ds, const ModelSpec& spec, const TestConfig& cfg) {
  const FirstStep fs = first_step(ds, spec);
  const Eigen::Index k = spec.conditioning == Conditioning::OnZ ? ds.kz() : ds.kx();
  std::vector<TestReport> out;
  for (Eigen::Index c = 0; c < k; ++c) {
    TestReport report = run_test(build_moments(fs, ds, spec, c), cfg);
    report.first_step = fs;
    out.push_back(std::move(report));
  }
  return out;
}

IdentifiedSet identified_set(const Dataset& ds, const ModelSpec& spec,
                             const std::vector<std::vector<double>>& theta_grid, double alpha,
                             const TestConfig& cfg) {
  if (theta_grid.empty()) throw Error(ErrorKind::EmptyGrid, "parameter grid is empty");
  if (!spec.user) throw Error(ErrorKind::InvalidArgument, "identified_set needs a user-parametric model");
  TestConfig local = cfg;
  local.alpha_levels = {alpha};
  IdentifiedSet out;
  out.theta_grid = theta_grid;
  out.alpha = alpha;
  for (std::size_t i = 0; i < theta_grid.size(); ++i) {
    const MomentSystem ms = build_parametric_grid(ds, spec, theta_grid[i]);
    const TestReport report = run_test(ms, local);
    out.theta_corrected.push_back(report.levels.front().theta_corrected);
    if (!report.levels.front().reject) out.accepted.push_back(i);
  }
  out.empty = out.accepted.empty();
  return out;
}

}  // namespace ivcheck
