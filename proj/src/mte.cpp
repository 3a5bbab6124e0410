#include "ivcheck/mte.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "ivcheck/stats.hpp"

namespace ivcheck {

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t k = 0; k < count; ++k)
    out[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1);
  return out;
}

std::vector<Eigen::Index> order_by(const Eigen::VectorXd& v) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(v.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
  return idx;
}

double sd(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

// Rows of `z` grouped by exact equality, in lexicographic order of the row.
std::vector<std::vector<Eigen::Index>> group_rows(const Eigen::MatrixXd& z, std::size_t max_groups,
                                                  Eigen::MatrixXd* keys) {
  std::map<std::vector<double>, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    std::vector<double> key(static_cast<std::size_t>(z.cols()));
    for (Eigen::Index c = 0; c < z.cols(); ++c) key[static_cast<std::size_t>(c)] = z(i, c);
    groups[key].push_back(i);
    if (groups.size() > max_groups) return {};
  }
  std::vector<std::vector<Eigen::Index>> out;
  if (keys) keys->resize(static_cast<Eigen::Index>(groups.size()), z.cols());
  Eigen::Index g = 0;
  for (auto& [key, rows] : groups) {
    if (keys)
      for (Eigen::Index c = 0; c < z.cols(); ++c) (*keys)(g, c) = key[static_cast<std::size_t>(c)];
    out.push_back(std::move(rows));
    ++g;
  }
  return out;
}

double interp(const std::vector<double>& xs, const Eigen::RowVectorXd& ys, double x) {
  if (x <= xs.front()) return ys(0);
  if (x >= xs.back()) return ys(ys.size() - 1);
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const auto k = static_cast<Eigen::Index>(it - xs.begin());
  const double t = (x - xs[static_cast<std::size_t>(k - 1)]) /
                   (xs[static_cast<std::size_t>(k)] - xs[static_cast<std::size_t>(k - 1)]);
  return ys(k - 1) + t * (ys(k) - ys(k - 1));
}

double clip01(double p) { return std::clamp(p, 0.0, 1.0); }

}  // namespace

PropensityFit fit_propensity(const Dataset& ds, const PropensityConfig& cfg) {
  if (ds.kx() != 1) throw Error(ErrorKind::InvalidArgument, "propensity score needs a scalar X");
  if (cfg.x_grid < 2 || cfg.z_grid < 2) throw Error(ErrorKind::InvalidArgument, "grids need at least two nodes");
  const Eigen::Index n = ds.n();
  PropensityFit pf;
  pf.method_ = cfg.method;
  pf.x_ = ds.x().col(0);
  const double xmin = pf.x_.minCoeff(), xmax = pf.x_.maxCoeff();
  if (!(xmax > xmin)) throw Error(ErrorKind::DegenerateSupport, "X is constant");
  pf.x_nodes_ = linspace(xmin, xmax, cfg.x_grid);
  pf.x_window_ = 0.5 * rule_of_thumb_bandwidth(pf.x_);
  const auto mx = static_cast<Eigen::Index>(cfg.x_grid);

  if (cfg.method == NpregMethod::CellMeans) {
    const auto groups = group_rows(ds.z(), kMaxCells, &pf.z_nodes_);
    if (groups.empty()) throw Error(ErrorKind::TooManyCells, "more than 50 distinct instrument rows");
    pf.raw_.resize(static_cast<Eigen::Index>(groups.size()), mx);
    pf.row_node_.assign(static_cast<std::size_t>(n), 0);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      std::vector<double> xs;
      for (Eigen::Index i : groups[g]) {
        xs.push_back(pf.x_(i));
        pf.row_node_[static_cast<std::size_t>(i)] = g;
      }
      std::sort(xs.begin(), xs.end());
      for (Eigen::Index k = 0; k < mx; ++k) {
        const auto below = std::upper_bound(xs.begin(), xs.end(), pf.x_nodes_[static_cast<std::size_t>(k)]) - xs.begin();
        pf.raw_(static_cast<Eigen::Index>(g), k) = static_cast<double>(below) / static_cast<double>(xs.size());
      }
    }
  } else if (cfg.method == NpregMethod::LocalLinear) {
    if (cfg.z_index < 0 || cfg.z_index >= ds.kz()) throw Error(ErrorKind::InvalidArgument, "z_index out of range");
    const Eigen::VectorXd zc = ds.z().col(cfg.z_index);
    const double zmin = zc.minCoeff(), zmax = zc.maxCoeff();
    if (!(zmax > zmin)) throw Error(ErrorKind::DegenerateSupport, "instrument is constant");
    pf.bandwidth_ = cfg.bandwidth > 0.0 ? cfg.bandwidth : rule_of_thumb_bandwidth(zc, cfg.bandwidth_scale);
    const std::vector<double> zs = linspace(zmin, zmax, cfg.z_grid);
    pf.z_nodes_ = Eigen::Map<const Eigen::VectorXd>(zs.data(), static_cast<Eigen::Index>(zs.size()));
    const auto mz = static_cast<Eigen::Index>(zs.size());
    pf.raw_.resize(mz, mx);
    const std::vector<Eigen::Index> by_x = order_by(pf.x_);
    std::vector<Eigen::Index> below(static_cast<std::size_t>(mx));
    for (Eigen::Index k = 0; k < mx; ++k) {
      const double xk = pf.x_nodes_[static_cast<std::size_t>(k)];
      below[static_cast<std::size_t>(k)] =
          std::upper_bound(by_x.begin(), by_x.end(), xk, [&](double v, Eigen::Index i) { return v < pf.x_(i); }) -
          by_x.begin();
    }
    std::vector<bool> valid(static_cast<std::size_t>(mz), false);
    Eigen::VectorXd cum(n + 1);
    for (Eigen::Index g = 0; g < mz; ++g) {
      const auto ell = local_linear_weights(zc, zs[static_cast<std::size_t>(g)], pf.bandwidth_, cfg.kernel);
      if (!ell) continue;
      valid[static_cast<std::size_t>(g)] = true;
      cum(0) = 0.0;
      for (Eigen::Index r = 0; r < n; ++r) cum(r + 1) = cum(r) + (*ell)(by_x[static_cast<std::size_t>(r)]);
      for (Eigen::Index k = 0; k < mx; ++k) pf.raw_(g, k) = clip01(cum(below[static_cast<std::size_t>(k)]));
    }
    if (std::none_of(valid.begin(), valid.end(), [](bool b) { return b; }))
      throw Error(ErrorKind::EmptyWindow, "no z node has a usable kernel window");
    for (Eigen::Index g = 0; g < mz; ++g) {
      if (valid[static_cast<std::size_t>(g)]) continue;
      Eigen::Index best = -1;
      for (Eigen::Index o = 0; o < mz; ++o)
        if (valid[static_cast<std::size_t>(o)] && (best < 0 || std::abs(o - g) < std::abs(best - g))) best = o;
      pf.raw_.row(g) = pf.raw_.row(best);
    }
    pf.row_node_.resize(static_cast<std::size_t>(n));
    const double step = (zmax - zmin) / static_cast<double>(mz - 1);
    for (Eigen::Index i = 0; i < n; ++i)
      pf.row_node_[static_cast<std::size_t>(i)] =
          static_cast<std::size_t>(std::clamp<double>(std::round((zc(i) - zmin) / step), 0.0, double(mz - 1)));
  } else {
    throw Error(ErrorKind::InvalidArgument, "propensity score uses local-linear or cell-means");
  }

  const Eigen::Index mz = pf.raw_.rows();
  pf.surface_.resize(mz, mx);
  pf.monotonicity_.assign(static_cast<std::size_t>(mz), 0.0);
  const double pairs = static_cast<double>(mx) * static_cast<double>(mx - 1) / 2.0;
  for (Eigen::Index g = 0; g < mz; ++g) {
    std::vector<double> row(static_cast<std::size_t>(mx));
    for (Eigen::Index k = 0; k < mx; ++k) row[static_cast<std::size_t>(k)] = pf.raw_(g, k);
    std::size_t bad = 0;
    for (std::size_t a = 0; a < row.size(); ++a)
      for (std::size_t b = a + 1; b < row.size(); ++b)
        if (row[a] > row[b]) ++bad;
    pf.monotonicity_[static_cast<std::size_t>(g)] = static_cast<double>(bad) / pairs;
    const std::vector<double> iso = stats::isotonic_increasing(row);
    for (Eigen::Index k = 0; k < mx; ++k) pf.surface_(g, k) = clip01(iso[static_cast<std::size_t>(k)]);
  }

  pf.v_hat_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    pf.v_hat_(i) = cfg.method == NpregMethod::CellMeans ? pf.evaluate(ds.z().row(i), pf.x_(i))
                                                         : pf.evaluate(ds.z()(i, cfg.z_index), pf.x_(i));
  return pf;
}

std::size_t PropensityFit::cell_of(const Eigen::RowVectorXd& z) const {
  for (Eigen::Index g = 0; g < z_nodes_.rows(); ++g)
    if (z_nodes_.row(g) == z) return static_cast<std::size_t>(g);
  throw Error(ErrorKind::OffSupport, "instrument value is not an observed cell");
}

double PropensityFit::node_value(std::size_t node, double x) const {
  return interp(x_nodes_, surface_.row(static_cast<Eigen::Index>(node)), x);
}

double PropensityFit::evaluate(const Eigen::RowVectorXd& z, double x) const {
  if (method_ == NpregMethod::CellMeans) {
    const std::size_t g = cell_of(z);
    // Exact within-cell empirical CDF rather than the gridded surface.
    std::size_t count = 0, below = 0;
    for (std::size_t i = 0; i < row_node_.size(); ++i) {
      if (row_node_[i] != g) continue;
      ++count;
      if (x_(static_cast<Eigen::Index>(i)) <= x) ++below;
    }
    return static_cast<double>(below) / static_cast<double>(count);
  }
  return evaluate(z(0), x);
}

double PropensityFit::evaluate(double z, double x) const {
  if (method_ == NpregMethod::CellMeans) return evaluate(Eigen::RowVectorXd::Constant(1, z), x);
  const Eigen::Index mz = z_nodes_.rows();
  const double zmin = z_nodes_(0, 0), zmax = z_nodes_(mz - 1, 0);
  const double pos = std::clamp((z - zmin) / (zmax - zmin) * static_cast<double>(mz - 1), 0.0, double(mz - 1));
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, static_cast<std::size_t>(mz - 1));
  const double t = pos - static_cast<double>(lo);
  return clip01((1.0 - t) * node_value(lo, x) + t * node_value(hi, x));
}

std::optional<std::pair<double, double>> PropensityFit::support_p_given_x(double x) const {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::vector<bool> seen(static_cast<std::size_t>(z_nodes_.rows()), false);
  for (Eigen::Index i = 0; i < x_.size(); ++i) {
    if (std::abs(x_(i) - x) > x_window_) continue;
    const std::size_t node = row_node_[static_cast<std::size_t>(i)];
    if (seen[node]) continue;
    seen[node] = true;
    const double p = node_value(node, x);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
  if (lo > hi) return std::nullopt;
  return std::make_pair(lo, hi);
}

double PropensityFit::inverse(std::size_t z_node, double v) const {
  const auto row = surface_.row(static_cast<Eigen::Index>(z_node));
  const Eigen::Index m = row.size();
  if (method_ == NpregMethod::CellMeans) {
    std::vector<double> xs;
    for (std::size_t i = 0; i < row_node_.size(); ++i)
      if (row_node_[i] == z_node) xs.push_back(x_(static_cast<Eigen::Index>(i)));
    std::sort(xs.begin(), xs.end());
    return empirical_quantile(xs, v);
  }
  if (row(0) >= v) return x_nodes_.front();
  for (Eigen::Index k = 1; k < m; ++k) {
    if (row(k) >= v) {
      const double x0 = x_nodes_[static_cast<std::size_t>(k - 1)], x1 = x_nodes_[static_cast<std::size_t>(k)];
      const double dp = row(k) - row(k - 1);
      return dp > 0.0 ? x0 + (v - row(k - 1)) / dp * (x1 - x0) : x1;
    }
  }
  return x_nodes_.back();
}

UniformityReport uniformity_diagnostic(const PropensityFit& pf, std::size_t bins) {
  const Eigen::VectorXd& v = pf.v_hat();
  UniformityReport out;
  out.ks_overall = stats::ks_uniform(std::vector<double>(v.data(), v.data() + v.size()));
  std::vector<std::vector<double>> groups;
  if (pf.method() == NpregMethod::CellMeans) {
    groups.resize(static_cast<std::size_t>(pf.z_nodes().rows()));
    for (std::size_t i = 0; i < pf.row_node().size(); ++i)
      groups[pf.row_node()[i]].push_back(v(static_cast<Eigen::Index>(i)));
  } else {
    // Node indices increase with z, so sorting rows by node gives z order.
    std::vector<std::size_t> idx(pf.row_node().size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return pf.row_node()[a] < pf.row_node()[b]; });
    bins = std::max<std::size_t>(1, bins);
    groups.resize(bins);
    for (std::size_t r = 0; r < idx.size(); ++r)
      groups[r * bins / idx.size()].push_back(v(static_cast<Eigen::Index>(idx[r])));
  }
  for (auto& g : groups) {
    if (g.empty()) continue;
    const double ks = stats::ks_uniform(std::move(g));
    out.ks_by_bin.push_back(ks);
    out.ks_max_within = std::max(out.ks_max_within, ks);
  }
  return out;
}

ControlFunctionFit fit_control_function(const Dataset& ds, const PropensityFit& pf, const ControlFunctionConfig& cfg) {
  if (ds.kx() != 1) throw Error(ErrorKind::InvalidArgument, "control function needs a scalar X");
  if (pf.v_hat().size() != ds.n()) throw Error(ErrorKind::InvalidArgument, "propensity fit is for another dataset");
  ControlFunctionFit cf;
  cf.y_ = ds.y();
  cf.x_ = ds.x().col(0);
  cf.v_ = pf.v_hat();
  const double shrink = std::pow(static_cast<double>(ds.n()), -1.0 / 6.0) * 1.06 * cfg.bandwidth_scale;
  cf.hx_ = cfg.bandwidth_x > 0.0 ? cfg.bandwidth_x : shrink * sd(cf.x_);
  cf.hp_ = cfg.bandwidth_p > 0.0 ? cfg.bandwidth_p : shrink * sd(cf.v_);
  if (!(cf.hx_ > 0.0) || !(cf.hp_ > 0.0)) throw Error(ErrorKind::DegenerateSupport, "zero control-function bandwidth");
  cf.min_effective_ = cfg.min_effective;
  std::vector<double> ys(cf.y_.data(), cf.y_.data() + cf.y_.size());
  std::sort(ys.begin(), ys.end());
  const std::size_t m = std::max<std::size_t>(2, cfg.y_grid);
  for (std::size_t k = 0; k < m; ++k)
    cf.y_nodes_.push_back(stats::quantile_type7_sorted(ys, static_cast<double>(k) / static_cast<double>(m - 1)));
  return cf;
}

std::optional<Eigen::VectorXd> ControlFunctionFit::weights(double x, double p) const {
  const Eigen::Index n = y_.size();
  Eigen::VectorXd k(n);
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  Eigen::Index active = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dx = x_(i) - x, dp = v_(i) - p;
    k(i) = kernel_weight(Kernel::Epanechnikov, dx / hx_) * kernel_weight(Kernel::Epanechnikov, dp / hp_);
    if (k(i) <= 0.0) continue;
    ++active;
    const Eigen::Vector3d d(1.0, dx, dp);
    m.noalias() += k(i) * d * d.transpose();
  }
  if (static_cast<double>(active) < min_effective_) return std::nullopt;
  Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
  if (!lu.isInvertible() || lu.rcond() < 1e-12) return std::nullopt;
  const Eigen::Vector3d e = lu.solve(Eigen::Vector3d::UnitX());
  Eigen::VectorXd ell(n);
  for (Eigen::Index i = 0; i < n; ++i)
    ell(i) = k(i) > 0.0 ? k(i) * (e(0) + e(1) * (x_(i) - x) + e(2) * (v_(i) - p)) : 0.0;
  return ell;
}

std::optional<double> ControlFunctionFit::cond_mean(double x, double p) const {
  const auto ell = weights(x, p);
  if (!ell) return std::nullopt;
  return ell->dot(y_);
}

std::optional<double> ControlFunctionFit::cond_cdf(double x, double p, double y) const {
  const auto ell = weights(x, p);
  if (!ell) return std::nullopt;
  if (y < y_nodes_.front()) return 0.0;
  std::vector<double> f(y_nodes_.size(), 0.0);
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    if ((*ell)(i) == 0.0) continue;
    const auto first = std::lower_bound(y_nodes_.begin(), y_nodes_.end(), y_(i)) - y_nodes_.begin();
    for (auto k = static_cast<std::size_t>(first); k < f.size(); ++k) f[k] += (*ell)(i);
  }
  for (double& v : f) v = clip01(v);
  f = stats::isotonic_increasing(f);
  Eigen::RowVectorXd row = Eigen::Map<const Eigen::RowVectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  return clip01(interp(y_nodes_, row, y));
}

bool ControlFunctionFit::on_support(double x, double p) const { return weights(x, p).has_value(); }

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> ControlFunctionFit::support_mask(
    const std::vector<double>& xs, const std::vector<double>& ps) const {
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask(static_cast<Eigen::Index>(xs.size()),
                                                           static_cast<Eigen::Index>(ps.size()));
  for (std::size_t a = 0; a < xs.size(); ++a)
    for (std::size_t b = 0; b < ps.size(); ++b)
      mask(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = on_support(xs[a], ps[b]);
  return mask;
}

std::vector<double> ControlFunctionFit::smoothed_ranks(const RngSpec& rng) const {
  Rng gen(rng);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < y_.size(); ++i) {
    const double w = gen.uniform();
    const auto ell = weights(x_(i), v_(i));
    if (!ell) continue;
    double at = 0.0, below = 0.0;
    for (Eigen::Index j = 0; j < y_.size(); ++j) {
      if (y_(j) < y_(i)) below += (*ell)(j);
      if (y_(j) <= y_(i)) at += (*ell)(j);
    }
    below = clip01(below);
    at = std::max(clip01(at), below);
    out.push_back(below + w * (at - below));
  }
  return out;
}

double estimate_mte(const ControlFunctionFit& cf, double p, double x, double x_prime) {
  const auto a = cf.cond_mean(x, p);
  if (!a) throw Error(ErrorKind::OffSupport, "(x, p) = (" + std::to_string(x) + ", " + std::to_string(p) + ") is off support");
  if (x == x_prime) return 0.0;
  const auto b = cf.cond_mean(x_prime, p);
  if (!b)
    throw Error(ErrorKind::OffSupport,
                "(x', p) = (" + std::to_string(x_prime) + ", " + std::to_string(p) + ") is off support");
  return *a - *b;
}

std::vector<double> default_p_grid() {
  std::vector<double> out;
  for (int k = 1; k <= 99; ++k) out.push_back(static_cast<double>(k) / 100.0);
  return out;
}

AsfResult estimate_asf(const ControlFunctionFit& cf, double x, std::pair<double, double> p_support,
                       std::optional<std::pair<double, double>> outcome_bounds) {
  AsfResult out;
  out.p_lo = clip01(p_support.first);
  out.p_hi = clip01(p_support.second);
  if (out.p_lo > out.p_hi) throw Error(ErrorKind::InvalidArgument, "p support is empty");
  out.full_support = out.p_lo <= kFullSupportLo && out.p_hi >= kFullSupportHi;
  const double lo = out.full_support ? 0.0 : out.p_lo;
  const double hi = out.full_support ? 1.0 : out.p_hi;

  std::vector<double> ps;
  for (double p : default_p_grid())
    if (p >= lo && p <= hi) ps.push_back(p);
  if (ps.empty()) ps.push_back(0.5 * (lo + hi));
  std::vector<double> ms;
  for (double p : ps) {
    const auto m = cf.cond_mean(x, p);
    if (!m) throw Error(ErrorKind::OffSupport, "cond_mean off support at x = " + std::to_string(x) + ", p = " + std::to_string(p));
    ms.push_back(*m);
  }
  // Constant extension from the outermost grid points to the support edges.
  double integral = ms.front() * (ps.front() - lo) + ms.back() * (hi - ps.back());
  for (std::size_t k = 1; k < ps.size(); ++k) integral += 0.5 * (ms[k] + ms[k - 1]) * (ps[k] - ps[k - 1]);

  if (out.full_support) {
    out.point = integral;
    out.lower = out.upper = integral;
    return out;
  }
  if (!outcome_bounds) throw Error(ErrorKind::MissingBounds, "partial p-support requires outcome bounds");
  const auto [y_lo, y_hi] = *outcome_bounds;
  if (y_lo > y_hi) throw Error(ErrorKind::InvalidArgument, "outcome bounds are reversed");
  const double missing = 1.0 - out.p_hi + out.p_lo;
  out.lower = integral + y_lo * missing;
  out.upper = out.lower + (y_hi - y_lo) * missing;
  return out;
}

AsfResult estimate_asf(const ControlFunctionFit& cf, const PropensityFit& pf, double x,
                       std::optional<std::pair<double, double>> outcome_bounds) {
  const auto support = pf.support_p_given_x(x);
  if (!support) throw Error(ErrorKind::OffSupport, "no observations near x = " + std::to_string(x));
  return estimate_asf(cf, x, *support, outcome_bounds);
}

Condition1Report condition1_diagnostic(const PropensityFit& pf, const Dataset& ds, std::vector<double> v_grid) {
  Condition1Report out;
  out.v_grid = std::move(v_grid);
  const auto& xn = pf.x_nodes();
  const double xrange = xn.back() - xn.front();
  const auto mz = static_cast<std::size_t>(pf.z_nodes().rows());
  out.tolerance = 0.5 * xrange / static_cast<double>(std::max<std::size_t>(xn.size() - 1, 1));
  for (double m : pf.monotonicity_report()) out.max_raw_monotonicity_violation = std::max(out.max_raw_monotonicity_violation, m);

  const Eigen::VectorXd x = ds.x().col(0);
  const double x_window = 0.5 * rule_of_thumb_bandwidth(x);
  // Rows assigned to nodes within one kernel bandwidth count as "Z near z".
  double node_radius = 0.0;
  if (pf.method() == NpregMethod::LocalLinear && mz > 1) {
    const double step = (pf.z_nodes()(static_cast<Eigen::Index>(mz) - 1, 0) - pf.z_nodes()(0, 0)) /
                        static_cast<double>(mz - 1);
    node_radius = std::max(1.0, pf.bandwidth() / step);
  }
  const auto near_rows = [&](std::size_t node, double at) {
    std::vector<double> ys;
    for (std::size_t i = 0; i < pf.row_node().size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (std::abs(x(r) - at) > x_window) continue;
      const double gap = std::abs(static_cast<double>(pf.row_node()[i]) - static_cast<double>(node));
      if (gap <= node_radius) ys.push_back(ds.y()(r));
    }
    return ys;
  };

  std::vector<std::pair<double, double>> images;
  for (double v : out.v_grid) {
    std::vector<double> h(mz);
    for (std::size_t g = 0; g < mz; ++g) h[g] = pf.inverse(g, v);
    const auto [lo, hi] = std::minmax_element(h.begin(), h.end());
    out.coverage.push_back(xrange > 0.0 ? (*hi - *lo) / xrange : 0.0);
    images.emplace_back(*lo, *hi);
    for (std::size_t a = 0; a < mz; ++a) {
      for (std::size_t b = a + 1; b < mz; ++b) {
        if (std::abs(h[a] - h[b]) >= out.tolerance) continue;
        ++out.injectivity_violations;
        if (out.flagged.size() >= 100) continue;
        FlaggedPair fp{v, a, b, 0.5 * (h[a] + h[b]), std::numeric_limits<double>::quiet_NaN()};
        auto ya = near_rows(a, fp.x), yb = near_rows(b, fp.x);
        if (ya.size() >= 5 && yb.size() >= 5) fp.ks = stats::ks_two_sample(std::move(ya), std::move(yb));
        out.flagged.push_back(fp);
      }
    }
  }
  std::sort(images.begin(), images.end());
  double covered = 0.0, cur_lo = 0.0, cur_hi = -std::numeric_limits<double>::infinity();
  for (const auto& [lo, hi] : images) {
    if (lo > cur_hi) {
      if (cur_hi > cur_lo) covered += cur_hi - cur_lo;
      cur_lo = lo;
      cur_hi = hi;
    } else {
      cur_hi = std::max(cur_hi, hi);
    }
  }
  if (cur_hi > cur_lo) covered += cur_hi - cur_lo;
  out.union_coverage = xrange > 0.0 ? covered / xrange : 0.0;
  out.summary = out.injectivity_violations == 0
                    ? "condition 1 holds on the grid; monotonicity of P(z, .) in x is the only testable restriction"
                    : "injectivity fails for " + std::to_string(out.injectivity_violations) +
                          " (v, z, z') triples; Y | X, Z should not depend on z within each flagged pair";
  return out;
}

std::size_t quantile_roundtrip_check(const Dataset& ds, QuantileInverse inverse, std::size_t bins) {
  auto groups = group_rows(ds.z(), kMaxCells, nullptr);
  if (groups.empty()) {
    const Eigen::VectorXd z0 = ds.z().col(0);
    const auto order = order_by(z0);
    bins = std::max<std::size_t>(1, bins);
    groups.assign(bins, {});
    for (std::size_t r = 0; r < order.size(); ++r) groups[r * bins / order.size()].push_back(order[r]);
  }
  std::size_t violations = 0;
  const Eigen::VectorXd x = ds.x().col(0);
  for (const auto& rows : groups) {
    if (rows.empty()) continue;
    std::vector<double> xs;
    for (Eigen::Index i : rows) xs.push_back(x(i));
    std::sort(xs.begin(), xs.end());
    const auto nc = static_cast<double>(xs.size());
    for (Eigen::Index i : rows) {
      const auto below = std::upper_bound(xs.begin(), xs.end(), x(i)) - xs.begin();
      const double u = static_cast<double>(below) / nc;
      double q = 0.0;
      if (inverse == QuantileInverse::LeftContinuous) {
        q = empirical_quantile(xs, u);
      } else {
        const auto k = static_cast<std::size_t>(std::floor(nc * u + 1e-9));
        q = xs[std::min(k, xs.size() - 1)];
      }
      if (q != x(i)) ++violations;
    }
  }
  return violations;
}

}  // namespace ivcheck
