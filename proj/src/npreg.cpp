#include "ivcheck/npreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <variant>

#include "ivcheck/stats.hpp"

namespace ivcheck {

double kernel_weight(Kernel kernel, double u) {
  if (kernel == Kernel::Gaussian) return stats::normal_pdf(u);
  const double a = 1.0 - u * u;
  return a > 0.0 ? 0.75 * a : 0.0;
}

std::optional<Eigen::VectorXd> local_linear_weights(const Eigen::VectorXd& z, double v, double h, Kernel kernel) {
  const Eigen::Index n = z.size();
  Eigen::VectorXd k(n), d(n);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  Eigen::Index active = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i) = z(i) - v;
    k(i) = kernel_weight(kernel, d(i) / h);
    if (k(i) > 0.0) ++active;
    s0 += k(i);
    s1 += k(i) * d(i);
    s2 += k(i) * d(i) * d(i);
  }
  const double det = s0 * s2 - s1 * s1;
  if (active < 2 || !(det > 1e-12 * s0 * s2)) return std::nullopt;
  return Eigen::VectorXd((k.array() * (s2 - s1 * d.array()) / det).matrix());
}

namespace {

struct SeriesState {
  int order = 0;
  double center = 0.0;
  double half_range = 1.0;
  Eigen::VectorXd coef;
  Eigen::MatrixXd scores;  // n x (order+1)
  Eigen::MatrixXd cov;
};

struct LocalLinearState {
  Eigen::VectorXd w;
  Eigen::VectorXd z;
  double h = 0.0;
  Kernel kernel = Kernel::Epanechnikov;
};

struct Cell {
  double mean = 0.0;
  double se = 0.0;
  std::vector<Eigen::Index> rows;
};

struct CellState {
  std::map<double, Cell> cells;
  Eigen::VectorXd residuals;
};

struct LocalSolution {
  double theta = 0.0;
  Eigen::VectorXd influence;  // l_i(v) e_i(v)
};

std::optional<LocalSolution> solve_local(const LocalLinearState& s, double v) {
  const Eigen::Index n = s.z.size();
  Eigen::VectorXd k(n), d(n);
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  Eigen::Index active = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i) = s.z(i) - v;
    k(i) = kernel_weight(s.kernel, d(i) / s.h);
    if (k(i) > 0.0) ++active;
    s0 += k(i);
    s1 += k(i) * d(i);
    s2 += k(i) * d(i) * d(i);
  }
  const double det = s0 * s2 - s1 * s1;
  if (active < 2 || !(det > 1e-12 * s0 * s2)) return std::nullopt;
  LocalSolution out;
  Eigen::VectorXd ell = (k.array() * (s2 - s1 * d.array()) / det).matrix();
  Eigen::VectorXd slope_w = (k.array() * (s0 * d.array() - s1) / det).matrix();
  out.theta = ell.dot(s.w);
  const double slope = slope_w.dot(s.w);
  const Eigen::VectorXd resid = (s.w.array() - out.theta - slope * d.array()).matrix();
  out.influence = ell.cwiseProduct(resid);
  return out;
}

}  // namespace

struct CondMeanFit::State {
  NpregMethod method;
  Eigen::Index n;
  std::variant<SeriesState, LocalLinearState, CellState> data;
};

std::string_view to_string(NpregMethod m) {
  switch (m) {
    case NpregMethod::Series: return "series";
    case NpregMethod::LocalLinear: return "local-linear";
    case NpregMethod::CellMeans: return "cell-means";
  }
  return "unknown";
}

NpregMethod parse_npreg_method(std::string_view text) {
  if (text == "series") return NpregMethod::Series;
  if (text == "local-linear") return NpregMethod::LocalLinear;
  if (text == "cell-means") return NpregMethod::CellMeans;
  throw Error(ErrorKind::InvalidArgument, "unknown npreg method '" + std::string(text) + "'");
}

double se_floor(double theta) { return 1e-12 * (1.0 + std::abs(theta)); }

NpregMethod CondMeanFit::method() const { return state_->method; }
Eigen::Index CondMeanFit::n() const { return state_->n; }

std::optional<PointEstimate> CondMeanFit::evaluate(double v) const {
  if (const auto* s = std::get_if<SeriesState>(&state_->data)) {
    const Eigen::VectorXd b = basis(v);
    const double theta = b.dot(s->coef);
    const double se = (s->scores * b).norm();
    return PointEstimate{theta, std::max(se, se_floor(theta))};
  }
  if (const auto* s = std::get_if<LocalLinearState>(&state_->data)) {
    auto sol = solve_local(*s, v);
    if (!sol) return std::nullopt;
    return PointEstimate{sol->theta, std::max(sol->influence.norm(), se_floor(sol->theta))};
  }
  const auto& s = std::get<CellState>(state_->data);
  auto it = s.cells.find(v);
  if (it == s.cells.end()) return std::nullopt;
  return PointEstimate{it->second.mean, std::max(it->second.se, se_floor(it->second.mean))};
}

Eigen::VectorXd CondMeanFit::influence(double v) const {
  if (const auto* s = std::get_if<SeriesState>(&state_->data)) return s->scores * basis(v);
  if (const auto* s = std::get_if<LocalLinearState>(&state_->data)) {
    auto sol = solve_local(*s, v);
    if (!sol) throw Error(ErrorKind::EmptyWindow, "no observations in the kernel window at v=" + std::to_string(v));
    return std::move(sol->influence);
  }
  const auto& s = std::get<CellState>(state_->data);
  auto it = s.cells.find(v);
  if (it == s.cells.end()) throw Error(ErrorKind::EmptyWindow, "no cell at v=" + std::to_string(v));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(state_->n);
  const double inv = 1.0 / static_cast<double>(it->second.rows.size());
  for (auto i : it->second.rows) out(i) = s.residuals(i) * inv;
  return out;
}

int CondMeanFit::order() const {
  const auto* s = std::get_if<SeriesState>(&state_->data);
  if (!s) throw Error(ErrorKind::InvalidArgument, "order() on a non-series fit");
  return s->order;
}

Eigen::VectorXd CondMeanFit::basis(double v) const {
  const auto* s = std::get_if<SeriesState>(&state_->data);
  if (!s) throw Error(ErrorKind::InvalidArgument, "basis() on a non-series fit");
  const double t = (v - s->center) / s->half_range;
  Eigen::VectorXd b(s->order + 1);
  b(0) = 1.0;
  for (int k = 1; k <= s->order; ++k) b(k) = b(k - 1) * t;
  return b;
}

const Eigen::VectorXd& CondMeanFit::coef() const {
  const auto* s = std::get_if<SeriesState>(&state_->data);
  if (!s) throw Error(ErrorKind::InvalidArgument, "coef() on a non-series fit");
  return s->coef;
}

const Eigen::MatrixXd& CondMeanFit::coef_cov() const {
  const auto* s = std::get_if<SeriesState>(&state_->data);
  if (!s) throw Error(ErrorKind::InvalidArgument, "coef_cov() on a non-series fit");
  return s->cov;
}

const Eigen::MatrixXd& CondMeanFit::coef_scores() const {
  const auto* s = std::get_if<SeriesState>(&state_->data);
  if (!s) throw Error(ErrorKind::InvalidArgument, "coef_scores() on a non-series fit");
  return s->scores;
}

double CondMeanFit::bandwidth() const {
  const auto* s = std::get_if<LocalLinearState>(&state_->data);
  if (!s) throw Error(ErrorKind::InvalidArgument, "bandwidth() on a non-kernel fit");
  return s->h;
}

std::vector<double> CondMeanFit::cells() const {
  const auto* s = std::get_if<CellState>(&state_->data);
  if (!s) throw Error(ErrorKind::InvalidArgument, "cells() on a non-cell fit");
  std::vector<double> out;
  for (const auto& [v, _] : s->cells) out.push_back(v);
  return out;
}

std::string CondMeanFit::describe() const {
  std::ostringstream os;
  os << to_string(method());
  if (const auto* s = std::get_if<SeriesState>(&state_->data)) os << " order=" << s->order;
  if (const auto* s = std::get_if<LocalLinearState>(&state_->data))
    os << " bandwidth=" << s->h << " kernel=" << (s->kernel == Kernel::Gaussian ? "gaussian" : "epanechnikov");
  if (const auto* s = std::get_if<CellState>(&state_->data)) os << " cells=" << s->cells.size();
  return os.str();
}

int default_series_order(Eigen::Index n) {
  const double raw = std::ceil(2.0 * std::pow(static_cast<double>(n), 0.2));
  return static_cast<int>(std::clamp(raw, 1.0, 12.0));
}

double rule_of_thumb_bandwidth(const Eigen::VectorXd& z, double scale) {
  const double n = static_cast<double>(z.size());
  const double mean = z.mean();
  const double sd = std::sqrt((z.array() - mean).square().sum() / (n - 1.0));
  return scale * 1.06 * sd * std::pow(n, -0.2);
}

CondMeanFit fit_series(const Eigen::VectorXd& w, const Eigen::VectorXd& z, int order,
                       std::optional<std::pair<double, double>> range) {
  if (w.size() != z.size()) throw Error(ErrorKind::InvalidArgument, "w and z lengths differ");
  if (order < 1) throw Error(ErrorKind::InvalidArgument, "series order must be >= 1");
  const Eigen::Index n = w.size();
  if (n <= order + 1) throw Error(ErrorKind::InsufficientData, "series fit needs n > order + 1");

  SeriesState s;
  s.order = order;
  const double lo = range ? range->first : z.minCoeff();
  const double hi = range ? range->second : z.maxCoeff();
  if (!(hi > lo)) throw Error(ErrorKind::RankDeficient, "conditioning variable is constant");
  s.center = 0.5 * (lo + hi);
  s.half_range = 0.5 * (hi - lo);

  Eigen::MatrixXd b(n, order + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (z(i) - s.center) / s.half_range;
    b(i, 0) = 1.0;
    for (int k = 1; k <= order; ++k) b(i, k) = b(i, k - 1) * t;
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(order + 1).triangularView<Eigen::Upper>();
  const Eigen::VectorXd rdiag = r.diagonal().cwiseAbs();
  if (rdiag.minCoeff() <= static_cast<double>(n) * std::numeric_limits<double>::epsilon() * rdiag.maxCoeff())
    throw Error(ErrorKind::RankDeficient, "series basis is collinear");

  s.coef = qr.solve(w);
  const Eigen::VectorXd resid = w - b * s.coef;
  // (B'B)^{-1} b_i = R^{-1} q_i, so the score rows are e_i * q_i' R^{-T}.
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, order + 1);
  const Eigen::MatrixXd q_r_invt =
      r.transpose().triangularView<Eigen::Lower>().solve<Eigen::OnTheRight>(q);
  s.scores = q_r_invt.array().colwise() * resid.array();
  s.cov = s.scores.transpose() * s.scores;

  auto state = std::make_shared<CondMeanFit::State>(CondMeanFit::State{NpregMethod::Series, n, std::move(s)});
  return CondMeanFit(std::move(state));
}

CondMeanFit fit_local_linear(const Eigen::VectorXd& w, const Eigen::VectorXd& z, double bandwidth, Kernel kernel,
                             double bandwidth_scale) {
  if (w.size() != z.size()) throw Error(ErrorKind::InvalidArgument, "w and z lengths differ");
  if (w.size() < 10) throw Error(ErrorKind::InsufficientData, "local linear fit needs n >= 10");
  LocalLinearState s;
  s.w = w;
  s.z = z;
  s.kernel = kernel;
  s.h = bandwidth > 0.0 ? bandwidth : rule_of_thumb_bandwidth(z, bandwidth_scale);
  if (!(s.h > 0.0)) throw Error(ErrorKind::DegenerateSupport, "bandwidth is zero (constant z)");
  const Eigen::Index n = w.size();
  auto state = std::make_shared<CondMeanFit::State>(CondMeanFit::State{NpregMethod::LocalLinear, n, std::move(s)});
  return CondMeanFit(std::move(state));
}

CondMeanFit fit_cell_means(const Eigen::VectorXd& w, const Eigen::VectorXd& z) {
  if (w.size() != z.size()) throw Error(ErrorKind::InvalidArgument, "w and z lengths differ");
  CellState s;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    s.cells[z(i)].rows.push_back(i);
    if (s.cells.size() > kMaxCells) throw Error(ErrorKind::TooManyCells, "more than 50 distinct values");
  }
  s.residuals.resize(w.size());
  for (auto& [v, cell] : s.cells) {
    double sum = 0.0;
    for (auto i : cell.rows) sum += w(i);
    const double cnt = static_cast<double>(cell.rows.size());
    cell.mean = sum / cnt;
    double ss = 0.0;
    for (auto i : cell.rows) {
      s.residuals(i) = w(i) - cell.mean;
      ss += s.residuals(i) * s.residuals(i);
    }
    cell.se = std::sqrt(ss) / cnt;
  }
  const Eigen::Index n = w.size();
  auto state = std::make_shared<CondMeanFit::State>(CondMeanFit::State{NpregMethod::CellMeans, n, std::move(s)});
  return CondMeanFit(std::move(state));
}

}  // namespace ivcheck
