#include "ivcheck/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace ivcheck {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DegenerateSupport: return "DegenerateSupport";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::SingularWeight: return "SingularWeight";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::TooManyCells: return "TooManyCells";
    case ErrorKind::EvaluatorDomainError: return "EvaluatorDomainError";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::SimulationBudgetTooSmall: return "SimulationBudgetTooSmall";
    case ErrorKind::EmptyGrid: return "EmptyGrid";
    case ErrorKind::OffSupport: return "OffSupport";
    case ErrorKind::MissingBounds: return "MissingBounds";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

namespace {

std::vector<std::string> default_names(const std::string& prefix, Eigen::Index k) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < k; ++j) names.push_back(prefix + std::to_string(j + 1));
  return names;
}

void require_finite(const Eigen::MatrixXd& m, const char* block) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j)))
        throw Error(ErrorKind::NonFiniteValue, std::string(block) + " row " + std::to_string(i + 1) +
                                                   " col " + std::to_string(j + 1));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;  // column-major
};

// Parses the requested columns only; other columns are not validated.
RawTable read_table(const std::filesystem::path& path, const std::vector<std::string>& wanted) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::EmptyData, path.string() + " has no header");
  RawTable table;
  for (auto cell : split(line)) table.header.emplace_back(cell);

  std::vector<std::size_t> index;
  for (const auto& name : wanted) {
    auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end()) throw Error(ErrorKind::MissingColumn, name);
    index.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }
  table.columns.resize(wanted.size());

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    auto cells = split(line);
    for (std::size_t c = 0; c < index.size(); ++c) {
      const auto col = index[c];
      const std::string context = "row " + std::to_string(row) + " col " + wanted[c];
      if (col >= cells.size()) throw Error(ErrorKind::ParseError, context + " (missing cell)");
      auto cell = cells[col];
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size())
        throw Error(ErrorKind::ParseError, context + " ('" + std::string(cell) + "')");
      if (!std::isfinite(value)) throw Error(ErrorKind::NonFiniteValue, context);
      table.columns[c].push_back(value);
    }
  }
  if (row == 0) throw Error(ErrorKind::EmptyData, path.string() + " has no data rows");
  return table;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& cols, std::size_t first,
                          std::size_t count) {
  const auto n = static_cast<Eigen::Index>(cols.empty() ? 0 : cols[first].size());
  Eigen::MatrixXd m(n, static_cast<Eigen::Index>(count));
  for (std::size_t c = 0; c < count; ++c)
    m.col(static_cast<Eigen::Index>(c)) = Eigen::Map<const Eigen::VectorXd>(cols[first + c].data(), n);
  return m;
}

}  // namespace

Dataset::Dataset(Eigen::VectorXd y, Eigen::MatrixXd x, Eigen::MatrixXd z, std::string y_name,
                 std::vector<std::string> x_names, std::vector<std::string> z_names)
    : y_(std::move(y)),
      x_(std::move(x)),
      z_(std::move(z)),
      y_name_(std::move(y_name)),
      x_names_(std::move(x_names)),
      z_names_(std::move(z_names)) {
  if (y_.size() < 1) throw Error(ErrorKind::EmptyData, "dataset needs at least one row");
  if (x_.rows() != y_.size() || z_.rows() != y_.size())
    throw Error(ErrorKind::InvalidArgument, "y, x and z must have the same number of rows");
  if (x_.cols() < 1 || z_.cols() < 1)
    throw Error(ErrorKind::InvalidArgument, "x and z need at least one column each");
  require_finite(y_, "y");
  require_finite(x_, "x");
  require_finite(z_, "z");
  if (x_names_.empty()) x_names_ = default_names("x", x_.cols());
  if (z_names_.empty()) z_names_ = default_names("z", z_.cols());
  if (static_cast<Eigen::Index>(x_names_.size()) != x_.cols() ||
      static_cast<Eigen::Index>(z_names_.size()) != z_.cols())
    throw Error(ErrorKind::InvalidArgument, "column name count mismatch");
}

Dataset Dataset::with_y(Eigen::VectorXd y) const {
  return Dataset(std::move(y), x_, z_, y_name_, x_names_, z_names_);
}

bool Dataset::operator==(const Dataset& other) const {
  return y_ == other.y_ && x_ == other.x_ && z_ == other.z_ && y_name_ == other.y_name_ &&
         x_names_ == other.x_names_ && z_names_ == other.z_names_;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& y_col,
                 const std::vector<std::string>& x_cols, const std::vector<std::string>& z_cols) {
  if (x_cols.empty() || z_cols.empty())
    throw Error(ErrorKind::InvalidArgument, "need at least one x and one z column");
  std::vector<std::string> wanted{y_col};
  wanted.insert(wanted.end(), x_cols.begin(), x_cols.end());
  wanted.insert(wanted.end(), z_cols.begin(), z_cols.end());
  auto table = read_table(path, wanted);
  Eigen::VectorXd y = to_matrix(table.columns, 0, 1).col(0);
  Eigen::MatrixXd x = to_matrix(table.columns, 1, x_cols.size());
  Eigen::MatrixXd z = to_matrix(table.columns, 1 + x_cols.size(), z_cols.size());
  return Dataset(std::move(y), std::move(x), std::move(z), y_col, x_cols, z_cols);
}

Eigen::MatrixXd load_columns(const std::filesystem::path& path, const std::vector<std::string>& cols) {
  auto table = read_table(path, cols);
  return to_matrix(table.columns, 0, cols.size());
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  // The same column may serve as both regressor and instrument (OLS files);
  // it is written once and referenced twice on load.
  std::vector<std::string> names{ds.y_name()};
  std::vector<const double*> data{ds.y().data()};
  auto add = [&](const std::string& name, const double* col) {
    if (std::find(names.begin(), names.end(), name) != names.end()) return;
    names.push_back(name);
    data.push_back(col);
  };
  for (Eigen::Index j = 0; j < ds.kx(); ++j) add(ds.x_names()[j], ds.x().col(j).data());
  for (Eigen::Index j = 0; j < ds.kz(); ++j) add(ds.z_names()[j], ds.z().col(j).data());
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    for (std::size_t c = 0; c < data.size(); ++c) out << (c ? "," : "") << data[c][i];
    out << '\n';
  }
}

Dataset partial_out(const Dataset& ds, const Eigen::MatrixXd& controls) {
  if (controls.rows() != ds.n())
    throw Error(ErrorKind::InvalidArgument, "controls must have one row per observation");
  Eigen::MatrixXd design(ds.n(), controls.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(controls.cols()) = controls;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < design.cols()) throw Error(ErrorKind::RankDeficient, "control design is collinear");
  auto resid = [&](const Eigen::MatrixXd& m) -> Eigen::MatrixXd { return m - design * qr.solve(m); };
  return Dataset(resid(ds.y()).col(0), resid(ds.x()), resid(ds.z()), ds.y_name(), ds.x_names(),
                 ds.z_names());
}

double empirical_quantile(std::span<const double> sorted, double u) {
  if (sorted.empty()) throw Error(ErrorKind::EmptyData, "quantile of empty sample");
  const double n = static_cast<double>(sorted.size());
  // Smallest k with k/n >= u; the epsilon absorbs representation error in n*u.
  auto k = static_cast<std::ptrdiff_t>(std::ceil(n * u - 1e-9));
  k = std::clamp<std::ptrdiff_t>(k, 1, static_cast<std::ptrdiff_t>(sorted.size()));
  return sorted[static_cast<std::size_t>(k - 1)];
}

ConditioningGrid conditioning_grid(const Eigen::VectorXd& column, double centile_lo, double centile_hi,
                                   std::size_t count) {
  if (!(centile_lo >= 0.0 && centile_lo < centile_hi && centile_hi <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "need 0 <= centile_lo < centile_hi <= 1");
  if (count < 2) throw Error(ErrorKind::InvalidArgument, "grid needs at least two points");
  std::vector<double> sorted(column.data(), column.data() + column.size());
  std::sort(sorted.begin(), sorted.end());
  const double lo = empirical_quantile(sorted, centile_lo);
  const double hi = empirical_quantile(sorted, centile_hi);
  if (!(hi > lo)) throw Error(ErrorKind::DegenerateSupport, "conditioning quantiles coincide");

  ConditioningGrid grid;
  grid.requested = count;
  std::vector<double> support(sorted);
  support.erase(std::unique(support.begin(), support.end()), support.end());
  if (support.size() <= kDiscreteSupportMax) {
    grid.discrete = true;
    for (double v : support)
      if (v >= lo && v <= hi) grid.points.push_back(v);
    return grid;
  }
  grid.points.resize(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) grid.points[i] = lo + step * static_cast<double>(i);
  grid.points.back() = hi;
  return grid;
}

}  // namespace ivcheck
