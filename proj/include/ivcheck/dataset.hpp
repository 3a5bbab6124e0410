#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ivcheck/error.hpp"

namespace ivcheck {

/// Outcome, regressor block and instrument block sharing one row index.
/// Construction validates shapes and finiteness; instances are immutable in
/// practice and shared read-only across workers.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Eigen::VectorXd y, Eigen::MatrixXd x, Eigen::MatrixXd z,
          std::string y_name = "y", std::vector<std::string> x_names = {},
          std::vector<std::string> z_names = {});

  Eigen::Index n() const { return y_.size(); }
  Eigen::Index kx() const { return x_.cols(); }
  Eigen::Index kz() const { return z_.cols(); }

  const Eigen::VectorXd& y() const { return y_; }
  const Eigen::MatrixXd& x() const { return x_; }
  const Eigen::MatrixXd& z() const { return z_; }

  const std::string& y_name() const { return y_name_; }
  const std::vector<std::string>& x_names() const { return x_names_; }
  const std::vector<std::string>& z_names() const { return z_names_; }

  /// Same rows with Y replaced.
  Dataset with_y(Eigen::VectorXd y) const;

  bool operator==(const Dataset& other) const;

 private:
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  Eigen::MatrixXd z_;
  std::string y_name_;
  std::vector<std::string> x_names_;
  std::vector<std::string> z_names_;
};

/// Reads a comma-delimited file with one header row. Rows keep file order.
Dataset load_csv(const std::filesystem::path& path, const std::string& y_col,
                 const std::vector<std::string>& x_cols,
                 const std::vector<std::string>& z_cols);

/// Reads arbitrary named numeric columns (used for control covariates).
Eigen::MatrixXd load_columns(const std::filesystem::path& path,
                             const std::vector<std::string>& cols);

/// Writes y, x and z columns with their names. Values are printed with 17
/// significant digits so that load_csv(write_csv(ds)) == ds bit-for-bit.
void write_csv(const Dataset& ds, const std::filesystem::path& path);

/// Linear pre-residualization of Y, X and Z on [1, controls].
Dataset partial_out(const Dataset& ds, const Eigen::MatrixXd& controls);

inline constexpr std::size_t kDiscreteSupportMax = 20;

struct ConditioningGrid {
  std::vector<double> points;
  /// Number of points requested; `points.size()` can be smaller when the
  /// column is discrete and the grid collapses onto its support.
  std::size_t requested = 0;
  bool discrete = false;
};

/// Evenly spaced conditioning values between the empirical lo- and
/// hi-quantiles of `column`. Quantiles use the left-continuous inverse CDF.
/// A column with at most `kDiscreteSupportMax` distinct values is treated as
/// discrete and the grid collapses onto its support points inside the range.
ConditioningGrid conditioning_grid(const Eigen::VectorXd& column, double centile_lo,
                                   double centile_hi, std::size_t count = 100);

/// Left-continuous empirical quantile inf{a : F_n(a) >= u} of an ascending
/// sample.
double empirical_quantile(std::span<const double> sorted, double u);

}  // namespace ivcheck
