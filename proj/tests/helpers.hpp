#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <string>

#include "ivcheck/dataset.hpp"
#include "ivcheck/rng.hpp"

namespace ivtest {

inline ivcheck::Dataset make_dataset(const Eigen::VectorXd& y, const Eigen::VectorXd& x, const Eigen::VectorXd& z) {
  return ivcheck::Dataset(y, Eigen::MatrixXd(x), Eigen::MatrixXd(z), "y", {"x"}, {"z"});
}

inline Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) out(i++) = d;
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ivcheck_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// y = 2x + u with x = 3z + v, (u, v) correlated normals, z ~ U[-3, 3].
inline ivcheck::Dataset iv_null(Eigen::Index n, std::uint64_t seed) {
  ivcheck::Rng rng(ivcheck::RngSpec{seed, 99});
  Eigen::VectorXd y(n), x(n), z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i) = rng.uniform(-3.0, 3.0);
    const double u = rng.normal(), e = rng.normal();
    x(i) = 3.0 * z(i) + 0.5 * u + std::sqrt(1.75) * e;
    y(i) = 2.0 * x(i) + u;
  }
  return make_dataset(y, x, z);
}

}  // namespace ivtest
