#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "ivcheck/rng.hpp"

namespace ivcheck::kernels {

/// Draws of the linear Gaussian process G * xi.
///
/// Column r of the result is G * xi_r where xi_r ~ N(0, I_d) comes from the
/// substream rng.child(r). Each column is computed by the same code path in
/// both variants, so their outputs are bitwise identical for any thread count.
Eigen::MatrixXd simulate_process_serial(const Eigen::MatrixXd& g, int draws, const RngSpec& rng);
Eigen::MatrixXd simulate_process_parallel(const Eigen::MatrixXd& g, int draws, const RngSpec& rng, int jobs);

/// Picks the parallel kernel when jobs > 1 and we are not already inside a
/// parallel region.
Eigen::MatrixXd simulate_process(const Eigen::MatrixXd& g, int draws, const RngSpec& rng, int jobs);

/// Per-column maximum over `rows` (all rows when empty).
std::vector<double> column_max(const Eigen::MatrixXd& sims, std::span<const Eigen::Index> rows = {});

/// Effective worker count: jobs <= 0 means every available thread.
int resolve_jobs(int jobs);

}  // namespace ivcheck::kernels
