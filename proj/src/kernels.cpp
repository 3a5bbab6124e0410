#include "ivcheck/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <limits>

namespace ivcheck::kernels {

namespace {

void simulate_column(const Eigen::MatrixXd& g, const RngSpec& rng, Eigen::Index r, Eigen::VectorXd& xi,
                     Eigen::MatrixXd& out) {
  Rng gen(rng.child(static_cast<std::uint64_t>(r)));
  for (Eigen::Index k = 0; k < xi.size(); ++k) xi(k) = gen.normal();
  out.col(r).noalias() = g * xi;
}

}  // namespace

Eigen::MatrixXd simulate_process_serial(const Eigen::MatrixXd& g, int draws, const RngSpec& rng) {
  Eigen::MatrixXd out(g.rows(), draws);
  Eigen::VectorXd xi(g.cols());
  for (Eigen::Index r = 0; r < draws; ++r) simulate_column(g, rng, r, xi, out);
  return out;
}

Eigen::MatrixXd simulate_process_parallel(const Eigen::MatrixXd& g, int draws, const RngSpec& rng, int jobs) {
  Eigen::MatrixXd out(g.rows(), draws);
#pragma omp parallel num_threads(resolve_jobs(jobs))
  {
    Eigen::VectorXd xi(g.cols());
#pragma omp for schedule(static)
    for (Eigen::Index r = 0; r < draws; ++r) simulate_column(g, rng, r, xi, out);
  }
  return out;
}

Eigen::MatrixXd simulate_process(const Eigen::MatrixXd& g, int draws, const RngSpec& rng, int jobs) {
  if (resolve_jobs(jobs) > 1 && !omp_in_parallel()) return simulate_process_parallel(g, draws, rng, jobs);
  return simulate_process_serial(g, draws, rng);
}

std::vector<double> column_max(const Eigen::MatrixXd& sims, std::span<const Eigen::Index> rows) {
  std::vector<double> out(static_cast<std::size_t>(sims.cols()), -std::numeric_limits<double>::infinity());
  for (Eigen::Index r = 0; r < sims.cols(); ++r) {
    double m = -std::numeric_limits<double>::infinity();
    if (rows.empty()) {
      m = sims.col(r).maxCoeff();
    } else {
      for (Eigen::Index i : rows) m = std::max(m, sims(i, r));
    }
    out[static_cast<std::size_t>(r)] = m;
  }
  return out;
}

int resolve_jobs(int jobs) { return jobs > 0 ? jobs : omp_get_max_threads(); }

}  // namespace ivcheck::kernels
