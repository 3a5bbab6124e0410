#pragma once

#include <span>
#include <vector>

namespace ivcheck::stats {

/// Hyndman-Fan type 7 quantile (linear interpolation between order
/// statistics). `values` need not be sorted.
double quantile_type7(std::vector<double> values, double p);

/// Type 7 quantile of an ascending sample.
double quantile_type7_sorted(std::span<const double> sorted, double p);

double normal_pdf(double x);
double normal_cdf(double x);

/// Upper-tail chi-square probability P(X > stat) with `dof` degrees of freedom.
double chi2_upper(double stat, double dof);

/// sup_u |F_n(u) - u| for a sample on [0, 1].
double ks_uniform(std::vector<double> sample);

/// Two-sample Kolmogorov-Smirnov distance.
double ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Nondecreasing least-squares fit with equal weights (pool adjacent violators).
std::vector<double> isotonic_increasing(std::span<const double> values);

double mean(std::span<const double> values);
double median(std::vector<double> values);

}  // namespace ivcheck::stats
