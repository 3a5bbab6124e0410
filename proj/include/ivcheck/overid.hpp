#pragma once

#include <string_view>

#include "ivcheck/dataset.hpp"
#include "ivcheck/estimators.hpp"

namespace ivcheck {

enum class OveridMethod { Sargan, HansenJ };

std::string_view to_string(OveridMethod m);

struct OveridReport {
  OveridMethod method = OveridMethod::Sargan;
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Statistics below this are reported as exactly zero with p-value 1.
inline constexpr double kJustIdentifiedTol = 1e-8;

/// n * u'P_H u / u'u with u the 2SLS residuals on instruments [1, h(Z)].
OveridReport sargan(const Dataset& ds, const InstrumentFn& h, bool intercept = true);

/// n * gbar' W gbar at the two-step GMM estimate, W the inverse first-step
/// moment covariance.
OveridReport hansen_j(const Dataset& ds, const InstrumentFn& h, bool intercept = true);

OveridReport overid_test(OveridMethod method, const Dataset& ds, const InstrumentFn& h, bool intercept = true);

}  // namespace ivcheck
