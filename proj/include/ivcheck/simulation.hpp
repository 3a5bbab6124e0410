#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "ivcheck/clr.hpp"
#include "ivcheck/config.hpp"
#include "ivcheck/dataset.hpp"
#include "ivcheck/moments.hpp"
#include "ivcheck/rng.hpp"

namespace ivcheck {

enum class DgpFamily {
  LinearIV_Null,
  LinearOLS_Null,
  BoxCoxIV_Null,
  BoxCoxOLS_Null,
  LinearIV_Power,
  LinearOLS_Power,
  BoxCox_Power,
  Hetero_Power,
};

std::string_view to_string(DgpFamily f);
DgpFamily parse_dgp_family(std::string_view text);

struct DgpSpec {
  DgpFamily family = DgpFamily::LinearIV_Null;
  Eigen::Index n = 1000;
  double lambda = 0.0;  // Box-Cox families
  double L = 0.0;       // power families
  double sigma = 1.0;
  double rho = 0.0;  // Hetero_Power

  /// Throws InvalidArgument unless L >= 0, sigma > 0, rho in [0, 1], n >= 50.
  void validate() const;
  /// Compact description, e.g. "LinearIV_Power(L=0.5,sigma=0.25) n=1000".
  std::string label() const;
};

/// Draws one dataset. Instrumented families carry Z; OLS-type families use X
/// itself as the conditioning/instrument column.
Dataset generate(const DgpSpec& spec, const RngSpec& rng);

/// The model and assumption set the conditional-moment test checks for a
/// family.
ModelSpec model_for(const DgpSpec& spec);

/// Dataset on which Sargan/Hansen run: Box-Cox families get X replaced by
/// its transform at the true lambda.
Dataset overid_dataset(const DgpSpec& spec, const Dataset& ds);

enum class TestMethod { CMI, Sargan, HansenJ };
std::string_view to_string(TestMethod m);
TestMethod parse_test_method(std::string_view text);

/// Extra per-replication decision rule, mainly for harness tests.
struct CustomMethod {
  std::string name;
  std::function<bool(const Dataset&, double alpha, const RngSpec&)> reject;
};

struct StudyConfig {
  std::string name = "custom";
  std::vector<DgpSpec> dgps;
  std::vector<TestMethod> methods{TestMethod::CMI};
  std::vector<CustomMethod> custom;
  std::size_t reps = 200;
  std::vector<double> alpha_levels{0.10, 0.05, 0.01};
  RngSpec rng;
  int jobs = 1;
  /// Grid, smoother and multiplier settings for CMI; its rng and alpha
  /// fields are overridden per replication.
  TestConfig test;
  int h_degree = 3;
  /// Permits fewer than kMinReps replications (smoke runs).
  bool smoke = false;
};

inline constexpr std::size_t kMinReps = 50;

struct StudyCell {
  std::size_t dgp = 0;
  std::string method;
  double alpha = 0.0;
  std::size_t reps = 0;
  std::size_t failures = 0;
  std::size_t rejections = 0;
  /// rejections / (reps - failures).
  double rate = 0.0;
  /// sqrt(rate (1 - rate) / (reps - failures)).
  double mc_se = 0.0;
};

struct StudyResult {
  StudyConfig config;
  std::vector<StudyCell> cells;
  std::vector<std::string> failure_messages;  // first few, for the manifest
  double wall_seconds = 0.0;

  const StudyCell& cell(std::size_t dgp, std::string_view method, double alpha) const;
};

std::vector<std::string> method_names(const StudyConfig& cfg);

/// One replication: every method at every alpha on the same dataset. Rows
/// are methods (built-in first, then custom), columns alpha levels; -1 marks
/// a failed replication.
Eigen::MatrixXi run_replication(const StudyConfig& cfg, std::size_t dgp, std::size_t rep,
                                std::string* failure = nullptr);

/// Replications are independent; each draws from rng.child(dgp).child(rep),
/// so results are identical for any `jobs`.
StudyResult run_study_serial(const StudyConfig& cfg);
StudyResult run_study_parallel(const StudyConfig& cfg);
StudyResult run_study(const StudyConfig& cfg);

struct CurveRow {
  Eigen::Index n = 0;
  std::string method;
  double alpha = 0.0;
  double rate = 0.0;
  double mc_se = 0.0;
};

/// Rejection rate against sample size for `base` with every n in `n_list`
/// (strictly increasing). `cfg.dgps` is ignored.
std::vector<CurveRow> power_curve(const DgpSpec& base, const std::vector<Eigen::Index>& n_list,
                                  const StudyConfig& cfg);

/// Named study layouts: table1, table2, table3, table5, figure1, figure2.
StudyConfig study_preset(std::string_view name);
std::vector<std::string> study_preset_names();

/// Cartesian product study from sim.* keys of a config file (sim.family,
/// sim.n, sim.L, sim.sigma, sim.lambda, sim.rho, sim.methods).
StudyConfig custom_study(const Config& cfg);

}  // namespace ivcheck
