#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "ivcheck/report.hpp"

using namespace ivcheck;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("column layouts are pinned") {
    CHECK(join(test_summary_columns()) ==
          "run_id,coordinate,conditioning,alpha,k_crit,k_crit_full,theta_corrected,reject,argmax_moment,argmax_v,"
          "gamma_prime,kappa,theta_hat_sup,selected_set_size,method,series_order,bandwidth,cells,draws,seed,stream,n,"
          "grid_requested,grid_used,dropped_points,discrete_grid");
    CHECK(join(test_grid_columns()) == "run_id,coordinate,moment,v,theta,se,selected");
    CHECK(join(test_fit_columns()) == "run_id,key,value");
    CHECK(join(study_long_columns()) ==
          "run_id,study,dgp_index,family,n,lambda,L,sigma,rho,method,alpha,reps,failures,rejections,rate,mc_se");
    CHECK(join(curve_columns()) == "run_id,n,method,alpha,rate,mc_se");
  }

  TEST_CASE("format_double round-trips") {
    Rng rng(RngSpec{1, 0});
    for (int i = 0; i < 1000; ++i) {
      const double v = rng.normal() * std::pow(10.0, static_cast<int>(rng.uniform(-12.0, 12.0)));
      CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.05) == "0.05");
    CHECK(format_double(2.0) == "2");
    CHECK(std::strtod(format_double(std::numeric_limits<double>::denorm_min()).c_str(), nullptr) ==
          std::numeric_limits<double>::denorm_min());
  }

  TEST_CASE("CSV cells with separators are quoted") {
    const auto dir = ivtest::scratch_dir("csv_quote");
    {
      CsvWriter w(dir / "q.csv", {"a", "b"});
      w.row({"plain", "has,comma"});
      w.row({"say \"hi\"", "x"});
      CHECK_THROWS_AS(w.row({"only one"}), Error);
    }
    CHECK(slurp(dir / "q.csv") == "a,b\nplain,\"has,comma\"\n\"say \"\"hi\"\"\",x\n");
  }

  TEST_CASE("run ids depend on arguments and seed") {
    const std::vector<std::string> a{"test", "--data", "d.csv"};
    CHECK(make_run_id(a, 1) == make_run_id(a, 1));
    CHECK(make_run_id(a, 1) != make_run_id(a, 2));
    CHECK(make_run_id(a, 1) != make_run_id({"test", "--data", "e.csv"}, 1));
    CHECK(make_run_id({"ab", "c"}, 1) != make_run_id({"a", "bc"}, 1));
    CHECK(make_run_id(a, 1).size() == 16);
  }

  TEST_CASE("manifest write and read") {
    const auto dir = ivtest::scratch_dir("manifest");
    Manifest m;
    m.add("command", "test");
    m.add("seed", "42");
    m.add("output", "a.csv");
    m.add("output", "b.csv");
    m.args = {"test", "--set", "x = y", "--seed", "42"};
    m.write(dir / "manifest.txt");
    const Manifest back = Manifest::read(dir / "manifest.txt");
    CHECK(back.entries == m.entries);
    CHECK(back.args == m.args);
    CHECK(back.get("seed") == "42");
    CHECK_THROWS_AS(back.get("missing"), Error);
  }

  TEST_CASE("test report files") {
    const Dataset ds = ivtest::iv_null(300, 3);
    TestConfig cfg;
    cfg.rng = RngSpec{3, 0};
    const auto reports = test_model_all(ds, ModelSpec{}, cfg);
    const auto dir = ivtest::scratch_dir("test_report");
    const auto files = write_test_report(dir, reports, "abc");
    REQUIRE(files.size() == 3);
    std::ifstream in(files[0]);
    std::string line;
    std::getline(in, line);
    CHECK(line == join(test_summary_columns()));
    int rows = 0;
    while (std::getline(in, line)) {
      CHECK(line.rfind("abc,0,", 0) == 0);
      ++rows;
    }
    CHECK(rows == 3);
    CHECK(describe_test_report(reports).find("alpha") != std::string::npos);
  }
}
