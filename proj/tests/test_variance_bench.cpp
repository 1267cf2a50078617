#include <doctest.h>

#include <sstream>

#include "oracles.hpp"
#include "sfess/variance_bench.hpp"

using namespace sfess;

TEST_CASE("exact gradient matches finite differences of the enumerated expectation") {
  const std::vector<double> theta = {0.2, 0.3, 0.45, 0.5, 0.6, 0.7};
  const std::vector<double> w = {1.0, -1.0, 2.0, 0.5, 0.0, 3.0};
  auto expectation = [&](const std::vector<double>& t) {
    double e = 0.0;
    for (const auto& s : oracle::brute_force_subsets(t, 2)) {
      for (std::size_t i = 0; i < t.size(); ++i) e += s.mask[i] ? s.prob * w[i] : 0.0;
    }
    return e;
  };
  CHECK(oracle::max_rel_diff(exact_linear_gradient(theta, 2, w), oracle::central_difference(expectation, theta, 1e-6)) < 1e-6);
}

TEST_CASE("gumbel top-k expectation") {
  const std::vector<double> w = {1.0, 2.0, 3.0};
  CHECK(gumbel_topk_expectation(std::vector<double>(3, 0.0), 1, w) == doctest::Approx(2.0));
  CHECK(gumbel_topk_expectation(std::vector<double>(3, 0.0), 2, w) == doctest::Approx(4.0));
  CHECK(gumbel_topk_expectation(std::vector<double>{50.0, 0.0, 0.0}, 1, w) == doctest::Approx(1.0));
}

TEST_CASE("report") {
  VarianceBenchConfig c;
  c.trials = 4000;
  const VarianceReport r = variance_bench(c);
  REQUIRE(r.estimators.size() == 3);
  CHECK(r.get("sfess").max_abs_z() < 4.5);
  CHECK(r.get("sfess_v").max_abs_z() < 4.5);
  CHECK(r.variance_ratio() < 0.5);
  CHECK(r.get("gs").max_abs_z() > 5.0);
  std::ostringstream out;
  write_variance_csv(r, out);
  CHECK(out.str().find("gs,logit,0,") != std::string::npos);
}
