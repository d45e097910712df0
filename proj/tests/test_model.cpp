#include <doctest.h>

#include <cmath>

#include "gfrag/errors.hpp"
#include "gfrag/model.hpp"
#include "oracles.hpp"

using namespace gfrag;
using doctest::Approx;

namespace {

// Log-singular density on (0, 1/2) topped up by an atom at 3/4 to unit mass.
FragmentationKernel log_counter_example() {
  const double p = 0.5;
  const double m = p * oracle::log_piece_first_moment(0.5);
  return FragmentationKernel({{0.75, (1.0 - m) / 0.75}}, {}, {{p, 0.0, 0.5}});
}

CoefficientSet unit(FragmentationKernel k) {
  return {GrowthRate::constant(1.0), FragmentationRate::constant(1.0), std::move(k)};
}

}  // namespace

TEST_CASE("kernel moments") {
  CHECK(moment(FragmentationKernel::mitosis(), 0.0) == Approx(2.0).epsilon(1e-14));
  for (double k : {-0.5, 0.0, 0.5, 1.0, 2.0, 3.5})
    CHECK(moment(FragmentationKernel::uniform(), k) ==
          Approx(oracle::uniform_moment(k)).epsilon(1e-12));
  for (double nu : {-0.5, 0.0, 2.0})
    CHECK(std::abs(moment(FragmentationKernel::power_law(nu), 1.0) - 1.0) <= 1e-12);
  CHECK(std::isinf(moment(FragmentationKernel::uniform(), -1.0)));
  CHECK(moment(FragmentationKernel::asymmetric(0.25), 0.0) == Approx(2.0));
}

TEST_CASE("moments decrease in r") {
  for (const auto& k : {FragmentationKernel::mitosis(), FragmentationKernel::uniform(),
                        FragmentationKernel::asymmetric(0.2),
                        FragmentationKernel::power_law(1.0)}) {
    double prev = moment(k, -0.5);
    for (double r = -0.25; r <= 4.0; r += 0.25) {
      const double m = moment(k, r);
      CHECK(m < prev);
      prev = m;
    }
  }
}

TEST_CASE("infimum of the support") {
  CHECK(infimum_support(FragmentationKernel::mitosis()) == 0.5);
  CHECK(infimum_support(FragmentationKernel::uniform()) == 0.0);
  CHECK(infimum_support(truncate_kernel(FragmentationKernel::uniform(), 0.1)) ==
        Approx(0.1));
}

TEST_CASE("solve_k") {
  CHECK(std::abs(solve_k(FragmentationKernel::mitosis(), 1.0, 1.0)) <= 1e-10);
  CHECK(std::abs(solve_k(FragmentationKernel::uniform(), 1.0, 1.0)) <= 1e-10);
  // 2 / (k + 1) = 4 / 3
  CHECK(solve_k(FragmentationKernel::uniform(), 1.0 / 3.0, 1.0) == Approx(0.5).epsilon(1e-10));

  SUBCASE("round trip") {
    for (const auto& k : {FragmentationKernel::mitosis(), FragmentationKernel::uniform(),
                          FragmentationKernel::asymmetric(0.3),
                          FragmentationKernel::power_law(0.5)})
      for (double lam : {0.1, 0.5, 1.0, 3.0}) {
        const double kk = solve_k(k, lam, 2.0);
        CHECK(std::abs(moment(k, kk) - (1.0 + lam / 2.0)) < 1e-10);
      }
  }

  SUBCASE("target above the limit") {
    CHECK_THROWS_AS(solve_k(log_counter_example(), 50.0, 1.0), Error);
  }
}

TEST_CASE("kernel truncation") {
  const FragmentationKernel u = truncate_kernel(FragmentationKernel::uniform(), 0.5);
  CHECK(truncation_mass(FragmentationKernel::uniform(), 0.5) == Approx(0.75));
  REQUIRE(u.pieces().size() == 1);
  CHECK(u.pieces()[0].p == Approx(2.0 / 0.75));
  CHECK(u.pieces()[0].z_lo == 0.5);
  CHECK(std::abs(u.moment(1.0) - 1.0) <= 1e-12);
  CHECK(u.infimum_support() >= 0.5);

  const FragmentationKernel m = truncate_kernel(FragmentationKernel::mitosis(), 0.1);
  REQUIRE(m.atoms().size() == 1);
  CHECK(m.atoms()[0].z == 0.5);
  CHECK(m.atoms()[0].w == Approx(2.0));

  const double rho = truncation_mass(FragmentationKernel::uniform(), 1e-4);
  CHECK(rho == Approx(1.0 - 1e-8));

  CHECK_THROWS_AS(truncate_kernel(FragmentationKernel::mitosis(), 0.75), Error);
}

TEST_CASE("kernel validation") {
  CHECK_THROWS_AS(FragmentationKernel({{0.5, 1.0}}, {}), Error);
  CHECK_THROWS_AS(FragmentationKernel({{1.5, 1.0}}, {}), Error);
  CHECK_NOTHROW(log_counter_example());
}

TEST_CASE("capital Lambda") {
  const CoefficientSet c = unit(FragmentationKernel::mitosis());
  CHECK(capital_lambda(c, 1.0, 2.0) == Approx(2.0).epsilon(1e-12));
  CHECK(capital_lambda(c, 1.0, 1.0) == 0.0);
  const CoefficientSet s{GrowthRate::power_law(1.0, 0.5), FragmentationRate::constant(1.0),
                         FragmentationKernel::mitosis()};
  // int_1^4 2 / sqrt(y) dy
  CHECK(capital_lambda(s, 1.0, 4.0) == Approx(4.0).epsilon(1e-10));
}

TEST_CASE("growth rate travel time") {
  const GrowthRate t = GrowthRate::power_law(2.0, 0.5);
  // int_0^x dy / (2 sqrt y) = sqrt x
  CHECK(t.travel_time(9.0) == Approx(3.0));
  CHECK(t.position_at(3.0) == Approx(9.0));
  CHECK(GrowthRate::constant(4.0).travel_time(2.0) == Approx(0.5));
}

TEST_CASE("fragmentation rate shapes") {
  const FragmentationRate p = FragmentationRate::plateau({{0.0, 0.0}, {0.5, 0.0}, {2.0, 1.0}});
  CHECK(p(0.25) == 0.0);
  CHECK(p(1.25) == Approx(0.5));
  CHECK(p(10.0) == Approx(1.0));
  CHECK(p.b_infinity() == Approx(1.0));
  CHECK(average_terms(p.terms(), 0.5, 2.0) == Approx(0.5));

  const FragmentationRate w = FragmentationRate::power_law(1.0, 0.5, 1.0);
  CHECK(w(0.25) == Approx(1.0));
  CHECK(w(4.0) == Approx(2.0));

  const FragmentationRate m = FragmentationRate::constant(1.0).with_modifier(0.5, 3.0);
  CHECK(m(2.0) == Approx(1.0));
  CHECK(m(3.5) == Approx(1.5));
}

TEST_CASE("hypotheses") {
  CHECK(validate_hypotheses(unit(FragmentationKernel::mitosis())).passed());

  const HypothesisReport bad_tau = validate_hypotheses(
      {GrowthRate::power_law(1.0, 2.0), FragmentationRate::constant(1.0),
       FragmentationKernel::mitosis()});
  CHECK_FALSE(bad_tau.passed());
  CHECK_FALSE(bad_tau.group_passed("Htau"));
  CHECK(bad_tau.group_passed("Hwp"));

  const HypothesisReport bad_k = validate_hypotheses(unit(log_counter_example()));
  CHECK_FALSE(bad_k.group_passed("Hwp"));
  CHECK(bad_k.group_passed("Htau"));
  CHECK(bad_k.group_passed("HB"));
}

TEST_CASE("log piece moment") {
  const FragmentationKernel k = log_counter_example();
  CHECK(std::abs(k.moment(1.0) - 1.0) <= 1e-12);
  CHECK(k.r_lower() == 0.0);
  CHECK(std::isfinite(k.limit_at_r_lower()));
  CHECK(std::isinf(k.moment(-0.01)));
}
