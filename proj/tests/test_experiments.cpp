#include <doctest.h>

#include <atomic>
#include <cmath>

#include "gfrag/errors.hpp"
#include "gfrag/experiments.hpp"

using namespace gfrag;
using doctest::Approx;

namespace {

CoefficientSet unit(FragmentationKernel k = FragmentationKernel::mitosis()) {
  return {GrowthRate::constant(1.0), FragmentationRate::constant(1.0), std::move(k)};
}

}  // namespace

TEST_CASE("parallel_for covers every index once") {
  for (int jobs : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(37);
    parallel_for(hits.size(), jobs, [&](size_t i) { hits[i]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
}

TEST_CASE("gap sandwich bounds") {
  CHECK(gap_lower_bound(1.0, std::log2(3.0)) == 0.0);
  CHECK(gap_lower_bound(1.0, 0.0) == 0.0);
  CHECK(gap_lower_bound(1.0, 3.0) == Approx(1.25));
  CHECK(gap_upper_bound(1.0, 3.0) == Approx(2.0));
  CHECK(gap_upper_bound(1.0, 0.1) == Approx(2.0 * std::exp(1.0) * std::log(2.0) * 0.1));
  for (double r = 0.0; r < 8.0; r += 0.5) CHECK(gap_lower_bound(2.0, r) <= gap_upper_bound(2.0, r));
}

TEST_CASE("homogeneous tail table") {
  CHECK(homogeneous_k(0.5, 1.0, 0.7) == 1.0);
  CHECK(homogeneous_k(0.0, 1.0, 1.0) == 0.0);
  CHECK(homogeneous_k(0.0, 1.0, 1.0 / 3.0) == Approx(0.5));
  CHECK(homogeneous_k(-0.5, 1.0, 1.0) == Approx(-1.5));
}

TEST_CASE("fragmentation difference bound") {
  const FragmentationKernel u = FragmentationKernel::uniform();
  for (double eps : {0.2, 0.1, 0.05}) {
    const double rho = 1.0 - eps * eps;
    for (double c : {1.0, 1.5}) {
      const double ref = (1.0 / rho - 1.0) * c * c * 2.0 + c * c * 2.0 * eps;
      CHECK(frag_difference_bound(u, eps, 1.0, 0.0, c) == Approx(ref).epsilon(1e-12));
    }
  }
  // Decreasing as eps shrinks.
  CHECK(frag_difference_bound(u, 0.05, 1.0, 0.0, 1.0) < frag_difference_bound(u, 0.1, 1.0, 0.0, 1.0));
}

TEST_CASE("cut point selection") {
  const GridPtr g = uniform_grid(20.0, 320);
  const PerronTriple t = solve_perron(g, unit());
  const double x = select_x(t, 0.05);
  const Vec w = indicator(*g, 0.0, x);
  const double below = bracket(*g, t.G.values.cwiseProduct(w), t.phi.values);
  CHECK(below >= 0.95);
  const Vec w2 = indicator(*g, 0.0, x - g->width(0));
  CHECK(bracket(*g, t.G.values.cwiseProduct(w2), t.phi.values) < 0.95);
}

TEST_CASE("experiment preconditions") {
  const GridPtr g = uniform_grid(20.0, 320);
  const PerronTriple t = solve_perron(g, unit());
  CHECK_THROWS_WITH_AS(homogeneous_closed_form(g, unit(), t), doctest::Contains("WrongKernel"),
                       Error);
  SlowConvergenceOptions o;
  try {
    slow_convergence_scan(g, unit(), t, o);
    FAIL("expected DomainTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDomainTooSmall);
  }
  const PerronTriple u = solve_perron(g, unit(FragmentationKernel::uniform()));
  try {
    slow_convergence_scan(g, unit(FragmentationKernel::uniform()), u, o);
    FAIL("expected a config error for z0 = 0");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
}

TEST_CASE("homogeneous closed form on a coarse grid") {
  const CoefficientSet c = unit(FragmentationKernel::uniform());
  const GridPtr g = uniform_grid(30.0, 480);
  const PerronTriple t = solve_perron(g, c);
  const HomogeneousResult h = homogeneous_closed_form(g, c, t);
  CHECK(h.lambda_at_one == 0.0);
  CHECK(h.max_rel_err < 0.02);
  CHECK(std::abs(h.fit.k_hat - h.k_table) < 0.05);
}

TEST_CASE("calibration contract") {
  const CoefficientSet c = unit(FragmentationKernel::uniform());
  const GridPtr g = uniform_grid(20.0, 160);
  const CalibrationResult r = calibrate_truncation(g, c, 0.2);
  CHECK(r.eta > -1.0);
  CHECK(r.residual <= 1e-6);
  CHECK(r.lambda_hat > 0.0);
  CHECK(r.lambda_hat <= c.rate.sup_norm() + r.eta + 1e-9);
  CHECK(r.rho == Approx(0.96));
  const CoefficientSet cc = calibrated_coefficients(c, r);
  CHECK(cc.kernel.infimum_support() >= 0.2);
  CHECK(std::abs(cc.kernel.moment(1.0) - 1.0) <= 1e-12);
}
