#include <doctest.h>

#include <cmath>
#include <random>

#include "gfrag/eigen.hpp"
#include "gfrag/errors.hpp"
#include "gfrag/semigroup.hpp"
#include "oracles.hpp"

using namespace gfrag;
using doctest::Approx;

namespace {

CoefficientSet unit(FragmentationKernel k = FragmentationKernel::mitosis(), double b = 1.0) {
  return {GrowthRate::constant(1.0), FragmentationRate::constant(b), std::move(k)};
}

double relative_spread(const Grid& g, const Vec& v, double lo, double hi) {
  double mean = 0.0, len = 0.0, out = 0.0;
  for (size_t i = 0; i < g.size(); ++i)
    if (g.center(i) >= lo && g.center(i) <= hi) {
      mean += v[i] * g.width(i);
      len += g.width(i);
    }
  mean /= len;
  for (size_t i = 0; i < g.size(); ++i)
    if (g.center(i) >= lo && g.center(i) <= hi) out = std::max(out, std::abs(v[i] / mean - 1.0));
  return out;
}

}  // namespace

TEST_CASE("resolvent of a constant source") {
  const GridPtr g = uniform_grid(6.0, 48);
  const double mu = 1.5;
  const DiscreteField h{g, Vec::Ones(48)};
  const DiscreteField r = transport_resolvent_apply(unit(FragmentationKernel::mitosis(), 0.0),
                                                    mu, 0.0, h);
  const auto ref = oracle::cell_average(
      [&](double x) { return (1.0 - std::exp(-mu * x)) / mu; }, g->edges());
  for (size_t i = 0; i < 48; ++i) CHECK(std::abs(r.values[i] - ref[i]) < 1e-8);

  const DiscreteField z = transport_resolvent_apply(unit(), mu, 1.0, {g, Vec::Zero(48)});
  CHECK(z.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("resolvent positivity and dissipativity") {
  const CoefficientSet c{GrowthRate::power_law(1.0, 0.5),
                         FragmentationRate::plateau({{0.0, 0.0}, {1.0, 0.5}, {3.0, 1.0}}),
                         FragmentationKernel::mitosis()};
  const GrowthRate tau = c.tau;
  const GridPtr g = build_grid(20.0, 200, LayoutSpec{Layout::kCharacteristic}, &tau);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Vec h(200);
    for (auto& v : h) v = u(rng);
    const double mu = 0.5 + trial;
    const DiscreteField r = transport_resolvent_apply(c, mu, 0.3, {g, h});
    CHECK(r.values.minCoeff() >= 0.0);
    CHECK(integral(*g, r.values) <= integral(*g, h) / mu * (1.0 + 1e-12));
  }
}

TEST_CASE("resolvent transpose") {
  const GridPtr g = uniform_grid(5.0, 40);
  const Flow f = make_flow(unit());
  const Resolvent r(*g, f, 2.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  Vec a(40), b(40);
  for (auto& v : a) v = n(rng);
  for (auto& v : b) v = n(rng);
  CHECK(b.dot(r.apply(a)) == Approx(a.dot(r.apply_transpose(b))).epsilon(1e-12));
}

TEST_CASE("Perron triple for constant rate") {
  const GridPtr g = uniform_grid(30.0, 960);
  SUBCASE("mitosis") {
    const PerronTriple t = solve_perron(g, unit());
    CHECK(std::abs(t.lambda - 1.0) <= 2e-3);
    CHECK(relative_spread(*g, t.phi.values, 0.5, 24.0) <= 5e-3);
    CHECK(integral(*g, t.G.values) == Approx(1.0).epsilon(1e-12));
    CHECK(bracket(t.G, phi_weight(t.phi.values)) == Approx(1.0).epsilon(1e-12));
    CHECK(t.G.values.minCoeff() >= 0.0);
    CHECK(t.phi.values.minCoeff() > 0.0);
    const TailFit fit = fit_power_tail(*g, t.phi.values, 9.0, 21.0);
    CHECK(std::abs(fit.k_hat) <= 0.02);
  }
  SUBCASE("uniform kernel") {
    const PerronTriple t = solve_perron(g, unit(FragmentationKernel::uniform()));
    CHECK(std::abs(t.lambda - 1.0) <= 2e-3);
    const TailFit fit = fit_power_tail(*g, t.phi.values, 9.0, 21.0);
    CHECK(std::abs(fit.k_hat) <= 0.03);
  }
  SUBCASE("rate two doubles lambda") {
    const PerronTriple t = solve_perron(g, unit(FragmentationKernel::mitosis(), 2.0));
    CHECK(std::abs(t.lambda - 2.0) <= 4e-3);
  }
}

TEST_CASE("truncated brackets") {
  const CoefficientSet c = unit();
  const GridPtr g = uniform_grid(15.0, 240);
  const GridPtr ref = uniform_grid(30.0, 480);
  const TruncatedEigenPair pair = solve_truncated_brackets(g, c);
  const PerronTriple rt = solve_perron(ref, c);
  const BracketReport br = check_brackets(pair, rt, c);
  CHECK(br.minus_ok);
  CHECK(br.plus_ok);
  CHECK(br.lambda_minus <= br.lambda_ref);
  CHECK(br.lambda_plus > br.lambda_ref);

  SUBCASE("defect of constants") {
    const auto d = supersolution_defect(*g, c, pair, Vec::Ones(240), Side::kPlus, 2.0, 13.0);
    REQUIRE(!d.empty());
    for (const auto& s : d) CHECK(s.value == Approx(pair.lambda_plus - 1.0).epsilon(1e-10));
    const auto e = supersolution_defect(
        *g, c, 0.75, [](double) { return 1.0; }, [](double) { return 0.0; }, 2.0, 13.0);
    for (const auto& s : e) CHECK(s.value == Approx(-0.25));
  }

  // The plus problem has a kink in phi at x = 1, so start at 2.
  SUBCASE("defect of the eigenvector shrinks with the cells") {
    auto worst_at = [&](int n) {
      const GridPtr gg = uniform_grid(15.0, n);
      const TruncatedEigenPair p = solve_truncated_brackets(gg, c);
      double worst = 0.0;
      for (const auto& s :
           supersolution_defect(*gg, c, p, p.phi_plus.values, Side::kPlus, 2.0, 15.0))
        worst = std::max(worst, std::abs(s.value));
      return worst;
    };
    const double coarse = worst_at(240), fine = worst_at(480);
    CHECK(fine < 0.6 * coarse);
    CHECK(fine < 2e-3);
  }
}

TEST_CASE("power tail fit") {
  const GridPtr g = uniform_grid(40.0, 400);
  Vec phi(400);
  for (size_t i = 0; i < 400; ++i) phi[i] = 3.0 * std::pow(g->center(i), 0.7);
  const TailFit fit = fit_power_tail(*g, phi, 10.0, 30.0);
  CHECK(fit.k_hat == Approx(0.7).epsilon(1e-12));
  CHECK(fit.c_hat == Approx(3.0).epsilon(1e-10));
  CHECK_THROWS_AS(fit_power_tail(*g, phi, 10.0, 10.01), Error);
}
