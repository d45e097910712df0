#include <doctest.h>

#include <cmath>
#include <random>

#include "gfrag/errors.hpp"
#include "gfrag/semigroup.hpp"
#include "oracles.hpp"

using namespace gfrag;
using doctest::Approx;

namespace {

CoefficientSet unit(double b = 1.0) {
  return {GrowthRate::constant(1.0), FragmentationRate::constant(b),
          FragmentationKernel::mitosis()};
}

Vec random_field(const Grid& g, double support, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec v = Vec::Zero(g.size());
  for (size_t i = 0; i < g.size(); ++i)
    if (g.center(i) < support) v[i] = u(rng);
  return v;
}

}  // namespace

TEST_CASE("exponential tail") {
  CHECK(exponential_tail(1.0, 10) == Approx(oracle::exp_tail(1.0, 10)).epsilon(1e-6));
  CHECK(exponential_tail(1.0, 10) == Approx(2.731266e-8).epsilon(1e-5));
  CHECK(exponential_tail(2.0, 11) == Approx(oracle::exp_tail(2.0, 11)).epsilon(1e-6));
  CHECK(exponential_tail(0.0, 0) == 0.0);
}

TEST_CASE("exact transport") {
  const GridPtr g = uniform_grid(4.0, 40);
  const DiscreteField box{g, indicator(*g, 1.0, 2.0)};

  SUBCASE("identity at t = 0") {
    const DiscreteField o = transport_apply(unit(), 1.0, 0.0, box);
    CHECK((o.values - box.values).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("translation") {
    const DiscreteField o = transport_apply(unit(0.0), 0.0, 0.5, box);
    const Vec ref = indicator(*g, 1.5, 2.5);
    CHECK((o.values - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("translation with decay") {
    const DiscreteField o = transport_apply(unit(1.0), 1.0, 0.5, box);
    const Vec ref = std::exp(-1.0) * indicator(*g, 1.5, 2.5);
    CHECK((o.values - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("fractional shift keeps mass") {
    const DiscreteField o = transport_apply(unit(0.0), 0.0, 0.03, box);
    CHECK(integral(*g, o.values) == Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("growth along characteristics") {
  // tau = 2 sqrt(x): X(t) = (sqrt(x0) + t)^2; number is carried with the cell.
  const CoefficientSet c{GrowthRate::power_law(2.0, 0.5), FragmentationRate::constant(0.0),
                         FragmentationKernel::mitosis()};
  const GridPtr g = uniform_grid(16.0, 320);
  const DiscreteField box{g, indicator(*g, 1.0, 4.0)};
  const DiscreteField o = transport_apply(c, 0.0, 1.0, box);
  const Vec ref = indicator(*g, 4.0, 9.0) * (3.0 / 5.0);
  CHECK(integral(*g, o.values) == Approx(3.0).epsilon(1e-12));
  CHECK(integral(*g, (o.values - ref).cwiseAbs().eval()) < 0.3);
  CHECK(integral(*g, o.values.cwiseProduct(indicator(*g, 0.0, 3.9))) < 1e-12);
}

TEST_CASE("evolution and projection") {
  const CoefficientSet c = unit();
  const GridPtr g = uniform_grid(20.0, 320);
  const PerronTriple t = solve_perron(g, c);
  const Vec& phi = t.phi.values;
  const double dt = g->width(0);
  const Evolver ev(g, c, t, dt);

  SUBCASE("G is a fixed point up to the splitting error") {
    auto drift = [&](int n) {
      const GridPtr gg = uniform_grid(20.0, n);
      const PerronTriple tt = solve_perron(gg, c);
      const Trajectory tr = Evolver(gg, c, tt, gg->width(0)).run(tt.G.values, 4.0);
      double d = 0.0;
      for (const auto& p : tr.points) d = std::max(d, p.distance);
      return d;
    };
    const double coarse = drift(320), fine = drift(640);
    CHECK(fine < coarse / 3.0);
    CHECK(fine < 1e-3);
  }
  SUBCASE("projection") {
    const Vec ga = make_g_a(*g, phi, 3.0);
    CHECK(bracket(*g, ga, phi) == Approx(1.0).epsilon(1e-12));
    CHECK(weighted_norm(*g, ga, phi) == Approx(1.0).epsilon(1e-12));
    const Vec p = project_P(t, ga);
    CHECK((p - t.G.values).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((project_P(t, p) - p).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((project_P(t, t.G.values) - t.G.values).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("positivity and conservation") {
    const Vec g0 = random_field(*g, 5.0, 11);
    const Trajectory tr = ev.run(g0, 3.0);
    const double b0 = tr.points.front().bracket;
    for (const auto& p : tr.points) {
      CHECK(p.min_value >= -1e-12);
      CHECK(std::abs(p.bracket / b0 - 1.0) < 1e-10);
      CHECK(p.norm <= tr.points.front().norm * (1.0 + 1e-10));
    }
  }
}

TEST_CASE("Dyson terms") {
  const CoefficientSet c = unit();
  const GridPtr g = uniform_grid(8.0, 256);
  const PerronTriple t = solve_perron(g, c);
  const Vec g0 = random_field(*g, 3.0, 5);
  DysonOptions o;
  o.n_max = 16;
  o.lattice_steps = 128;
  const DysonStack st = build_dyson_stack(g, c, t, g0, 1.0, o);

  const Vec s0 = transport_apply(c, t.lambda, 1.0, {g, g0}).values;
  CHECK((dyson_term(st, 0) - s0).cwiseAbs().maxCoeff() < 1e-13);
  const DysonSum sum = dyson_sum(st, 16);
  CHECK(sum.remainder_bound == Approx(exponential_tail(st.frag_norm_bound, 16)));

  // Term n carries at most (b t)^n / n! of the weighted norm.
  const double n0 = weighted_norm(*g, g0, t.phi.values);
  double f = 1.0;
  for (int n = 1; n <= 16; ++n) {
    f *= st.frag_norm_bound / n;
    CHECK(weighted_norm(*g, dyson_term(st, n), t.phi.values) <= f * n0 * (1.0 + 1e-6));
  }
}

TEST_CASE("Dyson without fragmentation") {
  const CoefficientSet c = unit(0.0);
  const GridPtr g = uniform_grid(6.0, 96);
  const PerronTriple t{0.0, {g, Vec::Ones(96) / 6.0}, {g, Vec::Ones(96)}, 0.0, 0.0, 0};
  const Vec g0 = random_field(*g, 2.0, 9);
  DysonOptions o;
  o.n_max = 0;
  const DysonStack st = build_dyson_stack(g, c, t, g0, 1.0, o);
  const DysonSum sum = dyson_sum(st, 0);
  CHECK(sum.remainder_bound == 0.0);
  CHECK((sum.field - transport_apply(c, 0.0, 1.0, {g, g0}).values).cwiseAbs().maxCoeff() <
        1e-13);
}

TEST_CASE("support of the Dyson terms") {
  const CoefficientSet c = unit();
  const GridPtr g = uniform_grid(40.0, 640);
  const PerronTriple t = solve_perron(g, c);
  const Vec ga = make_g_a(*g, t.phi.values, 32.0);
  DysonOptions o;
  o.n_max = 6;
  o.richardson = false;
  const DysonStack st = build_dyson_stack(g, c, t, ga, 1.0, o);
  // z0^n a = 32 / 2^n: term n vanishes below it, less the one-cell spread of
  // the two-center deposit.
  for (int n = 0; n <= 6; ++n) {
    const double edge = 32.0 / std::pow(2.0, n) - 2.0 * g->width(0);
    const Vec& v = dyson_term(st, n);
    for (size_t i = 0; i < g->size(); ++i)
      if (g->edge(i + 1) <= edge) CHECK(v[i] == 0.0);
  }
}

TEST_CASE("fragmentation norm bound") {
  const CoefficientSet m = unit();
  CHECK(frag_norm_bound(m, 1.0).closed_form_bound == Approx(2.0));
  const CoefficientSet u{GrowthRate::constant(1.0), FragmentationRate::constant(1.0),
                         FragmentationKernel::uniform()};
  CHECK(frag_norm_bound(u, 1.0).closed_form_bound == Approx(2.0));
  CHECK(frag_norm_bound(u, 2.0).closed_form_bound == Approx(8.0));
}
