#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gfrag/discretization.hpp"
#include "gfrag/errors.hpp"

using namespace gfrag;
using doctest::Approx;

namespace {

CoefficientSet constant(double b, FragmentationKernel k = FragmentationKernel::mitosis()) {
  return {GrowthRate::constant(1.0), FragmentationRate::constant(b), std::move(k)};
}

}  // namespace

TEST_CASE("uniform grid") {
  const GridPtr g = uniform_grid(1.0, 4);
  const std::vector<double> edges{0.0, 0.25, 0.5, 0.75, 1.0};
  const std::vector<double> centers{0.125, 0.375, 0.625, 0.875};
  REQUIRE(g->size() == 4);
  for (size_t i = 0; i < edges.size(); ++i) CHECK(g->edge(i) == Approx(edges[i]));
  for (size_t i = 0; i < centers.size(); ++i) CHECK(g->center(i) == Approx(centers[i]));
  CHECK(g->locate(0.3) == 1);
  CHECK(g->locate(-1.0) == 0);
  CHECK(g->locate(5.0) == 3);
}

TEST_CASE("geometric grid") {
  LayoutSpec spec{Layout::kGeometric};
  spec.ratio = 2.0;
  spec.first_width = 8.0 / 7.0;
  const GridPtr g = build_grid(8.0, 3, spec);
  const std::vector<double> edges{0.0, 8.0 / 7.0, 24.0 / 7.0, 8.0};
  REQUIRE(g->size() == 3);
  for (size_t i = 0; i < edges.size(); ++i) CHECK(g->edge(i) == Approx(edges[i]).epsilon(1e-12));
}

TEST_CASE("characteristic grid has equal travel times") {
  const GrowthRate tau = GrowthRate::power_law(1.0, 0.5);
  const GridPtr g = build_grid(16.0, 8, LayoutSpec{Layout::kCharacteristic}, &tau);
  REQUIRE(g->size() == 8);
  const double ds = tau.travel_time(16.0) / 8.0;
  for (size_t i = 0; i < g->size(); ++i)
    CHECK(tau.travel_time(g->edge(i + 1)) - tau.travel_time(g->edge(i)) ==
          Approx(ds).epsilon(1e-10));
  CHECK_THROWS_AS(build_grid(16.0, 8, LayoutSpec{Layout::kCharacteristic}), Error);
}

TEST_CASE("graded grid") {
  LayoutSpec spec{Layout::kGraded};
  spec.first_width = 0.25;
  spec.fine_end = 2.0;
  spec.ratio = 1.5;
  const GridPtr g = build_grid(20.0, 0, spec);
  CHECK(g->length() == Approx(20.0));
  CHECK(g->width(0) == Approx(0.25));
  CHECK(g->width(7) == Approx(0.25));
  CHECK(g->width(8) > 0.25);
  for (size_t i = 8; i + 2 < g->size(); ++i)
    CHECK(g->width(i + 1) == Approx(1.5 * g->width(i)));
}

TEST_CASE("prefix grids") {
  CHECK(uniform_grid(15.0, 240)->is_prefix_of(*uniform_grid(30.0, 480)));
  CHECK_FALSE(uniform_grid(15.0, 200)->is_prefix_of(*uniform_grid(30.0, 480)));
}

TEST_CASE("norms and brackets") {
  const GridPtr g = uniform_grid(1.0, 8);
  const Vec one = Vec::Ones(8);
  CHECK(weighted_norm(*g, Vec::Zero(8), one) == 0.0);
  CHECK(weighted_norm(*g, one, one) == Approx(1.0));
  CHECK(bracket(*g, -one, one) == Approx(-1.0));
  CHECK(integral(*g, 2.0 * one) == Approx(2.0));

  const Vec ind = indicator(*g, 0.1, 0.3);
  CHECK(integral(*g, ind) == Approx(0.2));
  CHECK(ind[0] == Approx(0.2));
  CHECK(ind[1] == Approx(1.0));
  CHECK(ind[2] == Approx(0.4));

  const WeightVector psi = psi_weight(*g, 2.0);
  CHECK(psi.values[3] == Approx(1.0 + 0.4375 * 0.4375));
}

TEST_CASE("transport matrix on constants") {
  const GridPtr g = uniform_grid(4.0, 16);
  const double dx = g->width(0);
  const Vec one = Vec::Ones(16);

  const CoefficientSet free = constant(0.0);
  const Vec a = assemble_transport(*g, free, 0.0) * one;
  CHECK(a[0] == Approx(-1.0 / dx));
  for (int i = 1; i < 16; ++i) CHECK(std::abs(a[i]) < 1e-12);

  const Vec d = assemble_transport(*g, constant(1.0), 1.0) * one;
  for (int i = 1; i < 16; ++i) CHECK(d[i] == Approx(-2.0));
}

TEST_CASE("fragmentation gain") {
  const GridPtr g = uniform_grid(8.0, 64);
  const Vec w = g->width_vector();

  SUBCASE("mitosis sum rules") {
    const SparseMatrix f = assemble_frag_gain(*g, constant(1.0));
    const Eigen::MatrixXd m(f);
    // Two-center splitting keeps number and mass once the daughter center
    // lies right of the first center.
    for (int j = 1; j < 64; ++j) {
      double number = 0.0, mass = 0.0;
      for (int i = 0; i < 64; ++i) {
        number += m(i, j) * w[i];
        mass += m(i, j) * g->center(i) * w[i];
      }
      CHECK(number == Approx(2.0 * w[j]).epsilon(1e-10));
      CHECK(mass == Approx(g->center(j) * w[j]).epsilon(1e-10));
    }
  }

  SUBCASE("single deposit") {
    // Centers 0.25, 1, 2, 3: the mother at 2 has both daughters at center 1.
    const Grid h({0.0, 0.5, 1.5, 2.5, 3.5}, Layout::kUniform);
    const SparseMatrix f = assemble_frag_gain(h, constant(1.0));
    const Eigen::MatrixXd m(f);
    int hits = 0;
    for (int i = 0; i < 4; ++i)
      if (m(i, 2) != 0.0) ++hits;
    CHECK(hits == 1);
    CHECK(m(1, 2) * h.width(1) == Approx(2.0 * h.width(2)));
  }

  SUBCASE("uniform kernel number") {
    const SparseMatrix f = assemble_frag_gain(*g, constant(1.0, FragmentationKernel::uniform()));
    const Vec col = Vec(f.transpose() * w);
    for (int j = 0; j < 64; ++j) CHECK(col[j] == Approx(2.0 * w[j]).epsilon(1e-10));
  }

  SUBCASE("column norm with flat weight") {
    const SparseMatrix f = assemble_frag_gain(*g, constant(1.0));
    CHECK(std::abs(weighted_column_norm(*g, f, Vec::Ones(64)) - 2.0) < 1e-6);
  }
}

TEST_CASE("coo export") {
  const GridPtr g = uniform_grid(1.0, 2);
  std::ostringstream os;
  write_coo(os, assemble_transport(*g, constant(0.0), 0.0));
  CHECK(os.str().find("0 0") != std::string::npos);
  std::ostringstream gs;
  write_grid_csv(gs, *g);
  CHECK(gs.str().find("0.25") != std::string::npos);
}
