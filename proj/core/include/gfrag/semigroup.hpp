#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "gfrag/discretization.hpp"
#include "gfrag/eigen.hpp"
#include "gfrag/flow.hpp"

namespace gfrag {

// Exact transport-with-decay semigroup on cell averages:
// (S_t g)(x) = g(y) tau(y)/tau(x) exp(-lambda t - int_y^x B/tau), y the
// backward characteristic foot, zero once the foot passes the origin.
class TransportPropagator {
 public:
  TransportPropagator(GridPtr grid, Flow flow, double lambda);

  const Grid& grid() const { return *grid_; }
  double lambda() const { return lambda_; }
  // Row i holds the contributions of each source cell to target cell i.
  const SparseMatrix& remap(double t) const;
  Vec apply(double t, const Vec& g) const { return remap(t) * g; }
  // Smallest cell travel time.
  double min_cell_time() const;

 private:
  SparseMatrix build(double t) const;
  GridPtr grid_;
  Flow flow_;
  double lambda_;
  std::vector<double> s_edges_;
  mutable std::mutex mu_;
  mutable std::map<double, std::unique_ptr<SparseMatrix>> cache_;
};

DiscreteField transport_apply(const CoefficientSet& coeffs, double lambda,
                              double t, const DiscreteField& g);

struct TrajectoryPoint {
  double t = 0.0;
  double bracket = 0.0;       // <g, phi>
  double norm = 0.0;          // ||g||_phi
  double min_value = 0.0;
  double distance = 0.0;      // ||g - P g||_phi
};

struct Trajectory {
  GridPtr grid;
  std::vector<TrajectoryPoint> points;
  std::vector<Vec> fields;    // filled when requested
  Vec final_field;
};

struct EvolveOptions {
  int record_every = 1;
  bool keep_fields = false;
};

// Strang splitting of the rescaled semigroup: half a step of the
// fragmentation gain exponential, an exact transport step, half a gain step.
class Evolver {
 public:
  Evolver(GridPtr grid, const CoefficientSet& coeffs, const PerronTriple& triple,
          double dt);

  double dt() const { return dt_; }
  const SparseMatrix& gain() const { return gain_; }
  const TransportPropagator& transport() const { return *transport_; }

  Vec gain_exp(const Vec& v, double h) const;
  Vec step(const Vec& g, double h) const;
  // Whole steps of dt followed by one shorter step for the remainder.
  Vec advance(const Vec& g, double t) const;
  Trajectory run(const Vec& g0, double t_end, const EvolveOptions& opts = {}) const;

 private:
  void check_sign(const Vec& g) const;
  GridPtr grid_;
  SparseMatrix gain_;
  std::unique_ptr<TransportPropagator> transport_;
  Vec phi_;
  Vec G_;
  double dt_;
};

Trajectory evolve(GridPtr grid, const CoefficientSet& coeffs,
                  const PerronTriple& triple, const Vec& g0, double t_end,
                  double dt, const EvolveOptions& opts = {});

// P g = <g, phi> G
Vec project_P(const PerronTriple& triple, const Vec& g);

// Cell-averaged 1[a, a+1] / phi rescaled so that <g_a, phi> = 1.
Vec make_g_a(const Grid& grid, const Vec& phi, double a);

struct FragNormBound {
  double c_tail = 1.0;
  double closed_form_bound = 0.0;   // C^2 kernel_0 ||B||_inf
};

FragNormBound frag_norm_bound(const CoefficientSet& coeffs, double c_tail);
// max over cells with center <= x_max of max(phi/(1+x^k), (1+x^k)/phi)
double estimate_tail_constant(const Grid& grid, const Vec& phi, double k,
                              double x_max = kInf);

// sum_{n > n_max} x^n / n!
double exponential_tail(double x, int n_max);

struct DysonOptions {
  int n_max = 20;
  int lattice_steps = 0;       // 0: one step per smallest cell travel time
  bool richardson = true;
  double richardson_tol = 1e-4;
};

struct DysonStack {
  GridPtr grid;
  double t = 0.0;
  double frag_norm_bound = 0.0;
  int lattice_steps = 0;
  double richardson_rel = 0.0;   // (h vs 2h difference) / 15, relative
  std::vector<Vec> terms;
  Vec phi;
};

// Terms S_t^(n) g, n = 0..n_max, by product integration of
// S_t^(n) = int_0^t S_{t-s} F S_s^(n-1) ds on a uniform time lattice.
DysonStack build_dyson_stack(GridPtr grid, const CoefficientSet& coeffs,
                             const PerronTriple& triple, const Vec& g, double t,
                             const DysonOptions& opts = {});

const Vec& dyson_term(const DysonStack& stack, int n);

struct DysonSum {
  Vec field;
  double remainder_bound = 0.0;   // relative to ||g||_phi
};

DysonSum dyson_sum(const DysonStack& stack, int n_max);

}  // namespace gfrag
