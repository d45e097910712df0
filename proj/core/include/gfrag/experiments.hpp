#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gfrag/discretization.hpp"
#include "gfrag/eigen.hpp"
#include "gfrag/semigroup.hpp"

namespace gfrag {

// Runs fn(0..n-1) on up to jobs threads. Results must be written by index.
void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn);

// ---------------------------------------------------------------- slowconv

struct SlowConvergenceOptions {
  double t = 1.0;
  double epsilon = 0.05;
  // a = X * (1/z0)^m for each m.
  std::vector<int> ladder = {3, 6, 9, 12};
  // Explicit a values; used instead of the ladder when non-empty.
  std::vector<double> a_values;
  double dt = 0.0;   // 0: smallest cell travel time
  int jobs = 1;
};

struct SlowConvergenceRow {
  double a = 0.0;
  int generations = 0;        // ceil(log_{1/z0}(a/X))
  double norm = 0.0;          // ||T_t g_a - P g_a||_phi
  double mass_below_x = 0.0;  // int_0^X T_t g_a phi
  double series_tail = 0.0;   // R_t(a)
  double split_bound = 0.0;   // four-integral lower bound, numerical
  double series_bound = 0.0;  // 2 (int_0^X G phi - R_t(a))
};

struct SlowConvergenceReport {
  double t = 0.0;
  double epsilon = 0.0;
  double x_cut = 0.0;         // X
  double g_mass_below_x = 0.0;
  double b = 0.0;             // column norm of the gain in L1_phi
  double closed_form_b = 0.0;       // kernel_0 ||B||_inf
  double dt = 0.0;
  std::vector<SlowConvergenceRow> rows;
};

// Smallest right cell edge X with int_0^X G phi >= 1 - eps.
double select_x(const PerronTriple& triple, double eps);

SlowConvergenceReport slow_convergence_scan(GridPtr grid,
                                            const CoefficientSet& coeffs,
                                            const PerronTriple& triple,
                                            const SlowConvergenceOptions& opts);

// --------------------------------------------------------------------- gap

struct GapOptions {
  double r = 0.0;                 // weight 1 + x^r; r = 0 selects phi
  std::vector<double> lengths = {15.0, 30.0, 60.0};
  double cell_width = 1.0 / 16.0;
  double t_lo = 1.0;
  double t_hi = 5.0;
  int samples = 17;               // fit times in [t_lo, t_hi]
  bool spectrum = true;           // dense eigenvalues of the upwind generator
  int max_dense = 2048;
  int jobs = 1;
};

struct GapRow {
  double length = 0.0;
  int cells = 0;
  double lambda = 0.0;
  double matrix_gap = 0.0;        // decay rate of the weighted operator norm
  double matrix_fit_residual = 0.0;
  double fit_gap = 0.0;           // decay rate for the slowest g_a
  double fit_worst_a = 0.0;
  double fit_residual = 0.0;
  double spectral_gap = 0.0;      // -Re of the second eigenvalue
  double leading_eigenvalue = 0.0;
  std::vector<double> times;
  std::vector<double> operator_norms;
};

struct GapReport {
  double r = 0.0;
  std::string weight;
  double b_inf = 0.0;
  double lower = 0.0;             // 2B max(0, 1 - 3 2^-r)
  double upper = 0.0;             // 2B min(e ln2 r, 1)
  std::vector<GapRow> rows;
};

// Sandwich for mitosis with constant rate b.
double gap_lower_bound(double b, double r);
double gap_upper_bound(double b, double r);

GapReport gap_estimate(const CoefficientSet& coeffs, const GapOptions& opts);

// ------------------------------------------------------------- calibration

struct CalibrationOptions {
  double eta_tol = 1e-8;
  double a_tol = 1e-6;
  double a_max_factor = 50.0;
  double relation_tol = 1e-6;
  PerronOptions perron;
};

struct CalibrationTrace {
  double eta = 0.0;
  double lambda_tilde = 0.0;
  double target = 0.0;            // (kernel_k^eps - 1)(B_inf + eta)
};

struct CalibrationResult {
  double epsilon = 0.0;
  double rho = 0.0;               // int_eps^1 z kernel(dz)
  double k = 0.0;
  double kernel_k = 0.0;          // moment k of the truncated kernel
  double lambda = 0.0;            // untruncated
  double lambda_eps = 0.0;        // truncated, eta = 0
  double eta = 0.0;
  double a_eta = 0.0;
  double lambda_hat = 0.0;        // Perron value at (eta, A_eta)
  double lambda_tilde = 0.0;
  double residual = 0.0;          // |kernel_k - 1 - lambda_hat/(B_inf + eta)|
  bool degenerate = false;        // lambda flat in A
  std::vector<CalibrationTrace> trace;
};

CalibrationResult calibrate_truncation(GridPtr grid, const CoefficientSet& coeffs,
                                       double eps,
                                       const CalibrationOptions& opts = {});

// Coefficients of the calibrated problem.
CoefficientSet calibrated_coefficients(const CoefficientSet& coeffs,
                                       const CalibrationResult& cal);

// ------------------------------------------------- operator convergence

struct OperatorConvergenceOptions {
  double t = 1.0;
  int samples = 5;
  uint64_t seed = 1;
  double dt = 0.0;
};

struct OperatorConvergenceRow {
  double epsilon = 0.0;
  double eta = 0.0;
  double a_eta = 0.0;
  double rho = 0.0;
  double c_tail = 0.0;
  double frag_diff = 0.0;         // ||F_eps - F|| in L1_phi, columns
  double frag_bound = 0.0;        // explicit bound
  double lambda_diff = 0.0;       // |lambda_hat - lambda|
  double semigroup_diff = 0.0;    // max over samples ||(T^eps - T) g|| / ||g||
  double gronwall_bound = 0.0;    // exp(t (lambda_diff + frag_diff)) - 1
};

std::vector<OperatorConvergenceRow> operator_convergence_check(
    GridPtr grid, const CoefficientSet& coeffs, const PerronTriple& triple,
    const std::vector<CalibrationResult>& cals,
    const OperatorConvergenceOptions& opts = {});

// (rho^-1 - 1) C^2 (B + eta) kernel_0 + C^2 B int_0^eps kernel + eta (C^2 kernel_0 + 1)
double frag_difference_bound(const FragmentationKernel& kernel, double eps,
                             double b_sup, double eta, double c_tail);

// ------------------------------------------------------------ homogeneous

struct HomogeneousOptions {
  double x_lo = 0.0;              // 0: max(1, 2 A0)
  double fit_lo = 0.3;            // fractions of L for the tail fit
  double fit_hi = 0.7;
};

struct HomogeneousResult {
  Vec phi_formula;
  Vec phi_solved;
  double lambda = 0.0;
  double gamma = 0.0;
  double max_rel_err = 0.0;
  double x_lo = 0.0;
  double x_hi = 0.0;              // clipped where cells stop resolving G
  TailFit fit;
  double k_table = 0.0;
  double lambda_at_one = 0.0;     // Lambda(1), zero by construction
};

// Tail power of phi for the kernel 2 on (0,1).
double homogeneous_k(double gamma, double b_inf, double lambda);

HomogeneousResult homogeneous_closed_form(GridPtr grid,
                                          const CoefficientSet& coeffs,
                                          const PerronTriple& triple,
                                          const HomogeneousOptions& opts = {});

}  // namespace gfrag
