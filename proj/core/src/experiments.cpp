#include "gfrag/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <exception>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "gfrag/errors.hpp"
#include "gfrag/quadrature.hpp"

namespace gfrag {

void parallel_for(size_t n, int jobs, const std::function<void(size_t)>& fn) {
  const size_t workers = std::min<size_t>(n, std::max(1, jobs));
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

// Least squares line y = c + s t; returns s and max |residual|.
std::pair<double, double> fit_line(const std::vector<double>& t,
                                   const std::vector<double>& y) {
  const size_t n = t.size();
  double mt = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (t[i] - mt) * (y[i] - my);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  const double s = sxx > 0.0 ? sxy / sxx : 0.0;
  double res = 0.0;
  for (size_t i = 0; i < n; ++i)
    res = std::max(res, std::abs(y[i] - my - s * (t[i] - mt)));
  return {s, res};
}

double reach_after(const Flow& flow, double x, double t) {
  return flow.x_at(flow.s(x) + t);
}

}  // namespace

// ---------------------------------------------------------------- slowconv

double select_x(const PerronTriple& triple, double eps) {
  const Grid& g = *triple.G.grid;
  double acc = 0.0;
  for (size_t i = 0; i < g.size(); ++i) {
    acc += triple.G.values[i] * triple.phi.values[i] * g.width(i);
    if (acc >= 1.0 - eps) return g.edge(i + 1);
  }
  return g.length();
}

SlowConvergenceReport slow_convergence_scan(GridPtr grid,
                                            const CoefficientSet& coeffs,
                                            const PerronTriple& triple,
                                            const SlowConvergenceOptions& opts) {
  const double z0 = coeffs.kernel.infimum_support();
  if (!(z0 > 0.0))
    throw Error(ErrorCode::kConfig, "slow convergence scan needs z0 > 0");
  const Grid& g = *grid;
  const Vec& phi = triple.phi.values;
  const Vec& G = triple.G.values;

  SlowConvergenceReport rep;
  rep.t = opts.t;
  rep.epsilon = opts.epsilon;
  rep.x_cut = select_x(triple, opts.epsilon);
  size_t below = 0;   // cells [0, below) make up [0, X]
  while (below < g.size() && g.edge(below + 1) <= rep.x_cut) ++below;
  for (size_t i = 0; i < below; ++i) rep.g_mass_below_x += G[i] * phi[i] * g.width(i);

  std::vector<double> as = opts.a_values;
  if (as.empty())
    for (int m : opts.ladder) as.push_back(rep.x_cut * std::pow(1.0 / z0, m));
  const Flow flow = make_flow(coeffs);
  double a_max = 0.0;
  for (double a : as) a_max = std::max(a_max, a);
  const double reach = reach_after(flow, a_max + 1.0, opts.t);
  if (reach > g.length()) {
    std::ostringstream os;
    os << "need L >= " << reach << " for a = " << a_max << ", have "
       << g.length();
    throw Error(ErrorCode::kDomainTooSmall, os.str());
  }

  const double dt = opts.dt > 0.0
                        ? opts.dt
                        : TransportPropagator(grid, flow, triple.lambda).min_cell_time();
  rep.dt = dt;
  const Evolver ev(grid, coeffs, triple, dt);
  rep.b = weighted_column_norm(g, ev.gain(), phi, g.locate(reach) + 1);
  rep.closed_form_b = coeffs.kernel.moment(0.0) * coeffs.rate.sup_norm();

  rep.rows.resize(as.size());
  parallel_for(as.size(), opts.jobs, [&](size_t k) {
    SlowConvergenceRow& row = rep.rows[k];
    row.a = as[k];
    const Vec v = ev.advance(make_g_a(g, phi, row.a), opts.t);
    row.norm = weighted_norm(g, v - G, phi);
    double above = 0.0;
    for (size_t i = 0; i < g.size(); ++i) {
      const double m = v[i] * phi[i] * g.width(i);
      if (i < below) row.mass_below_x += m; else above += m;
    }
    row.split_bound = rep.g_mass_below_x - row.mass_below_x + above -
                      (1.0 - rep.g_mass_below_x);
    row.generations = static_cast<int>(
        std::ceil(std::log(row.a / rep.x_cut) / std::log(1.0 / z0) - 1e-9));
    row.series_tail =
        row.generations <= 0 ? 1.0 : exponential_tail(rep.b * opts.t, row.generations - 1);
    row.series_bound = 2.0 * (rep.g_mass_below_x - row.series_tail);
  });
  return rep;
}

// --------------------------------------------------------------------- gap

double gap_lower_bound(double b, double r) {
  // 3 2^-r as 2^(log2 3 - r) so that r = log2 3 gives exactly 0.
  return 2.0 * b * std::max(0.0, 1.0 - std::exp2(std::log2(3.0) - r));
}

double gap_upper_bound(double b, double r) {
  return 2.0 * b * std::min(std::exp(1.0) * std::log(2.0) * r, 1.0);
}

namespace {

GapRow gap_for_length(const CoefficientSet& coeffs, double length,
                      const GapOptions& opts) {
  GapRow row;
  row.length = length;
  const int cells = static_cast<int>(std::lround(length / opts.cell_width));
  row.cells = cells;
  if (opts.spectrum && cells > opts.max_dense) {
    std::ostringstream os;
    os << cells << " cells exceed the dense limit " << opts.max_dense;
    throw Error(ErrorCode::kSpectrumFailure, os.str());
  }
  const GridPtr grid = build_grid(length, cells, {Layout::kUniform});
  const Grid& g = *grid;
  const PerronTriple triple = solve_perron(grid, coeffs);
  row.lambda = triple.lambda;
  const Vec& phi = triple.phi.values;
  const Vec& G = triple.G.values;
  const Vec w = opts.r == 0.0 ? phi : psi_weight(g, opts.r).values;

  const Flow flow = make_flow(coeffs);
  const double dt = TransportPropagator(grid, flow, triple.lambda).min_cell_time();
  const Evolver ev(grid, coeffs, triple, dt);
  const int m = std::max(2, opts.samples);
  for (int k = 0; k < m; ++k)
    row.times.push_back(opts.t_lo + (opts.t_hi - opts.t_lo) * k / (m - 1));

  // Trajectory of ||T_t v - P v||_w / ||v||_w at the sample times.
  auto decay = [&](const Vec& v0) {
    std::vector<double> out;
    const double n0 = weighted_norm(g, v0, w);
    const Vec pv = bracket(g, v0, phi) * G;
    Vec v = ev.advance(v0, row.times[0]);
    for (int k = 0; k < m; ++k) {
      if (k > 0) v = ev.advance(v, row.times[k] - row.times[k - 1]);
      out.push_back(weighted_norm(g, v - pv, w) / n0);
    }
    return out;
  };

  // Operator norm on weighted L1: worst column.
  row.operator_norms.assign(m, 0.0);
  for (size_t j = 0; j < g.size(); ++j) {
    if (!(w[j] > 0.0) || !(phi[j] > 1e-300)) continue;
    Vec e = Vec::Zero(g.size());
    e[j] = 1.0;
    const auto d = decay(e);
    for (int k = 0; k < m; ++k)
      row.operator_norms[k] = std::max(row.operator_norms[k], d[k]);
  }
  std::vector<double> logs;
  for (double v : row.operator_norms) logs.push_back(std::log(v));
  auto [slope, res] = fit_line(row.times, logs);
  row.matrix_gap = -slope;
  row.matrix_fit_residual = res;

  // Slowest g_a over a in {0, 1, 2, 4, ...}.
  row.fit_gap = kInf;
  for (double a = 0.0; a + 1.0 <= length; a = a == 0.0 ? 1.0 : 2.0 * a) {
    const auto d = decay(make_g_a(g, phi, a));
    std::vector<double> l;
    for (double v : d) l.push_back(std::log(v));
    auto [s, r] = fit_line(row.times, l);
    if (-s < row.fit_gap) {
      row.fit_gap = -s;
      row.fit_worst_a = a;
      row.fit_residual = r;
    }
  }

  if (opts.spectrum) {
    Eigen::MatrixXd a = Eigen::MatrixXd(assemble_transport(g, coeffs, triple.lambda));
    a += Eigen::MatrixXd(ev.gain());
    Eigen::EigenSolver<Eigen::MatrixXd> es(a, false);
    if (es.info() != Eigen::Success)
      throw Error(ErrorCode::kSpectrumFailure, "dense eigensolve failed");
    std::vector<double> re;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
      re.push_back(es.eigenvalues()[i].real());
    std::sort(re.begin(), re.end(), std::greater<double>());
    row.leading_eigenvalue = re[0];
    row.spectral_gap = re.size() > 1 ? re[0] - re[1] : 0.0;
  }
  return row;
}

}  // namespace

GapReport gap_estimate(const CoefficientSet& coeffs, const GapOptions& opts) {
  GapReport rep;
  rep.r = opts.r;
  rep.weight = opts.r == 0.0 ? "phi" : "psi";
  rep.b_inf = coeffs.rate.b_infinity();
  rep.lower = gap_lower_bound(rep.b_inf, opts.r);
  rep.upper = gap_upper_bound(rep.b_inf, opts.r);
  rep.rows.resize(opts.lengths.size());
  parallel_for(opts.lengths.size(), opts.jobs, [&](size_t i) {
    rep.rows[i] = gap_for_length(coeffs, opts.lengths[i], opts);
  });
  return rep;
}

// ------------------------------------------------------------- calibration

namespace {

// Bracketed root of f on [lo, hi] to width tol.
double bracketed_root(const std::function<double(double)>& f, double lo,
                      double hi, double flo, double fhi, double tol) {
  boost::uintmax_t iters = 200;
  auto done = [tol](double a, double b) { return std::abs(b - a) <= tol; };
  const auto r =
      boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, done, iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace

CalibrationResult calibrate_truncation(GridPtr grid, const CoefficientSet& coeffs,
                                       double eps, const CalibrationOptions& opts) {
  CalibrationResult res;
  res.epsilon = eps;
  const double b_inf = coeffs.rate.b_infinity();
  const double a0 = coeffs.rate.a0();
  const FragmentationKernel trunc = truncate_kernel(coeffs.kernel, eps);
  res.rho = truncation_mass(coeffs.kernel, eps);

  auto perron = [&](const CoefficientSet& c, double guess) {
    PerronOptions o = opts.perron;
    o.lambda_guess = guess;
    try {
      return solve_perron(grid, c, o).lambda;
    } catch (const Error& e) {
      throw Error(ErrorCode::kEigenFailure, e.what());
    }
  };
  res.lambda = perron(coeffs, NAN);
  res.k = solve_k(coeffs.kernel, res.lambda, b_inf);
  res.kernel_k = trunc.moment(res.k);
  const double c = res.kernel_k - 1.0;
  if (!(c > 0.0))
    throw Error(ErrorCode::kNoRoot, "truncated moment k does not exceed 1");

  auto lambda_at = [&](double eta, double a) {
    const CoefficientSet m{coeffs.tau, coeffs.rate.with_modifier(eta, a), trunc};
    return perron(m, res.lambda_eps > 0.0 ? res.lambda_eps : res.lambda);
  };
  res.lambda_eps = lambda_at(0.0, a0);

  auto tilde = [&](double eta, double lam_a0) {
    return res.lambda_eps + eps / (1.0 + std::abs(eta)) * (lam_a0 - res.lambda_eps);
  };
  auto outer = [&](double eta) {
    CalibrationTrace tr;
    tr.eta = eta;
    tr.lambda_tilde = tilde(eta, lambda_at(eta, a0));
    tr.target = c * (b_inf + eta);
    res.trace.push_back(tr);
    return tr.lambda_tilde - tr.target;
  };

  // The outer function is positive near -B_inf and negative for large eta.
  const double floor_eta = -b_inf * (1.0 - 1e-6);
  const double eta_max =
      (res.lambda_eps + eps * std::max(1.0, coeffs.rate.sup_norm())) / c - b_inf + 1.0;
  double lo = std::max(floor_eta, -0.1 * b_inf), hi = std::min(eta_max, 0.1 * b_inf);
  double flo = outer(lo), fhi = outer(hi);
  for (int guard = 0; flo < 0.0; ++guard) {
    if (lo <= floor_eta || guard > 60)
      throw Error(ErrorCode::kNoRoot, "outer function negative at eta -> -B_inf");
    hi = lo;
    fhi = flo;
    lo = std::max(floor_eta, lo - 0.5 * (lo - floor_eta) - 1e-3 * b_inf);
    flo = outer(lo);
  }
  for (int guard = 0; fhi > 0.0; ++guard) {
    if (hi >= eta_max || guard > 60)
      throw Error(ErrorCode::kNoRoot, "outer function positive at eta_max");
    lo = hi;
    flo = fhi;
    hi = std::min(eta_max, 2.0 * hi + b_inf);
    fhi = outer(hi);
  }
  res.eta = (flo == 0.0) ? lo
            : (fhi == 0.0) ? hi
                           : bracketed_root(outer, lo, hi, flo, fhi, opts.eta_tol);

  const double lam_a0 = lambda_at(res.eta, a0);
  res.lambda_tilde = tilde(res.eta, lam_a0);
  const double a_max = opts.a_max_factor * a0;
  auto inner = [&](double a) { return lambda_at(res.eta, a) - res.lambda_tilde; };
  const double fa0 = lam_a0 - res.lambda_tilde;
  const double fmax = inner(a_max);
  if (fa0 == 0.0 || fmax == 0.0 || (fa0 > 0.0) == (fmax > 0.0)) {
    // lambda does not move with A at this eta; any A solves the inner problem.
    res.degenerate = true;
    res.a_eta = fa0 == 0.0 ? a0 : fmax == 0.0 ? a_max : a0;
  } else {
    res.a_eta = bracketed_root(inner, a0, a_max, fa0, fmax, opts.a_tol);
  }
  res.lambda_hat = lambda_at(res.eta, res.a_eta);
  res.residual = std::abs(res.kernel_k - 1.0 - res.lambda_hat / (b_inf + res.eta));
  return res;
}

CoefficientSet calibrated_coefficients(const CoefficientSet& coeffs,
                                       const CalibrationResult& cal) {
  return {coeffs.tau, coeffs.rate.with_modifier(cal.eta, cal.a_eta),
          truncate_kernel(coeffs.kernel, cal.epsilon)};
}

// ------------------------------------------------- operator convergence

namespace {

// kernel mass on (0, eps)
double mass_below(const FragmentationKernel& k, double eps) {
  double s = k.density_moment(0.0, eps, 0.0);
  for (const auto& a : k.atoms())
    if (a.z < eps) s += a.w;
  return s;
}

}  // namespace

double frag_difference_bound(const FragmentationKernel& kernel, double eps,
                             double b_sup, double eta, double c_tail) {
  const double rho = truncation_mass(kernel, eps);
  const double c2 = c_tail * c_tail;
  const double k0 = kernel.moment(0.0);
  eta = std::abs(eta);
  return (1.0 / rho - 1.0) * c2 * (b_sup + eta) * k0 +
         c2 * b_sup * mass_below(kernel, eps) + eta * (c2 * k0 + 1.0);
}

std::vector<OperatorConvergenceRow> operator_convergence_check(
    GridPtr grid, const CoefficientSet& coeffs, const PerronTriple& triple,
    const std::vector<CalibrationResult>& cals,
    const OperatorConvergenceOptions& opts) {
  const Grid& g = *grid;
  const Vec& phi = triple.phi.values;
  // The outflow layer at L, where phi drops to 0, is excluded from norms.
  const double x_window = 0.7 * g.length();
  const size_t cols = g.locate(x_window) + 1;
  const double k = solve_k(coeffs.kernel, triple.lambda, coeffs.rate.b_infinity());
  const double c_tail = estimate_tail_constant(g, phi, k, x_window);
  const SparseMatrix gain = assemble_frag_gain(g, coeffs);
  const Flow flow = make_flow(coeffs);
  const double dt = opts.dt > 0.0
                        ? opts.dt
                        : TransportPropagator(grid, flow, triple.lambda).min_cell_time();
  const Evolver ev(grid, coeffs, triple, dt);

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Vec> samples;
  const double support = std::min(0.3 * g.length(), x_window);
  for (int s = 0; s < opts.samples; ++s) {
    Vec v = Vec::Zero(g.size());
    for (size_t i = 0; i < g.size() && g.center(i) < support; ++i) v[i] = unif(rng);
    samples.push_back(v / weighted_norm(g, v, phi));
  }
  std::vector<Vec> reference;
  for (const Vec& v : samples) reference.push_back(ev.advance(v, opts.t));

  std::vector<OperatorConvergenceRow> out;
  for (const auto& cal : cals) {
    OperatorConvergenceRow row;
    row.epsilon = cal.epsilon;
    row.eta = cal.eta;
    row.a_eta = cal.a_eta;
    row.rho = cal.rho;
    row.c_tail = c_tail;
    const CoefficientSet hat = calibrated_coefficients(coeffs, cal);
    SparseMatrix diff = assemble_frag_gain(g, hat) - gain;
    for (size_t i = 0; i < g.size(); ++i)
      if (g.center(i) >= cal.a_eta) diff.coeffRef(i, i) -= cal.eta;
    row.frag_diff = weighted_column_norm(g, diff, phi, cols);
    row.frag_bound = frag_difference_bound(coeffs.kernel, cal.epsilon,
                                           coeffs.rate.sup_norm(), cal.eta, c_tail);
    const PerronTriple t_hat = solve_perron(grid, hat);
    row.lambda_diff = std::abs(t_hat.lambda - triple.lambda);
    const Evolver ev_hat(grid, hat, t_hat, dt);
    for (size_t s = 0; s < samples.size(); ++s) {
      const Vec v = ev_hat.advance(samples[s], opts.t);
      row.semigroup_diff =
          std::max(row.semigroup_diff, weighted_norm(g, v - reference[s], phi));
    }
    row.gronwall_bound = std::expm1(opts.t * (row.lambda_diff + row.frag_diff));
    out.push_back(row);
  }
  return out;
}

// ------------------------------------------------------------ homogeneous

double homogeneous_k(double gamma, double b_inf, double lambda) {
  if (gamma > 0.0) return 1.0;
  if (gamma < 0.0) return gamma - 1.0;
  return (b_inf - lambda) / (b_inf + lambda);
}

namespace {

bool is_uniform_kernel(const FragmentationKernel& k) {
  if (!k.atoms().empty() || !k.log_pieces().empty() || k.pieces().size() != 1)
    return false;
  const PowerPiece& p = k.pieces()[0];
  return p.nu == 0.0 && std::abs(p.p - 2.0) < 1e-12 && p.z_lo == 0.0 &&
         p.z_hi == 1.0;
}

double interpolate(const Grid& g, const Vec& v, double x) {
  const auto& c = g.centers();
  if (x <= c.front()) return v[0];
  if (x >= c.back()) return v[v.size() - 1];
  const size_t k = std::upper_bound(c.begin(), c.end(), x) - c.begin() - 1;
  const double th = (x - c[k]) / (c[k + 1] - c[k]);
  return (1.0 - th) * v[k] + th * v[k + 1];
}

}  // namespace

HomogeneousResult homogeneous_closed_form(GridPtr grid,
                                          const CoefficientSet& coeffs,
                                          const PerronTriple& triple,
                                          const HomogeneousOptions& opts) {
  if (!is_uniform_kernel(coeffs.kernel))
    throw Error(ErrorCode::kWrongKernel,
                "closed form needs the kernel 2 on (0,1), got " +
                    coeffs.kernel.describe());
  const Grid& g = *grid;
  const size_t n = g.size();
  const Vec& G = triple.G.values;
  const Vec& phi = triple.phi.values;
  HomogeneousResult res;
  res.lambda = triple.lambda;
  res.phi_solved = phi;
  res.gamma = coeffs.rate.kind() == FragmentationRate::Kind::kPowerLaw
                  ? coeffs.rate.gamma()
                  : 0.0;
  res.lambda_at_one = capital_lambda(coeffs, triple.lambda, 1.0);

  const std::vector<double> breaks = coeffs.rate.breakpoints();
  auto b_over_y = [&](double a, double b) {
    std::vector<double> cuts = {a, b};
    for (double x : breaks)
      if (x > a && x < b) cuts.push_back(x);
    std::sort(cuts.begin(), cuts.end());
    double s = 0.0;
    for (size_t k = 0; k + 1 < cuts.size(); ++k)
      s += gauss_integrate([&](double y) { return coeffs.rate(y) / y; }, cuts[k],
                           cuts[k + 1], 12);
    return s;
  };
  // tail[i] = int_{x_i}^L B(y)/y G(y) dy with x_i the center of cell i.
  Vec tail(n);
  double acc = 0.0;
  for (size_t i = n; i-- > 0;) {
    tail[i] = acc + G[i] * b_over_y(g.center(i), g.edge(i + 1));
    acc += G[i] * b_over_y(g.edge(i), g.edge(i + 1));
  }
  double phi_01 = 0.0;
  for (size_t i = 0; i < n && g.edge(i) < 1.0; ++i)
    phi_01 += phi[i] * (std::min(1.0, g.edge(i + 1)) - g.edge(i));
  const double g1 = interpolate(g, G, 1.0);
  const double scale = phi_01 * 2.0 / (coeffs.tau(1.0) * g1);

  res.phi_formula.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const double lam = capital_lambda(coeffs, triple.lambda, g.center(i));
    res.phi_formula[i] =
        tail[i] > 0.0 ? scale * std::exp(lam + std::log(tail[i])) : 0.0;
  }

  res.x_lo = opts.x_lo > 0.0 ? opts.x_lo : std::max(1.0, 2.0 * coeffs.rate.a0());
  res.x_hi = opts.fit_hi * g.length();
  // The formula needs G pointwise: stop where a cell spans more than one
  // e-fold of G or where G has underflowed.
  for (size_t i = 0; i < n; ++i)
    if (coeffs.rate(g.center(i)) * g.width(i) / coeffs.tau(g.center(i)) > 1.0 ||
        !(tail[i] > 1e-250) || !std::isfinite(res.phi_formula[i])) {
      res.x_hi = std::min(res.x_hi, g.edge(i));
      break;
    }
  for (size_t i = 0; i < n; ++i) {
    const double x = g.center(i);
    if (x < res.x_lo || x > res.x_hi) continue;
    res.max_rel_err =
        std::max(res.max_rel_err, std::abs(res.phi_formula[i] - phi[i]) / phi[i]);
  }
  res.fit = fit_power_tail(g, phi, opts.fit_lo * g.length(),
                           opts.fit_hi * g.length(), coeffs.rate.a0());
  res.k_table = homogeneous_k(res.gamma, coeffs.rate.b_infinity(), triple.lambda);
  return res;
}

}  // namespace gfrag
