#include "gfrag/eigen.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gfrag/errors.hpp"
#include "gfrag/quadrature.hpp"

namespace gfrag {

namespace {

// (1 - e^-z) / z
double phi1(double z) {
  if (std::abs(z) < 1e-8) return 1.0 - 0.5 * z;
  return -std::expm1(-z) / z;
}

// (z - 1 + e^-z) / z^2
double phi2(double z) {
  if (std::abs(z) < 0.1) {
    double term = 0.5, sum = 0.0;
    for (int k = 0; k < 10; ++k) {
      sum += term;
      term *= -z / (k + 3);
    }
    return sum;
  }
  return (z + std::expm1(-z)) / (z * z);
}

struct Panel {
  double a, b;
};

constexpr int kNodes = 10;

}  // namespace

Resolvent::Resolvent(const Grid& grid, const Flow& flow, double sigma)
    : sigma_(sigma) {
  const size_t n = grid.size();
  width_ = grid.widths();
  p_.resize(n);
  q_.resize(n);
  d_.resize(n);
  f_.resize(n);
  const GaussRule& gl = gauss_legendre(kNodes);
  for (size_t i = 0; i < n; ++i) {
    const double a = grid.edge(i), b = grid.edge(i + 1), dx = grid.width(i);
    double dec;
    if (flow.constant_on(a, b, &dec)) {
      const double tau = flow.tau()(a);
      const double ds = dx / tau;
      const double z = (sigma + dec) * ds;
      p_[i] = ds * phi1(z);
      q_[i] = dx * phi1(z);
      d_[i] = dx * ds * phi2(z);
      f_[i] = std::exp(-z);
      continue;
    }
    const double sa = flow.s(a);
    auto energy = [&](double s) {
      return sigma * (s - sa) + flow.beta_between(a, flow.x_at(s));
    };
    auto tau_at = [&](double s) { return flow.tau()(flow.x_at(s)); };
    std::vector<Panel> panels;
    const auto pts = flow.split(a, b);
    for (size_t k = 0; k + 1 < pts.size(); ++k) {
      const double s0 = flow.s(pts[k]), s1 = flow.s(pts[k + 1]);
      const double de = std::abs(energy(s1) - energy(s0));
      const int sub = std::max(1, static_cast<int>(std::ceil(de / 4.0)));
      // Power-law tau is singular at the origin in s; grade toward it.
      const bool graded = pts[k] == 0.0 && !flow.tau().is_constant();
      const int m = graded ? std::max(sub, 12) : sub;
      for (int j = 0; j < m; ++j) {
        double u0 = static_cast<double>(j) / m, u1 = static_cast<double>(j + 1) / m;
        if (graded) {
          u0 = u0 * u0 * u0 * u0;
          u1 = u1 * u1 * u1 * u1;
        }
        panels.push_back({s0 + (s1 - s0) * u0, s0 + (s1 - s0) * u1});
      }
    }
    const double eb = energy(flow.s(b));
    // int_a^s exp(-(E(s) - E(y))) tau(y) dy over [lo, s] by one Gauss rule.
    auto partial = [&](double lo, double sx, double ex) {
      const double hh = sx - lo;
      double v = 0.0;
      for (int l = 0; l < kNodes; ++l) {
        const double sy = lo + hh * gl.nodes[l];
        v += gl.weights[l] * hh * std::exp(-(ex - energy(sy))) * tau_at(sy);
      }
      return v;
    };
    double p = 0.0, q = 0.0, d = 0.0;
    double carry = 0.0;   // inner integral up to the current panel start
    for (const auto& pn : panels) {
      const double h = pn.b - pn.a;
      const double ea = energy(pn.a), ez = energy(pn.b);
      // Panels far from either end add nothing to p or q at double precision.
      const bool near_left = ea < 60.0, near_right = eb - ez < 60.0;
      for (int k = 0; k < kNodes; ++k) {
        const double sx = pn.a + h * gl.nodes[k];
        const double ex = energy(sx);
        if (near_left) p += gl.weights[k] * h * std::exp(-ex);
        if (near_right) q += gl.weights[k] * h * std::exp(-(eb - ex)) * tau_at(sx);
        const double inner = std::exp(-(ex - ea)) * carry + partial(pn.a, sx, ex);
        d += gl.weights[k] * h * inner;
      }
      carry = std::exp(-(ez - ea)) * carry + partial(pn.a, pn.b, ez);
    }
    p_[i] = p;
    q_[i] = q;
    d_[i] = d;
    f_[i] = std::exp(-(sigma * (flow.s(b) - sa) + flow.beta_between(a, b)));
  }
}

Vec Resolvent::apply(const Vec& h) const {
  const size_t n = width_.size();
  Vec g(n);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    g[i] = (p_[i] * acc + d_[i] * h[i]) / width_[i];
    acc = acc * f_[i] + q_[i] * h[i];
  }
  return g;
}

Vec Resolvent::apply_transpose(const Vec& v) const {
  const size_t n = width_.size();
  Vec out(n);
  double acc = 0.0;
  for (size_t j = n; j-- > 0;) {
    const double vj = v[j] / width_[j];
    out[j] = d_[j] * vj + q_[j] * acc;
    acc = p_[j] * vj + f_[j] * acc;
  }
  return out;
}

DiscreteField transport_resolvent_apply(const CoefficientSet& coeffs, double mu,
                                        double lambda, const DiscreteField& h) {
  const Resolvent r(*h.grid, make_flow(coeffs), mu + lambda);
  return {h.grid, r.apply(h.values)};
}

namespace {

struct PowerResult {
  double rho = 0.0;
  int iterations = 0;
};

// Normalized power iteration v <- R F v; v keeps unit integral.
PowerResult power_direct(const Grid& grid, const Resolvent& r,
                         const SparseMatrix& gain, Vec& v, double tol,
                         int max_iter) {
  PowerResult out;
  v /= integral(grid, v);
  for (int it = 1; it <= max_iter; ++it) {
    Vec w = r.apply(gain * v);
    const double rho = integral(grid, w);
    if (!(rho > 0.0) || !std::isfinite(rho))
      throw Error(ErrorCode::kNoConvergence, "power iteration lost positivity");
    w /= rho;
    double diff = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      diff += std::abs(w[i] - v[i]) * grid.width(i);
    v.swap(w);
    out.rho = rho;
    out.iterations = it;
    if (diff < tol) return out;
  }
  out.iterations = -max_iter;
  return out;
}

double default_guess(const Grid& grid, const Flow& flow,
                     const SparseMatrix& gain) {
  Vec births = Vec::Zero(grid.size());
  for (int i = 0; i < gain.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(gain, i); it; ++it)
      births[it.col()] += it.value() * grid.width(i);
  double s = 0.0;
  for (size_t j = 0; j < grid.size(); ++j)
    s += births[j] / grid.width(j) - flow.decay(grid.center(j));
  return std::max(1e-3, s / grid.size());
}

}  // namespace

PerronTriple solve_perron(GridPtr grid, const Flow& flow,
                          const SparseMatrix& gain, const PerronOptions& opts) {
  const Grid& g = *grid;
  const size_t n = g.size();
  Vec v = Vec::Ones(n);
  int total_iter = 0;
  auto log_rho = [&](double sigma) {
    const Resolvent r(g, flow, sigma);
    const PowerResult pr = power_direct(g, r, gain, v, opts.inner_tol, opts.max_inner);
    if (pr.iterations < 0)
      throw Error(ErrorCode::kNoConvergence,
                  "inner power iteration did not settle at sigma " +
                      std::to_string(sigma));
    total_iter += pr.iterations;
    return std::log(pr.rho);
  };

  double s0 = std::isnan(opts.lambda_guess) ? default_guess(g, flow, gain)
                                            : opts.lambda_guess;
  double f0 = log_rho(s0);
  double step = 0.05 * std::max(1.0, std::abs(s0));
  double lo, hi, flo, fhi;
  {
    double s1 = s0, f1 = f0;
    int guard = 0;
    while (true) {
      s1 = f0 > 0.0 ? s1 + step : s1 - step;
      f1 = log_rho(s1);
      if ((f1 > 0.0) != (f0 > 0.0) || f1 == 0.0) break;
      step *= 2.0;
      if (++guard > 60)
        throw Error(ErrorCode::kNoConvergence, "cannot bracket the Perron root");
      s0 = s1;
      f0 = f1;
    }
    if (f0 > 0.0) {
      lo = s0; flo = f0; hi = s1; fhi = f1;
    } else {
      lo = s1; flo = f1; hi = s0; fhi = f0;
    }
  }
  // Illinois on log rho, decreasing in sigma.
  double sigma = 0.5 * (lo + hi);
  int side = 0;
  int outer = 0;
  for (; outer < opts.max_outer; ++outer) {
    sigma = (lo * fhi - hi * flo) / (fhi - flo);
    if (!(sigma > lo && sigma < hi)) sigma = 0.5 * (lo + hi);
    const double f = log_rho(sigma);
    if (std::abs(f) < 1e-15 || hi - lo < 1e-15 * std::max(1.0, std::abs(sigma)))
      break;
    if (f > 0.0) {
      lo = sigma; flo = f;
      if (side == 1) fhi *= 0.5;
      side = 1;
    } else {
      hi = sigma; fhi = f;
      if (side == -1) flo *= 0.5;
      side = -1;
    }
  }
  if (outer >= opts.max_outer)
    throw Error(ErrorCode::kNoConvergence,
                "eigenvalue search exceeded " + std::to_string(opts.max_outer) +
                    " outer iterations");

  const Resolvent r(g, flow, sigma);
  log_rho(sigma);
  Vec G = v / integral(g, v);

  const SparseMatrix gain_t = gain.transpose();
  Vec w = g.width_vector();
  w /= w.sum();
  int dual_iter = 0;
  for (; dual_iter < opts.max_inner; ++dual_iter) {
    Vec nw = r.apply_transpose(gain_t * w);
    const double s = nw.sum();
    if (!(s > 0.0))
      throw Error(ErrorCode::kNoConvergence, "dual iteration lost positivity");
    nw /= s;
    const double diff = (nw - w).lpNorm<1>();
    w.swap(nw);
    if (diff < opts.inner_tol) break;
  }
  if (dual_iter >= opts.max_inner)
    throw Error(ErrorCode::kNoConvergence, "dual power iteration did not settle");
  total_iter += dual_iter;
  Vec phi = w.cwiseQuotient(g.width_vector());
  phi /= bracket(g, G, phi);

  const double gmax = G.maxCoeff(), pmax = phi.maxCoeff();
  if (G.minCoeff() < -1e-13 * gmax || phi.minCoeff() < -1e-13 * pmax) {
    std::ostringstream os;
    os << "min G " << G.minCoeff() << ", min phi " << phi.minCoeff();
    throw Error(ErrorCode::kNonPositiveEigenvector, os.str());
  }

  PerronTriple out;
  out.lambda = sigma;
  out.G = {grid, G};
  out.phi = {grid, phi};
  const Vec rg = r.apply(gain * G) - G;
  out.residual_direct = weighted_norm(g, rg, phi) / weighted_norm(g, G, phi);
  const Vec wphi = phi.cwiseProduct(g.width_vector());
  const Vec rphi =
      r.apply_transpose(gain_t * wphi).cwiseQuotient(g.width_vector()) - phi;
  out.residual_dual = weighted_norm(g, rphi, G) / bracket(g, G, phi);
  out.iterations = total_iter;
  if (out.residual_direct > opts.tol || out.residual_dual > opts.tol) {
    std::ostringstream os;
    os << "residuals " << out.residual_direct << " / " << out.residual_dual
       << " above " << opts.tol;
    throw Error(ErrorCode::kNoConvergence, os.str());
  }
  return out;
}

PerronTriple solve_perron(GridPtr grid, const CoefficientSet& coeffs,
                          const PerronOptions& opts) {
  PerronOptions o = opts;
  if (std::isnan(o.lambda_guess)) {
    const double b = coeffs.rate.b_infinity() + coeffs.rate.eta();
    o.lambda_guess = std::max(1e-3, b * (coeffs.kernel.moment(0.0) - 1.0));
  }
  return solve_perron(grid, make_flow(coeffs), assemble_frag_gain(*grid, coeffs), o);
}

TruncatedEigenPair solve_truncated_brackets(GridPtr grid,
                                            const CoefficientSet& coeffs,
                                            const PerronOptions& opts) {
  const SparseMatrix gain = assemble_frag_gain(*grid, coeffs);
  PerronOptions o = opts;
  if (std::isnan(o.lambda_guess)) {
    const double b = coeffs.rate.b_infinity() + coeffs.rate.eta();
    o.lambda_guess = std::max(1e-3, b * (coeffs.kernel.moment(0.0) - 1.0));
  }
  const double len = grid->length();
  const PerronTriple minus = solve_perron(grid, make_flow(coeffs), gain, o);
  const Flow plus_flow =
      make_flow(coeffs, {{0.0, std::min(1.0, len), -1.0 / len, 0.0}});
  o.lambda_guess = minus.lambda + 1.0 / len;
  const PerronTriple plus = solve_perron(grid, plus_flow, gain, o);
  TruncatedEigenPair out;
  out.lambda_minus = minus.lambda;
  out.lambda_plus = plus.lambda;
  out.G_minus = minus.G;
  out.G_plus = plus.G;
  out.phi_minus = minus.phi;
  out.phi_plus = plus.phi;
  return out;
}

BracketReport check_brackets(const TruncatedEigenPair& pair,
                             const PerronTriple& reference,
                             const CoefficientSet& coeffs) {
  const Grid& small = *pair.G_minus.grid;
  const Grid& big = *reference.G.grid;
  if (!small.is_prefix_of(big))
    throw Error(ErrorCode::kBadLayout,
                "reference grid must extend the truncated grid");
  const size_t ns = small.size();
  const SparseMatrix gain = assemble_frag_gain(big, coeffs);
  Vec beyond = reference.G.values;
  beyond.head(ns).setZero();
  const Vec cross = (gain * beyond).head(ns);
  const Vec g_ref = reference.G.values.head(ns);
  const Vec on_unit = indicator(small, 0.0, 1.0);

  BracketReport rep;
  rep.length = small.length();
  rep.lambda_ref = reference.lambda;
  rep.lambda_minus = pair.lambda_minus;
  rep.lambda_plus = pair.lambda_plus;
  rep.direct_minus = pair.lambda_minus - reference.lambda;
  rep.direct_plus = pair.lambda_plus - reference.lambda;

  const Vec& pm = pair.phi_minus.values;
  rep.identity_minus = -bracket(small, cross, pm) / bracket(small, g_ref, pm);
  const Vec& pp = pair.phi_plus.values;
  const double boost =
      bracket(small, g_ref.cwiseProduct(on_unit), pp) / small.length();
  rep.identity_plus =
      (boost - bracket(small, cross, pp)) / bracket(small, g_ref, pp);

  const double slack = 1e-10 + 0.1 * std::abs(rep.identity_minus);
  rep.minus_ok = rep.identity_minus < 0.0 &&
                 std::abs(rep.direct_minus - rep.identity_minus) <= slack;
  rep.plus_ok = rep.direct_plus > 0.0 && rep.identity_plus > 0.0;
  return rep;
}

namespace {

// int f(z) kernel(dz)
double kernel_integral(const FragmentationKernel& k,
                       const std::function<double(double)>& f) {
  double s = 0.0;
  for (const auto& a : k.atoms()) s += a.w * f(a.z);
  for (const auto& p : k.pieces()) {
    // Geometric panels toward the lower end resolve z^nu singularities.
    const int panels = 12;
    for (int j = 0; j < panels; ++j) {
      const double u0 = std::pow(static_cast<double>(j) / panels, 3.0);
      const double u1 = std::pow(static_cast<double>(j + 1) / panels, 3.0);
      const double a = p.z_lo + (p.z_hi - p.z_lo) * u0;
      const double b = p.z_lo + (p.z_hi - p.z_lo) * u1;
      s += gauss_integrate(
          [&](double z) { return p.p * std::pow(z, p.nu) * f(z); }, a, b, 16);
    }
  }
  for (const auto& p : k.log_pieces()) {
    const int panels = 24;
    for (int j = 0; j < panels; ++j) {
      const double u0 = std::pow(static_cast<double>(j) / panels, 4.0);
      const double u1 = std::pow(static_cast<double>(j + 1) / panels, 4.0);
      const double a = p.z_lo + (p.z_hi - p.z_lo) * u0;
      const double b = p.z_lo + (p.z_hi - p.z_lo) * u1;
      s += gauss_integrate(
          [&](double z) {
            const double l = std::log(z);
            return p.p / (z * l * l) * f(z);
          },
          a, b, 16);
    }
  }
  return s;
}

double interpolate_centers(const Grid& grid, const Vec& w, double x) {
  const auto& c = grid.centers();
  if (x <= c.front()) return w[0];
  if (x >= c.back()) return w[w.size() - 1];
  const size_t k = static_cast<size_t>(
      std::upper_bound(c.begin(), c.end(), x) - c.begin() - 1);
  const double t = (x - c[k]) / (c[k + 1] - c[k]);
  return (1.0 - t) * w[k] + t * w[k + 1];
}

}  // namespace

std::vector<DefectSample> supersolution_defect(const Grid& grid,
                                               const CoefficientSet& coeffs,
                                               const TruncatedEigenPair& pair,
                                               const Vec& w, Side side,
                                               double a, double l) {
  const double lambda =
      side == Side::kPlus ? pair.lambda_plus : pair.lambda_minus;
  std::vector<DefectSample> out;
  const auto& c = grid.centers();
  for (size_t i = 1; i + 1 < grid.size(); ++i) {
    const double x = c[i];
    if (x <= a || x >= l) continue;
    const double dw = (w[i + 1] - w[i - 1]) / (c[i + 1] - c[i - 1]);
    const double b = coeffs.rate(x);
    const double gain = kernel_integral(
        coeffs.kernel,
        [&](double z) { return interpolate_centers(grid, w, z * x); });
    out.push_back({x, -coeffs.tau(x) * dw + (lambda + b) * w[i] - b * gain});
  }
  return out;
}

std::vector<DefectSample> supersolution_defect(
    const Grid& grid, const CoefficientSet& coeffs, double lambda,
    const std::function<double(double)>& w,
    const std::function<double(double)>& dw, double a, double l) {
  std::vector<DefectSample> out;
  for (double x : grid.centers()) {
    if (x <= a || x >= l) continue;
    const double b = coeffs.rate(x);
    const double gain =
        kernel_integral(coeffs.kernel, [&](double z) { return w(z * x); });
    out.push_back({x, -coeffs.tau(x) * dw(x) + (lambda + b) * w(x) - b * gain});
  }
  return out;
}

TailFit fit_power_tail(const Grid& grid, const Vec& phi, double x_lo,
                       double x_hi, double a0) {
  if (!(x_lo > 0.0) || !(x_hi > x_lo))
    throw Error(ErrorCode::kDegenerateWindow, "window must satisfy 0 < lo < hi");
  if (a0 > 0.0 && x_lo < 2.0 * a0)
    throw Error(ErrorCode::kDegenerateWindow, "window must start beyond 2 A0");
  std::vector<double> lx, ly, xs, ps;
  for (size_t i = 0; i < grid.size(); ++i) {
    const double x = grid.center(i);
    if (x < x_lo || x > x_hi) continue;
    if (!(phi[i] > 0.0))
      throw Error(ErrorCode::kDegenerateWindow, "phi not positive in window");
    lx.push_back(std::log(x));
    ly.push_back(std::log(phi[i]));
    xs.push_back(x);
    ps.push_back(phi[i]);
  }
  if (lx.size() < 3)
    throw Error(ErrorCode::kDegenerateWindow, "fewer than 3 cells in window");
  const double m = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= m;
  my /= m;
  double sxy = 0.0, sxx = 0.0;
  for (size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::kDegenerateWindow, "flat window");
  TailFit fit;
  fit.k_hat = sxy / sxx;
  fit.c_hat = std::exp(my - fit.k_hat * mx);
  fit.x_lo = x_lo;
  fit.x_hi = x_hi;
  fit.cells = static_cast<int>(lx.size());
  double mean = 0.0;
  std::vector<double> ratio(xs.size());
  for (size_t k = 0; k < xs.size(); ++k) {
    ratio[k] = ps[k] / (1.0 + std::pow(xs[k], fit.k_hat));
    mean += ratio[k];
  }
  mean /= m;
  for (double r : ratio) fit.residual = std::max(fit.residual, std::abs(r / mean - 1.0));
  return fit;
}

}  // namespace gfrag
