#include "gfrag/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gfrag/errors.hpp"
#include "gfrag/quadrature.hpp"

namespace gfrag {

TransportPropagator::TransportPropagator(GridPtr grid, Flow flow, double lambda)
    : grid_(std::move(grid)), flow_(std::move(flow)), lambda_(lambda) {
  s_edges_.resize(grid_->size() + 1);
  for (size_t i = 0; i <= grid_->size(); ++i) s_edges_[i] = flow_.s(grid_->edge(i));
}

double TransportPropagator::min_cell_time() const {
  double m = kInf;
  for (size_t i = 0; i + 1 < s_edges_.size(); ++i)
    m = std::min(m, s_edges_[i + 1] - s_edges_[i]);
  return m;
}

const SparseMatrix& TransportPropagator::remap(double t) const {
  if (t < 0.0) throw Error(ErrorCode::kFlowFailure, "negative time");
  std::lock_guard<std::mutex> lock(mu_);
  auto it = cache_.find(t);
  if (it == cache_.end())
    it = cache_.emplace(t, std::make_unique<SparseMatrix>(build(t))).first;
  return *it->second;
}

SparseMatrix TransportPropagator::build(double t) const {
  const Grid& g = *grid_;
  const size_t n = g.size();
  const auto& se = s_edges_;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * n);
  size_t j = 0;
  const double decay_lambda = std::exp(-lambda_ * t);
  for (size_t i = 0; i < n; ++i) {
    const double hi = se[i + 1] - t;
    if (hi <= 0.0) continue;
    const double lo = std::max(0.0, se[i] - t);
    while (j < n && se[j + 1] <= lo) ++j;
    for (size_t k = j; k < n && se[k] < hi; ++k) {
      const double u0 = std::max(lo, se[k]), u1 = std::min(hi, se[k + 1]);
      if (u1 - u0 <= 1e-12 * (se[k + 1] - se[k])) continue;
      const double x0 = flow_.x_at(u0), x1 = flow_.x_at(u1 + t);
      double dec;
      double number;
      if (flow_.constant_on(x0, x1, &dec)) {
        number = flow_.tau()(x0) * (u1 - u0) * std::exp(-(lambda_ + dec) * t);
      } else {
        // Split where either end of the path crosses a decay break.
        std::vector<double> cuts = {u0, u1};
        for (double b : flow_.breaks()) {
          const double sb = flow_.s(b);
          if (sb > u0 && sb < u1) cuts.push_back(sb);
          if (sb - t > u0 && sb - t < u1) cuts.push_back(sb - t);
        }
        std::sort(cuts.begin(), cuts.end());
        const bool graded = u0 == 0.0 && !flow_.tau().is_constant();
        auto integrand = [&](double u) {
          const double xa = flow_.x_at(u), xb = flow_.x_at(u + t);
          return flow_.tau()(xa) * std::exp(-flow_.beta_between(xa, xb));
        };
        number = 0.0;
        for (size_t c = 0; c + 1 < cuts.size(); ++c) {
          const double a = cuts[c], b = cuts[c + 1];
          if (b <= a) continue;
          const int panels = graded && c == 0 ? 12 : 1;
          for (int p = 0; p < panels; ++p) {
            double v0 = static_cast<double>(p) / panels;
            double v1 = static_cast<double>(p + 1) / panels;
            if (panels > 1) {
              v0 = std::pow(v0, 4.0);
              v1 = std::pow(v1, 4.0);
            }
            number += gauss_integrate(integrand, a + (b - a) * v0,
                                      a + (b - a) * v1, 8);
          }
        }
        number *= decay_lambda;
      }
      trip.emplace_back(i, k, number / g.width(i));
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

DiscreteField transport_apply(const CoefficientSet& coeffs, double lambda,
                              double t, const DiscreteField& g) {
  const TransportPropagator prop(g.grid, make_flow(coeffs), lambda);
  return {g.grid, prop.apply(t, g.values)};
}

Evolver::Evolver(GridPtr grid, const CoefficientSet& coeffs,
                 const PerronTriple& triple, double dt)
    : grid_(std::move(grid)),
      gain_(assemble_frag_gain(*grid_, coeffs)),
      transport_(std::make_unique<TransportPropagator>(grid_, make_flow(coeffs),
                                                       triple.lambda)),
      phi_(triple.phi.values),
      G_(triple.G.values),
      dt_(dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kCFLViolation, "dt must be positive");
  const double limit = transport_->min_cell_time();
  if (dt > limit * (1.0 + 1e-9)) {
    std::ostringstream os;
    os << "dt " << dt << " exceeds smallest cell travel time " << limit;
    throw Error(ErrorCode::kCFLViolation, os.str());
  }
}

Vec Evolver::gain_exp(const Vec& v, double h) const {
  Vec sum = v;
  Vec term = v;
  const double scale = v.lpNorm<1>();
  for (int k = 1; k < 80; ++k) {
    term = (h / k) * (gain_ * term);
    sum += term;
    if (term.lpNorm<1>() <= 1e-17 * scale) break;
  }
  return sum;
}

Vec Evolver::step(const Vec& g, double h) const {
  return gain_exp(transport_->apply(h, gain_exp(g, 0.5 * h)), 0.5 * h);
}

void Evolver::check_sign(const Vec& g) const {
  Eigen::Index at = 0;
  const double mn = g.minCoeff(&at);
  const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
  if (mn < -1e-12 * scale) {
    std::ostringstream os;
    os << "value " << mn << " at x = " << grid_->center(at);
    throw Error(ErrorCode::kNegativeDensity, os.str());
  }
}

Vec Evolver::advance(const Vec& g, double t) const {
  const long whole = static_cast<long>(std::floor(t / dt_ + 1e-9));
  const double rest = t - whole * dt_;
  Vec v = g;
  for (long k = 0; k < whole; ++k) v = step(v, dt_);
  if (rest > 1e-12 * dt_) v = step(v, rest);
  return v;
}

Trajectory Evolver::run(const Vec& g0, double t_end,
                        const EvolveOptions& opts) const {
  Trajectory tr;
  tr.grid = grid_;
  const Grid& g = *grid_;
  auto record = [&](double t, const Vec& v) {
    TrajectoryPoint p;
    p.t = t;
    p.bracket = bracket(g, v, phi_);
    p.norm = weighted_norm(g, v, phi_);
    p.min_value = v.minCoeff();
    p.distance = weighted_norm(g, v - p.bracket * G_, phi_);
    tr.points.push_back(p);
    if (opts.keep_fields) tr.fields.push_back(v);
  };
  Vec v = g0;
  record(0.0, v);
  const long whole = static_cast<long>(std::floor(t_end / dt_ + 1e-9));
  const double rest = t_end - whole * dt_;
  const int every = std::max(1, opts.record_every);
  for (long k = 1; k <= whole; ++k) {
    v = step(v, dt_);
    check_sign(v);
    if (k % every == 0 || (k == whole && rest <= 1e-12 * dt_))
      record(k * dt_, v);
  }
  if (rest > 1e-12 * dt_) {
    v = step(v, rest);
    check_sign(v);
    record(t_end, v);
  }
  tr.final_field = v;
  return tr;
}

Trajectory evolve(GridPtr grid, const CoefficientSet& coeffs,
                  const PerronTriple& triple, const Vec& g0, double t_end,
                  double dt, const EvolveOptions& opts) {
  const Evolver ev(std::move(grid), coeffs, triple, dt);
  return ev.run(g0, t_end, opts);
}

Vec project_P(const PerronTriple& triple, const Vec& g) {
  const Grid& grid = *triple.G.grid;
  return bracket(grid, g, triple.phi.values) * triple.G.values;
}

Vec make_g_a(const Grid& grid, const Vec& phi, double a) {
  if (a + 1.0 > grid.length())
    throw Error(ErrorCode::kDomainTooSmall, "g_a support leaves the grid");
  Vec v = indicator(grid, a, a + 1.0).cwiseQuotient(phi);
  return v / bracket(grid, v, phi);
}

FragNormBound frag_norm_bound(const CoefficientSet& coeffs, double c_tail) {
  FragNormBound b;
  b.c_tail = c_tail;
  b.closed_form_bound = c_tail * c_tail * coeffs.kernel.moment(0.0) *
                  coeffs.rate.sup_norm();
  return b;
}

double estimate_tail_constant(const Grid& grid, const Vec& phi, double k,
                              double x_max) {
  double c = 1.0;
  for (size_t i = 0; i < grid.size() && grid.center(i) <= x_max; ++i) {
    const double ref = 1.0 + std::pow(grid.center(i), k);
    c = std::max({c, phi[i] / ref, ref / phi[i]});
  }
  return c;
}

double exponential_tail(double x, int n_max) {
  if (x <= 0.0) return 0.0;
  // term = x^n / n! built in log space, summed until negligible.
  double sum = 0.0;
  for (int n = n_max + 1; n < n_max + 2000; ++n) {
    const double term = std::exp(n * std::log(x) - std::lgamma(n + 1.0));
    sum += term;
    if (n > x && term < 1e-18 * sum) break;
  }
  return sum;
}

namespace {

// Product-integration weights for nodes 0..k on [0, k].
std::vector<double> lattice_weights(int k) {
  std::vector<double> w(k + 1, 0.0);
  if (k == 0) return w;
  if (k == 1) {
    w[0] = w[1] = 0.5;
    return w;
  }
  const int simpson_end = (k % 2 == 0) ? k : k - 3;
  for (int j = 0; j + 2 <= simpson_end; j += 2) {
    w[j] += 1.0 / 3.0;
    w[j + 1] += 4.0 / 3.0;
    w[j + 2] += 1.0 / 3.0;
  }
  if (k % 2 == 1) {
    const int s = k - 3;
    w[s] += 3.0 / 8.0;
    w[s + 1] += 9.0 / 8.0;
    w[s + 2] += 9.0 / 8.0;
    w[s + 3] += 3.0 / 8.0;
  }
  return w;
}

std::vector<Vec> dyson_lattice(const TransportPropagator& prop,
                               const SparseMatrix& gain, const Vec& g, double t,
                               int steps, int n_max) {
  const double h = t / steps;
  std::vector<const SparseMatrix*> shift(steps + 1);
  for (int m = 0; m <= steps; ++m) shift[m] = &prop.remap(m * h);
  std::vector<std::vector<double>> weights(steps + 1);
  for (int k = 0; k <= steps; ++k) weights[k] = lattice_weights(k);

  std::vector<Vec> prev(steps + 1), cur(steps + 1), v(steps + 1);
  for (int k = 0; k <= steps; ++k) prev[k] = *shift[k] * g;
  std::vector<Vec> terms = {prev[steps]};
  for (int n = 1; n <= n_max; ++n) {
    for (int j = 0; j <= steps; ++j) v[j] = gain * prev[j];
    cur[0] = Vec::Zero(g.size());
    for (int k = 1; k <= steps; ++k) {
      Vec acc = Vec::Zero(g.size());
      for (int j = 0; j <= k; ++j)
        if (weights[k][j] != 0.0) acc += weights[k][j] * (*shift[k - j] * v[j]);
      cur[k] = h * acc;
    }
    terms.push_back(cur[steps]);
    std::swap(prev, cur);
  }
  return terms;
}

}  // namespace

DysonStack build_dyson_stack(GridPtr grid, const CoefficientSet& coeffs,
                             const PerronTriple& triple, const Vec& g, double t,
                             const DysonOptions& opts) {
  const TransportPropagator prop(grid, make_flow(coeffs), triple.lambda);
  const SparseMatrix gain = assemble_frag_gain(*grid, coeffs);
  int steps = opts.lattice_steps;
  if (steps <= 0)
    steps = std::max(2, static_cast<int>(std::ceil(t / prop.min_cell_time() - 1e-9)));
  if (opts.richardson && steps % 2 == 1) ++steps;

  DysonStack st;
  st.grid = grid;
  st.t = t;
  st.phi = triple.phi.values;
  st.lattice_steps = steps;
  // Terms stay inside the forward flow of supp g over [0, t]; only those
  // columns of the gain enter the norm bound.
  Eigen::Index last = 0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    if (g[i] != 0.0) last = i;
  const Flow flow = make_flow(coeffs);
  const double reach = flow.x_at(flow.s(grid->edge(last + 1)) + t);
  st.frag_norm_bound = weighted_column_norm(*grid, gain, triple.phi.values,
                                            grid->locate(reach) + 1);
  st.terms = dyson_lattice(prop, gain, g, t, steps, opts.n_max);
  if (opts.richardson) {
    const auto coarse = dyson_lattice(prop, gain, g, t, steps / 2, opts.n_max);
    Vec fine_sum = Vec::Zero(g.size()), coarse_sum = Vec::Zero(g.size());
    for (int n = 0; n <= opts.n_max; ++n) {
      fine_sum += st.terms[n];
      coarse_sum += coarse[n];
    }
    const double denom = weighted_norm(*grid, fine_sum, st.phi);
    // Fourth-order extrapolation estimate of the fine-lattice error.
    st.richardson_rel =
        denom > 0.0
            ? weighted_norm(*grid, fine_sum - coarse_sum, st.phi) / denom / 15.0
            : 0.0;
    if (st.richardson_rel > opts.richardson_tol) {
      std::ostringstream os;
      os << "lattice error estimate " << st.richardson_rel;
      throw Error(ErrorCode::kQuadratureUnstable, os.str());
    }
  }
  return st;
}

const Vec& dyson_term(const DysonStack& stack, int n) {
  if (n < 0 || n >= static_cast<int>(stack.terms.size()))
    throw Error(ErrorCode::kQuadratureFailure, "term index outside stack");
  return stack.terms[n];
}

DysonSum dyson_sum(const DysonStack& stack, int n_max) {
  n_max = std::min(n_max, static_cast<int>(stack.terms.size()) - 1);
  DysonSum out;
  out.field = Vec::Zero(stack.terms.front().size());
  for (int n = 0; n <= n_max; ++n) out.field += stack.terms[n];
  out.remainder_bound = exponential_tail(stack.frag_norm_bound * stack.t, n_max);
  return out;
}

}  // namespace gfrag
