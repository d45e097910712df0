#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gfrag/errors.hpp"
#include "report.hpp"

namespace gfrag::cli {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const char* const kVersion = "0.1.0";

// Everything one command produces before it is written out.
class Session {
 public:
  Session(const Scenario& s, std::string command, const RunOptions& opts, fs::path dir)
      : scenario(s), command(std::move(command)), opts(opts), dir(std::move(dir)) {}

  void metric(const std::string& name, double v) {
    if (!metrics_.count(name)) order_.push_back(name);
    metrics_[name] = v;
  }
  void check(const std::string& name, double v, std::optional<double> lo,
             std::optional<double> hi) {
    metric(name, v);
    builtin_.push_back({name, lo, hi});
  }
  void tolerance(const std::string& name, double v) { tolerances[name] = v; }
  void csv(const std::string& stem, const CsvTable& t) {
    files_.emplace_back(stem + ".csv", t.str());
  }
  void plot(const std::string& stem, const PlotSpec& spec,
            const std::vector<Series>& series) {
    if (opts.emit_plots) files_.emplace_back(stem + ".svg", svg_plot(spec, series));
  }
  void text(const std::string& name, std::string content) {
    files_.emplace_back(name, std::move(content));
  }

  RunResult finish(const std::vector<CheckSpec>& declared, double seconds);

  const Scenario& scenario;
  std::string command;
  const RunOptions& opts;
  fs::path dir;
  json tolerances = json::object();
  json details = json::object();

 private:
  struct Builtin {
    std::string metric;
    std::optional<double> min, max;
  };
  std::map<std::string, double> metrics_;
  std::vector<std::string> order_;
  std::vector<Builtin> builtin_;
  std::vector<std::pair<std::string, std::string>> files_;
};

bool within(double v, const std::optional<double>& lo, const std::optional<double>& hi) {
  if (std::isnan(v)) return false;
  return (!lo || v >= *lo) && (!hi || v <= *hi);
}

json bound(const std::optional<double>& b) {
  if (!b) return nullptr;
  return *b;
}

// Non-finite doubles have no JSON literal; they are written as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

RunResult Session::finish(const std::vector<CheckSpec>& declared, double seconds) {
  RunResult res;
  res.out_dir = dir;
  for (const auto& b : builtin_) {
    const double v = metrics_.at(b.metric);
    res.checks.push_back({b.metric, v, b.min, b.max, true, within(v, b.min, b.max)});
  }
  for (const auto& d : declared) {
    auto it = metrics_.find(d.metric);
    if (it == metrics_.end()) {
      std::string known;
      for (const auto& m : order_) known += (known.empty() ? "" : ", ") + m;
      throw Error(ErrorCode::kConfig, "experiments." + command + ".checks: no metric '" +
                                          d.metric + "' (have: " + known + ")");
    }
    res.checks.push_back(
        {d.metric, it->second, d.min, d.max, false, within(it->second, d.min, d.max)});
  }
  bool all = true;
  json checks = json::array();
  for (const auto& c : res.checks) {
    all = all && c.passed;
    checks.push_back({{"metric", c.metric},
                      {"value", number(c.value)},
                      {"min", bound(c.min)},
                      {"max", bound(c.max)},
                      {"builtin", c.builtin},
                      {"passed", c.passed}});
  }
  json metrics = json::object();
  for (const auto& m : order_) metrics[m] = number(metrics_.at(m));

  const auto& c = scenario.coeffs;
  json summary = {
      {"command", command},
      {"scenario", scenario.name},
      {"version", kVersion},
      {"config_hash", hex64(fnv1a64(scenario.source))},
      {"seed", opts.seed.value_or(scenario.seed)},
      {"hypothesis_override", opts.hypothesis_override || scenario.hypothesis_override},
      {"coefficients",
       {{"tau_inf", c.tau.tau_inf()},
        {"alpha", c.tau.alpha()},
        {"b_inf", c.rate.b_infinity()},
        {"a0", c.rate.a0()},
        {"b_sup", number(c.rate.sup_norm())},
        {"kernel", c.kernel.describe()}}},
      {"tolerances", tolerances},
      {"metrics", metrics},
      {"details", details},
      {"checks", checks},
      {"passed", all}};
  for (const auto& [name, content] : files_) write_atomic(dir / name, content);
  write_atomic(dir / (command + ".json"), summary.dump(2) + "\n");
  // Timing lives apart from the summary so reruns stay byte-identical.
  json meta = {{"command", command}, {"wall_seconds", seconds}, {"jobs", opts.jobs}};
  write_atomic(dir / (command + ".meta.json"), meta.dump(2) + "\n");
  res.exit_code = all ? kExitOk : kExitCheckFailed;
  return res;
}

bool nondecreasing(const std::vector<double>& v, double tol = 0.0) {
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[i - 1] - tol) return false;
  return true;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

bool nonincreasing(const std::vector<double>& v) {
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1]) return false;
  return true;
}

std::vector<double> to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

void add_solver_tolerances(Session& s) {
  const auto& p = s.scenario.perron;
  s.tolerance("perron_tol", p.tol);
  s.tolerance("perron_inner_tol", p.inner_tol);
  s.tolerance("perron_max_outer", p.max_outer);
  s.tolerance("perron_max_inner", p.max_inner);
}

void describe_grid(Session& s, const Grid& g, const std::string& key = "grid") {
  double hmin = kInf, hmax = 0.0;
  for (double w : g.widths()) hmin = std::min(hmin, w), hmax = std::max(hmax, w);
  s.details[key] = {{"length", g.length()},
                    {"cells", g.size()},
                    {"layout", layout_name(g.layout())},
                    {"min_width", hmin},
                    {"max_width", hmax}};
}

// Nonnegative random field on [0, support] with <g, phi> = 1.
Vec random_field(const Grid& g, const Vec& phi, double support, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec v = Vec::Zero(g.size());
  for (size_t i = 0; i < g.size(); ++i)
    if (g.center(i) < support) v[i] = u(rng);
  const double b = bracket(g, v, phi);
  if (!(b > 0.0)) throw Error(ErrorCode::kConfig, "random field support holds no mass");
  return v / b;
}

// ----------------------------------------------------------------- commands

void cmd_eigen(Session& s) {
  const auto& sc = s.scenario;
  const auto& b = sc.eigen;
  add_solver_tolerances(s);
  const GridPtr grid = make_grid(sc.grid, sc.coeffs);
  const Grid& g = *grid;
  describe_grid(s, g);
  const PerronTriple tr = solve_perron(grid, sc.coeffs, sc.perron);
  const Vec& G = tr.G.values;
  const Vec& phi = tr.phi.values;
  s.metric("lambda", tr.lambda);
  s.metric("residual_direct", tr.residual_direct);
  s.metric("residual_dual", tr.residual_dual);
  s.metric("iterations", tr.iterations);
  s.metric("G_mass", integral(g, G));
  s.metric("bracket_G_phi", bracket(g, G, phi));

  const double lo = b.fit_lo > 0.0 ? b.fit_lo : 0.3 * g.length();
  const double hi = b.fit_hi > 0.0 ? b.fit_hi : 0.7 * g.length();
  s.tolerance("fit_lo", lo);
  s.tolerance("fit_hi", hi);
  const TailFit fit = fit_power_tail(g, phi, lo, hi, sc.coeffs.rate.a0());
  s.metric("k_hat", fit.k_hat);
  s.metric("fit_residual", fit.residual);
  double k_theory = NAN;
  try {
    k_theory = solve_k(sc.coeffs.kernel, tr.lambda, sc.coeffs.rate.b_infinity());
  } catch (const Error&) {
  }
  s.metric("k_theory", k_theory);
  s.metric("k_error", std::abs(fit.k_hat - k_theory));

  // Spread of phi about its mean away from the outflow layer.
  double mean = 0.0, len = 0.0, spread = 0.0;
  for (size_t i = 0; i < g.size(); ++i)
    if (g.center(i) >= 0.5 && g.center(i) <= 0.8 * g.length()) {
      mean += phi[i] * g.width(i);
      len += g.width(i);
    }
  mean /= len;
  for (size_t i = 0; i < g.size(); ++i)
    if (g.center(i) >= 0.5 && g.center(i) <= 0.8 * g.length())
      spread = std::max(spread, std::abs(phi[i] / mean - 1.0));
  s.metric("phi_spread", spread);

  if (b.brackets) {
    const TruncatedEigenPair pair = solve_truncated_brackets(grid, sc.coeffs, sc.perron);
    GridSpec ref = sc.grid;
    ref.length *= 2.0;
    ref.cells *= 2;
    const GridPtr rg = make_grid(ref, sc.coeffs);
    const PerronTriple rt = solve_perron(rg, sc.coeffs, sc.perron);
    const BracketReport br = check_brackets(pair, rt, sc.coeffs);
    s.metric("lambda_minus", br.lambda_minus);
    s.metric("lambda_plus", br.lambda_plus);
    s.metric("lambda_ref", br.lambda_ref);
    s.metric("bracket_width", br.width());
    s.check("bracket_minus_ok", br.minus_ok, 1.0, std::nullopt);
    s.check("bracket_plus_ok", br.plus_ok, 1.0, std::nullopt);
  }

  CsvTable t({"index", "x", "width", "G", "phi"});
  for (size_t i = 0; i < g.size(); ++i)
    t.add({(long long)i, g.center(i), g.width(i), G[i], phi[i]});
  s.csv("eigen", t);
  if (b.export_matrices) {
    std::ostringstream tm, gm, gr;
    write_coo(tm, assemble_transport(g, sc.coeffs, tr.lambda));
    write_coo(gm, assemble_frag_gain(g, sc.coeffs));
    write_grid_csv(gr, g);
    s.text("transport.coo", tm.str());
    s.text("gain.coo", gm.str());
    s.text("grid.csv", gr.str());
  }
  const auto x = g.centers();
  s.plot("eigen", {"Perron eigenelements", "x", "value", false, true},
         {{"G", x, to_std(G)}, {"phi", x, to_std(phi)}});
}

void cmd_evolve(Session& s) {
  const auto& sc = s.scenario;
  const auto& b = sc.evolve;
  add_solver_tolerances(s);
  const GridPtr grid = make_grid(b.grid.value_or(sc.grid), sc.coeffs);
  const Grid& g = *grid;
  describe_grid(s, g);
  const PerronTriple tr = solve_perron(grid, sc.coeffs, sc.perron);
  const Vec& phi = tr.phi.values;
  const double dt = b.dt > 0.0 ? b.dt
                               : TransportPropagator(grid, make_flow(sc.coeffs), tr.lambda)
                                     .min_cell_time();
  s.tolerance("dt", dt);
  s.tolerance("t_end", b.t_end);
  const Evolver ev(grid, sc.coeffs, tr, dt);

  std::vector<Vec> starts;
  if (b.fields <= 0) {
    starts.push_back(make_g_a(g, phi, b.a));
  } else {
    std::mt19937_64 rng(s.opts.seed.value_or(sc.seed));
    for (int k = 0; k < b.fields; ++k) starts.push_back(random_field(g, phi, b.support, rng));
  }
  std::vector<Trajectory> runs(starts.size());
  EvolveOptions eo;
  eo.record_every = b.record_every;
  eo.keep_fields = b.keep_fields;
  parallel_for(starts.size(), s.opts.jobs,
               [&](size_t k) { runs[k] = ev.run(starts[k], b.t_end, eo); });

  double drift = 0.0, growth = 0.0, min_value = kInf, final_distance = 0.0;
  CsvTable t({"field", "t", "distance", "bracket", "norm", "min_value"});
  std::vector<Series> series;
  for (size_t k = 0; k < runs.size(); ++k) {
    const auto& pts = runs[k].points;
    const double b0 = pts.front().bracket, n0 = pts.front().norm;
    Series sr{"field " + std::to_string(k), {}, {}};
    for (const auto& p : pts) {
      drift = std::max(drift, std::abs(p.bracket / b0 - 1.0));
      growth = std::max(growth, p.norm / n0);
      min_value = std::min(min_value, p.min_value);
      t.add({(long long)k, p.t, p.distance, p.bracket, p.norm, p.min_value});
      sr.x.push_back(p.t);
      sr.y.push_back(p.distance);
    }
    final_distance = std::max(final_distance, pts.back().distance);
    if (series.size() < 8) series.push_back(std::move(sr));
  }
  s.metric("fields", static_cast<double>(runs.size()));
  s.metric("max_bracket_drift", drift);
  s.metric("max_norm_ratio", growth);
  s.metric("min_value", min_value);
  s.metric("final_distance", final_distance);
  s.csv("evolve", t);
  if (b.keep_fields) {
    CsvTable f({"field", "t", "x", "value"});
    for (size_t k = 0; k < runs.size(); ++k)
      for (size_t j = 0; j < runs[k].fields.size(); ++j)
        for (size_t i = 0; i < g.size(); ++i)
          f.add({(long long)k, runs[k].points[j].t, g.center(i), runs[k].fields[j][i]});
    s.csv("evolve_fields", f);
  }
  s.plot("evolve", {"Distance to the projection", "t", "||g - Pg||", false, true}, series);
}

void cmd_dyson(Session& s) {
  const auto& sc = s.scenario;
  const auto& b = sc.dyson;
  add_solver_tolerances(s);
  const GridPtr grid = make_grid(b.grid.value_or(sc.grid), sc.coeffs);
  const Grid& g = *grid;
  describe_grid(s, g);
  const PerronTriple tr = solve_perron(grid, sc.coeffs, sc.perron);
  const Vec& phi = tr.phi.values;
  std::mt19937_64 rng(s.opts.seed.value_or(sc.seed));
  const Vec g0 = random_field(g, phi, b.support, rng);
  const double n0 = weighted_norm(g, g0, phi);

  DysonOptions o;
  o.n_max = b.n_max;
  o.lattice_steps = b.lattice_steps;
  o.richardson = b.richardson;
  s.tolerance("richardson_tol", o.richardson_tol);
  s.tolerance("t", b.t);
  const DysonStack st = build_dyson_stack(grid, sc.coeffs, tr, g0, b.t, o);
  const DysonSum sum = dyson_sum(st, b.n_max);

  const double dt =
      TransportPropagator(grid, make_flow(sc.coeffs), tr.lambda).min_cell_time();
  const Vec ref = Evolver(grid, sc.coeffs, tr, dt).advance(g0, b.t);
  s.metric("lattice_steps", st.lattice_steps);
  s.metric("richardson_rel", st.richardson_rel);
  s.metric("frag_norm_bound", st.frag_norm_bound);
  s.metric("remainder_bound", sum.remainder_bound);
  s.metric("diff_vs_evolve", weighted_norm(g, sum.field - ref, phi) / n0);
  s.tolerance("evolve_dt", dt);

  CsvTable t({"n", "term_norm", "partial_diff", "tail_bound"});
  Vec partial = Vec::Zero(g.size());
  std::vector<double> ns, diffs;
  for (int n = 0; n <= b.n_max; ++n) {
    const Vec& term = dyson_term(st, n);
    partial += term;
    const double d = weighted_norm(g, partial - ref, phi) / n0;
    t.add({(long long)n, weighted_norm(g, term, phi) / n0, d,
           exponential_tail(st.frag_norm_bound * b.t, n)});
    ns.push_back(n);
    diffs.push_back(d);
  }
  s.csv("dyson", t);
  s.plot("dyson", {"Dyson partial sums against the evolution", "n", "relative difference",
                   false, true},
         {{"partial sum", ns, diffs}});
}

void cmd_slowconv(Session& s) {
  const auto& sc = s.scenario;
  add_solver_tolerances(s);
  const GridPtr grid = make_grid(sc.slowconv.grid.value_or(sc.grid), sc.coeffs);
  describe_grid(s, *grid);
  const PerronTriple tr = solve_perron(grid, sc.coeffs, sc.perron);
  SlowConvergenceOptions o = sc.slowconv.opts;
  o.jobs = s.opts.jobs;
  const SlowConvergenceReport rep = slow_convergence_scan(grid, sc.coeffs, tr, o);
  s.tolerance("epsilon", rep.epsilon);
  s.tolerance("t", rep.t);
  s.tolerance("dt", rep.dt);
  s.metric("lambda", tr.lambda);
  s.metric("x_cut", rep.x_cut);
  s.metric("g_mass_below_x", rep.g_mass_below_x);
  s.metric("b", rep.b);
  s.metric("closed_form_b", rep.closed_form_b);
  s.details["b_used"] = "column norm of the assembled gain in L1_phi";

  CsvTable t({"a", "generations", "norm", "mass_below_x", "series_tail", "split_bound",
              "series_bound"});
  std::vector<double> a, norm, split, series;
  double split_excess = -kInf, series_excess = -kInf;
  for (const auto& r : rep.rows) {
    t.add({r.a, (long long)r.generations, r.norm, r.mass_below_x, r.series_tail,
           r.split_bound, r.series_bound});
    a.push_back(r.a);
    norm.push_back(r.norm);
    split.push_back(r.split_bound);
    series.push_back(r.series_bound);
    split_excess = std::max(split_excess, r.split_bound - r.norm);
    series_excess = std::max(series_excess, r.series_bound - r.split_bound);
  }
  s.metric("top_norm", norm.empty() ? NAN : norm.back());
  s.check("max_norm", norm.empty() ? NAN : *std::max_element(norm.begin(), norm.end()),
          std::nullopt, 2.0 + 1e-6);
  s.check("norm_nondecreasing", nondecreasing(norm), 1.0, std::nullopt);
  s.check("split_excess", split_excess, std::nullopt, 1e-6);
  s.metric("series_excess", series_excess);
  s.csv("slowconv", t);
  s.plot("slowconv", {"Distance to the projection at t", "a", "norm", true, false},
         {{"measured", a, norm}, {"split bound", a, split}, {"series bound", a, series}});
}

void cmd_gap(Session& s) {
  const auto& sc = s.scenario;
  const auto& b = sc.gap;
  add_solver_tolerances(s);
  s.tolerance("t_lo", b.opts.t_lo);
  s.tolerance("t_hi", b.opts.t_hi);
  s.tolerance("cell_width", b.opts.cell_width);
  std::vector<GapReport> reps(b.r_values.size());
  for (size_t k = 0; k < reps.size(); ++k) {
    GapOptions o = b.opts;
    o.r = b.r_values[k];
    o.jobs = s.opts.jobs;
    reps[k] = gap_estimate(sc.coeffs, o);
  }
  CsvTable t({"r", "weight", "length", "cells", "lambda", "matrix_gap",
              "matrix_fit_residual", "fit_gap", "fit_worst_a", "fit_residual",
              "spectral_gap", "leading_eigenvalue", "lower", "upper"});
  std::vector<Series> series;
  for (const auto& rep : reps) {
    const std::string tag = "r" + format_number(rep.r);
    std::vector<double> ls, mg;
    bool finite = true;
    for (const auto& row : rep.rows) {
      t.add({rep.r, rep.weight, row.length, (long long)row.cells, row.lambda,
             row.matrix_gap, row.matrix_fit_residual, row.fit_gap, row.fit_worst_a,
             row.fit_residual, row.spectral_gap, row.leading_eigenvalue, rep.lower,
             rep.upper});
      const std::string p = tag + ".L" + format_number(row.length) + ".";
      s.metric(p + "matrix_gap", row.matrix_gap);
      s.metric(p + "fit_gap", row.fit_gap);
      s.metric(p + "spectral_gap", row.spectral_gap);
      ls.push_back(row.length);
      mg.push_back(row.matrix_gap);
      finite = finite && std::isfinite(row.matrix_gap) && std::isfinite(row.fit_gap);
    }
    s.metric(tag + ".lower", rep.lower);
    s.metric(tag + ".upper", rep.upper);
    s.check(tag + ".sandwich_ordered", rep.lower <= rep.upper, 1.0, std::nullopt);
    s.check(tag + ".estimates_finite", finite, 1.0, std::nullopt);
    s.metric(tag + ".matrix_gap_decreasing", strictly_decreasing(mg));
    series.push_back({"matrix, " + tag, ls, mg});
  }
  s.details["bound_used"] = "2B sandwich for mitosis with constant B";
  s.csv("gap", t);
  s.plot("gap", {"Decay rate estimates", "L", "gap", false, false}, series);
}

void cmd_calibrate(Session& s) {
  const auto& sc = s.scenario;
  const auto& b = sc.calibrate;
  add_solver_tolerances(s);
  s.tolerance("eta_tol", b.opts.eta_tol);
  s.tolerance("a_tol", b.opts.a_tol);
  s.tolerance("a_max_factor", b.opts.a_max_factor);
  s.tolerance("relation_tol", b.opts.relation_tol);
  const GridPtr grid = make_grid(b.grid.value_or(sc.grid), sc.coeffs);
  describe_grid(s, *grid);
  std::vector<CalibrationResult> cals(b.epsilons.size());
  parallel_for(cals.size(), s.opts.jobs, [&](size_t k) {
    cals[k] = calibrate_truncation(grid, sc.coeffs, b.epsilons[k], b.opts);
  });
  std::vector<OperatorConvergenceRow> ops;
  if (b.operator_check) {
    const PerronTriple tr = solve_perron(grid, sc.coeffs, sc.perron);
    OperatorConvergenceOptions o = b.op;
    o.seed = s.opts.seed.value_or(sc.seed);
    ops = operator_convergence_check(grid, sc.coeffs, tr, cals, o);
    s.tolerance("operator_t", o.t);
  }

  CsvTable t({"epsilon", "eta", "abs_eta", "a_eta", "lambda", "lambda_eps", "lambda_hat",
              "lambda_tilde", "kernel_k", "k", "rho", "residual", "degenerate", "c_tail",
              "frag_diff", "frag_bound", "lambda_diff", "semigroup_diff", "gronwall_bound"});
  CsvTable trace({"epsilon", "step", "eta", "lambda_tilde", "target"});
  std::vector<double> eps, abs_eta, frag;
  double max_res = 0.0, lam_lo = kInf, lam_excess = -kInf, frag_excess = -kInf,
         sg_excess = -kInf, eta_floor = kInf, a_margin = kInf;
  const double bsup = sc.coeffs.rate.sup_norm();
  for (size_t k = 0; k < cals.size(); ++k) {
    const auto& c = cals[k];
    const OperatorConvergenceRow op = k < ops.size() ? ops[k] : OperatorConvergenceRow{};
    const double nan = NAN;
    const bool have = k < ops.size();
    t.add({c.epsilon, c.eta, std::abs(c.eta), c.a_eta, c.lambda, c.lambda_eps,
           c.lambda_hat, c.lambda_tilde, c.kernel_k, c.k, c.rho, c.residual,
           (long long)c.degenerate, have ? op.c_tail : nan, have ? op.frag_diff : nan,
           have ? op.frag_bound : nan, have ? op.lambda_diff : nan,
           have ? op.semigroup_diff : nan, have ? op.gronwall_bound : nan});
    for (size_t j = 0; j < c.trace.size(); ++j)
      trace.add({c.epsilon, (long long)j, c.trace[j].eta, c.trace[j].lambda_tilde,
                 c.trace[j].target});
    eps.push_back(c.epsilon);
    abs_eta.push_back(std::abs(c.eta));
    max_res = std::max(max_res, c.residual);
    lam_lo = std::min(lam_lo, c.lambda_hat);
    lam_excess = std::max(lam_excess, c.lambda_hat - (bsup + c.eta));
    eta_floor = std::min(eta_floor, c.eta + sc.coeffs.rate.b_infinity());
    a_margin = std::min(a_margin, c.a_eta - sc.coeffs.rate.a0());
    if (have) {
      frag.push_back(op.frag_diff);
      frag_excess = std::max(frag_excess, op.frag_diff - op.frag_bound);
      sg_excess = std::max(sg_excess, op.semigroup_diff - op.gronwall_bound);
    }
  }
  // Larger epsilon first, so the trends read along the ladder as given.
  std::vector<size_t> order(eps.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t i, size_t j) { return eps[i] > eps[j]; });
  std::vector<double> eta_sorted, frag_sorted;
  for (size_t i : order) {
    eta_sorted.push_back(abs_eta[i]);
    if (i < frag.size()) frag_sorted.push_back(frag[i]);
  }
  s.check("max_residual", max_res, std::nullopt, b.opts.relation_tol);
  s.check("min_lambda_hat", lam_lo, 0.0, std::nullopt);
  s.check("lambda_hat_excess", lam_excess, std::nullopt, 1e-9);
  s.check("eta_above_floor", eta_floor, 0.0, std::nullopt);
  s.check("a_eta_margin", a_margin, 0.0, std::nullopt);
  s.metric("abs_eta_nonincreasing", nonincreasing(eta_sorted));
  if (!ops.empty()) {
    s.metric("frag_diff_decreasing", strictly_decreasing(frag_sorted));
    s.metric("frag_bound_excess", frag_excess);
    s.metric("semigroup_excess", sg_excess);
  }
  s.csv("calibrate", t);
  s.csv("calibrate_trace", trace);
  s.plot("calibrate", {"Calibrated modifier", "epsilon", "|eta|", true, true},
         {{"|eta|", eps, abs_eta}});
}

void cmd_homogeneous(Session& s) {
  const auto& sc = s.scenario;
  const auto& b = sc.homogeneous;
  add_solver_tolerances(s);
  const GridPtr grid = make_grid(b.grid.value_or(sc.grid), sc.coeffs);
  const Grid& g = *grid;
  describe_grid(s, g);
  const PerronTriple tr = solve_perron(grid, sc.coeffs, sc.perron);
  const HomogeneousResult h = homogeneous_closed_form(grid, sc.coeffs, tr, b.opts);
  s.tolerance("fit_lo", h.fit.x_lo);
  s.tolerance("fit_hi", h.fit.x_hi);
  s.metric("lambda", h.lambda);
  s.metric("gamma", h.gamma);
  s.metric("x_lo", h.x_lo);
  s.metric("x_hi", h.x_hi);
  s.metric("max_rel_err", h.max_rel_err);
  s.metric("k_hat", h.fit.k_hat);
  s.metric("fit_residual", h.fit.residual);
  s.metric("k_table", h.k_table);
  s.metric("k_error", std::abs(h.fit.k_hat - h.k_table));
  s.check("lambda_at_one", std::abs(h.lambda_at_one), std::nullopt, 1e-12);
  CsvTable t({"x", "phi_solved", "phi_formula", "in_window"});
  std::vector<double> xs, ps, fs;
  for (size_t i = 0; i < g.size(); ++i) {
    const double x = g.center(i);
    const bool in = x >= h.x_lo && x <= h.x_hi;
    t.add({x, h.phi_solved[i], h.phi_formula[i], (long long)in});
    if (in) xs.push_back(x), ps.push_back(h.phi_solved[i]), fs.push_back(h.phi_formula[i]);
  }
  s.csv("homogeneous", t);
  s.plot("homogeneous", {"Dual eigenfunction and closed form", "x", "phi", true, true},
         {{"solved", xs, ps}, {"formula", xs, fs}});
}

void cmd_validate(Session& s, const HypothesisReport& rep) {
  CsvTable t({"group", "name", "passed", "detail"});
  json clauses = json::array();
  for (const auto& c : rep.clauses) {
    t.add({c.group, c.name, (long long)c.passed, c.detail});
    clauses.push_back({{"group", c.group}, {"name", c.name}, {"passed", c.passed},
                       {"detail", c.detail}});
  }
  s.details["clauses"] = clauses;
  s.check("hypotheses_passed", rep.passed(), 1.0, std::nullopt);
  s.csv("validate", t);
}

const std::vector<CheckSpec>& declared_checks(const Scenario& sc, const std::string& cmd) {
  static const std::vector<CheckSpec> none;
  if (cmd == "eigen") return sc.eigen.checks;
  if (cmd == "evolve") return sc.evolve.checks;
  if (cmd == "dyson") return sc.dyson.checks;
  if (cmd == "slowconv") return sc.slowconv.checks;
  if (cmd == "gap") return sc.gap.checks;
  if (cmd == "calibrate") return sc.calibrate.checks;
  if (cmd == "homogeneous") return sc.homogeneous.checks;
  return none;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "eigen", "evolve", "dyson", "slowconv", "gap", "calibrate", "homogeneous", "validate"};
  return names;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kBadLayout:
    case ErrorCode::kWrongKernel:
    case ErrorCode::kDomainTooSmall:
    case ErrorCode::kTargetOutOfRange:
    case ErrorCode::kEmptyTruncation:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

RunResult run_command(const Scenario& scenario, const std::string& command,
                      const RunOptions& opts, std::ostream& log) {
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end())
    throw Error(ErrorCode::kConfig, "unknown subcommand '" + command + "'");
  fs::path dir = scenario.out_dir;
  if (const char* env = std::getenv("GFSPEC_OUT"); env && *env) dir = env;
  if (!opts.out_dir.empty()) dir = opts.out_dir;
  dir /= scenario.name;

  const auto t0 = std::chrono::steady_clock::now();
  Session s(scenario, command, opts, dir);
  const HypothesisReport hyp = validate_hypotheses(scenario.coeffs);
  const bool override = opts.hypothesis_override || scenario.hypothesis_override;
  if (command == "validate") {
    cmd_validate(s, hyp);
  } else {
    if (!hyp.passed() && !override)
      throw Error(ErrorCode::kConfig,
                  "hypotheses fail (set hypothesis_override to proceed): " + hyp.failures());
    if (!hyp.passed()) log << "warning: proceeding past failed hypotheses: " << hyp.failures() << "\n";
    if (command == "eigen") cmd_eigen(s);
    else if (command == "evolve") cmd_evolve(s);
    else if (command == "dyson") cmd_dyson(s);
    else if (command == "slowconv") cmd_slowconv(s);
    else if (command == "gap") cmd_gap(s);
    else if (command == "calibrate") cmd_calibrate(s);
    else cmd_homogeneous(s);
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  RunResult res = s.finish(declared_checks(scenario, command), secs);
  for (const auto& c : res.checks) {
    log << (c.passed ? "PASS " : "FAIL ") << c.metric << " = " << format_number(c.value);
    if (c.min) log << "  min " << format_number(*c.min);
    if (c.max) log << "  max " << format_number(*c.max);
    log << "\n";
  }
  if (command == "validate" && !hyp.passed()) {
    res.exit_code = kExitConfig;
    res.message = hyp.failures();
  }
  return res;
}

RunResult run(const std::string& config_path, const std::string& command,
              const RunOptions& opts, std::ostream& log) {
  RunResult res;
  try {
    const Scenario sc = load_scenario(config_path);
    res = run_command(sc, command, opts, log);
  } catch (const Error& e) {
    res.exit_code = exit_code_for(e.code());
    res.message = e.what();
  } catch (const std::exception& e) {
    res.exit_code = kExitNumerical;
    res.message = e.what();
  }
  if (!res.message.empty()) log << "error: " << res.message << "\n";
  return res;
}

}  // namespace gfrag::cli
