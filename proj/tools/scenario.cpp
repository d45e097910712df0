#include "scenario.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "gfrag/errors.hpp"

namespace gfrag::cli {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kConfig, where + ": " + what);
}

void allow_keys(const YAML::Node& node, const std::string& where,
                std::initializer_list<const char*> keys) {
  if (!node.IsMap()) fail(where, "expected a map");
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!ok.count(key)) fail(where, "unknown key '" + key + "'");
  }
}

template <class T>
T get(const YAML::Node& node, const char* key, const std::string& where, T fallback) {
  const YAML::Node v = node[key];
  if (!v) return fallback;
  try {
    return v.as<T>();
  } catch (const YAML::Exception&) {
    fail(where + "." + key, "wrong type");
  }
}

template <class T>
T need(const YAML::Node& node, const char* key, const std::string& where) {
  if (!node[key]) fail(where, std::string("missing '") + key + "'");
  return get<T>(node, key, where, T{});
}

double positive(double v, const std::string& where) {
  if (!(v > 0.0)) fail(where, "must be positive");
  return v;
}

GrowthRate parse_tau(const YAML::Node& n) {
  const std::string w = "coefficients.tau";
  if (n.IsScalar()) return GrowthRate::constant(positive(n.as<double>(), w));
  allow_keys(n, w, {"kind", "value", "tau_inf", "alpha"});
  const auto kind = need<std::string>(n, "kind", w);
  if (kind == "constant")
    return GrowthRate::constant(positive(get(n, "value", w, 1.0), w + ".value"));
  if (kind == "powerlaw")
    return GrowthRate::power_law(positive(get(n, "tau_inf", w, 1.0), w + ".tau_inf"),
                                 get(n, "alpha", w, 0.0));
  fail(w, "unknown kind '" + kind + "'");
}

FragmentationRate parse_rate(const YAML::Node& n) {
  const std::string w = "coefficients.rate";
  if (n.IsScalar()) return FragmentationRate::constant(n.as<double>());
  allow_keys(n, w, {"kind", "value", "a0", "profile", "b_inf", "gamma", "x_cap",
                    "modifier"});
  const auto kind = need<std::string>(n, "kind", w);
  std::optional<FragmentationRate> rate;
  if (kind == "constant") {
    rate = FragmentationRate::constant(get(n, "value", w, 1.0),
                                       positive(get(n, "a0", w, 1.0), w + ".a0"));
  } else if (kind == "plateau") {
    std::vector<ProfilePoint> pts;
    const YAML::Node prof = n["profile"];
    if (!prof || !prof.IsSequence() || prof.size() < 2)
      fail(w + ".profile", "need at least two [x, b] points");
    for (const auto& p : prof) {
      if (!p.IsSequence() || p.size() != 2) fail(w + ".profile", "points are [x, b]");
      pts.push_back({p[0].as<double>(), p[1].as<double>()});
    }
    rate = FragmentationRate::plateau(std::move(pts));
  } else if (kind == "powerlaw") {
    rate = FragmentationRate::power_law(
        positive(get(n, "b_inf", w, 1.0), w + ".b_inf"), get(n, "gamma", w, 0.0),
        positive(get(n, "x_cap", w, 1.0), w + ".x_cap"));
  } else {
    fail(w, "unknown kind '" + kind + "'");
  }
  if (const YAML::Node m = n["modifier"]) {
    allow_keys(m, w + ".modifier", {"eta", "a"});
    rate = rate->with_modifier(need<double>(m, "eta", w + ".modifier"),
                               need<double>(m, "a", w + ".modifier"));
  }
  return *rate;
}

FragmentationKernel parse_kernel(const YAML::Node& n) {
  const std::string w = "coefficients.kernel";
  if (n.IsScalar()) return kernel_preset(n.as<std::string>());
  allow_keys(n, w, {"preset", "atoms", "pieces", "log_pieces", "truncate"});
  std::optional<FragmentationKernel> k;
  if (n["preset"]) {
    if (n["atoms"] || n["pieces"] || n["log_pieces"])
      fail(w, "preset excludes atoms/pieces");
    k = kernel_preset(n["preset"].as<std::string>());
  } else {
    std::vector<Atom> atoms;
    std::vector<PowerPiece> pieces;
    std::vector<LogPiece> logs;
    for (const auto& a : n["atoms"]) {
      if (!a.IsSequence() || a.size() != 2) fail(w + ".atoms", "entries are [z, w]");
      atoms.push_back({a[0].as<double>(), a[1].as<double>()});
    }
    for (const auto& p : n["pieces"]) {
      if (!p.IsSequence() || p.size() != 4)
        fail(w + ".pieces", "entries are [nu, p, z_lo, z_hi]");
      pieces.push_back({p[0].as<double>(), p[1].as<double>(), p[2].as<double>(),
                        p[3].as<double>()});
    }
    for (const auto& p : n["log_pieces"]) {
      if (!p.IsSequence() || p.size() != 3)
        fail(w + ".log_pieces", "entries are [p, z_lo, z_hi]");
      logs.push_back({p[0].as<double>(), p[1].as<double>(), p[2].as<double>()});
    }
    k = FragmentationKernel(std::move(atoms), std::move(pieces), std::move(logs));
  }
  if (n["truncate"]) k = truncate_kernel(*k, n["truncate"].as<double>());
  return *k;
}

Layout parse_layout(const std::string& s, const std::string& where) {
  if (s == "uniform") return Layout::kUniform;
  if (s == "geometric") return Layout::kGeometric;
  if (s == "characteristic") return Layout::kCharacteristic;
  if (s == "graded") return Layout::kGraded;
  fail(where, "unknown layout '" + s + "'");
}

GridSpec parse_grid(const YAML::Node& n, const std::string& w, GridSpec g = {}) {
  allow_keys(n, w, {"length", "cells", "layout", "ratio", "first_width", "fine_end"});
  g.length = positive(get(n, "length", w, g.length), w + ".length");
  g.cells = get(n, "cells", w, g.cells);
  if (n["layout"]) g.layout.kind = parse_layout(n["layout"].as<std::string>(), w);
  g.layout.ratio = get(n, "ratio", w, g.layout.ratio);
  g.layout.first_width = get(n, "first_width", w, g.layout.first_width);
  g.layout.fine_end = get(n, "fine_end", w, g.layout.fine_end);
  if (g.layout.kind != Layout::kGraded && g.cells < 2) fail(w + ".cells", "need >= 2");
  return g;
}

std::optional<GridSpec> block_grid(const YAML::Node& n, const std::string& w,
                                   const GridSpec& base) {
  if (!n["grid"]) return std::nullopt;
  return parse_grid(n["grid"], w + ".grid", base);
}

std::vector<CheckSpec> parse_checks(const YAML::Node& n, const std::string& w) {
  std::vector<CheckSpec> out;
  const YAML::Node c = n["checks"];
  if (!c) return out;
  if (!c.IsSequence()) fail(w + ".checks", "expected a list");
  for (const auto& item : c) {
    allow_keys(item, w + ".checks", {"metric", "min", "max", "expect", "tol"});
    CheckSpec s;
    s.metric = need<std::string>(item, "metric", w + ".checks");
    if (item["min"]) s.min = item["min"].as<double>();
    if (item["max"]) s.max = item["max"].as<double>();
    if (item["expect"]) {
      const double e = item["expect"].as<double>();
      const double tol = positive(need<double>(item, "tol", w + ".checks"), w + ".checks.tol");
      s.min = e - tol;
      s.max = e + tol;
    }
    if (!s.min && !s.max) fail(w + ".checks", "check on '" + s.metric + "' has no bound");
    out.push_back(std::move(s));
  }
  return out;
}

template <class T>
std::vector<T> list(const YAML::Node& n, const char* key, const std::string& w,
                    std::vector<T> fallback) {
  const YAML::Node v = n[key];
  if (!v) return fallback;
  if (!v.IsSequence() || v.size() == 0) fail(w + "." + key, "expected a non-empty list");
  std::vector<T> out;
  for (const auto& x : v) out.push_back(x.as<T>());
  return out;
}

void parse_experiments(const YAML::Node& ex, Scenario& s) {
  allow_keys(ex, "experiments",
             {"eigen", "evolve", "dyson", "slowconv", "gap", "calibrate", "homogeneous"});
  if (const YAML::Node n = ex["eigen"]) {
    const std::string w = "experiments.eigen";
    allow_keys(n, w, {"fit_window", "export_matrices", "brackets", "checks"});
    auto win = list<double>(n, "fit_window", w, {0.0, 0.0});
    if (win.size() != 2) fail(w + ".fit_window", "expected [lo, hi]");
    s.eigen.fit_lo = win[0];
    s.eigen.fit_hi = win[1];
    s.eigen.export_matrices = get(n, "export_matrices", w, false);
    s.eigen.brackets = get(n, "brackets", w, false);
    s.eigen.checks = parse_checks(n, w);
  }
  if (const YAML::Node n = ex["evolve"]) {
    const std::string w = "experiments.evolve";
    allow_keys(n, w, {"grid", "t_end", "dt", "record_every", "fields", "a", "support",
                      "keep_fields", "checks"});
    auto& b = s.evolve;
    b.grid = block_grid(n, w, s.grid);
    b.t_end = positive(get(n, "t_end", w, b.t_end), w + ".t_end");
    b.dt = get(n, "dt", w, b.dt);
    b.record_every = std::max(1, get(n, "record_every", w, b.record_every));
    b.fields = get(n, "fields", w, b.fields);
    b.a = get(n, "a", w, b.a);
    b.support = positive(get(n, "support", w, b.support), w + ".support");
    b.keep_fields = get(n, "keep_fields", w, b.keep_fields);
    b.checks = parse_checks(n, w);
  }
  if (const YAML::Node n = ex["dyson"]) {
    const std::string w = "experiments.dyson";
    allow_keys(n, w, {"grid", "t", "n_max", "lattice_steps", "richardson", "support",
                      "checks"});
    auto& b = s.dyson;
    b.grid = block_grid(n, w, s.grid);
    b.t = positive(get(n, "t", w, b.t), w + ".t");
    b.n_max = get(n, "n_max", w, b.n_max);
    if (b.n_max < 1) fail(w + ".n_max", "need >= 1");
    b.lattice_steps = get(n, "lattice_steps", w, b.lattice_steps);
    b.richardson = get(n, "richardson", w, b.richardson);
    b.support = positive(get(n, "support", w, b.support), w + ".support");
    b.checks = parse_checks(n, w);
  }
  if (const YAML::Node n = ex["slowconv"]) {
    const std::string w = "experiments.slowconv";
    allow_keys(n, w, {"grid", "t", "epsilon", "ladder", "a_values", "dt", "checks"});
    auto& o = s.slowconv.opts;
    s.slowconv.grid = block_grid(n, w, s.grid);
    o.t = positive(get(n, "t", w, o.t), w + ".t");
    o.epsilon = get(n, "epsilon", w, o.epsilon);
    if (!(o.epsilon > 0.0 && o.epsilon < 1.0)) fail(w + ".epsilon", "must lie in (0,1)");
    o.ladder = list<int>(n, "ladder", w, o.ladder);
    o.a_values = list<double>(n, "a_values", w, {});
    o.dt = get(n, "dt", w, o.dt);
    s.slowconv.checks = parse_checks(n, w);
  }
  if (const YAML::Node n = ex["gap"]) {
    const std::string w = "experiments.gap";
    allow_keys(n, w, {"r", "lengths", "cell_width", "t_lo", "t_hi", "samples",
                      "spectrum", "max_dense", "checks"});
    auto& o = s.gap.opts;
    s.gap.r_values = list<double>(n, "r", w, s.gap.r_values);
    o.lengths = list<double>(n, "lengths", w, o.lengths);
    o.cell_width = positive(get(n, "cell_width", w, o.cell_width), w + ".cell_width");
    o.t_lo = get(n, "t_lo", w, o.t_lo);
    o.t_hi = get(n, "t_hi", w, o.t_hi);
    if (!(o.t_hi > o.t_lo && o.t_lo >= 0.0)) fail(w, "need 0 <= t_lo < t_hi");
    o.samples = get(n, "samples", w, o.samples);
    o.spectrum = get(n, "spectrum", w, o.spectrum);
    o.max_dense = get(n, "max_dense", w, o.max_dense);
    for (double r : s.gap.r_values)
      if (r < 0.0) fail(w + ".r", "weights need r >= 0");
    s.gap.checks = parse_checks(n, w);
  }
  if (const YAML::Node n = ex["calibrate"]) {
    const std::string w = "experiments.calibrate";
    allow_keys(n, w, {"grid", "epsilons", "eta_tol", "a_tol", "a_max_factor",
                      "operator_check", "t", "samples", "checks"});
    auto& b = s.calibrate;
    b.grid = block_grid(n, w, s.grid);
    b.epsilons = list<double>(n, "epsilons", w, b.epsilons);
    for (double e : b.epsilons)
      if (!(e > 0.0 && e < 1.0)) fail(w + ".epsilons", "must lie in (0,1)");
    b.opts.eta_tol = positive(get(n, "eta_tol", w, b.opts.eta_tol), w + ".eta_tol");
    b.opts.a_tol = positive(get(n, "a_tol", w, b.opts.a_tol), w + ".a_tol");
    b.opts.a_max_factor = get(n, "a_max_factor", w, b.opts.a_max_factor);
    if (!(b.opts.a_max_factor > 1.0)) fail(w + ".a_max_factor", "must exceed 1");
    b.operator_check = get(n, "operator_check", w, b.operator_check);
    b.op.t = positive(get(n, "t", w, b.op.t), w + ".t");
    b.op.samples = get(n, "samples", w, b.op.samples);
    b.checks = parse_checks(n, w);
  }
  if (const YAML::Node n = ex["homogeneous"]) {
    const std::string w = "experiments.homogeneous";
    allow_keys(n, w, {"grid", "x_lo", "fit_lo", "fit_hi", "checks"});
    auto& b = s.homogeneous;
    b.grid = block_grid(n, w, s.grid);
    b.opts.x_lo = get(n, "x_lo", w, b.opts.x_lo);
    b.opts.fit_lo = get(n, "fit_lo", w, b.opts.fit_lo);
    b.opts.fit_hi = get(n, "fit_hi", w, b.opts.fit_hi);
    if (!(0.0 < b.opts.fit_lo && b.opts.fit_lo < b.opts.fit_hi && b.opts.fit_hi <= 1.0))
      fail(w, "need 0 < fit_lo < fit_hi <= 1");
    b.checks = parse_checks(n, w);
  }
}

}  // namespace

FragmentationKernel kernel_preset(const std::string& spec) {
  static const std::regex call(R"(\s*(\w+)\s*\(\s*([-+0-9.eE]+)\s*\)\s*)");
  std::smatch m;
  if (spec == "mitosis") return FragmentationKernel::mitosis();
  if (spec == "uniform") return FragmentationKernel::uniform();
  if (std::regex_match(spec, m, call)) {
    const double nu = std::stod(m[2]);
    if (m[1] == "asymmetric") return FragmentationKernel::asymmetric(nu);
    if (m[1] == "powerlaw") return FragmentationKernel::power_law(nu);
  }
  fail("coefficients.kernel", "unknown preset '" + spec + "'");
}

GridPtr make_grid(const GridSpec& spec, const CoefficientSet& coeffs) {
  return build_grid(spec.length, spec.cells, spec.layout, &coeffs.tau);
}

Scenario parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    fail("config", e.what());
  }
  allow_keys(root, "config", {"name", "coefficients", "grid", "solver", "output", "seed",
                              "hypothesis_override", "experiments"});
  Scenario s;
  s.source = text;
  s.name = get<std::string>(root, "name", "config", "scenario");
  const YAML::Node c = root["coefficients"];
  if (!c) fail("config", "missing 'coefficients'");
  allow_keys(c, "coefficients", {"tau", "rate", "kernel"});
  if (!c["tau"] || !c["rate"] || !c["kernel"])
    fail("coefficients", "need tau, rate and kernel");
  try {
    s.coeffs = CoefficientSet{parse_tau(c["tau"]), parse_rate(c["rate"]),
                              parse_kernel(c["kernel"])};
  } catch (const YAML::Exception& e) {
    fail("coefficients", e.what());
  }
  if (root["grid"]) s.grid = parse_grid(root["grid"], "grid");
  if (const YAML::Node n = root["solver"]) {
    allow_keys(n, "solver", {"tol", "inner_tol", "max_outer", "max_inner"});
    s.perron.tol = positive(get(n, "tol", "solver", s.perron.tol), "solver.tol");
    s.perron.inner_tol =
        positive(get(n, "inner_tol", "solver", s.perron.inner_tol), "solver.inner_tol");
    s.perron.max_outer = get(n, "max_outer", "solver", s.perron.max_outer);
    s.perron.max_inner = get(n, "max_inner", "solver", s.perron.max_inner);
    if (s.perron.max_outer < 1 || s.perron.max_inner < 1)
      fail("solver", "iteration limits must be positive");
  }
  if (const YAML::Node n = root["output"]) {
    allow_keys(n, "output", {"dir"});
    s.out_dir = get<std::string>(n, "dir", "output", s.out_dir);
  }
  s.seed = get<uint64_t>(root, "seed", "config", s.seed);
  s.hypothesis_override = get(root, "hypothesis_override", "config", false);
  s.calibrate.opts.perron = s.perron;
  if (root["experiments"]) {
    try {
      parse_experiments(root["experiments"], s);
    } catch (const YAML::Exception& e) {
      fail("experiments", e.what());
    }
  }
  s.calibrate.op.seed = s.seed;
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return parse_scenario(os.str());
}

}  // namespace gfrag::cli
