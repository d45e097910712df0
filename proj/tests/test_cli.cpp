#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "commands.hpp"
#include "gfrag/errors.hpp"
#include "report.hpp"
#include "scenario.hpp"

using namespace gfrag;
using namespace gfrag::cli;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"(name: small
coefficients:
  tau: 1
  rate: 1
  kernel: mitosis
grid: {length: 12, cells: 192}
seed: 4
experiments:
  eigen:
    checks:
      - {metric: lambda, expect: 1, tol: 1.0e-2}
  evolve:
    t_end: 1
    fields: 3
    support: 3
)";

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("gfrag-cli-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  s.replace(s.find(from), from.size(), to);
  return s;
}

}  // namespace

TEST_CASE("csv escaping") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_escape("two\nlines") == "\"two\nlines\"");

  CsvTable t({"x", "name"});
  t.add({0.1, std::string("a,b")});
  t.add({(long long)3, std::string("c")});
  CHECK(t.str() == "x,name\r\n0.1,\"a,b\"\r\n3,c\r\n");
}

TEST_CASE("number formatting round trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5}) {
    const std::string s = format_number(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("config hash") {
  CHECK(hex64(fnv1a64("")) == "cbf29ce484222325");
  CHECK(hex64(fnv1a64("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("scenario parsing") {
  const Scenario s = parse_scenario(kSmall);
  CHECK(s.name == "small");
  CHECK(s.grid.cells == 192);
  CHECK(s.seed == 4);
  CHECK(s.evolve.fields == 3);
  REQUIRE(s.eigen.checks.size() == 1);
  CHECK(*s.eigen.checks[0].min == doctest::Approx(0.99));

  CHECK(kernel_preset("asymmetric(0.25)").atoms().size() == 2);
  CHECK(kernel_preset("powerlaw(2)").pieces()[0].nu == 2.0);

  auto config_error = [](const std::string& text) {
    try {
      parse_scenario(text);
    } catch (const Error& e) {
      return e.code() == ErrorCode::kConfig;
    }
    return false;
  };
  CHECK(config_error(replace(kSmall, "seed: 4", "seed: 4\nunknown_key: 1")));
  CHECK(config_error(replace(kSmall, "kernel: mitosis", "kernel: trisection")));
  CHECK(config_error(replace(kSmall, "cells: 192", "cells: -3")));
  CHECK(config_error(replace(kSmall, "t_end: 1", "t_end: soon")));
  CHECK(config_error("name: [unterminated"));
}

TEST_CASE("run writes deterministic artifacts") {
  TempDir tmp;
  const fs::path cfg = tmp.write("small.cfg", kSmall);
  std::ostringstream log;
  RunOptions o;
  o.out_dir = (tmp.path / "a").string();
  RunResult r1 = run(cfg.string(), "evolve", o, log);
  REQUIRE(r1.exit_code == kExitOk);
  o.out_dir = (tmp.path / "b").string();
  o.jobs = 2;
  RunResult r2 = run(cfg.string(), "evolve", o, log);
  REQUIRE(r2.exit_code == kExitOk);
  for (const char* f : {"evolve.csv", "evolve.json"}) {
    const std::string a = slurp(tmp.path / "a" / "small" / f);
    CHECK(!a.empty());
    CHECK(a == slurp(tmp.path / "b" / "small" / f));
  }
  CHECK(fs::exists(tmp.path / "a" / "small" / "evolve.meta.json"));
  CHECK(slurp(tmp.path / "a" / "small" / "evolve.json").find(hex64(fnv1a64(kSmall))) !=
        std::string::npos);

  SUBCASE("seed changes the fields") {
    o.out_dir = (tmp.path / "c").string();
    o.seed = 99;
    REQUIRE(run(cfg.string(), "evolve", o, log).exit_code == kExitOk);
    CHECK(slurp(tmp.path / "c" / "small" / "evolve.csv") !=
          slurp(tmp.path / "a" / "small" / "evolve.csv"));
  }
}

TEST_CASE("output directory from the environment") {
  TempDir tmp;
  const fs::path cfg = tmp.write("small.cfg", kSmall);
  ::setenv("GFSPEC_OUT", (tmp.path / "env").c_str(), 1);
  std::ostringstream log;
  const RunResult r = run(cfg.string(), "eigen", RunOptions{}, log);
  ::unsetenv("GFSPEC_OUT");
  CHECK(r.exit_code == kExitOk);
  CHECK(fs::exists(tmp.path / "env" / "small" / "eigen.csv"));
  CHECK(fs::exists(tmp.path / "env" / "small" / "eigen.json"));
}

TEST_CASE("exit codes") {
  TempDir tmp;
  std::ostringstream log;
  RunOptions o;
  o.out_dir = (tmp.path / "out").string();

  SUBCASE("hypothesis failure") {
    const fs::path cfg = tmp.write(
        "bad.cfg", replace(kSmall, "tau: 1", "tau: {kind: powerlaw, tau_inf: 1, alpha: 1.5}"));
    const RunResult r = run(cfg.string(), "validate", o, log);
    CHECK(r.exit_code == kExitConfig);
    CHECK(r.message.find("Htau") != std::string::npos);
    CHECK(run(cfg.string(), "eigen", o, log).exit_code == kExitConfig);
  }
  SUBCASE("failing check") {
    const fs::path cfg = tmp.write("tight.cfg", replace(kSmall, "tol: 1.0e-2}",
                                                         "tol: 1.0e-2}\n      - {metric: G_mass, max: 0.5}"));
    CHECK(run(cfg.string(), "eigen", o, log).exit_code == kExitCheckFailed);
  }
  SUBCASE("unknown metric") {
    const fs::path cfg = tmp.write("typo.cfg", replace(kSmall, "metric: lambda", "metric: lamda"));
    CHECK(run(cfg.string(), "eigen", o, log).exit_code == kExitConfig);
  }
  SUBCASE("missing file") {
    CHECK(run((tmp.path / "nope.cfg").string(), "eigen", o, log).exit_code == kExitConfig);
  }
  SUBCASE("mapping") {
    CHECK(exit_code_for(ErrorCode::kConfig) == kExitConfig);
    CHECK(exit_code_for(ErrorCode::kNoConvergence) == kExitNumerical);
    CHECK(exit_code_for(ErrorCode::kQuadratureUnstable) == kExitNumerical);
  }
}

TEST_CASE("shipped scenarios parse") {
  for (const auto& e : fs::directory_iterator(GFRAG_SCENARIO_DIR)) {
    if (e.path().extension() != ".cfg") continue;
    CAPTURE(e.path().string());
    const Scenario s = load_scenario(e.path().string());
    CHECK(!s.name.empty());
    CHECK(e.path().stem().string() == s.name);
  }
}

TEST_CASE("svg plot") {
  const std::string svg = svg_plot({"t", "x", "y", false, true},
                                   {{"s", {1.0, 2.0, 3.0}, {1.0, 0.1, -1.0}}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
}
