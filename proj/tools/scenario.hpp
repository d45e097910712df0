#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gfrag/experiments.hpp"

namespace gfrag::cli {

struct GridSpec {
  double length = 30.0;
  int cells = 1024;
  LayoutSpec layout{Layout::kUniform};
};

// A declared check on a named summary metric. Either bound may be absent.
struct CheckSpec {
  std::string metric;
  std::optional<double> min;
  std::optional<double> max;
};

struct EigenBlock {
  double fit_lo = 0.0;   // 0: 0.3 L
  double fit_hi = 0.0;   // 0: 0.7 L
  bool export_matrices = false;
  bool brackets = false;
  std::vector<CheckSpec> checks;
};

struct EvolveBlock {
  std::optional<GridSpec> grid;
  double t_end = 10.0;
  double dt = 0.0;
  int record_every = 1;
  int fields = 1;          // random initial fields; 0 uses g_a
  double a = 4.0;
  double support = 5.0;    // random fields live on [0, support]
  bool keep_fields = false;
  std::vector<CheckSpec> checks;
};

struct DysonBlock {
  std::optional<GridSpec> grid;
  double t = 2.0;
  int n_max = 24;
  int lattice_steps = 0;
  bool richardson = true;
  double support = 5.0;
  std::vector<CheckSpec> checks;
};

struct SlowconvBlock {
  std::optional<GridSpec> grid;
  SlowConvergenceOptions opts;
  std::vector<CheckSpec> checks;
};

struct GapBlock {
  std::vector<double> r_values = {0.0};
  GapOptions opts;
  std::vector<CheckSpec> checks;
};

struct CalibrateBlock {
  std::optional<GridSpec> grid;
  std::vector<double> epsilons = {0.2, 0.1, 0.05};
  CalibrationOptions opts;
  bool operator_check = true;
  OperatorConvergenceOptions op;
  std::vector<CheckSpec> checks;
};

struct HomogeneousBlock {
  std::optional<GridSpec> grid;
  HomogeneousOptions opts;
  std::vector<CheckSpec> checks;
};

struct Scenario {
  std::string name;
  std::string source;      // raw config text, hashed into summaries
  CoefficientSet coeffs{GrowthRate::constant(1.0), FragmentationRate::constant(1.0),
                        FragmentationKernel::mitosis()};
  GridSpec grid;
  PerronOptions perron;
  bool hypothesis_override = false;
  std::string out_dir = "out";
  uint64_t seed = 1;
  EigenBlock eigen;
  EvolveBlock evolve;
  DysonBlock dyson;
  SlowconvBlock slowconv;
  GapBlock gap;
  CalibrateBlock calibrate;
  HomogeneousBlock homogeneous;
};

// Throws Error(kConfig) on malformed input.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

// "mitosis", "uniform", "asymmetric(nu)", "powerlaw(nu)".
FragmentationKernel kernel_preset(const std::string& spec);

GridPtr make_grid(const GridSpec& spec, const CoefficientSet& coeffs);

}  // namespace gfrag::cli
