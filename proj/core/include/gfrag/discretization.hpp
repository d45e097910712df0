#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "gfrag/model.hpp"

namespace gfrag {

using Vec = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Layout { kUniform, kGeometric, kCharacteristic, kGraded };

const char* layout_name(Layout layout);

struct LayoutSpec {
  Layout kind = Layout::kGeometric;
  // Geometric: ratio of consecutive widths; 0 picks the ratio that makes the
  // first cell 1e-3 * L (or first_width when set).
  double ratio = 0.0;
  double first_width = 0.0;
  // Graded: cells of first_width up to fine_end, then widths growing by ratio
  // (the cell count follows from L).
  double fine_end = 0.0;
};

class Grid {
 public:
  Grid(std::vector<double> edges, Layout layout);

  size_t size() const { return widths_.size(); }
  double length() const { return edges_.back(); }
  Layout layout() const { return layout_; }
  const std::vector<double>& edges() const { return edges_; }
  const std::vector<double>& centers() const { return centers_; }
  const std::vector<double>& widths() const { return widths_; }
  double edge(size_t i) const { return edges_[i]; }
  double center(size_t i) const { return centers_[i]; }
  double width(size_t i) const { return widths_[i]; }
  Vec width_vector() const;

  // Cell index containing x, clamped to [0, size-1].
  size_t locate(double x) const;
  // True when this grid's edges are the leading edges of other.
  bool is_prefix_of(const Grid& other) const;

 private:
  std::vector<double> edges_;
  std::vector<double> centers_;
  std::vector<double> widths_;
  Layout layout_;
};

using GridPtr = std::shared_ptr<const Grid>;

// tau is required for the characteristic layout (cells of equal travel time).
// The graded layout ignores cells.
GridPtr build_grid(double length, int cells, const LayoutSpec& layout,
                   const GrowthRate* tau = nullptr);
GridPtr uniform_grid(double length, int cells);

struct DiscreteField {
  GridPtr grid;
  Vec values;
};

enum class WeightKind { kPhi, kPsi, kCustom };

struct WeightVector {
  Vec values;
  WeightKind kind = WeightKind::kCustom;
  double r = 0.0;
};

WeightVector phi_weight(const Vec& phi);
// 1 + x^r sampled at cell centers.
WeightVector psi_weight(const Grid& grid, double r);

// sum |v_i| w_i dx_i
double weighted_norm(const Grid& grid, const Vec& v, const Vec& w);
double weighted_norm(const DiscreteField& f, const WeightVector& w);
// sum v_i w_i dx_i
double bracket(const Grid& grid, const Vec& v, const Vec& w);
double bracket(const DiscreteField& f, const WeightVector& w);
// sum v_i dx_i
double integral(const Grid& grid, const Vec& v);
// Cell averages of the indicator of [a, b].
Vec indicator(const Grid& grid, double a, double b);

// Upwind matrix for -(tau g)' - (lambda + B) g with zero inflow at 0.
SparseMatrix assemble_transport(const Grid& grid, const CoefficientSet& coeffs,
                                double lambda);
// Fragmentation gain in source form with conservative two-center splitting.
SparseMatrix assemble_frag_gain(const Grid& grid, const CoefficientSet& coeffs);

// max_j sum_i |M_ij| w_i dx_i / (w_j dx_j): operator norm on weighted L1.
// Columns at or beyond max_cols are ignored.
double weighted_column_norm(const Grid& grid, const SparseMatrix& m,
                            const Vec& w, size_t max_cols = SIZE_MAX);
double weighted_column_norm(const Grid& grid, const Eigen::MatrixXd& m,
                            const Vec& w);

void write_coo(std::ostream& os, const SparseMatrix& m);
void write_grid_csv(std::ostream& os, const Grid& grid);

}  // namespace gfrag
