#include "gfrag/discretization.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gfrag/errors.hpp"

namespace gfrag {

const char* layout_name(Layout layout) {
  switch (layout) {
    case Layout::kUniform: return "uniform";
    case Layout::kGeometric: return "geometric";
    case Layout::kCharacteristic: return "characteristic";
    case Layout::kGraded: return "graded";
  }
  return "?";
}

Grid::Grid(std::vector<double> edges, Layout layout)
    : edges_(std::move(edges)), layout_(layout) {
  if (edges_.size() < 2 || edges_.front() != 0.0)
    throw Error(ErrorCode::kBadLayout, "grid must start at 0 with >= 1 cell");
  for (size_t i = 0; i + 1 < edges_.size(); ++i) {
    if (!(edges_[i + 1] > edges_[i]))
      throw Error(ErrorCode::kBadLayout, "grid edges must increase strictly");
    centers_.push_back(0.5 * (edges_[i] + edges_[i + 1]));
    widths_.push_back(edges_[i + 1] - edges_[i]);
  }
}

Vec Grid::width_vector() const {
  return Eigen::Map<const Vec>(widths_.data(), widths_.size());
}

size_t Grid::locate(double x) const {
  auto it = std::upper_bound(edges_.begin(), edges_.end(), x);
  if (it == edges_.begin()) return 0;
  const size_t i = static_cast<size_t>(it - edges_.begin()) - 1;
  return std::min(i, size() - 1);
}

bool Grid::is_prefix_of(const Grid& other) const {
  if (other.edges_.size() < edges_.size()) return false;
  return std::equal(edges_.begin(), edges_.end(), other.edges_.begin());
}

namespace {

double geometric_ratio_for(double length, int cells, double first) {
  const double target = length / first;
  auto sum = [cells](double r) {
    return std::abs(r - 1.0) < 1e-14 ? cells
                                     : (std::pow(r, cells) - 1.0) / (r - 1.0);
  };
  double lo = 1.0, hi = 2.0;
  while (sum(hi) < target) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sum(mid) < target) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

GridPtr build_grid(double length, int cells, const LayoutSpec& layout,
                   const GrowthRate* tau) {
  if (!(length > 0.0) || !std::isfinite(length))
    throw Error(ErrorCode::kBadLayout, "domain length must be positive");
  if (layout.kind == Layout::kGraded) {
    const double h = layout.first_width, end = layout.fine_end;
    if (!(h > 0.0) || !(end >= h) || !(layout.ratio >= 1.0))
      throw Error(ErrorCode::kBadLayout,
                  "graded layout needs first_width > 0, fine_end >= first_width, "
                  "ratio >= 1");
    std::vector<double> e = {0.0};
    const long fine = std::lround(std::min(end, length) / h);
    for (long i = 1; i <= fine; ++i) e.push_back(i * h);
    double w = h;
    while (e.back() < length) {
      w *= layout.ratio;
      e.push_back(e.back() + w);
    }
    // Merge a sliver last cell into its neighbour.
    if (e.size() > 2 && e[e.size() - 2] > length - 0.5 * w) e.pop_back();
    e.back() = length;
    if (e.size() < 3) throw Error(ErrorCode::kBadLayout, "need at least 2 cells");
    return std::make_shared<const Grid>(std::move(e), layout.kind);
  }
  if (cells < 2) throw Error(ErrorCode::kBadLayout, "need at least 2 cells");
  std::vector<double> e(cells + 1);
  e[0] = 0.0;
  switch (layout.kind) {
    case Layout::kUniform:
      for (int i = 1; i <= cells; ++i) e[i] = length * i / cells;
      break;
    case Layout::kGeometric: {
      double r = layout.ratio;
      if (r == 0.0) {
        const double first =
            layout.first_width > 0.0 ? layout.first_width : 1e-3 * length;
        r = first * cells >= length ? 1.0
                                    : geometric_ratio_for(length, cells, first);
      }
      if (!(r > 0.0)) throw Error(ErrorCode::kBadLayout, "ratio must be > 0");
      if (r == 1.0) {
        for (int i = 1; i <= cells; ++i) e[i] = length * i / cells;
        break;
      }
      const double w = length * (r - 1.0) / (std::pow(r, cells) - 1.0);
      double width = w;
      for (int i = 1; i <= cells; ++i) {
        e[i] = e[i - 1] + width;
        width *= r;
      }
      break;
    }
    case Layout::kCharacteristic: {
      if (tau == nullptr)
        throw Error(ErrorCode::kBadLayout, "characteristic layout needs tau");
      const double total = tau->travel_time(length);
      if (!std::isfinite(total))
        throw Error(ErrorCode::kBadLayout, "infinite travel time to L");
      for (int i = 1; i <= cells; ++i)
        e[i] = tau->position_at(total * i / cells);
      break;
    }
    case Layout::kGraded:
      break;
  }
  e[cells] = length;
  return std::make_shared<const Grid>(std::move(e), layout.kind);
}

GridPtr uniform_grid(double length, int cells) {
  return build_grid(length, cells, {Layout::kUniform});
}

WeightVector phi_weight(const Vec& phi) {
  return {phi, WeightKind::kPhi, 0.0};
}

WeightVector psi_weight(const Grid& grid, double r) {
  Vec w(grid.size());
  for (size_t i = 0; i < grid.size(); ++i)
    w[i] = 1.0 + std::pow(grid.center(i), r);
  return {w, WeightKind::kPsi, r};
}

double weighted_norm(const Grid& grid, const Vec& v, const Vec& w) {
  double s = 0.0;
  for (size_t i = 0; i < grid.size(); ++i)
    s += std::abs(v[i]) * w[i] * grid.width(i);
  return s;
}

double weighted_norm(const DiscreteField& f, const WeightVector& w) {
  return weighted_norm(*f.grid, f.values, w.values);
}

double bracket(const Grid& grid, const Vec& v, const Vec& w) {
  double s = 0.0;
  for (size_t i = 0; i < grid.size(); ++i) s += v[i] * w[i] * grid.width(i);
  return s;
}

double bracket(const DiscreteField& f, const WeightVector& w) {
  return bracket(*f.grid, f.values, w.values);
}

double integral(const Grid& grid, const Vec& v) {
  double s = 0.0;
  for (size_t i = 0; i < grid.size(); ++i) s += v[i] * grid.width(i);
  return s;
}

Vec indicator(const Grid& grid, double a, double b) {
  Vec v = Vec::Zero(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    const double lo = std::max(a, grid.edge(i));
    const double hi = std::min(b, grid.edge(i + 1));
    if (hi > lo) v[i] = (hi - lo) / grid.width(i);
  }
  return v;
}

SparseMatrix assemble_transport(const Grid& grid, const CoefficientSet& coeffs,
                                double lambda) {
  const size_t n = grid.size();
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(2 * n);
  for (size_t i = 0; i < n; ++i) {
    const double dx = grid.width(i);
    const double out = coeffs.tau(grid.edge(i + 1)) / dx;
    t.emplace_back(i, i, -out - lambda - coeffs.rate(grid.center(i)));
    if (i > 0) t.emplace_back(i, i - 1, coeffs.tau(grid.edge(i)) / dx);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

namespace {

class Depositor {
 public:
  explicit Depositor(const Grid& grid) : grid_(grid) {}

  // Splits number n at position y between the two bracketing centers.
  void deposit(size_t col, double y, double n) {
    const auto& c = grid_.centers();
    if (y <= c.front()) {
      add(0, col, n);
      return;
    }
    const size_t k = static_cast<size_t>(
        std::upper_bound(c.begin(), c.end(), y) - c.begin() - 1);
    if (k + 1 >= c.size()) {
      add(c.size() - 1, col, n);
      return;
    }
    const double theta = (y - c[k]) / (c[k + 1] - c[k]);
    if (theta < 1.0) add(k, col, (1.0 - theta) * n);
    if (theta > 0.0) add(k + 1, col, theta * n);
  }

  std::vector<Eigen::Triplet<double>>& triplets() { return t_; }

 private:
  void add(size_t row, size_t col, double n) {
    t_.emplace_back(row, col, n / grid_.width(row));
  }
  const Grid& grid_;
  std::vector<Eigen::Triplet<double>> t_;
};

}  // namespace

SparseMatrix assemble_frag_gain(const Grid& grid, const CoefficientSet& coeffs) {
  const size_t n = grid.size();
  const auto& kernel = coeffs.kernel;
  const auto& c = grid.centers();
  const std::vector<double> piece_breaks = kernel.density_breaks();
  Depositor dep(grid);
  std::vector<double> zb;
  for (size_t j = 0; j < n; ++j) {
    const double xj = c[j];
    // Cell mean of B, so the gain matches the loss taken along characteristics.
    const double bj = average_terms(coeffs.rate.terms(), grid.edge(j), grid.edge(j + 1));
    if (bj == 0.0) continue;
    const double scale = bj * grid.width(j);
    for (const auto& a : kernel.atoms()) dep.deposit(j, a.z * xj, a.w * scale);
    if (!kernel.has_density()) continue;
    // Subintervals in z whose images lie between consecutive centers, so the
    // linear split of each piece equals the split at its centroid.
    zb.assign(piece_breaks.begin(), piece_breaks.end());
    for (size_t k = 0; k < j; ++k) zb.push_back(c[k] / xj);
    zb.push_back(0.0);
    zb.push_back(1.0);
    std::sort(zb.begin(), zb.end());
    zb.erase(std::unique(zb.begin(), zb.end()), zb.end());
    for (size_t k = 0; k + 1 < zb.size(); ++k) {
      const double z1 = zb[k], z2 = zb[k + 1];
      const double num = kernel.density_moment(z1, z2, 0.0);
      if (!(num > 0.0)) continue;
      const double mass = kernel.density_moment(z1, z2, 1.0);
      dep.deposit(j, xj * mass / num, num * scale);
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(dep.triplets().begin(), dep.triplets().end());
  m.makeCompressed();
  return m;
}

double weighted_column_norm(const Grid& grid, const SparseMatrix& m,
                            const Vec& w, size_t max_cols) {
  std::vector<double> col(m.cols(), 0.0);
  for (int i = 0; i < m.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(m, i); it; ++it)
      col[it.col()] += std::abs(it.value()) * w[i] * grid.width(i);
  double best = 0.0;
  for (size_t j = 0; j < std::min(col.size(), max_cols); ++j)
    best = std::max(best, col[j] / (w[j] * grid.width(j)));
  return best;
}

double weighted_column_norm(const Grid& grid, const Eigen::MatrixXd& m,
                            const Vec& w) {
  double best = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      s += std::abs(m(i, j)) * w[i] * grid.width(i);
    best = std::max(best, s / (w[j] * grid.width(j)));
  }
  return best;
}

void write_coo(std::ostream& os, const SparseMatrix& m) {
  os.precision(17);
  os << "% rows cols nnz\n" << m.rows() << " " << m.cols() << " "
     << m.nonZeros() << "\n";
  for (int i = 0; i < m.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(m, i); it; ++it)
      os << it.row() << " " << it.col() << " " << it.value() << "\n";
}

void write_grid_csv(std::ostream& os, const Grid& grid) {
  os.precision(17);
  os << "index,left,center,right,width\r\n";
  for (size_t i = 0; i < grid.size(); ++i)
    os << i << "," << grid.edge(i) << "," << grid.center(i) << ","
       << grid.edge(i + 1) << "," << grid.width(i) << "\r\n";
}

}  // namespace gfrag
