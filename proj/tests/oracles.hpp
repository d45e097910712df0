#pragma once

// Hand-derived reference values and brute-force checks used as independent
// oracles. Nothing here calls into the library.

#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

// sum_{n > n_max} x^n / n! by direct summation of the series.
inline double exp_tail(double x, int n_max) {
  double term = 1.0, head = 1.0;
  for (int n = 1; n <= n_max; ++n) {
    term *= x / n;
    head += term;
  }
  return std::exp(x) - head;
}

// int_0^c |log z|^-2 dz, the first moment of a unit log piece on (0, c).
// With u = -log z it is e^-u0 / u0 - E1(u0), u0 = -log c.
inline double log_piece_first_moment(double c) {
  const double u0 = -std::log(c);
  const double e1 = -std::expint(-u0);
  return std::exp(-u0) / u0 - e1;
}

// Composite Simpson on [a, b] with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// Cell averages of x -> f(x) on the given edges by Simpson per cell.
inline std::vector<double> cell_average(const std::function<double(double)>& f,
                                        const std::vector<double>& edges, int n = 64) {
  std::vector<double> out(edges.size() - 1);
  for (size_t i = 0; i + 1 < edges.size(); ++i)
    out[i] = simpson(f, edges[i], edges[i + 1], n) / (edges[i + 1] - edges[i]);
  return out;
}

// Uniform kernel moment 2/(k+1).
inline double uniform_moment(double k) { return 2.0 / (k + 1.0); }

}  // namespace oracle
