#pragma once

#include <vector>

namespace gfrag {

struct GaussRule {
  std::vector<double> nodes;    // on [0,1]
  std::vector<double> weights;  // sum to 1
};

// n-point Gauss-Legendre rule mapped to [0,1]; cached per n.
const GaussRule& gauss_legendre(int n);

// Integrate f over [a,b] with the n-point rule.
template <class F>
double gauss_integrate(const F& f, double a, double b, int n) {
  const GaussRule& g = gauss_legendre(n);
  const double h = b - a;
  double s = 0.0;
  for (size_t k = 0; k < g.nodes.size(); ++k)
    s += g.weights[k] * f(a + h * g.nodes[k]);
  return s * h;
}

}  // namespace gfrag
