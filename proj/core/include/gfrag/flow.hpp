#pragma once

#include <vector>

#include "gfrag/model.hpp"

namespace gfrag {

// Characteristic geometry of X' = tau(X) with a decay rate along paths.
// Travel time s(x) = int_0^x 1/tau and beta(x) = int_0^x decay/tau are closed
// form for power-law tau and piecewise power decay.
class Flow {
 public:
  Flow(GrowthRate tau, std::vector<PowerTerm> decay);

  const GrowthRate& tau() const { return tau_; }
  const std::vector<PowerTerm>& decay_terms() const { return decay_; }
  const std::vector<double>& breaks() const { return breaks_; }

  double s(double x) const { return tau_.travel_time(x); }
  double x_at(double s) const { return tau_.position_at(s); }
  double beta(double x) const;
  // beta(b) - beta(a) without cancellation.
  double beta_between(double a, double b) const;
  double decay(double x) const { return evaluate_terms(decay_, x); }

  // True when tau and the decay are both constant on (xa, xb).
  bool constant_on(double xa, double xb, double* value) const;
  // Breakpoints strictly inside (xa, xb), with xa and xb at the ends.
  std::vector<double> split(double xa, double xb) const;

 private:
  GrowthRate tau_;
  std::vector<PowerTerm> decay_;
  std::vector<double> breaks_;
};

// Flow with decay B; extra terms are added to the decay only.
Flow make_flow(const CoefficientSet& coeffs,
               const std::vector<PowerTerm>& extra = {});

}  // namespace gfrag
