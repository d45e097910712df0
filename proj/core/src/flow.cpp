#include "gfrag/flow.hpp"

#include <algorithm>
#include <cmath>

#include "gfrag/errors.hpp"

namespace gfrag {

Flow::Flow(GrowthRate tau, std::vector<PowerTerm> decay)
    : tau_(tau), decay_(std::move(decay)) {
  if (!(tau_.alpha() < 1.0))
    throw Error(ErrorCode::kFlowFailure,
                "backward characteristics never reach 0 (alpha >= 1)");
  for (const auto& t : decay_) {
    if (t.lo > 0.0) breaks_.push_back(t.lo);
    if (std::isfinite(t.hi)) breaks_.push_back(t.hi);
  }
  std::sort(breaks_.begin(), breaks_.end());
  breaks_.erase(std::unique(breaks_.begin(), breaks_.end()), breaks_.end());
}

double Flow::beta(double x) const { return integrate_over_tau(decay_, tau_, x); }

double Flow::beta_between(double a, double b) const {
  double total = 0.0;
  const double alpha = tau_.alpha();
  for (const auto& t : decay_) {
    const double lo = std::max(a, t.lo), hi = std::min(b, t.hi);
    if (hi <= lo) continue;
    const double e = t.m - alpha + 1.0;
    double v;
    if (e == 1.0) {
      v = hi - lo;
    } else if (lo == 0.0) {
      v = e > 0.0 ? std::pow(hi, e) / e : kInf;
    } else {
      const double llo = std::log(lo), lhi = std::log(hi);
      v = e == 0.0 ? lhi - llo
                   : std::exp(e * llo) * std::expm1(e * (lhi - llo)) / e;
    }
    total += t.c / tau_.tau_inf() * v;
  }
  return total;
}

bool Flow::constant_on(double xa, double xb, double* value) const {
  if (!tau_.is_constant()) return false;
  auto it = std::upper_bound(breaks_.begin(), breaks_.end(), xa);
  if (it != breaks_.end() && *it < xb) return false;
  const double mid = 0.5 * (xa + xb);
  double v = 0.0;
  for (const auto& t : decay_) {
    if (mid < t.lo || mid >= t.hi) continue;
    if (t.m != 0.0) return false;
    v += t.c;
  }
  *value = v;
  return true;
}

std::vector<double> Flow::split(double xa, double xb) const {
  std::vector<double> pts = {xa};
  for (auto it = std::upper_bound(breaks_.begin(), breaks_.end(), xa);
       it != breaks_.end() && *it < xb; ++it)
    pts.push_back(*it);
  pts.push_back(xb);
  return pts;
}

Flow make_flow(const CoefficientSet& coeffs,
               const std::vector<PowerTerm>& extra) {
  std::vector<PowerTerm> d = coeffs.rate.terms();
  d.insert(d.end(), extra.begin(), extra.end());
  return Flow(coeffs.tau, std::move(d));
}

}  // namespace gfrag
