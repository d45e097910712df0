#include "gfrag/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gfrag/errors.hpp"

namespace gfrag {

namespace {

// int_lo^hi z^e1 dz with e1 = e - 1, i.e. (hi^e - lo^e) / e.
double power_integral(double lo, double hi, double e) {
  if (lo == 0.0) {
    if (e <= 0.0) return kInf;
    return std::pow(hi, e) / e;
  }
  const double llo = std::log(lo), lhi = std::log(hi);
  if (std::abs(e * (lhi - llo)) < 1e-300) return lhi - llo;
  return std::exp(e * llo) * std::expm1(e * (lhi - llo)) / e;
}

// int_A^C exp(-r u) u^-2 du, 0 < A < C <= inf.
double log_piece_integral(double a, double c, double r) {
  if (r == 0.0) return 1.0 / a - (std::isinf(c) ? 0.0 : 1.0 / c);
  if (std::isinf(c)) {
    if (r < 0.0) return kInf;
    return std::exp(-r * a) / a + r * std::expint(-r * a);
  }
  return std::exp(-r * a) / a - std::exp(-r * c) / c -
         r * (std::expint(-r * c) - std::expint(-r * a));
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(ErrorCode::kConfig, msg);
}

}  // namespace

FragmentationKernel::FragmentationKernel(std::vector<Atom> atoms,
                                         std::vector<PowerPiece> pieces,
                                         std::vector<LogPiece> log_pieces)
    : atoms_(std::move(atoms)),
      pieces_(std::move(pieces)),
      log_pieces_(std::move(log_pieces)) {
  require(!atoms_.empty() || has_density(), "kernel is empty");
  for (const auto& a : atoms_) {
    require(a.z > 0.0 && a.z < 1.0, "atom location outside (0,1)");
    require(a.w > 0.0, "atom weight must be positive");
  }
  for (const auto& p : pieces_) {
    require(p.z_lo >= 0.0 && p.z_lo < p.z_hi && p.z_hi <= 1.0,
            "density piece support must satisfy 0 <= z_lo < z_hi <= 1");
    require(p.p > 0.0, "density coefficient must be positive");
  }
  for (const auto& p : log_pieces_) {
    require(p.z_lo >= 0.0 && p.z_lo < p.z_hi && p.z_hi < 1.0,
            "log piece support must satisfy 0 <= z_lo < z_hi < 1");
    require(p.p > 0.0, "log piece coefficient must be positive");
  }
  const double m1 = moment(1.0);
  require(std::abs(m1 - 1.0) <= 1e-12,
          "kernel first moment is " + std::to_string(m1) + ", expected 1");
}

FragmentationKernel FragmentationKernel::mitosis() {
  return FragmentationKernel({{0.5, 2.0}}, {});
}

FragmentationKernel FragmentationKernel::uniform() {
  return FragmentationKernel({}, {{0.0, 2.0, 0.0, 1.0}});
}

FragmentationKernel FragmentationKernel::asymmetric(double nu) {
  require(nu > 0.0 && nu < 0.5, "asymmetric split needs 0 < nu < 1/2");
  return FragmentationKernel({{nu, 1.0}, {1.0 - nu, 1.0}}, {});
}

FragmentationKernel FragmentationKernel::power_law(double nu) {
  require(nu > -1.0, "power law kernel needs nu > -1");
  return FragmentationKernel({}, {{nu, nu + 2.0, 0.0, 1.0}});
}

double FragmentationKernel::moment(double r) const {
  double total = 0.0;
  for (const auto& a : atoms_) total += a.w * std::pow(a.z, r);
  return total + density_moment(0.0, 1.0, r);
}

double FragmentationKernel::density_moment(double za, double zb,
                                           double r) const {
  double total = 0.0;
  for (const auto& p : pieces_) {
    const double lo = std::max(za, p.z_lo), hi = std::min(zb, p.z_hi);
    if (hi <= lo) continue;
    total += p.p * power_integral(lo, hi, p.nu + r + 1.0);
  }
  for (const auto& p : log_pieces_) {
    const double lo = std::max(za, p.z_lo), hi = std::min(zb, p.z_hi);
    if (hi <= lo) continue;
    const double u_small = -std::log(hi);
    const double u_large = lo == 0.0 ? kInf : -std::log(lo);
    total += p.p * log_piece_integral(u_small, u_large, r);
  }
  return total;
}

double FragmentationKernel::infimum_support() const {
  double z0 = 1.0;
  for (const auto& a : atoms_) z0 = std::min(z0, a.z);
  for (const auto& p : pieces_) z0 = std::min(z0, p.z_lo);
  for (const auto& p : log_pieces_) z0 = std::min(z0, p.z_lo);
  return z0;
}

double FragmentationKernel::r_lower() const {
  double r = -kInf;
  for (const auto& p : pieces_)
    if (p.z_lo == 0.0) r = std::max(r, -(p.nu + 1.0));
  for (const auto& p : log_pieces_)
    if (p.z_lo == 0.0) r = std::max(r, 0.0);
  return r;
}

double FragmentationKernel::limit_at_r_lower() const {
  const double rl = r_lower();
  if (std::isinf(rl)) return kInf;
  for (const auto& p : pieces_)
    if (p.z_lo == 0.0 && -(p.nu + 1.0) == rl) return kInf;
  // Only log pieces attain r_lower; their moments stay bounded there.
  return moment(rl);
}

std::vector<double> FragmentationKernel::density_breaks() const {
  std::vector<double> b;
  for (const auto& p : pieces_) {
    b.push_back(p.z_lo);
    b.push_back(p.z_hi);
  }
  for (const auto& p : log_pieces_) {
    b.push_back(p.z_lo);
    b.push_back(p.z_hi);
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

std::string FragmentationKernel::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "atoms[";
  for (const auto& a : atoms_) os << "(" << a.z << "," << a.w << ")";
  os << "] pieces[";
  for (const auto& p : pieces_)
    os << "(" << p.nu << "," << p.p << "," << p.z_lo << "," << p.z_hi << ")";
  os << "] log[";
  for (const auto& p : log_pieces_)
    os << "(" << p.p << "," << p.z_lo << "," << p.z_hi << ")";
  os << "]";
  return os.str();
}

double moment(const FragmentationKernel& kernel, double r) {
  return kernel.moment(r);
}

double infimum_support(const FragmentationKernel& kernel) {
  return kernel.infimum_support();
}

double solve_k(const FragmentationKernel& kernel, double lambda,
               double b_inf) {
  if (!(lambda > 0.0) || !(b_inf > 0.0))
    throw Error(ErrorCode::kTargetOutOfRange, "need lambda > 0, B_inf > 0");
  const double target = 1.0 + lambda / b_inf;
  double hi = 1.0;
  double lo;
  const double rl = kernel.r_lower();
  if (std::isinf(rl)) {
    lo = 0.0;
    int guard = 0;
    while (kernel.moment(lo) <= target) {
      lo = 2.0 * lo - 1.0;
      if (++guard > 60)
        throw Error(ErrorCode::kTargetOutOfRange, "moment map never reaches target");
    }
  } else {
    const double lim = kernel.limit_at_r_lower();
    if (lim <= target) {
      std::ostringstream os;
      os << "target " << target << " not below lim moment " << lim
         << " at r_lower " << rl;
      throw Error(ErrorCode::kTargetOutOfRange, os.str());
    }
    double delta = std::min(1.0, (hi - rl) / 2.0);
    int guard = 0;
    while (!(kernel.moment(rl + delta) > target)) {
      delta /= 2.0;
      if (++guard > 1000)
        throw Error(ErrorCode::kTargetOutOfRange, "cannot bracket target");
    }
    lo = rl + delta;
  }
  // moment(lo) > target > moment(hi)
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    const double m = kernel.moment(mid);
    if (m > target) lo = mid; else hi = mid;
  }
  const double mlo = kernel.moment(lo) - target;
  const double mhi = kernel.moment(hi) - target;
  return std::abs(mlo) < std::abs(mhi) ? lo : hi;
}

double truncation_mass(const FragmentationKernel& kernel, double eps) {
  double rho = kernel.density_moment(eps, 1.0, 1.0);
  for (const auto& a : kernel.atoms())
    if (a.z >= eps) rho += a.w * a.z;
  return rho;
}

FragmentationKernel truncate_kernel(const FragmentationKernel& kernel,
                                    double eps) {
  if (!(eps > 0.0 && eps < 1.0))
    throw Error(ErrorCode::kEmptyTruncation, "eps must lie in (0,1)");
  const double rho = truncation_mass(kernel, eps);
  if (!(rho > 0.0))
    throw Error(ErrorCode::kEmptyTruncation, "no kernel mass on [eps,1]");
  std::vector<Atom> atoms;
  for (const auto& a : kernel.atoms())
    if (a.z >= eps) atoms.push_back({a.z, a.w / rho});
  std::vector<PowerPiece> pieces;
  for (const auto& p : kernel.pieces()) {
    const double lo = std::max(p.z_lo, eps);
    if (lo < p.z_hi) pieces.push_back({p.nu, p.p / rho, lo, p.z_hi});
  }
  std::vector<LogPiece> logs;
  for (const auto& p : kernel.log_pieces()) {
    const double lo = std::max(p.z_lo, eps);
    if (lo < p.z_hi) logs.push_back({p.p / rho, lo, p.z_hi});
  }
  return FragmentationKernel(std::move(atoms), std::move(pieces),
                             std::move(logs));
}

double evaluate_terms(const std::vector<PowerTerm>& terms, double x) {
  double v = 0.0;
  for (const auto& t : terms)
    if (x >= t.lo && x < t.hi) v += t.m == 0.0 ? t.c : t.c * std::pow(x, t.m);
  return v;
}

GrowthRate GrowthRate::power_law(double tau_inf, double alpha) {
  require(tau_inf > 0.0, "tau_inf must be positive");
  require(std::isfinite(alpha), "alpha must be finite");
  return GrowthRate(tau_inf, alpha);
}

double GrowthRate::operator()(double x) const {
  return alpha_ == 0.0 ? tau_inf_ : tau_inf_ * std::pow(x, alpha_);
}

double GrowthRate::travel_time(double x) const {
  if (alpha_ >= 1.0) return kInf;
  if (alpha_ == 0.0) return x / tau_inf_;
  const double e = 1.0 - alpha_;
  return std::pow(x, e) / (e * tau_inf_);
}

double GrowthRate::position_at(double s) const {
  if (alpha_ == 0.0) return s * tau_inf_;
  if (s <= 0.0) return 0.0;
  const double e = 1.0 - alpha_;
  return std::pow(e * tau_inf_ * s, 1.0 / e);
}

FragmentationRate FragmentationRate::constant(double b_inf, double a0) {
  require(b_inf >= 0.0, "B_inf must be nonnegative");
  require(a0 > 0.0, "A0 must be positive");
  FragmentationRate r;
  r.kind_ = Kind::kConstant;
  r.b_inf_ = b_inf;
  r.a0_ = a0;
  r.terms_ = {{0.0, kInf, b_inf, 0.0}};
  return r;
}

FragmentationRate FragmentationRate::plateau(std::vector<ProfilePoint> profile) {
  require(profile.size() >= 2, "plateau profile needs at least two points");
  require(profile.front().x == 0.0, "plateau profile must start at x = 0");
  for (size_t k = 0; k + 1 < profile.size(); ++k)
    require(profile[k + 1].x > profile[k].x, "profile x must increase");
  for (const auto& p : profile) require(p.b >= 0.0, "profile values must be >= 0");
  FragmentationRate r;
  r.kind_ = Kind::kPlateau;
  r.b_inf_ = profile.back().b;
  r.a0_ = profile.back().x;
  require(r.b_inf_ > 0.0, "plateau value must be positive");
  for (size_t k = 0; k + 1 < profile.size(); ++k) {
    const auto& p = profile[k];
    const auto& q = profile[k + 1];
    const double slope = (q.b - p.b) / (q.x - p.x);
    const double c0 = p.b - slope * p.x;
    if (c0 != 0.0) r.terms_.push_back({p.x, q.x, c0, 0.0});
    if (slope != 0.0) r.terms_.push_back({p.x, q.x, slope, 1.0});
  }
  r.terms_.push_back({r.a0_, kInf, r.b_inf_, 0.0});
  return r;
}

FragmentationRate FragmentationRate::power_law(double b_inf, double gamma,
                                               double x_cap) {
  require(b_inf > 0.0, "B_inf must be positive");
  require(x_cap > 0.0, "power law rate needs a positive cap point");
  FragmentationRate r;
  r.kind_ = Kind::kPowerLaw;
  r.b_inf_ = b_inf;
  r.gamma_ = gamma;
  r.a0_ = x_cap;
  r.terms_ = {{0.0, x_cap, b_inf * std::pow(x_cap, gamma), 0.0},
              {x_cap, kInf, b_inf, gamma}};
  return r;
}

FragmentationRate FragmentationRate::with_modifier(double eta, double a) const {
  require(!has_modifier_, "rate already carries a modifier");
  require(eta > -b_inf_, "modifier needs eta > -B_inf");
  require(a >= a0_, "modifier start must be >= A0");
  FragmentationRate r = *this;
  r.has_modifier_ = true;
  r.eta_ = eta;
  r.modifier_a_ = a;
  if (eta != 0.0) r.terms_.push_back({a, kInf, eta, 0.0});
  return r;
}

std::vector<double> FragmentationRate::breakpoints() const {
  std::vector<double> b;
  for (const auto& t : terms_) {
    if (t.lo > 0.0) b.push_back(t.lo);
    if (std::isfinite(t.hi)) b.push_back(t.hi);
  }
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

namespace {

// Values at the breakpoints, just past them, and far out; enough to bound
// piecewise monotone power terms.
std::vector<double> rate_samples(const FragmentationRate& r) {
  std::vector<double> xs = {0.0};
  for (double b : r.breakpoints()) {
    xs.push_back(b);
    xs.push_back(std::nextafter(b, 0.0));
  }
  return xs;
}

}  // namespace

double FragmentationRate::sup_norm() const {
  if (kind_ == Kind::kPowerLaw && gamma_ > 0.0) return kInf;
  double s = 0.0;
  for (double x : rate_samples(*this)) s = std::max(s, std::abs((*this)(x)));
  return std::max(s, std::abs(b_inf_ + eta_));
}

double FragmentationRate::inf_value() const {
  double s = kInf;
  for (double x : rate_samples(*this)) s = std::min(s, (*this)(x));
  if (kind_ == Kind::kPowerLaw && gamma_ < 0.0) s = std::min(s, 0.0);
  return std::min(s, b_inf_ + eta_);
}

double integrate_over_tau(const std::vector<PowerTerm>& terms,
                          const GrowthRate& tau, double x) {
  double total = 0.0;
  const double alpha = tau.alpha();
  for (const auto& t : terms) {
    const double hi = std::min(x, t.hi);
    if (hi <= t.lo) continue;
    total += t.c / tau.tau_inf() * power_integral(t.lo, hi, t.m - alpha + 1.0);
  }
  return total;
}

double average_terms(const std::vector<PowerTerm>& terms, double a, double b) {
  if (!(b > a)) return evaluate_terms(terms, a);
  double total = 0.0;
  for (const auto& t : terms) {
    const double lo = std::max(a, t.lo), hi = std::min(b, t.hi);
    if (hi <= lo) continue;
    total += t.c * power_integral(lo, hi, t.m + 1.0);
  }
  return total / (b - a);
}

double capital_lambda(const CoefficientSet& coeffs, double lambda, double x) {
  const auto& tau = coeffs.tau;
  const double ds = tau.travel_time(x) - tau.travel_time(1.0);
  const auto& terms = coeffs.rate.terms();
  const double db = integrate_over_tau(terms, tau, x) -
                    integrate_over_tau(terms, tau, 1.0);
  return lambda * ds + db;
}

bool HypothesisReport::passed() const {
  return std::all_of(clauses.begin(), clauses.end(),
                     [](const HypothesisClause& c) { return c.passed; });
}

bool HypothesisReport::group_passed(const std::string& group) const {
  for (const auto& c : clauses)
    if (c.group == group && !c.passed) return false;
  return true;
}

std::string HypothesisReport::failures() const {
  std::string s;
  for (const auto& c : clauses) {
    if (c.passed) continue;
    if (!s.empty()) s += "; ";
    s += "(" + c.group + ") " + c.name + ": " + c.detail;
  }
  return s;
}

HypothesisReport validate_hypotheses(const CoefficientSet& coeffs) {
  HypothesisReport rep;
  auto add = [&](const char* group, const char* name, bool ok,
                 std::string detail) {
    rep.clauses.push_back({group, name, ok, std::move(detail)});
  };

  const double alpha = coeffs.tau.alpha();
  add("Htau", "positive", coeffs.tau.tau_inf() > 0.0, "tau_inf > 0");
  add("Htau", "tau0", alpha < 1.0,
      alpha < 1.0 ? "1/tau locally integrable"
                  : "1/tau not integrable at 0 (alpha >= 1)");
  add("Htau", "tau_infty", alpha < 1.0,
      "growth exponent alpha = " + std::to_string(alpha) + " must be < 1");

  const auto& rate = coeffs.rate;
  const double sup = rate.sup_norm();
  add("HB", "nonnegative", rate.inf_value() >= 0.0, "B >= 0");
  add("HB", "bounded", std::isfinite(sup), "B essentially bounded");
  {
    // Once positive, B stays positive: zero set is an initial interval.
    bool connected = true;
    bool seen_positive = false;
    std::vector<double> xs = {0.0};
    for (double b : rate.breakpoints()) {
      xs.push_back(std::nextafter(b, 0.0));
      xs.push_back(b);
    }
    for (size_t k = 0; k < xs.size(); ++k) {
      const double v = rate(xs[k]);
      if (v > 0.0) seen_positive = true;
      else if (seen_positive) connected = false;
    }
    add("HB", "connected_support", connected, "support of B is an interval");
  }
  const bool plateau = rate.kind() != FragmentationRate::Kind::kPowerLaw ||
                       rate.gamma() == 0.0;
  add("HB", "B_infty", plateau && rate.b_infinity() + rate.eta() > 0.0,
      plateau ? "B constant beyond A0" : "B has no plateau (gamma != 0)");

  const auto& k = coeffs.kernel;
  const double m1 = k.moment(1.0);
  add("Hwp", "mass_cons", std::abs(m1 - 1.0) <= 1e-12,
      "first moment " + std::to_string(m1));
  add("Hwp", "finite", std::isfinite(k.moment(0.0)), "finite total number");
  const double lim = k.limit_at_r_lower();
  add("Hwp", "wpr_lim", std::isinf(lim),
      std::isinf(lim) ? "moments blow up at r_lower"
                      : "moments stay bounded (" + std::to_string(lim) +
                            ") at r_lower");
  return rep;
}

}  // namespace gfrag
