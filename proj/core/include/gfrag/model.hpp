#pragma once

#include <limits>
#include <string>
#include <vector>

namespace gfrag {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Point mass w at fragment fraction z.
struct Atom {
  double z = 0.0;
  double w = 0.0;
};

// Density p * z^nu on (z_lo, z_hi).
struct PowerPiece {
  double nu = 0.0;
  double p = 0.0;
  double z_lo = 0.0;
  double z_hi = 1.0;
};

// Density p * z^-1 * |log z|^-2 on (z_lo, z_hi), z_hi < 1. Finite mass near
// zero without the moment blow-up: the standard pathological example.
struct LogPiece {
  double p = 0.0;
  double z_lo = 0.0;
  double z_hi = 0.5;
};

// Fragment distribution measure on (0,1) with unit first moment.
class FragmentationKernel {
 public:
  FragmentationKernel(std::vector<Atom> atoms, std::vector<PowerPiece> pieces,
                      std::vector<LogPiece> log_pieces = {});

  static FragmentationKernel mitosis();
  static FragmentationKernel uniform();
  static FragmentationKernel asymmetric(double nu);
  static FragmentationKernel power_law(double nu);

  const std::vector<Atom>& atoms() const { return atoms_; }
  const std::vector<PowerPiece>& pieces() const { return pieces_; }
  const std::vector<LogPiece>& log_pieces() const { return log_pieces_; }
  bool has_density() const { return !pieces_.empty() || !log_pieces_.empty(); }

  // r-th moment; +inf when divergent.
  double moment(double r) const;
  // r-th moment of the absolutely continuous part restricted to (za, zb).
  double density_moment(double za, double zb, double r) const;
  double infimum_support() const;
  // inf{r : moment(r) finite}; -inf when the support stays away from 0.
  double r_lower() const;
  // lim of moment(r) as r decreases to r_lower().
  double limit_at_r_lower() const;
  // Sorted endpoints of all density pieces.
  std::vector<double> density_breaks() const;

  std::string describe() const;

 private:
  std::vector<Atom> atoms_;
  std::vector<PowerPiece> pieces_;
  std::vector<LogPiece> log_pieces_;
};

double moment(const FragmentationKernel& kernel, double r);
double infimum_support(const FragmentationKernel& kernel);
// Unique k with moment(k) = 1 + lambda / b_inf.
double solve_k(const FragmentationKernel& kernel, double lambda, double b_inf);
// int_eps^1 z kernel(dz)
double truncation_mass(const FragmentationKernel& kernel, double eps);
FragmentationKernel truncate_kernel(const FragmentationKernel& kernel,
                                    double eps);

// c * x^m on [lo, hi).
struct PowerTerm {
  double lo = 0.0;
  double hi = kInf;
  double c = 0.0;
  double m = 0.0;
};

double evaluate_terms(const std::vector<PowerTerm>& terms, double x);

// tau(x) = tau_inf * x^alpha.
class GrowthRate {
 public:
  static GrowthRate power_law(double tau_inf, double alpha);
  static GrowthRate constant(double value) { return power_law(value, 0.0); }

  double operator()(double x) const;
  double tau_inf() const { return tau_inf_; }
  double alpha() const { return alpha_; }
  bool is_constant() const { return alpha_ == 0.0; }

  // int_0^x dy / tau(y)
  double travel_time(double x) const;
  // Inverse of travel_time.
  double position_at(double s) const;

 private:
  GrowthRate(double tau_inf, double alpha) : tau_inf_(tau_inf), alpha_(alpha) {}
  double tau_inf_;
  double alpha_;
};

struct ProfilePoint {
  double x = 0.0;
  double b = 0.0;
};

class FragmentationRate {
 public:
  enum class Kind { kConstant, kPlateau, kPowerLaw };

  static FragmentationRate constant(double b_inf, double a0 = 1.0);
  // Piecewise linear through the profile points, b_inf from the last point on.
  static FragmentationRate plateau(std::vector<ProfilePoint> profile);
  // b_inf * x^gamma beyond x_cap, frozen at the x_cap value below it.
  static FragmentationRate power_law(double b_inf, double gamma, double x_cap);

  // Adds eta * 1[x >= a].
  FragmentationRate with_modifier(double eta, double a) const;

  double operator()(double x) const { return evaluate_terms(terms_, x); }
  const std::vector<PowerTerm>& terms() const { return terms_; }
  Kind kind() const { return kind_; }
  double b_infinity() const { return b_inf_; }
  double a0() const { return a0_; }
  double gamma() const { return gamma_; }
  bool has_modifier() const { return has_modifier_; }
  double eta() const { return eta_; }
  double modifier_start() const { return modifier_a_; }

  double sup_norm() const;
  double inf_value() const;
  std::vector<double> breakpoints() const;

 private:
  FragmentationRate() = default;
  Kind kind_ = Kind::kConstant;
  std::vector<PowerTerm> terms_;
  double b_inf_ = 0.0;
  double a0_ = 1.0;
  double gamma_ = 0.0;
  bool has_modifier_ = false;
  double eta_ = 0.0;
  double modifier_a_ = 0.0;
};

// int_0^x f(y) / tau(y) dy for f given as power terms; +inf if divergent.
double integrate_over_tau(const std::vector<PowerTerm>& terms,
                          const GrowthRate& tau, double x);

// Mean of the terms over [a, b].
double average_terms(const std::vector<PowerTerm>& terms, double a, double b);

struct CoefficientSet {
  GrowthRate tau;
  FragmentationRate rate;
  FragmentationKernel kernel;
};

// Lambda(x) = int_1^x (lambda + B) / tau.
double capital_lambda(const CoefficientSet& coeffs, double lambda, double x);

struct HypothesisClause {
  std::string group;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct HypothesisReport {
  std::vector<HypothesisClause> clauses;
  bool passed() const;
  bool group_passed(const std::string& group) const;
  std::string failures() const;
};

HypothesisReport validate_hypotheses(const CoefficientSet& coeffs);

}  // namespace gfrag
