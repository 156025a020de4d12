#pragma once

// Scalar LQG control with an information budget on the state observation.
//
//   X' = a X + b U + W,  W ~ N(0, sigma2),  c(x,u) = p x^2 + q u^2.
//
// Two Gaussian stationary policies are built from Riccati-type roots: Phi_1
// from the information-constrained root m1(R), Phi_2 from the standard DARE
// root m2 (certainty-equivalent gain, noisy sensor). Both carry exactly R nats
// per step in steady state; min(lambda1, lambda2) upper-bounds the optimal cost.

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace infoctrl::lqg {

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The closed loop of the requested controller has no finite stationary variance.
class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LqgParams {
  double a = 0.0;
  double b = 0.0;
  double sigma2 = 0.0;
  double p = 0.0;
  double q = 0.0;

  void validate() const {
    if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(sigma2) || !std::isfinite(p) || !std::isfinite(q))
      throw ParameterError("LqgParams: parameters must be finite");
    if (b == 0.0) throw ParameterError("LqgParams: b must be nonzero");
    if (!(sigma2 > 0.0)) throw ParameterError("LqgParams: sigma2 must be positive");
    if (!(p > 0.0) || !(q > 0.0)) throw ParameterError("LqgParams: p and q must be positive");
  }
};

inline double gain(const LqgParams& prm, double m) { return -m * prm.a * prm.b / (prm.q + m * prm.b * prm.b); }

/// F(m) = p + m a^2 + (m a b)^2 (e^{-2R} - 1) / (q + m b^2); the IC-DARE is F(m) = m.
inline double ic_dare_map(const LqgParams& prm, double rate, double m) {
  const double mab = m * prm.a * prm.b;
  return prm.p + m * prm.a * prm.a + mab * mab * std::expm1(-2.0 * rate) / (prm.q + m * prm.b * prm.b);
}

/// p + m(a^2 - 1) - (m a b)^2 / (q + m b^2).
inline double dare_residual(const LqgParams& prm, double m) {
  const double mab = m * prm.a * prm.b;
  return prm.p + m * (prm.a * prm.a - 1.0) - mab * mab / (prm.q + m * prm.b * prm.b);
}

/// Positive root of the standard DARE, in closed form.
inline double solve_dare(const LqgParams& prm) {
  prm.validate();
  // b^2 m^2 - (p b^2 + q (a^2 - 1)) m - p q = 0
  const double b2 = prm.b * prm.b;
  const double lin = prm.p * b2 + prm.q * (prm.a * prm.a - 1.0);
  const double disc = std::sqrt(lin * lin + 4.0 * b2 * prm.p * prm.q);
  // Pick the cancellation-free form of the positive root.
  return lin >= 0.0 ? (lin + disc) / (2.0 * b2) : (2.0 * prm.p * prm.q) / (disc - lin);
}

/// Unique positive root m1 of F(m) = m, by bisection on F(m) - m.
///
/// F is increasing and concave on m > -q/b^2 with F(0) = p > 0, so a root
/// exists exactly when F(m) - m eventually turns negative, i.e. a^2 e^{-2R} < 1.
inline double solve_ic_dare(const LqgParams& prm, double rate) {
  prm.validate();
  if (!(rate >= 0.0)) throw ParameterError("solve_ic_dare: rate must be >= 0");
  if (prm.a * prm.a * std::exp(-2.0 * rate) >= 1.0)
    throw ParameterError("solve_ic_dare: no positive root when a^2 exp(-2R) >= 1");
  auto g = [&](double m) { return ic_dare_map(prm, rate, m) - m; };
  double lo = 0.0;
  double hi = std::max(1.0, prm.p + prm.q / (prm.b * prm.b));
  if (prm.a * prm.a < 1.0) hi = std::max(hi, prm.p / (1.0 - prm.a * prm.a) + prm.q / (prm.b * prm.b));
  while (g(hi) >= 0.0) {
    lo = hi;
    hi *= 2.0;
    if (!std::isfinite(hi)) throw ParameterError("solve_ic_dare: failed to bracket the root");
  }
  while (true) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return std::abs(g(lo)) <= std::abs(g(hi)) ? lo : hi;
}

/// e^{-2R} a^2 + (1 - e^{-2R})(a + b k)^2.
inline double closed_loop_coefficient(const LqgParams& prm, double rate, double k) {
  const double e = std::exp(-2.0 * rate);
  const double acl = prm.a + prm.b * k;
  return e * prm.a * prm.a + (1.0 - e) * acl * acl;
}

struct LqgDesign {
  double rate = 0.0;
  double m1 = std::numeric_limits<double>::quiet_NaN();
  double m2 = 0.0;
  double k1 = std::numeric_limits<double>::quiet_NaN();
  double k2 = 0.0;
  double s1sq = std::numeric_limits<double>::quiet_NaN();
  double s2sq = 0.0;
  /// Achieved average cost of Phi_1: m1 sigma2.
  double lambda1 = std::numeric_limits<double>::quiet_NaN();
  /// Achieved average cost of Phi_2: m2 sigma2 + (q + m2 b^2) k2^2 s2sq e^{-2R}.
  double lambda2 = 0.0;
  /// Upper bound on the optimal cost, min over the feasible controllers.
  double bound = 0.0;
  /// False only in the open-loop-unstable regime when Phi_1 is unavailable.
  bool phi1_feasible = true;
};

/// Closed-form design of both controllers at rate R.
///
/// Stable plants (a^2 < 1) always yield both. For a^2 >= 1 only Phi_2 is
/// guaranteed meaningful; an InstabilityError is raised when its closed loop
/// has no stationary variance.
inline LqgDesign design(const LqgParams& prm, double rate) {
  prm.validate();
  if (!(rate >= 0.0)) throw ParameterError("design: rate must be >= 0");
  LqgDesign d;
  d.rate = rate;
  const double e = std::exp(-2.0 * rate);
  d.m2 = solve_dare(prm);
  d.k2 = gain(prm, d.m2);
  const double rho2 = closed_loop_coefficient(prm, rate, d.k2);
  if (!(rho2 < 1.0))
    throw InstabilityError("design: closed loop of Phi_2 is unstable at R=" + std::to_string(rate) +
                           " (coefficient " + std::to_string(rho2) + ")");
  d.s2sq = prm.sigma2 / (1.0 - rho2);
  d.lambda2 = d.m2 * prm.sigma2 + (prm.q + d.m2 * prm.b * prm.b) * d.k2 * d.k2 * d.s2sq * e;
  d.bound = d.lambda2;

  d.phi1_feasible = false;
  if (prm.a * prm.a * e < 1.0) {
    d.m1 = solve_ic_dare(prm, rate);
    d.k1 = gain(prm, d.m1);
    const double rho1 = closed_loop_coefficient(prm, rate, d.k1);
    if (rho1 < 1.0) {
      d.s1sq = prm.sigma2 / (1.0 - rho1);
      d.lambda1 = d.m1 * prm.sigma2;
      d.bound = std::min(d.lambda1, d.lambda2);
      d.phi1_feasible = true;
    }
  }
  if (prm.a * prm.a < 1.0 && !d.phi1_feasible)
    throw InstabilityError("design: Phi_1 unexpectedly unstable for a stable plant");
  return d;
}

/// U = k [ g X + e^{-R} sqrt(1 - e^{-2R}) V ],  V ~ N(0, sensor_var), g = 1 - e^{-2R}.
struct GaussianPolicy {
  int which = 0;
  double rate = 0.0;
  double mean_gain = 0.0;        ///< (1 - e^{-2R}) k
  double noise_var = 0.0;        ///< (1 - e^{-2R}) e^{-2R} k^2 sigma_i^2
  double sensor_gain = 0.0;      ///< 1 - e^{-2R}
  double sensor_noise_var = 0.0; ///< e^{-2R} (1 - e^{-2R}) sigma_i^2
  double actuator_gain = 0.0;    ///< k
  double state_var = 0.0;        ///< sigma_i^2, variance of V and of the invariant law

  /// Conditional mean and variance of U given X = x, via the cascade.
  double cascade_mean(double x) const { return actuator_gain * sensor_gain * x; }
  double cascade_var() const { return actuator_gain * actuator_gain * sensor_noise_var; }
};

inline GaussianPolicy controller(const LqgParams& prm, double rate, int which) {
  if (which != 1 && which != 2) throw ParameterError("controller: which must be 1 or 2");
  const LqgDesign d = design(prm, rate);
  if (which == 1 && !d.phi1_feasible) throw InstabilityError("controller: Phi_1 is not available at this rate");
  const double e = std::exp(-2.0 * rate);
  const double g = -std::expm1(-2.0 * rate);
  const double k = which == 1 ? d.k1 : d.k2;
  const double v = which == 1 ? d.s1sq : d.s2sq;
  GaussianPolicy pol;
  pol.which = which;
  pol.rate = rate;
  pol.mean_gain = g * k;
  pol.noise_var = g * e * k * k * v;
  pol.sensor_gain = g;
  pol.sensor_noise_var = e * g * v;
  pol.actuator_gain = k;
  pol.state_var = v;
  return pol;
}

/// Smallest rate above which Phi_2 stabilizes an open-loop-unstable plant:
/// (1/2) ln[(a^2 - (a + b k2)^2) / (1 - (a + b k2)^2)].
inline double min_stabilizing_rate(const LqgParams& prm) {
  prm.validate();
  if (!(prm.a * prm.a > 1.0)) throw ParameterError("min_stabilizing_rate: requires a^2 > 1");
  const double k2 = gain(prm, solve_dare(prm));
  const double acl2 = (prm.a + prm.b * k2) * (prm.a + prm.b * k2);
  if (acl2 >= 1.0) throw ParameterError("min_stabilizing_rate: the full-information closed loop is unstable");
  return 0.5 * std::log((prm.a * prm.a - acl2) / (1.0 - acl2));
}

struct AcoeCheck {
  double lhs = 0.0;  ///< <pi, h> + lambda
  double rhs = 0.0;  ///< D_pi(R; c + Qh) by the Gaussian reduction
  double difference() const { return lhs - rhs; }
};

enum class Grouping { kInformationConstrained, kCertaintyEquivalent };

/// Gaussian distortion-rate evaluation of D_pi(R; c + Qh) for h(x) = m x^2 and
/// pi = N(0, upsilon), in either of its two algebraically equal groupings.
inline double gaussian_bellman_rhs(const LqgParams& prm, double rate, double m, double upsilon, Grouping grouping) {
  const double e = std::exp(-2.0 * rate);
  const double mab = m * prm.a * prm.b;
  const double denom = prm.q + m * prm.b * prm.b;
  if (grouping == Grouping::kInformationConstrained) {
    const double coeff = prm.p + m * (prm.a * prm.a - 1.0) + mab * mab * std::expm1(-2.0 * rate) / denom;
    return m * prm.sigma2 + coeff * upsilon + m * upsilon;
  }
  const double k = gain(prm, m);
  return m * prm.sigma2 + dare_residual(prm, m) * upsilon + denom * k * k * upsilon * e + m * upsilon;
}

/// Check <pi_i, h_i> + lambda_i = D_{pi_i}(R; c + Q h_i) for controller i.
inline AcoeCheck verify_ic_acoe(const LqgParams& prm, double rate, int which) {
  if (which != 1 && which != 2) throw ParameterError("verify_ic_acoe: which must be 1 or 2");
  const LqgDesign d = design(prm, rate);
  if (which == 1) {
    if (!d.phi1_feasible) throw InstabilityError("verify_ic_acoe: Phi_1 is not available at this rate");
    return {d.m1 * d.s1sq + d.lambda1,
            gaussian_bellman_rhs(prm, rate, d.m1, d.s1sq, Grouping::kInformationConstrained)};
  }
  return {d.m2 * d.s2sq + d.lambda2, gaussian_bellman_rhs(prm, rate, d.m2, d.s2sq, Grouping::kCertaintyEquivalent)};
}

}  // namespace infoctrl::lqg
