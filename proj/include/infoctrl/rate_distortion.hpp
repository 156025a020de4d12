#pragma once

// Shannon distortion-rate function of a finite source.
//
// For a source mu on X and a distortion c(x,u), D_mu(R) is the least expected
// distortion over kernels X -> U carrying at most R nats. Points on the curve
// are parameterized by the slope parameter s >= 0 (the curve's tangent at the
// point has slope -s) and computed by Blahut-Arimoto alternating minimization.

#include "infoctrl/prob_core.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace infoctrl {

/// Source distribution plus distortion matrix c(x,u) (|X| x |U|).
class DistortionSpec {
 public:
  DistortionSpec(FiniteDistribution mu, Matrix cost, Labels action_atoms)
      : mu_(std::move(mu)), cost_(std::move(cost)), actions_(std::move(action_atoms)) {
    if (static_cast<std::size_t>(cost_.rows()) != mu_.size() ||
        static_cast<std::size_t>(cost_.cols()) != actions_.size())
      throw DimensionError("DistortionSpec: cost matrix must be |X| x |U|");
    if (actions_.empty()) throw ValidationError("DistortionSpec: empty action alphabet");
    if (!cost_.allFinite()) throw ValidationError("DistortionSpec: cost entries must be finite");
  }

  const FiniteDistribution& mu() const noexcept { return mu_; }
  const Matrix& cost() const noexcept { return cost_; }
  const Labels& action_atoms() const noexcept { return actions_; }
  std::size_t states() const noexcept { return mu_.size(); }
  std::size_t actions() const noexcept { return actions_.size(); }

 private:
  FiniteDistribution mu_;
  Matrix cost_;
  Labels actions_;
};

/// One point of the distortion-rate curve with its certificates.
struct DrfSolution {
  double rate = 0.0;        ///< nats
  double distortion = 0.0;  ///< cost units
  double s = 0.0;           ///< slope parameter, cost per nat (may be +inf at R = 0)
  StochasticKernel phi;
  FiniteDistribution output_marginal;
  double dual_value = 0.0;  ///< Lagrange dual evaluated at (s, output_marginal)
  std::size_t iterations = 0;
  /// Lagrangian s D(mu(x)Phi || mu(x)nu) + <mu(x)Phi, c> per Blahut-Arimoto step.
  std::vector<double> lagrangian_history;

  double dual_gap() const { return distortion - dual_value; }
};

struct BlahutArimotoOptions {
  std::size_t max_iter = 100000;
  double lagrangian_tol = 1e-12;
  /// Also required: sup-norm change of the output marginal between sweeps.
  double marginal_tol = 1e-14;
};

struct RateSearchOptions {
  double rate_tol = 1e-6;
  /// Bisection keeps going until the achieved rate is this close, if it can.
  double target_tol = 1e-12;
  std::size_t max_bisections = 200;
  std::size_t max_bracket_steps = 200;
  BlahutArimotoOptions ba{};
};

/// Rate search used when recomputing a certificate. Solutions sitting just
/// below the zero-rate slope need far more sweeps than a cold solve.
inline RateSearchOptions certificate_search_options() {
  RateSearchOptions o;
  o.ba.max_iter = 10'000'000;
  return o;
}

class BlahutArimotoNonConvergence : public std::runtime_error {
 public:
  BlahutArimotoNonConvergence(const std::string& what, DrfSolution last)
      : std::runtime_error(what), last_iterate(std::move(last)) {}
  DrfSolution last_iterate;
};

class RateBracketError : public std::runtime_error {
 public:
  RateBracketError(const std::string& what, std::vector<std::pair<double, double>> scanned)
      : std::runtime_error(what), scanned_s_rate(std::move(scanned)) {}
  std::vector<std::pair<double, double>> scanned_s_rate;
};

namespace detail {

/// Row-wise tilt: phi(u|x) = nu(u) exp(-c(x,u)/s) / Z(x). Writes log Z into `log_z`.
inline Matrix tilt(const Matrix& cost, const Vector& nu, double s, Vector& log_z) {
  const Eigen::Index nx = cost.rows();
  const Eigen::Index nu_n = cost.cols();
  Matrix phi(nx, nu_n);
  log_z.resize(nx);
  Vector log_nu(nu_n);
  for (Eigen::Index u = 0; u < nu_n; ++u)
    log_nu[u] = nu[u] > 0.0 ? std::log(nu[u]) : -std::numeric_limits<double>::infinity();
  Vector logits(nu_n);
  for (Eigen::Index x = 0; x < nx; ++x) {
    for (Eigen::Index u = 0; u < nu_n; ++u) logits[u] = log_nu[u] - cost(x, u) / s;
    const double lz = log_sum_exp(logits);
    log_z[x] = lz;
    for (Eigen::Index u = 0; u < nu_n; ++u) phi(x, u) = std::exp(logits[u] - lz);
    phi.row(x) /= phi.row(x).sum();
  }
  return phi;
}

inline double expected_cost(const Vector& mu, const Matrix& phi, const Matrix& cost) {
  return (mu.asDiagonal() * phi).cwiseProduct(cost).sum();
}

/// Lowest-index minimizer of each row.
inline std::vector<std::size_t> row_argmin(const Matrix& cost) {
  std::vector<std::size_t> best(static_cast<std::size_t>(cost.rows()), 0);
  for (Eigen::Index x = 0; x < cost.rows(); ++x) {
    Eigen::Index arg = 0;
    for (Eigen::Index u = 1; u < cost.cols(); ++u)
      if (cost(x, u) < cost(x, arg)) arg = u;
    best[static_cast<std::size_t>(x)] = static_cast<std::size_t>(arg);
  }
  return best;
}

inline double dual_value(const Vector& mu, const Matrix& cost, double s, const Vector& nu, double rate) {
  if (s == 0.0) {
    double acc = 0.0;
    for (Eigen::Index x = 0; x < cost.rows(); ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index u = 0; u < cost.cols(); ++u)
        if (nu[u] > 0.0) best = std::min(best, cost(x, u));
      acc += mu[x] * best;
    }
    return acc;
  }
  if (std::isinf(s)) {
    if (rate > 0.0) return -std::numeric_limits<double>::infinity();
    return mu.dot(cost * nu);
  }
  Vector log_z;
  (void)tilt(cost, nu, s, log_z);
  return s * (-mu.dot(log_z) - rate);
}

}  // namespace detail

/// Lower-bound functional s[<mu, ln 1/sum_u exp(-c/s) nu(u)> - R]. It bounds
/// D_mu(R) from below when nu minimizes it for the given s (in particular at
/// a Blahut-Arimoto fixed point). s = 0 evaluates the Laplace limit.
inline double drf_dual_value(const DistortionSpec& spec, double s, const FiniteDistribution& nu, double rate) {
  detail::require_same_atoms(nu.atoms(), spec.action_atoms(), "drf_dual_value");
  if (s < 0.0 || std::isnan(s)) throw std::invalid_argument("drf_dual_value: s must be >= 0");
  return detail::dual_value(spec.mu().probs(), spec.cost(), s, nu.probs(), rate);
}

/// Blahut-Arimoto iteration at slope parameter s, started from uniform rows.
inline DrfSolution blahut_arimoto(const DistortionSpec& spec, double s, const BlahutArimotoOptions& opts = {}) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("blahut_arimoto: s must be positive and finite");
  const Vector& mu = spec.mu().probs();
  const Matrix& cost = spec.cost();
  const auto nx = static_cast<Eigen::Index>(spec.states());
  const auto nu_n = static_cast<Eigen::Index>(spec.actions());

  Matrix phi = Matrix::Constant(nx, nu_n, 1.0 / static_cast<double>(nu_n));
  Vector nu = phi.transpose() * mu;
  Vector log_z;
  std::vector<double> history;
  bool converged = false;
  std::size_t k = 0;
  while (k < opts.max_iter) {
    ++k;
    phi = detail::tilt(cost, nu, s, log_z);
    history.push_back(-s * mu.dot(log_z));
    Vector next = phi.transpose() * mu;
    const double change = (next - nu).lpNorm<Eigen::Infinity>();
    nu = std::move(next);
    if (history.size() > 1 &&
        std::abs(history[history.size() - 1] - history[history.size() - 2]) < opts.lagrangian_tol &&
        change < opts.marginal_tol) {
      converged = true;
      break;
    }
  }

  StochasticKernel kernel = StochasticKernel::normalized(spec.mu().atoms(), spec.action_atoms(), phi);
  FiniteDistribution out = FiniteDistribution::normalized(spec.action_atoms(), kernel.matrix().transpose() * mu);
  const double rate = detail::mutual_information(mu, kernel.matrix());
  DrfSolution sol{rate,
                  detail::expected_cost(mu, kernel.matrix(), cost),
                  s,
                  std::move(kernel),
                  out,
                  detail::dual_value(mu, cost, s, out.probs(), rate),
                  k,
                  std::move(history)};
  if (!converged)
    throw BlahutArimotoNonConvergence("blahut_arimoto: no convergence within " + std::to_string(opts.max_iter) +
                                          " iterations at s=" + std::to_string(s),
                                      std::move(sol));
  return sol;
}

/// R0 = I(mu, Phi_det) for the pointwise-minimizer kernel (lowest index on ties).
inline double critical_rate(const DistortionSpec& spec) {
  const auto det = StochasticKernel::deterministic(spec.mu().atoms(), spec.action_atoms(), detail::row_argmin(spec.cost()));
  return mutual_information(spec.mu(), det);
}

/// Smallest s at which the zero-rate kernel concentrated on `best_action`
/// satisfies the optimality constraints sum_x mu(x) exp(-(c(x,u)-c(x,u_b))/s) <= 1.
/// Returns +inf when no finite slope supports the zero-rate point.
inline double zero_rate_slope(const DistortionSpec& spec, std::size_t best_action) {
  const Vector& mu = spec.mu().probs();
  const Matrix& cost = spec.cost();
  const auto ub = static_cast<Eigen::Index>(best_action);
  double min_t = std::numeric_limits<double>::infinity();  // t = 1/s
  for (Eigen::Index u = 0; u < cost.cols(); ++u) {
    if (u == ub) continue;
    const Vector delta = cost.col(u) - cost.col(ub);
    auto g = [&](double t) {
      double acc = 0.0;
      for (Eigen::Index x = 0; x < delta.size(); ++x)
        if (mu[x] > 0.0) acc += mu[x] * std::exp(-t * delta[x]);
      return acc;
    };
    bool any_negative = false;
    bool any_positive = false;
    for (Eigen::Index x = 0; x < delta.size(); ++x) {
      if (mu[x] <= 0.0) continue;
      any_negative = any_negative || delta[x] < 0.0;
      any_positive = any_positive || delta[x] > 0.0;
    }
    if (!any_negative) continue;  // u never beats u_b anywhere: no constraint
    if (!any_positive) return std::numeric_limits<double>::infinity();
    if (mu.dot(delta) <= 0.0) return std::numeric_limits<double>::infinity();
    double lo = 0.0;
    double hi = 1.0;
    while (g(hi) <= 1.0) {
      lo = hi;
      hi *= 2.0;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) <= 1.0 ? lo : hi) = mid;
    }
    min_t = std::min(min_t, lo);
  }
  if (min_t == 0.0) return std::numeric_limits<double>::infinity();
  return std::isinf(min_t) ? 0.0 : 1.0 / min_t;
}

/// D_mu(R) together with the optimal kernel and its slope parameter.
///
/// R >= R0 yields the deterministic pointwise-minimizer kernel (rate field set
/// to R0, s = 0). R <= target_tol yields the best constant action. Otherwise s is
/// bracketed by doubling/halving from s = 1 and then bisected.
inline DrfSolution solve_drf_at_rate(const DistortionSpec& spec, double rate, const RateSearchOptions& opts = {}) {
  if (!(rate >= 0.0)) throw std::invalid_argument("solve_drf_at_rate: rate must be >= 0");
  const Vector& mu = spec.mu().probs();
  const Matrix& cost = spec.cost();
  const double r0 = critical_rate(spec);

  if (rate >= r0) {
    auto det = StochasticKernel::deterministic(spec.mu().atoms(), spec.action_atoms(), detail::row_argmin(cost));
    FiniteDistribution out = FiniteDistribution::normalized(spec.action_atoms(), det.matrix().transpose() * mu);
    const double d = detail::expected_cost(mu, det.matrix(), cost);
    const double dual = detail::dual_value(mu, cost, 0.0, out.probs(), rate);
    return DrfSolution{r0, d, 0.0, std::move(det), std::move(out), dual, 0, {}};
  }

  const Vector per_action = cost.transpose() * mu;
  Eigen::Index best_action = 0;
  for (Eigen::Index u = 1; u < per_action.size(); ++u)
    if (per_action[u] < per_action[best_action]) best_action = u;
  // Every s at or above this slope has rate exactly 0.
  const double s_zero = zero_rate_slope(spec, static_cast<std::size_t>(best_action));

  if (rate <= opts.target_tol) {
    const Eigen::Index best = best_action;
    auto point = FiniteDistribution::point_mass(spec.action_atoms(), static_cast<std::size_t>(best));
    auto phi = StochasticKernel::constant(spec.mu().atoms(), point);
    const double dual = detail::dual_value(mu, cost, s_zero, point.probs(), 0.0);
    return DrfSolution{0.0, per_action[best], s_zero, std::move(phi), std::move(point), dual, 0, {}};
  }

  std::vector<std::pair<double, double>> scanned;
  auto evaluate = [&](double s) {
    DrfSolution sol = blahut_arimoto(spec, s, opts.ba);
    scanned.emplace_back(s, sol.rate);
    return sol;
  };

  // Blahut-Arimoto slows down without bound as s approaches s_zero from
  // below, so s_zero itself is never evaluated; it closes the bracket.
  const double s_start = std::isfinite(s_zero) ? std::min(1.0, 0.5 * s_zero) : 1.0;
  DrfSolution best = evaluate(s_start);
  auto consider = [&](DrfSolution&& cand) {
    if (std::abs(cand.rate - rate) < std::abs(best.rate - rate)) best = std::move(cand);
  };
  if (std::abs(best.rate - rate) <= opts.target_tol) return best;

  // Achieved rate is nonincreasing in s: s_more_rate gives rate >= R, s_less_rate gives rate <= R.
  double s_more_rate = s_start;
  double s_less_rate = s_start;
  bool bracketed = false;
  if (best.rate > rate && std::isfinite(s_zero)) {
    s_less_rate = s_zero;
    bracketed = true;
  } else if (best.rate > rate) {
    double s = s_start;
    for (std::size_t i = 0; i < opts.max_bracket_steps; ++i) {
      s *= 2.0;
      DrfSolution sol = evaluate(s);
      const double r = sol.rate;
      consider(std::move(sol));
      if (r <= rate) {
        s_less_rate = s;
        bracketed = true;
        break;
      }
      s_more_rate = s;
    }
  } else {
    double s = s_start;
    for (std::size_t i = 0; i < opts.max_bracket_steps; ++i) {
      s *= 0.5;
      DrfSolution sol = evaluate(s);
      const double r = sol.rate;
      consider(std::move(sol));
      if (r >= rate) {
        s_more_rate = s;
        bracketed = true;
        break;
      }
      s_less_rate = s;
    }
  }
  if (!bracketed)
    throw RateBracketError("solve_drf_at_rate: could not bracket rate " + std::to_string(rate), std::move(scanned));

  for (std::size_t i = 0; i < opts.max_bisections; ++i) {
    if (std::abs(best.rate - rate) <= opts.target_tol) break;
    if (s_less_rate / s_more_rate - 1.0 < 1e-15) break;
    const double mid = std::sqrt(s_more_rate * s_less_rate);
    DrfSolution sol = evaluate(mid);
    (sol.rate > rate ? s_more_rate : s_less_rate) = mid;
    consider(std::move(sol));
  }
  if (std::abs(best.rate - rate) > opts.rate_tol)
    throw RateBracketError("solve_drf_at_rate: achieved rate " + std::to_string(best.rate) + " misses target " +
                               std::to_string(rate),
                           std::move(scanned));
  return best;
}

/// Analytic distortion-rate design for a N(0, sigma2) source under squared error.
struct GaussianDrfDesign {
  double sigma2 = 0.0;
  double rate = 0.0;
  double distortion = 0.0;  ///< sigma2 exp(-2R)
  double gain = 0.0;        ///< 1 - exp(-2R)
  double noise_var = 0.0;   ///< (1 - exp(-2R)) exp(-2R) sigma2

  /// Signal-to-noise ratio of the realizing channel X' = gain X + noise.
  double snr() const {
    const double e = std::exp(-2.0 * rate);
    return (1.0 - e) / e;
  }
  /// Mutual information carried by the realization, (1/2) ln(1 + SNR).
  double realized_information() const { return 0.5 * std::log1p(snr()); }
};

inline GaussianDrfDesign gaussian_drf(double sigma2, double rate) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("gaussian_drf: sigma2 must be positive");
  if (!(rate >= 0.0)) throw std::invalid_argument("gaussian_drf: rate must be >= 0");
  const double e = std::exp(-2.0 * rate);
  return GaussianDrfDesign{sigma2, rate, sigma2 * e, 1.0 - e, (1.0 - e) * e * sigma2};
}

}  // namespace infoctrl
