#pragma once

// Infinite-horizon discounted cost under a per-stage information budget.
//
// A stationary kernel Phi started from mu induces the normalized discounted
// occupation measure pi (x) Phi with pi = (1 - beta) mu + beta pi Q_Phi, and
// J(Phi) = <pi (x) Phi, c> / (1 - beta). Stationary solutions are turned into
// quasistationary laws (Phi until t*, a fixed action afterwards) whose
// per-stage information never exceeds C I(pi,Phi) / ((1-beta)^2 eps) and whose
// cost exceeds J(Phi) by at most eps.

#include "infoctrl/avg_cost.hpp"
#include "infoctrl/prob_core.hpp"
#include "infoctrl/rate_distortion.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace infoctrl {

struct OccupationMeasure {
  FiniteDistribution pi;
  StochasticKernel phi;
  double beta = 0.0;
  FiniteDistribution mu;
  /// ||(1 - beta) mu + beta pi Q_Phi - pi||_1
  double residual = 0.0;
};

namespace detail {

inline void require_discount(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("discount factor must lie in (0, 1)");
}

/// Solves (I - beta Q_Phi^T) pi = (1 - beta) mu.
inline Vector occupation_vector(const MdpModel& model, const Vector& mu, const Matrix& phi, double beta) {
  const Matrix p = closed_loop(model, phi);
  const auto n = p.rows();
  const Matrix a = Matrix::Identity(n, n) - beta * p.transpose();
  Vector pi = a.partialPivLu().solve((1.0 - beta) * mu);
  return renormalize(std::move(pi));
}

}  // namespace detail

inline OccupationMeasure discounted_occupation(const MdpModel& model, const FiniteDistribution& mu,
                                               const StochasticKernel& phi, double beta) {
  detail::require_discount(beta);
  detail::require_same_atoms(mu.atoms(), model.state_atoms(), "discounted_occupation");
  detail::require_policy(model, phi, "discounted_occupation");
  Vector pi = detail::occupation_vector(model, mu.probs(), phi.matrix(), beta);
  const Matrix p = detail::closed_loop(model, phi.matrix());
  const double residual = ((1.0 - beta) * mu.probs() + beta * (p.transpose() * pi) - pi).lpNorm<1>();
  return OccupationMeasure{FiniteDistribution(model.state_atoms(), std::move(pi)), phi, beta, mu, residual};
}

/// E[sum_t beta^t c(X_t, U_t)] = <pi (x) Phi, c> / (1 - beta).
inline double discounted_cost(const MdpModel& model, const FiniteDistribution& mu, const StochasticKernel& phi,
                              double beta) {
  const OccupationMeasure occ = discounted_occupation(model, mu, phi, beta);
  return detail::expected_cost(occ.pi.probs(), phi.matrix(), model.cost()) / (1.0 - beta);
}

/// Least t >= 0 with C beta^t / (1 - beta) <= eps.
inline std::size_t quasistationary_cutoff(double max_cost, double beta, double epsilon) {
  detail::require_discount(beta);
  if (!(max_cost >= 0.0)) throw std::invalid_argument("quasistationary_cutoff: C must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("quasistationary_cutoff: epsilon must be positive");
  auto holds = [&](std::size_t t) {
    return max_cost * std::pow(beta, static_cast<double>(t)) / (1.0 - beta) <= epsilon;
  };
  if (holds(0)) return 0;
  const double guess = std::ceil(std::log(epsilon * (1.0 - beta) / max_cost) / std::log(beta));
  auto t = static_cast<std::size_t>(std::max(guess, 0.0));
  while (t > 0 && holds(t - 1)) --t;
  while (!holds(t)) ++t;
  return t;
}

/// Markov randomized quasistationary law: phi0 before t_star, phi1 from t_star on.
struct MrqLaw {
  StochasticKernel phi0;
  StochasticKernel phi1;
  std::size_t t_star = 0;

  const StochasticKernel& at(std::size_t t) const { return t < t_star ? phi0 : phi1; }
};

struct QuasistationaryWrap {
  MrqLaw law;
  /// C I(pi, Phi) / ((1 - beta)^2 eps): bound on every per-stage information.
  double info_bound = 0.0;
  /// I(pi, Phi) under the discounted occupation pi of the original kernel.
  double occupation_information = 0.0;
  double max_cost = 0.0;
};

/// Run `phi` until the tail cost is below eps, then play `u0` open loop.
inline QuasistationaryWrap wrap_quasistationary(const MdpModel& model, const FiniteDistribution& mu,
                                                const StochasticKernel& phi, double beta, double epsilon,
                                                std::size_t u0 = 0) {
  detail::require_policy(model, phi, "wrap_quasistationary");
  if (u0 >= model.actions()) throw DimensionError("wrap_quasistationary: invalid action u0");
  const double c_max = model.cost().maxCoeff();
  const std::size_t t_star = quasistationary_cutoff(c_max, beta, epsilon);
  const OccupationMeasure occ = discounted_occupation(model, mu, phi, beta);
  const double info = mutual_information(occ.pi, phi);
  auto tail = StochasticKernel::constant(model.state_atoms(), FiniteDistribution::point_mass(model.action_atoms(), u0));
  return QuasistationaryWrap{MrqLaw{phi, std::move(tail), t_star},
                             c_max * info / ((1.0 - beta) * (1.0 - beta) * epsilon), info, c_max};
}

inline QuasistationaryWrap wrap_quasistationary(const MdpModel& model, const FiniteDistribution& mu,
                                                const StochasticKernel& phi, double beta, double epsilon,
                                                const std::string& u0_label) {
  const auto& acts = model.action_atoms();
  const auto it = std::find(acts.begin(), acts.end(), u0_label);
  if (it == acts.end()) throw DimensionError("wrap_quasistationary: unknown action '" + u0_label + "'");
  return wrap_quasistationary(model, mu, phi, beta, epsilon, static_cast<std::size_t>(it - acts.begin()));
}

struct StageRecord {
  std::size_t t = 0;
  double info = 0.0;                        ///< I(mu_t, Phi_t), nats
  double cumulative_discounted_cost = 0.0;  ///< sum_{tau <= t} beta^tau E c(X_tau, U_tau)
};

/// Exact marginal propagation mu_{t+1} = mu_t Q_{Phi_t} for t = 0..horizon-1.
inline std::vector<StageRecord> mrq_trace(const MdpModel& model, const MrqLaw& law, const FiniteDistribution& mu,
                                          double beta, std::size_t horizon) {
  detail::require_same_atoms(mu.atoms(), model.state_atoms(), "mrq_trace");
  std::vector<StageRecord> out;
  out.reserve(horizon);
  Vector m = mu.probs();
  double acc = 0.0;
  double weight = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const Matrix& phi = law.at(t).matrix();
    acc += weight * detail::expected_cost(m, phi, model.cost());
    out.push_back({t, detail::mutual_information(m, phi), acc});
    m = detail::closed_loop(model, phi).transpose() * m;
    weight *= beta;
  }
  return out;
}

/// Exact discounted cost of an MRQ law: finite prefix plus the closed-form tail.
inline double mrq_discounted_cost(const MdpModel& model, const MrqLaw& law, const FiniteDistribution& mu, double beta) {
  detail::require_discount(beta);
  Vector m = mu.probs();
  double acc = 0.0;
  double weight = 1.0;
  for (std::size_t t = 0; t < law.t_star; ++t) {
    acc += weight * detail::expected_cost(m, law.phi0.matrix(), model.cost());
    m = detail::closed_loop(model, law.phi0.matrix()).transpose() * m;
    weight *= beta;
  }
  const Vector occ = detail::occupation_vector(model, m, law.phi1.matrix(), beta);
  return acc + weight * detail::expected_cost(occ, law.phi1.matrix(), model.cost()) / (1.0 - beta);
}

struct DcoeResiduals {
  double dcoe_gap = 0.0;       ///< |lhs - D_pi(R; c + beta Qh)/(1-beta)|, DRF recomputed independently
  double bellman_gap = 0.0;    ///< |lhs - <pi(x)Phi, c + beta Qh>/(1-beta)|
  double occupation_gap = 0.0; ///< ||(1-beta) mu + beta pi Q_Phi - pi||_1
  double structure_gap = 0.0;  ///< max |Phi - tilt of pi Phi by c + beta Qh|
  double cost_gap = 0.0;       ///< |<mu,h> - s R/(1-beta) - lambda|
};

struct DcoeSolution {
  Vector h;
  double lambda = 0.0;  ///< discounted cost <pi(x)Phi, c>/(1-beta) from mu
  StochasticKernel phi;
  FiniteDistribution pi;
  double rate = 0.0;  ///< I(pi, Phi)
  double s = 0.0;
  double beta = 0.0;
  DcoeResiduals residuals;
  std::size_t iterations = 0;
};

struct DcoeOptions {
  std::size_t max_iter = 2'000'000;
  double value_tol = 1e-12;
  double marginal_tol = 1e-14;
  bool verify_with_drf = true;
  RateSearchOptions drf = certificate_search_options();
};

inline bool certified(const DcoeSolution& sol, double gap_tol = 1e-6, double occupation_tol = 1e-10) {
  const auto& r = sol.residuals;
  return r.dcoe_gap <= gap_tol && r.bellman_gap <= gap_tol && r.occupation_gap <= occupation_tol &&
         r.structure_gap <= 1e-8 && r.cost_gap <= 1e-8;
}

class DcoeNonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Discounted analogue of solve_icbe: distortion c + beta Qh, and pi coupled to
/// mu through the occupation equation instead of invariance.
inline DcoeSolution solve_ic_dcoe(const MdpModel& model, const FiniteDistribution& mu, double beta, double s,
                                  const DcoeOptions& opts = {}) {
  detail::require_discount(beta);
  detail::require_same_atoms(mu.atoms(), model.state_atoms(), "solve_ic_dcoe");
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("solve_ic_dcoe: s must be positive and finite");
  const auto nx = static_cast<Eigen::Index>(model.states());
  const auto nu_n = static_cast<Eigen::Index>(model.actions());
  Vector h = Vector::Zero(nx);
  Vector nu = Vector::Constant(nu_n, 1.0 / static_cast<double>(nu_n));

  auto evaluate = [&](const Vector& hv, const Vector& nuv, Matrix& d, Matrix& phi, Vector& pi) {
    d = model.cost() + beta * detail::expected_next(model, hv);
    Vector log_z;
    phi = detail::tilt(d, nuv, s, log_z);
    pi = detail::occupation_vector(model, mu.probs(), phi, beta);
  };

  Matrix d;
  Matrix phi;
  Vector pi;
  std::size_t k = 1;
  for (;; ++k) {
    if (k > opts.max_iter)
      throw DcoeNonConvergence("solve_ic_dcoe: no convergence within " + std::to_string(opts.max_iter) + " iterations");
    evaluate(h, nu, d, phi, pi);
    const Vector marginal = phi.transpose() * pi;
    Vector log_z;
    (void)detail::tilt(d, marginal, s, log_z);
    const Vector h_next = -s * log_z;
    const double dv = (h_next - h).lpNorm<Eigen::Infinity>();
    const double dn = (marginal - nu).lpNorm<Eigen::Infinity>();
    h = h_next;
    nu = marginal;
    if (dv < opts.value_tol * std::max(1.0, h.lpNorm<Eigen::Infinity>()) && dn < opts.marginal_tol) break;
  }

  evaluate(h, nu, d, phi, pi);
  StochasticKernel kernel = StochasticKernel::normalized(model.state_atoms(), model.action_atoms(), phi);
  FiniteDistribution pi_dist(model.state_atoms(), pi);
  const double rate = mutual_information(pi_dist, kernel);
  const double scale = 1.0 / (1.0 - beta);
  const double lambda = detail::expected_cost(pi, kernel.matrix(), model.cost()) * scale;
  const double lhs = pi.dot(h) * scale - mu.probs().dot(h) + lambda;

  DcoeResiduals r;
  r.bellman_gap = std::abs(lhs - detail::expected_cost(pi, kernel.matrix(), d) * scale);
  r.occupation_gap = ((1.0 - beta) * mu.probs() + beta * (detail::closed_loop(model, kernel.matrix()).transpose() * pi) - pi)
                         .lpNorm<1>();
  Vector log_z;
  const Vector marginal = kernel.matrix().transpose() * pi;
  r.structure_gap = (kernel.matrix() - detail::tilt(d, marginal, s, log_z)).cwiseAbs().maxCoeff();
  r.cost_gap = std::abs(mu.probs().dot(-s * log_z) - s * rate * scale - lambda);
  r.dcoe_gap = std::numeric_limits<double>::quiet_NaN();
  if (opts.verify_with_drf) {
    try {
      const DrfSolution drf = solve_drf_at_rate(DistortionSpec(pi_dist, d, model.action_atoms()), rate, opts.drf);
      r.dcoe_gap = std::abs(lhs - drf.distortion * scale);
    } catch (const std::runtime_error&) {
      r.dcoe_gap = std::numeric_limits<double>::infinity();
    }
  }
  return DcoeSolution{h, lambda, std::move(kernel), std::move(pi_dist), rate, s, beta, r, k};
}

struct MrqBudgetReport {
  double budget = 0.0;           ///< per-stage budget R
  double deflated_budget = 0.0;  ///< (1-beta)^2 eps R / C
  double epsilon = 0.0;
  double beta = 0.0;
  DcoeSolution stationary;
  QuasistationaryWrap wrap;
  double achieved_cost = 0.0;    ///< exact discounted cost of the MRQ law
  double cost_bound = 0.0;       ///< (D_pi(Rbar; c+beta Qh) - <pi,h>)/(1-beta) + <mu,h> + eps
  double max_stage_info = 0.0;
  std::vector<StageRecord> trace;

  bool info_within_budget(double tol = 1e-12) const { return max_stage_info <= budget + tol; }
  bool cost_within_bound(double tol = 1e-9) const { return achieved_cost <= stationary.lambda + epsilon + tol; }
};

/// Solve at the deflated budget, wrap quasistationarily, and audit the result
/// stage by stage with exact marginals. `s_start` seeds the slope search.
inline MrqBudgetReport mrq_cost_and_rate_budget(const MdpModel& model, const FiniteDistribution& mu, double beta,
                                                double budget, double epsilon, double s_start = 1.0,
                                                const DcoeOptions& opts = {}) {
  detail::require_discount(beta);
  if (!(budget >= 0.0)) throw std::invalid_argument("mrq_cost_and_rate_budget: budget must be >= 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("mrq_cost_and_rate_budget: epsilon must be positive");
  if (!(s_start > 0.0)) throw std::invalid_argument("mrq_cost_and_rate_budget: s_start must be positive");
  const double c_max = model.cost().maxCoeff();
  const double rbar = c_max > 0.0 ? (1.0 - beta) * (1.0 - beta) * epsilon * budget / c_max
                                  : std::numeric_limits<double>::infinity();

  DcoeOptions search = opts;
  search.verify_with_drf = false;
  auto solve = [&](double s) { return solve_ic_dcoe(model, mu, beta, s, search); };

  // Largest-rate solution whose occupation information stays within rbar.
  std::optional<DcoeSolution> chosen;
  if (rbar > 0.0) {
    DcoeSolution first = solve(s_start);
    double s_ok = 0.0;   // rate <= rbar
    double s_bad = 0.0;  // rate > rbar
    if (first.rate <= rbar) {
      s_ok = s_start;
      chosen = std::move(first);
      double s = s_start;
      for (int i = 0; i < 60; ++i) {
        s *= 0.25;
        if (s < 1e-9 * std::max(c_max, 1.0)) break;
        DcoeSolution sol = solve(s);
        if (sol.rate > rbar) {
          s_bad = s;
          break;
        }
        s_ok = s;
        chosen = std::move(sol);
      }
    } else {
      s_bad = s_start;
      double s = s_start;
      for (int i = 0; i < 60; ++i) {
        s *= 4.0;
        DcoeSolution sol = solve(s);
        if (sol.rate <= rbar) {
          s_ok = s;
          chosen = std::move(sol);
          break;
        }
        s_bad = s;
      }
    }
    if (chosen && s_bad > 0.0) {
      for (int i = 0; i < 80 && s_ok / s_bad - 1.0 > 1e-10; ++i) {
        const double mid = std::sqrt(s_ok * s_bad);
        DcoeSolution sol = solve(mid);
        if (sol.rate <= rbar) {
          s_ok = mid;
          chosen = std::move(sol);
        } else {
          s_bad = mid;
        }
      }
    }
  }
  if (!chosen) {
    // Zero budget: open loop. Take the large-s stationary point and drop its
    // residual state dependence by playing its action marginal everywhere.
    DcoeSolution sol = solve(1e4 * std::max(c_max, 1.0));
    const Vector marginal = sol.phi.matrix().transpose() * sol.pi.probs();
    auto constant = StochasticKernel::constant(model.state_atoms(),
                                               FiniteDistribution::normalized(model.action_atoms(), marginal));
    sol.pi = discounted_occupation(model, mu, constant, beta).pi;
    sol.lambda = discounted_cost(model, mu, constant, beta);
    sol.phi = std::move(constant);
    sol.rate = 0.0;
    chosen = std::move(sol);
  }

  if (opts.verify_with_drf && chosen->rate > 0.0) chosen = solve_ic_dcoe(model, mu, beta, chosen->s, opts);
  DcoeSolution stationary = std::move(*chosen);
  QuasistationaryWrap wrap = wrap_quasistationary(model, mu, stationary.phi, beta, epsilon);
  const double scale = 1.0 / (1.0 - beta);
  const Matrix d = model.cost() + beta * detail::expected_next(model, stationary.h);
  double drf_value = std::numeric_limits<double>::quiet_NaN();
  try {
    drf_value = solve_drf_at_rate(DistortionSpec(stationary.pi, d, model.action_atoms()),
                                  std::min(rbar, std::numeric_limits<double>::max()), opts.drf)
                    .distortion;
  } catch (const std::runtime_error&) {
  }
  const double bound =
      (drf_value - stationary.pi.probs().dot(stationary.h)) * scale + mu.probs().dot(stationary.h) + epsilon;

  const double achieved = mrq_discounted_cost(model, wrap.law, mu, beta);
  // Horizon past the switch so the trace shows the open-loop tail.
  const std::size_t horizon = wrap.law.t_star + 20;
  std::vector<StageRecord> trace = mrq_trace(model, wrap.law, mu, beta, horizon);
  double max_info = 0.0;
  for (const auto& rec : trace) max_info = std::max(max_info, rec.info);

  return MrqBudgetReport{budget,       rbar,  epsilon,  beta,    std::move(stationary), std::move(wrap),
                         achieved,     bound, max_info, std::move(trace)};
}

}  // namespace infoctrl
