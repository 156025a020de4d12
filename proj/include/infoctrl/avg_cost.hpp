#pragma once

// Steady-state average-cost control of a finite MDP under a mutual
// information budget between state and action.
//
// A solution is a relative value function h, average cost lambda, kernel Phi
// and invariant distribution pi with
//
//   <pi, h> + lambda = <pi (x) Phi, c + Qh> = D_pi(R; c + Qh),   pi = pi Q_Phi,
//
// where D_pi is the distortion-rate function of pi under the distortion
// c + Qh. Any (h, lambda, Phi, pi) meeting these identities attains the
// optimal steady-state cost at rate R = I(pi, Phi); solve_icbe() reports how
// closely each identity holds and never relies on iteration convergence alone.

#include "infoctrl/prob_core.hpp"
#include "infoctrl/rate_distortion.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace infoctrl {

/// Finite controlled chain Q(x'|x,u) with one-step cost c(x,u) >= 0.
class MdpModel {
 public:
  /// `transitions[u]` is the |X| x |X| row-stochastic matrix of action u.
  MdpModel(Labels state_atoms, Labels action_atoms, std::vector<Matrix> transitions, Matrix cost)
      : states_(std::move(state_atoms)),
        actions_(std::move(action_atoms)),
        transitions_(std::move(transitions)),
        cost_(std::move(cost)) {
    const auto nx = static_cast<Eigen::Index>(states_.size());
    if (states_.empty() || actions_.empty()) throw ValidationError("MdpModel: empty state or action alphabet");
    if (transitions_.size() != actions_.size()) throw DimensionError("MdpModel: one transition matrix per action required");
    if (cost_.rows() != nx || cost_.cols() != static_cast<Eigen::Index>(actions_.size()))
      throw DimensionError("MdpModel: cost must be |X| x |U|");
    for (std::size_t u = 0; u < transitions_.size(); ++u) {
      const Matrix& p = transitions_[u];
      if (p.rows() != nx || p.cols() != nx) throw DimensionError("MdpModel: transition matrix must be |X| x |X|");
      for (Eigen::Index x = 0; x < nx; ++x) {
        const std::string where = "(x=" + states_[static_cast<std::size_t>(x)] + ", u=" + actions_[u] + ")";
        if (!p.row(x).allFinite() || (p.row(x).array() < 0.0).any())
          throw ValidationError("MdpModel: transition slice " + where + " has a negative or non-finite entry");
        if (std::abs(p.row(x).sum() - 1.0) > kMassTolerance)
          throw ValidationError("MdpModel: transition slice " + where + " sums to " + std::to_string(p.row(x).sum()));
      }
    }
    if (!cost_.allFinite() || (cost_.array() < 0.0).any())
      throw ValidationError("MdpModel: costs must be finite and nonnegative");
  }

  const Labels& state_atoms() const noexcept { return states_; }
  const Labels& action_atoms() const noexcept { return actions_; }
  const std::vector<Matrix>& transitions() const noexcept { return transitions_; }
  const Matrix& transition(std::size_t u) const { return transitions_.at(u); }
  const Matrix& cost() const noexcept { return cost_; }
  std::size_t states() const noexcept { return states_.size(); }
  std::size_t actions() const noexcept { return actions_.size(); }

  /// Q(x'|x,u) as a kernel from X to X for a fixed action.
  StochasticKernel action_kernel(std::size_t u) const { return StochasticKernel(states_, states_, transitions_.at(u)); }

 private:
  Labels states_;
  Labels actions_;
  std::vector<Matrix> transitions_;
  Matrix cost_;
};

namespace detail {

inline void require_state_vector(const MdpModel& model, const Vector& h, const char* what) {
  if (static_cast<std::size_t>(h.size()) != model.states())
    throw DimensionError(std::string(what) + ": value vector length differs from |X|");
}

inline void require_policy(const MdpModel& model, const StochasticKernel& phi, const char* what) {
  require_same_atoms(phi.input_atoms(), model.state_atoms(), what);
  require_same_atoms(phi.output_atoms(), model.action_atoms(), what);
}

inline Matrix expected_next(const MdpModel& model, const Vector& h) {
  Matrix out(static_cast<Eigen::Index>(model.states()), static_cast<Eigen::Index>(model.actions()));
  for (std::size_t u = 0; u < model.actions(); ++u) out.col(static_cast<Eigen::Index>(u)) = model.transition(u) * h;
  return out;
}

inline Matrix closed_loop(const MdpModel& model, const Matrix& phi) {
  const auto nx = static_cast<Eigen::Index>(model.states());
  Matrix p = Matrix::Zero(nx, nx);
  for (std::size_t u = 0; u < model.actions(); ++u)
    p += phi.col(static_cast<Eigen::Index>(u)).asDiagonal() * model.transition(u);
  return p;
}

inline double span(const Vector& v) { return v.maxCoeff() - v.minCoeff(); }

}  // namespace detail

/// Qh(x,u) = sum_x' Q(x'|x,u) h(x').
inline Matrix q_transform(const MdpModel& model, const Vector& h) {
  detail::require_state_vector(model, h, "q_transform");
  return detail::expected_next(model, h);
}

/// Closed-loop kernel Q_Phi(x'|x) = sum_u Phi(u|x) Q(x'|x,u).
inline StochasticKernel closed_loop_kernel(const MdpModel& model, const StochasticKernel& phi) {
  detail::require_policy(model, phi, "closed_loop_kernel");
  return StochasticKernel::normalized(model.state_atoms(), model.state_atoms(), detail::closed_loop(model, phi.matrix()));
}

struct SoftBellmanResult {
  Vector h;           ///< T h - (T h)(x_ref)
  double lambda_est;  ///< (T h)(x_ref)
};

/// T h(x) = -s ln sum_u nu(u) exp(-(c + Qh)(x,u)/s), normalized at the first state.
inline SoftBellmanResult soft_bellman_operator(const MdpModel& model, const Vector& h, double s,
                                               const FiniteDistribution& nu) {
  detail::require_state_vector(model, h, "soft_bellman_operator");
  detail::require_same_atoms(nu.atoms(), model.action_atoms(), "soft_bellman_operator");
  if (!(s > 0.0)) throw std::invalid_argument("soft_bellman_operator: s must be positive");
  const Matrix d = model.cost() + detail::expected_next(model, h);
  Vector log_z;
  (void)detail::tilt(d, nu.probs(), s, log_z);
  const Vector th = -s * log_z;
  return {th.array() - th[0], th[0]};
}

struct IcbeResiduals {
  double icbe_gap = 0.0;        ///< |<pi,h> + lambda - D_pi(R; c+Qh)|, DRF recomputed independently
  double bellman_gap = 0.0;     ///< |<pi,h> + lambda - <pi(x)Phi, c+Qh>|
  double invariance_gap = 0.0;  ///< ||pi Q_Phi - pi||_1
  double rate_gap = 0.0;        ///< |I(pi,Phi) - rate reached by the DRF recomputation|
  double structure_gap = 0.0;   ///< max |Phi - tilt of pi Phi by c+Qh|
  double cost_gap = 0.0;        ///< |(lambda_soft - s R) - <pi(x)Phi, c>|
};

struct IcbeSolution {
  Vector h;
  double lambda = 0.0;  ///< average cost <pi(x)Phi, c>
  StochasticKernel phi;
  FiniteDistribution pi;
  double rate = 0.0;  ///< I(pi, Phi), nats
  double s = 0.0;
  IcbeResiduals residuals;
  /// Normalizing constant of the soft Bellman fixed point, lambda + s R.
  double soft_lambda = 0.0;
  std::size_t iterations = 0;
  bool pi_unique = true;
  bool damped = false;
};

struct IcbeOptions {
  std::size_t max_iter = 2'000'000;
  double value_tol = 1e-12;
  double marginal_tol = 1e-14;
  double damping = 0.5;
  double invariance_tol = 1e-8;
  double icbe_tol = 1e-6;
  double structure_tol = 1e-8;
  /// Skip the distortion-rate recomputation (icbe_gap is then left at NaN).
  bool verify_with_drf = true;
  RateSearchOptions drf = certificate_search_options();
};

/// True when every certificate residual is within the tolerances of `opts`.
inline bool certified(const IcbeSolution& sol, const IcbeOptions& opts = {}) {
  const auto& r = sol.residuals;
  return r.invariance_gap <= opts.invariance_tol && r.icbe_gap <= opts.icbe_tol && r.bellman_gap <= opts.icbe_tol &&
         r.structure_gap <= opts.structure_tol && r.cost_gap <= opts.invariance_tol;
}

struct IcbeWarmStart {
  Vector h;
  Vector nu;
};

class IcbeNonConvergence : public std::runtime_error {
 public:
  IcbeNonConvergence(const std::string& what, std::vector<double> value_changes, std::vector<double> marginal_changes)
      : std::runtime_error(what),
        value_change_history(std::move(value_changes)),
        marginal_change_history(std::move(marginal_changes)) {}
  /// Tail of span(h_{k+1} - h_k).
  std::vector<double> value_change_history;
  /// Tail of ||nu_{k+1} - nu_k||_inf.
  std::vector<double> marginal_change_history;
};

namespace detail {

struct IcbeState {
  Vector h;
  Vector nu;
};

/// Everything derived from (h, nu): the tilted policy, its invariant law and marginal.
struct IcbeEvaluation {
  Matrix d;
  Matrix phi;
  Vector pi;
  Vector marginal;
  bool unique = true;
};

inline IcbeEvaluation evaluate_icbe_state(const MdpModel& model, const Vector& h, const Vector& nu, double s) {
  IcbeEvaluation e;
  e.d = model.cost() + expected_next(model, h);
  Vector log_z;
  e.phi = tilt(e.d, nu, s, log_z);
  e.pi = invariant_vector(closed_loop(model, e.phi), e.unique);
  e.marginal = e.phi.transpose() * e.pi;
  return e;
}

inline IcbeSolution certify_icbe(const MdpModel& model, const Vector& h, const Vector& nu, double s,
                                 std::size_t iterations, bool damped, const IcbeOptions& opts) {
  IcbeEvaluation e = evaluate_icbe_state(model, h, nu, s);
  const Vector& pi = e.pi;
  StochasticKernel phi = StochasticKernel::normalized(model.state_atoms(), model.action_atoms(), e.phi);
  FiniteDistribution pi_dist(model.state_atoms(), pi);
  const double rate = mutual_information(pi_dist, phi);
  const double lambda = expected_cost(pi, phi.matrix(), model.cost());
  const double value_mean = pi.dot(h);

  IcbeResiduals r;
  r.invariance_gap = (closed_loop(model, phi.matrix()).transpose() * pi - pi).lpNorm<1>();
  r.bellman_gap = std::abs(value_mean + lambda - expected_cost(pi, phi.matrix(), e.d));
  Vector log_z;
  const Matrix retilt = tilt(e.d, e.marginal, s, log_z);
  // The soft fixed point satisfies h + lambda_soft = -s ln Z pointwise, and
  // lambda_soft - s R must then be the average cost of Phi.
  const Vector th = -s * log_z;
  r.cost_gap = std::abs(th[0] - s * rate - lambda);
  r.structure_gap = (phi.matrix() - retilt).cwiseAbs().maxCoeff();
  r.icbe_gap = std::numeric_limits<double>::quiet_NaN();
  if (opts.verify_with_drf) {
    try {
      const DistortionSpec spec(pi_dist, e.d, model.action_atoms());
      const DrfSolution drf = solve_drf_at_rate(spec, rate, opts.drf);
      r.icbe_gap = std::abs(value_mean + lambda - drf.distortion);
      r.rate_gap = std::abs(drf.rate - rate);
    } catch (const std::runtime_error&) {
      r.icbe_gap = std::numeric_limits<double>::infinity();
      r.rate_gap = std::numeric_limits<double>::infinity();
    }
  }

  IcbeSolution sol{h, lambda, std::move(phi), std::move(pi_dist), rate, s, r, th[0], iterations, e.unique, damped};
  return sol;
}

}  // namespace detail

/// Solve the information-constrained Bellman equation at slope parameter s.
///
/// Coordinate fixed-point iteration on (Phi, pi, nu, h):
///   Phi(u|x) proportional to nu(u) exp(-(c+Qh)(x,u)/s),  pi = pi Q_Phi,
///   nu = pi Phi,  h = soft Bellman update normalized at the first state,
/// with damping 0.5 on h once the value changes start to oscillate. The
/// reported lambda is the average cost of the final kernel; the certificate
/// residuals are recomputed from scratch.
inline IcbeSolution solve_icbe(const MdpModel& model, double s, const IcbeOptions& opts = {},
                               const std::optional<IcbeWarmStart>& warm = std::nullopt) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("solve_icbe: s must be positive and finite");
  const auto nx = static_cast<Eigen::Index>(model.states());
  const auto nu_n = static_cast<Eigen::Index>(model.actions());

  Vector h = Vector::Zero(nx);
  Vector nu = Vector::Constant(nu_n, 1.0 / static_cast<double>(nu_n));
  if (warm) {
    if (warm->h.size() != nx || warm->nu.size() != nu_n) throw DimensionError("solve_icbe: warm start has wrong shape");
    h = warm->h.array() - warm->h[0];
    nu = detail::renormalize(warm->nu);
  }

  std::deque<double> value_changes;
  std::deque<double> marginal_changes;
  constexpr std::size_t kHistory = 1000;
  bool damped = false;
  int rising = 0;
  double last_change = std::numeric_limits<double>::infinity();

  for (std::size_t k = 1; k <= opts.max_iter; ++k) {
    const detail::IcbeEvaluation e = detail::evaluate_icbe_state(model, h, nu, s);
    Vector log_z;
    (void)detail::tilt(e.d, e.marginal, s, log_z);
    const Vector th = -s * log_z;
    Vector h_next = th.array() - th[0];
    if (damped) h_next = h + opts.damping * (h_next - h);

    const double dv = detail::span(h_next - h);
    const double dn = (e.marginal - nu).lpNorm<Eigen::Infinity>();
    value_changes.push_back(dv);
    marginal_changes.push_back(dn);
    if (value_changes.size() > kHistory) {
      value_changes.pop_front();
      marginal_changes.pop_front();
    }
    rising = (dv > last_change && dv > opts.value_tol) ? rising + 1 : 0;
    if (rising >= 5) damped = true;
    last_change = dv;

    h = std::move(h_next);
    h[0] = 0.0;
    nu = e.marginal;
    if (dv < opts.value_tol && dn < opts.marginal_tol) return detail::certify_icbe(model, h, nu, s, k, damped, opts);
  }
  throw IcbeNonConvergence("solve_icbe: no convergence within " + std::to_string(opts.max_iter) + " iterations at s=" +
                               std::to_string(s),
                           {value_changes.begin(), value_changes.end()},
                           {marginal_changes.begin(), marginal_changes.end()});
}

struct SweepPoint {
  double s = 0.0;
  std::optional<IcbeSolution> solution;
  std::string error;  ///< empty on success
};

/// Trace the information/cost frontier over a descending s grid, warm-starting
/// each point from the previous one. Failures are recorded per point.
inline std::vector<SweepPoint> icbe_rate_sweep(const MdpModel& model, const std::vector<double>& s_grid,
                                               const IcbeOptions& opts = {}) {
  if (s_grid.empty()) throw std::invalid_argument("icbe_rate_sweep: empty grid");
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    if (!(s_grid[i] > 0.0)) throw std::invalid_argument("icbe_rate_sweep: grid values must be positive");
    if (i > 0 && !(s_grid[i] < s_grid[i - 1])) throw std::invalid_argument("icbe_rate_sweep: grid must be descending");
  }
  const auto nu_n = static_cast<Eigen::Index>(model.actions());
  const Vector uniform = Vector::Constant(nu_n, 1.0 / static_cast<double>(nu_n));
  std::vector<SweepPoint> out;
  std::optional<IcbeWarmStart> warm;
  for (double s : s_grid) {
    SweepPoint point{s, std::nullopt, {}};
    try {
      IcbeSolution sol = solve_icbe(model, s, opts, warm);
      // Zero marginal entries are absorbing for the tilt; reseed them.
      warm = IcbeWarmStart{sol.h, 0.9 * (sol.phi.matrix().transpose() * sol.pi.probs()) + 0.1 * uniform};
      point.solution = std::move(sol);
    } catch (const std::exception& ex) {
      point.error = ex.what();
    }
    out.push_back(std::move(point));
  }
  return out;
}

struct AcoeSolution {
  Vector h;
  double lambda = 0.0;
  std::vector<std::size_t> greedy;  ///< lowest-index minimizer of c + Qh per state
  std::size_t iterations = 0;
  bool lazy = false;      ///< solved on (Q + I)/2 after detecting periodic behaviour
  bool unichain = true;   ///< greedy policy has a unique invariant distribution
};

class AcoeNonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AcoeOptions {
  double span_tol = 1e-10;
  std::size_t plain_iter = 20000;  ///< before switching to the lazy chain
  std::size_t max_iter = 2'000'000;
};

/// Unconstrained average-cost optimality equation by relative value iteration.
inline AcoeSolution unconstrained_acoe(const MdpModel& model, const AcoeOptions& opts = {}) {
  const auto nx = static_cast<Eigen::Index>(model.states());
  auto run = [&](double mix, std::size_t limit, AcoeSolution& out) {
    Vector h = Vector::Zero(nx);
    for (std::size_t k = 1; k <= limit; ++k) {
      const Matrix d = model.cost() + mix * detail::expected_next(model, h);
      Vector th = d.rowwise().minCoeff();
      th += (1.0 - mix) * h;
      Vector next = th.array() - th[0];
      const double change = detail::span(next - h);
      h = std::move(next);
      if (change < opts.span_tol) {
        out.h = h;
        out.lambda = th[0];
        out.iterations = k;
        return true;
      }
    }
    return false;
  };

  AcoeSolution sol;
  if (!run(1.0, opts.plain_iter, sol)) {
    if (!run(0.5, opts.max_iter, sol))
      throw AcoeNonConvergence("unconstrained_acoe: relative value iteration did not converge");
    sol.lazy = true;
    sol.h *= 0.5;
  }
  const Matrix d = model.cost() + detail::expected_next(model, sol.h);
  sol.greedy = detail::row_argmin(d);
  const auto greedy = StochasticKernel::deterministic(model.state_atoms(), model.action_atoms(), sol.greedy);
  bool unique = true;
  (void)detail::invariant_vector(detail::closed_loop(model, greedy.matrix()), unique);
  sol.unichain = unique;
  return sol;
}

/// Long-run average cost <pi (x) Phi, c> of a stationary randomized policy.
inline double average_cost(const MdpModel& model, const StochasticKernel& phi) {
  const auto inv = invariant_distribution(closed_loop_kernel(model, phi));
  return detail::expected_cost(inv.distribution.probs(), phi.matrix(), model.cost());
}

}  // namespace infoctrl
