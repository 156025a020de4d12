#pragma once

// Monte Carlo and exact-marginal validation of controllers.
//
// Every path owns an mt19937_64 stream seeded from (seed, path index), so a
// report depends only on the configuration, never on thread scheduling.
// Per-path results are reduced in path order.

#include "infoctrl/avg_cost.hpp"
#include "infoctrl/discounted.hpp"
#include "infoctrl/lqg.hpp"
#include "infoctrl/prob_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <thread>
#include <variant>
#include <vector>

namespace infoctrl {

struct SimConfig {
  std::size_t horizon = 10000;
  std::size_t n_paths = 100;
  std::uint64_t seed = 0;
  /// Steps discarded before averaging; defaults to horizon / 10.
  std::optional<std::size_t> burn_in;
  /// 0 means std::thread::hardware_concurrency().
  unsigned threads = 0;

  std::size_t effective_burn_in() const { return burn_in ? *burn_in : horizon / 10; }
  void validate() const {
    if (n_paths < 1) throw std::invalid_argument("SimConfig: n_paths must be >= 1");
    if (!(horizon > effective_burn_in())) throw std::invalid_argument("SimConfig: horizon must exceed burn_in");
  }
};

struct PathSummary {
  double mean_cost = 0.0;
  double state_mean = 0.0;
  double state_var = 0.0;
  bool diverged = false;
  std::size_t divergence_step = 0;
};

struct SimReport {
  double mean_pathwise_cost = 0.0;
  /// Sample std of per-path averages / sqrt(n_paths).
  double cost_stderr = 0.0;
  double state_mean = 0.0;
  double state_mean_stderr = 0.0;
  /// Mean over paths of the time-averaged empirical state variance.
  double state_var = 0.0;
  double state_var_stderr = 0.0;
  std::vector<PathSummary> paths;
  bool diverged = false;
  /// Earliest step at which any path crossed the divergence threshold.
  std::size_t divergence_step = 0;

  std::vector<double> per_path_costs() const {
    std::vector<double> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(p.mean_cost);
    return out;
  }
};

inline constexpr double kDivergenceThreshold = 1e150;

namespace detail {

/// Welford accumulator; exact for constant sequences.
class RunningMoments {
 public:
  void add(double x) {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }
  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Population variance.
  double variance() const { return n_ > 0 ? m2_ / static_cast<double>(n_) : 0.0; }
  double sample_variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline std::mt19937_64 path_engine(std::uint64_t seed, std::size_t path) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(static_cast<std::uint64_t>(path) >> 32)};
  return std::mt19937_64(seq);
}

/// Uniform on [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t sample_index(const double* cdf, std::size_t n, double u) {
  const double* it = std::upper_bound(cdf, cdf + n, u);
  const auto idx = static_cast<std::size_t>(it - cdf);
  return std::min(idx, n - 1);
}

/// Row-wise cumulative sums stored contiguously.
inline std::vector<double> cumulative_rows(const Matrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  const auto cols = static_cast<std::size_t>(m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    double acc = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      acc += m(r, c);
      out[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)] = acc;
    }
  }
  return out;
}

template <class PathFn>
std::vector<PathSummary> run_paths(const SimConfig& cfg, PathFn&& fn) {
  std::vector<PathSummary> out(cfg.n_paths);
  unsigned workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, cfg.n_paths));
  if (workers <= 1) {
    for (std::size_t i = 0; i < cfg.n_paths; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < cfg.n_paths; i += workers) out[i] = fn(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

inline SimReport aggregate(std::vector<PathSummary> paths) {
  SimReport rep;
  RunningMoments cost;
  RunningMoments mean;
  RunningMoments var;
  for (const auto& p : paths) {
    if (p.diverged) {
      rep.divergence_step = rep.diverged ? std::min(rep.divergence_step, p.divergence_step) : p.divergence_step;
      rep.diverged = true;
      continue;
    }
    cost.add(p.mean_cost);
    mean.add(p.state_mean);
    var.add(p.state_var);
  }
  const double n = static_cast<double>(cost.count());
  if (cost.count() > 0) {
    rep.mean_pathwise_cost = cost.mean();
    rep.cost_stderr = std::sqrt(cost.sample_variance() / n);
    rep.state_mean = mean.mean();
    rep.state_mean_stderr = std::sqrt(mean.sample_variance() / n);
    rep.state_var = var.mean();
    rep.state_var_stderr = std::sqrt(var.sample_variance() / n);
  }
  if (rep.diverged) {
    rep.mean_pathwise_cost = std::numeric_limits<double>::infinity();
    rep.cost_stderr = std::numeric_limits<double>::quiet_NaN();
  }
  rep.paths = std::move(paths);
  return rep;
}

}  // namespace detail

using FinitePolicy = std::variant<StochasticKernel, MrqLaw>;

/// Trajectories of the finite model under a stationary kernel or an MRQ law.
/// State moments treat the state index 0..|X|-1 as the numeric value.
inline SimReport simulate_finite(const MdpModel& model, const FinitePolicy& policy, const FiniteDistribution& mu,
                                 const SimConfig& cfg) {
  cfg.validate();
  detail::require_same_atoms(mu.atoms(), model.state_atoms(), "simulate_finite");
  const std::size_t nx = model.states();
  const std::size_t nu = model.actions();

  std::vector<double> phi_cdf0;
  std::vector<double> phi_cdf1;
  std::size_t switch_time = 0;
  if (const auto* k = std::get_if<StochasticKernel>(&policy)) {
    detail::require_policy(model, *k, "simulate_finite");
    phi_cdf0 = detail::cumulative_rows(k->matrix());
    phi_cdf1 = phi_cdf0;
  } else {
    const auto& law = std::get<MrqLaw>(policy);
    detail::require_policy(model, law.phi0, "simulate_finite");
    detail::require_policy(model, law.phi1, "simulate_finite");
    phi_cdf0 = detail::cumulative_rows(law.phi0.matrix());
    phi_cdf1 = detail::cumulative_rows(law.phi1.matrix());
    switch_time = law.t_star;
  }
  // trans_cdf[(u * nx + x) * nx + x']
  std::vector<double> trans_cdf;
  trans_cdf.reserve(nu * nx * nx);
  for (std::size_t u = 0; u < nu; ++u) {
    const auto c = detail::cumulative_rows(model.transitions()[u]);
    trans_cdf.insert(trans_cdf.end(), c.begin(), c.end());
  }
  Vector mu_cdf(static_cast<Eigen::Index>(nx));
  double acc = 0.0;
  for (std::size_t x = 0; x < nx; ++x) mu_cdf[static_cast<Eigen::Index>(x)] = acc += mu[x];
  const Matrix& cost = model.cost();
  const std::size_t burn = cfg.effective_burn_in();

  return detail::aggregate(detail::run_paths(cfg, [&](std::size_t path) {
    auto rng = detail::path_engine(cfg.seed, path);
    std::size_t x = detail::sample_index(mu_cdf.data(), nx, detail::uniform01(rng));
    detail::RunningMoments c_acc;
    detail::RunningMoments s_acc;
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
      const std::vector<double>& pc = t < switch_time ? phi_cdf0 : phi_cdf1;
      const std::size_t u = detail::sample_index(pc.data() + x * nu, nu, detail::uniform01(rng));
      if (t >= burn) {
        c_acc.add(cost(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u)));
        s_acc.add(static_cast<double>(x));
      }
      x = detail::sample_index(trans_cdf.data() + (u * nx + x) * nx, nx, detail::uniform01(rng));
    }
    return PathSummary{c_acc.mean(), s_acc.mean(), s_acc.variance(), false, 0};
  }));
}

struct GaussianInit {
  double mean = 0.0;
  double var = 0.0;
};

/// X_{t+1} = a X_t + b U_t + W_t with U_t = k [g X_t + N_t].
///
/// The channel noise N_t has variance e^{-2R} g v_t, where v_t is the exact
/// variance of X_t propagated from the initial law, so every stage carries
/// exactly R nats. Started from the policy's stationary variance this is the
/// time-invariant controller; in an unstable loop v_t and the paths blow up.
inline SimReport simulate_lqg(const lqg::LqgParams& prm, const lqg::GaussianPolicy& policy, const SimConfig& cfg,
                              const GaussianInit& x0) {
  prm.validate();
  cfg.validate();
  if (!(x0.var >= 0.0)) throw std::invalid_argument("simulate_lqg: initial variance must be >= 0");
  const double e = std::exp(-2.0 * policy.rate);
  const double g = policy.sensor_gain;
  const double k = policy.actuator_gain;
  const double rho = lqg::closed_loop_coefficient(prm, policy.rate, k);
  const double sigma = std::sqrt(prm.sigma2);
  const std::size_t burn = cfg.effective_burn_in();

  // The variance schedule is deterministic, so share it across paths.
  std::vector<double> chan_sd(cfg.horizon);
  double v = x0.var;
  for (std::size_t t = 0; t < cfg.horizon; ++t) {
    chan_sd[t] = std::isfinite(v) ? std::sqrt(e * g * v) : std::numeric_limits<double>::infinity();
    v = rho * v + prm.sigma2;
  }

  return detail::aggregate(detail::run_paths(cfg, [&](std::size_t path) {
    auto rng = detail::path_engine(cfg.seed, path);
    std::normal_distribution<double> normal(0.0, 1.0);
    double x = x0.mean + std::sqrt(x0.var) * normal(rng);
    detail::RunningMoments c_acc;
    detail::RunningMoments s_acc;
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
      const double u = k * (g * x + chan_sd[t] * normal(rng));
      if (!(std::abs(x) <= kDivergenceThreshold) || !std::isfinite(u))
        return PathSummary{std::numeric_limits<double>::infinity(), x, 0.0, true, t};
      if (t >= burn) {
        c_acc.add(prm.p * x * x + prm.q * u * u);
        s_acc.add(x);
      }
      x = prm.a * x + prm.b * u + sigma * normal(rng);
    }
    return PathSummary{c_acc.mean(), s_acc.mean(), s_acc.variance(), false, 0};
  }));
}

struct InfoPoint {
  std::size_t t = 0;
  double info = 0.0;
};

/// I(mu_t, Phi) for t = 0..T under exact propagation mu_{t+1} = mu_t Q_Phi.
inline std::vector<InfoPoint> info_trajectory(const MdpModel& model, const StochasticKernel& phi,
                                              const FiniteDistribution& mu, std::size_t horizon) {
  detail::require_same_atoms(mu.atoms(), model.state_atoms(), "info_trajectory");
  detail::require_policy(model, phi, "info_trajectory");
  const Matrix pt = detail::closed_loop(model, phi.matrix()).transpose();
  std::vector<InfoPoint> out;
  out.reserve(horizon + 1);
  Vector m = mu.probs();
  for (std::size_t t = 0; t <= horizon; ++t) {
    out.push_back({t, detail::mutual_information(m, phi.matrix())});
    m = pt * m;
  }
  return out;
}

}  // namespace infoctrl
