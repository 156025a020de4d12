#pragma once

// Finite-alphabet probability and information primitives.
//
// All quantities are in nats. Atoms carry string labels; numeric work is
// positional and labels are only compared at API boundaries so that state and
// action alphabets can never be silently swapped.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace infoctrl {

using Labels = std::vector<std::string>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Mass below this is an exact zero in entropy sums (0 ln 0 := 0).
inline constexpr double kZeroMass = 1e-15;
/// Admissible deviation of a probability vector's total mass from one.
inline constexpr double kMassTolerance = 1e-12;
/// Sentinel returned when absolute continuity fails.
inline constexpr double kInfiniteDivergence = std::numeric_limits<double>::infinity();

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Labels "<prefix>0", "<prefix>1", ...
inline Labels make_labels(const std::string& prefix, std::size_t n) {
  Labels out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

namespace detail {

inline void require_same_atoms(const Labels& a, const Labels& b, const char* what) {
  if (a != b) throw DimensionError(std::string(what) + ": atom lists differ");
}

inline void check_probability_vector(const Vector& p, const std::string& what) {
  if (p.size() == 0) throw ValidationError(what + ": empty probability vector");
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i]) || p[i] < 0.0)
      throw ValidationError(what + ": entry " + std::to_string(i) + " is negative or not finite");
  }
  const double total = p.sum();
  if (std::abs(total - 1.0) > kMassTolerance)
    throw ValidationError(what + ": mass " + std::to_string(total) + " differs from 1");
}

/// Clamp round-off negatives and rescale to unit mass.
inline Vector renormalize(Vector p) {
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p[i] > 0.0)) p[i] = 0.0;
  }
  const double total = p.sum();
  if (!(total > 0.0)) throw ValidationError("cannot normalize a vector with no positive mass");
  return p / total;
}

/// Positional relative entropy with the conventions of relative_entropy().
inline double kl(const Vector& p, const Vector& q) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] < kZeroMass) continue;
    if (q[i] <= 0.0) return kInfiniteDivergence;
    acc += p[i] * std::log(p[i] / q[i]);
  }
  return std::max(acc, 0.0);
}

/// I(mu, K) with K given row-stochastic, |X| x |Y|.
inline double mutual_information(const Vector& mu, const Matrix& kernel) {
  // Propagated marginals drift off unit mass by rounding; measure against the
  // normalized input so constant kernels stay at zero.
  const Vector in = mu / mu.sum();
  const Vector out = kernel.transpose() * in;
  double acc = 0.0;
  for (Eigen::Index x = 0; x < kernel.rows(); ++x) {
    if (in[x] < kZeroMass) continue;
    for (Eigen::Index y = 0; y < kernel.cols(); ++y) {
      const double joint = in[x] * kernel(x, y);
      if (joint < kZeroMass) continue;
      acc += joint * std::log(kernel(x, y) / out[y]);
    }
  }
  return std::max(acc, 0.0);
}

/// log sum_i exp(v_i), stable for very negative or very positive entries.
inline double log_sum_exp(const Vector& v) {
  const double top = v.maxCoeff();
  if (top == -std::numeric_limits<double>::infinity()) return top;
  return top + std::log((v.array() - top).exp().sum());
}

}  // namespace detail

/// Probability vector over a labelled finite set.
class FiniteDistribution {
 public:
  FiniteDistribution(Labels atoms, Vector probs) : atoms_(std::move(atoms)), probs_(std::move(probs)) {
    if (static_cast<std::size_t>(probs_.size()) != atoms_.size())
      throw DimensionError("FiniteDistribution: label count does not match probability count");
    detail::check_probability_vector(probs_, "FiniteDistribution");
  }

  /// Rescales `weights` to unit mass after clamping round-off negatives.
  static FiniteDistribution normalized(Labels atoms, Vector weights) {
    return FiniteDistribution(std::move(atoms), detail::renormalize(std::move(weights)));
  }

  static FiniteDistribution uniform(Labels atoms) {
    const auto n = static_cast<Eigen::Index>(atoms.size());
    return FiniteDistribution(std::move(atoms), Vector::Constant(n, 1.0 / static_cast<double>(n)));
  }

  static FiniteDistribution point_mass(Labels atoms, std::size_t index) {
    if (index >= atoms.size()) throw DimensionError("point_mass: index out of range");
    Vector p = Vector::Zero(static_cast<Eigen::Index>(atoms.size()));
    p[static_cast<Eigen::Index>(index)] = 1.0;
    return FiniteDistribution(std::move(atoms), std::move(p));
  }

  const Labels& atoms() const noexcept { return atoms_; }
  const Vector& probs() const noexcept { return probs_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  double operator[](std::size_t i) const { return probs_[static_cast<Eigen::Index>(i)]; }

  std::size_t index_of(const std::string& label) const {
    auto it = std::find(atoms_.begin(), atoms_.end(), label);
    if (it == atoms_.end()) throw DimensionError("unknown atom '" + label + "'");
    return static_cast<std::size_t>(it - atoms_.begin());
  }

 private:
  Labels atoms_;
  Vector probs_;
};

/// Row-stochastic matrix: one conditional distribution per input atom.
class StochasticKernel {
 public:
  StochasticKernel(Labels input_atoms, Labels output_atoms, Matrix rows)
      : input_(std::move(input_atoms)), output_(std::move(output_atoms)), rows_(std::move(rows)) {
    if (static_cast<std::size_t>(rows_.rows()) != input_.size() ||
        static_cast<std::size_t>(rows_.cols()) != output_.size())
      throw DimensionError("StochasticKernel: matrix shape does not match label lists");
    for (Eigen::Index x = 0; x < rows_.rows(); ++x)
      detail::check_probability_vector(rows_.row(x).transpose(), "StochasticKernel row " + std::to_string(x));
  }

  /// Renormalizes every row; use for kernels produced by floating-point updates.
  static StochasticKernel normalized(Labels input_atoms, Labels output_atoms, Matrix weights) {
    for (Eigen::Index x = 0; x < weights.rows(); ++x)
      weights.row(x) = detail::renormalize(weights.row(x).transpose()).transpose();
    return StochasticKernel(std::move(input_atoms), std::move(output_atoms), std::move(weights));
  }

  /// Every row equal to `row`.
  static StochasticKernel constant(Labels input_atoms, const FiniteDistribution& row) {
    Matrix m(static_cast<Eigen::Index>(input_atoms.size()), static_cast<Eigen::Index>(row.size()));
    m.rowwise() = row.probs().transpose();
    return StochasticKernel(std::move(input_atoms), row.atoms(), std::move(m));
  }

  /// Row x is the point mass at choice[x].
  static StochasticKernel deterministic(Labels input_atoms, Labels output_atoms,
                                        const std::vector<std::size_t>& choice) {
    if (choice.size() != input_atoms.size()) throw DimensionError("deterministic: one choice per input required");
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(input_atoms.size()),
                            static_cast<Eigen::Index>(output_atoms.size()));
    for (std::size_t x = 0; x < choice.size(); ++x) {
      if (choice[x] >= output_atoms.size()) throw DimensionError("deterministic: choice out of range");
      m(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(choice[x])) = 1.0;
    }
    return StochasticKernel(std::move(input_atoms), std::move(output_atoms), std::move(m));
  }

  static StochasticKernel identity(const Labels& atoms) {
    const auto n = static_cast<Eigen::Index>(atoms.size());
    return StochasticKernel(atoms, atoms, Matrix::Identity(n, n));
  }

  const Labels& input_atoms() const noexcept { return input_; }
  const Labels& output_atoms() const noexcept { return output_; }
  const Matrix& matrix() const noexcept { return rows_; }
  std::size_t inputs() const noexcept { return input_.size(); }
  std::size_t outputs() const noexcept { return output_.size(); }
  double operator()(std::size_t x, std::size_t y) const {
    return rows_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
  }

  FiniteDistribution row(std::size_t x) const {
    return FiniteDistribution(output_, rows_.row(static_cast<Eigen::Index>(x)).transpose());
  }

  bool is_square() const noexcept { return input_ == output_; }

 private:
  Labels input_;
  Labels output_;
  Matrix rows_;
};

/// Nonnegative matrix of unit total mass indexed by (input, output).
class JointDistribution {
 public:
  JointDistribution(Labels input_atoms, Labels output_atoms, Matrix mass)
      : input_(std::move(input_atoms)), output_(std::move(output_atoms)), mass_(std::move(mass)) {
    if (static_cast<std::size_t>(mass_.rows()) != input_.size() ||
        static_cast<std::size_t>(mass_.cols()) != output_.size())
      throw DimensionError("JointDistribution: matrix shape does not match label lists");
    if ((mass_.array() < 0.0).any()) throw ValidationError("JointDistribution: negative entry");
    if (std::abs(mass_.sum() - 1.0) > kMassTolerance) throw ValidationError("JointDistribution: mass differs from 1");
  }

  const Labels& input_atoms() const noexcept { return input_; }
  const Labels& output_atoms() const noexcept { return output_; }
  const Matrix& matrix() const noexcept { return mass_; }

  FiniteDistribution input_marginal() const {
    return FiniteDistribution::normalized(input_, mass_.rowwise().sum());
  }
  FiniteDistribution output_marginal() const {
    return FiniteDistribution::normalized(output_, mass_.colwise().sum().transpose());
  }

 private:
  Labels input_;
  Labels output_;
  Matrix mass_;
};

/// D(mu || nu) in nats; kInfiniteDivergence when mu is not absolutely continuous w.r.t. nu.
inline double relative_entropy(const FiniteDistribution& mu, const FiniteDistribution& nu) {
  detail::require_same_atoms(mu.atoms(), nu.atoms(), "relative_entropy");
  return detail::kl(mu.probs(), nu.probs());
}

inline double relative_entropy(const JointDistribution& p, const JointDistribution& q) {
  detail::require_same_atoms(p.input_atoms(), q.input_atoms(), "relative_entropy");
  detail::require_same_atoms(p.output_atoms(), q.output_atoms(), "relative_entropy");
  const Eigen::Map<const Vector> pv(p.matrix().data(), p.matrix().size());
  const Eigen::Map<const Vector> qv(q.matrix().data(), q.matrix().size());
  return detail::kl(pv, qv);
}

/// Product measure mu (x) nu.
inline JointDistribution product(const FiniteDistribution& mu, const FiniteDistribution& nu) {
  return JointDistribution(mu.atoms(), nu.atoms(), mu.probs() * nu.probs().transpose());
}

/// (mu K, mu (x) K).
inline std::pair<FiniteDistribution, JointDistribution> marginal_and_joint(const FiniteDistribution& mu,
                                                                           const StochasticKernel& kernel) {
  detail::require_same_atoms(mu.atoms(), kernel.input_atoms(), "marginal_and_joint");
  Matrix joint = mu.probs().asDiagonal() * kernel.matrix();
  FiniteDistribution out = FiniteDistribution::normalized(kernel.output_atoms(), kernel.matrix().transpose() * mu.probs());
  return {std::move(out), JointDistribution(kernel.input_atoms(), kernel.output_atoms(), std::move(joint))};
}

/// I(mu, K) = D(mu (x) K || mu (x) mu K), in nats.
inline double mutual_information(const FiniteDistribution& mu, const StochasticKernel& kernel) {
  detail::require_same_atoms(mu.atoms(), kernel.input_atoms(), "mutual_information");
  return detail::mutual_information(mu.probs(), kernel.matrix());
}

/// (K o L)(z|x) = sum_y K(y|x) L(z|y).
inline StochasticKernel compose(const StochasticKernel& first, const StochasticKernel& second) {
  detail::require_same_atoms(first.output_atoms(), second.input_atoms(), "compose");
  return StochasticKernel::normalized(first.input_atoms(), second.output_atoms(), first.matrix() * second.matrix());
}

struct InvariantResult {
  FiniteDistribution distribution;
  /// False when the chain has more than one invariant distribution.
  bool unique = true;
  /// ||pi P - pi||_1 of the returned distribution.
  double residual = 0.0;
};

namespace detail {

inline constexpr Eigen::Index kDirectSolveLimit = 2000;

/// Power iteration on the lazy chain (P + I)/2, which has the same invariant
/// measures as P and is aperiodic.
inline Vector lazy_power_iteration(const Matrix& p, Vector start, double tol, std::size_t max_iter) {
  const Matrix lazy_t = 0.5 * (p.transpose() + Matrix::Identity(p.rows(), p.cols()));
  for (std::size_t k = 0; k < max_iter; ++k) {
    Vector next = lazy_t * start;
    next /= next.sum();
    const double change = (next - start).lpNorm<1>();
    start = std::move(next);
    if (change <= tol) break;
  }
  return start;
}

inline Vector invariant_vector(const Matrix& p, bool& unique) {
  const Eigen::Index n = p.rows();
  if (n == 1) {
    unique = true;
    return Vector::Ones(1);
  }
  if (n <= kDirectSolveLimit) {
    const Matrix a = p.transpose() - Matrix::Identity(n, n);
    Eigen::FullPivLU<Matrix> lu(a);
    lu.setThreshold(1e-10);
    unique = lu.rank() == n - 1;
    if (unique) {
      Matrix b = a;
      b.row(n - 1).setOnes();
      Vector rhs = Vector::Zero(n);
      rhs[n - 1] = 1.0;
      Vector pi = b.partialPivLu().solve(rhs);
      pi = renormalize(std::move(pi));
      // One refinement step against round-off in ill-conditioned chains.
      const Vector r = rhs - b * pi;
      if (r.lpNorm<Eigen::Infinity>() > 1e-14) pi = renormalize(pi + b.partialPivLu().solve(r));
      return pi;
    }
    return lazy_power_iteration(p, Vector::Constant(n, 1.0 / static_cast<double>(n)), 1e-13, 10'000'000);
  }
  Vector from_uniform = lazy_power_iteration(p, Vector::Constant(n, 1.0 / static_cast<double>(n)), 1e-13, 10'000'000);
  Vector point = Vector::Zero(n);
  point[0] = 1.0;
  const Vector from_point = lazy_power_iteration(p, std::move(point), 1e-13, 10'000'000);
  unique = (from_uniform - from_point).lpNorm<1>() <= 1e-8;
  return from_uniform;
}

}  // namespace detail

/// Invariant distribution pi = pi P of a square kernel. Direct linear solve up
/// to 2000 atoms, lazy power iteration above. Multiple invariant measures are
/// reported through `unique`, not as an error.
inline InvariantResult invariant_distribution(const StochasticKernel& chain) {
  if (!chain.is_square()) throw DimensionError("invariant_distribution: kernel is not square");
  bool unique = true;
  Vector pi = detail::invariant_vector(chain.matrix(), unique);
  const double residual = (chain.matrix().transpose() * pi - pi).lpNorm<1>();
  return InvariantResult{FiniteDistribution(chain.input_atoms(), std::move(pi)), unique, residual};
}

}  // namespace infoctrl
