#pragma once

// Subcommand orchestration behind tools/infoctrl.
//
// Every command computes all artifacts in memory first; files are written only
// after the whole computation succeeded, followed by manifest.json listing each
// artifact with its SHA-256. Failures print one JSON object to the error stream
// and return a nonzero status:
//   2  bad invocation or malformed input document
//   3  solver failure or uncertified result
//   4  filesystem error while writing artifacts

#include "infoctrl/avg_cost.hpp"
#include "infoctrl/discounted.hpp"
#include "infoctrl/lqg.hpp"
#include "infoctrl/model_io.hpp"
#include "infoctrl/rate_distortion.hpp"
#include "infoctrl/simulator.hpp"

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace infoctrl::cli {

inline constexpr const char* kVersion = "1.0.0";

enum class Command { kDrf, kIcbe, kLqg, kDiscounted, kSimulate };

inline std::optional<Command> parse_command(const std::string& name) {
  if (name == "drf") return Command::kDrf;
  if (name == "icbe") return Command::kIcbe;
  if (name == "lqg") return Command::kLqg;
  if (name == "discounted") return Command::kDiscounted;
  if (name == "simulate") return Command::kSimulate;
  return std::nullopt;
}

inline const char* command_name(Command c) {
  switch (c) {
    case Command::kDrf: return "drf";
    case Command::kIcbe: return "icbe";
    case Command::kLqg: return "lqg";
    case Command::kDiscounted: return "discounted";
    default: return "simulate";
  }
}

struct Grid {
  double start = 0.0;
  double stop = 0.0;
  std::size_t n = 0;

  /// Evenly spaced, or log-spaced when `geometric`; n == 1 gives {start}.
  std::vector<double> values(bool geometric = false) const {
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
      out.push_back(geometric ? std::exp(std::log(start) + f * (std::log(stop) - std::log(start)))
                              : start + f * (stop - start));
    }
    if (n > 1) {
      out.front() = start;
      out.back() = stop;
    }
    return out;
  }
};

/// Parses "start:stop:n".
inline Grid parse_grid(const std::string& text) {
  const auto a = text.find(':');
  const auto b = a == std::string::npos ? std::string::npos : text.find(':', a + 1);
  if (b == std::string::npos) throw io::SchemaError("--grid must look like start:stop:n", {"--grid"});
  Grid g;
  try {
    std::size_t used = 0;
    const std::string s0 = text.substr(0, a), s1 = text.substr(a + 1, b - a - 1), s2 = text.substr(b + 1);
    g.start = std::stod(s0, &used);
    if (used != s0.size()) throw std::invalid_argument("start");
    g.stop = std::stod(s1, &used);
    if (used != s1.size()) throw std::invalid_argument("stop");
    const long long n = std::stoll(s2, &used);
    if (used != s2.size() || n < 1) throw std::invalid_argument("n");
    g.n = static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw io::SchemaError("--grid must look like start:stop:n with n >= 1", {"--grid"});
  }
  if (!std::isfinite(g.start) || !std::isfinite(g.stop))
    throw io::SchemaError("--grid bounds must be finite", {"--grid"});
  return g;
}

struct RunConfig {
  Command command = Command::kDrf;
  std::string input_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<Grid> grid;
  std::optional<double> tol;
};

struct Artifact {
  std::string name;
  std::string content;
};

class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, io::json diagnostics)
      : std::runtime_error(what), diagnostics(std::move(diagnostics)) {}
  io::json diagnostics;
};

struct RunOutput {
  std::vector<Artifact> artifacts;
  io::json tolerances = io::json::object();
  io::json summary = io::json::object();
};

namespace detail {

template <class T>
const T& require_model(const io::ModelDocument& doc, Command c, const char* expected) {
  const T* m = std::get_if<T>(&doc.model);
  if (!m)
    throw io::SchemaError(std::string(command_name(c)) + " needs a \"" + expected + "\" document, got \"" +
                              doc.type() + "\"",
                          {"type"});
  return *m;
}

inline void require_positive_grid(const Grid& g, const char* what) {
  if (!(g.start > 0.0 && g.stop > 0.0)) throw io::SchemaError(std::string(what) + " must be positive", {"--grid"});
}

inline FiniteDistribution initial_law(const io::ModelDocument& doc, const MdpModel& m) {
  if (doc.initial) return FiniteDistribution(m.state_atoms(), *doc.initial);
  return FiniteDistribution::uniform(m.state_atoms());
}

inline RunOutput run_drf(const RunConfig& cfg, const io::ModelDocument& doc) {
  const auto& spec = require_model<DistortionSpec>(doc, cfg.command, "distortion");
  RateSearchOptions opts;
  if (cfg.tol) opts.rate_tol = *cfg.tol;
  const double r0 = critical_rate(spec);
  const Grid grid = cfg.grid.value_or(Grid{0.0, r0, 21});
  if (grid.start < 0.0 || grid.stop < grid.start) throw io::SchemaError("drf grid must satisfy 0 <= start <= stop", {"--grid"});
  io::CsvWriter csv({"R_nats", "D", "s", "iterations", "dual_gap"});
  double worst_gap = 0.0;
  for (double r : grid.values()) {
    const DrfSolution sol = [&] {
      try {
        return solve_drf_at_rate(spec, r, opts);
      } catch (const std::exception& ex) {
        throw SolverFailure(std::string("drf failed at R=") + io::format_double(r) + ": " + ex.what(),
                            {{"R_nats", r}});
      }
    }();
    csv.row({sol.rate, sol.distortion, sol.s, static_cast<double>(sol.iterations), sol.dual_gap()});
    worst_gap = std::max(worst_gap, sol.dual_gap());
  }
  RunOutput out;
  out.artifacts.push_back({"drf.csv", csv.str()});
  out.tolerances = {{"rate_tol", opts.rate_tol}, {"lagrangian_tol", opts.ba.lagrangian_tol}};
  out.summary = {{"critical_rate", r0}, {"max_dual_gap", worst_gap}};
  return out;
}

inline RunOutput run_icbe(const RunConfig& cfg, const io::ModelDocument& doc) {
  const auto& model = require_model<MdpModel>(doc, cfg.command, "mdp");
  IcbeOptions opts;
  if (cfg.tol) opts.icbe_tol = *cfg.tol;
  const Grid grid = cfg.grid.value_or(Grid{100.0, 1e-3, 10});
  require_positive_grid(grid, "icbe grid (values of s)");
  std::vector<double> s = grid.values(true);
  std::sort(s.begin(), s.end(), std::greater<>());
  s.erase(std::unique(s.begin(), s.end()), s.end());

  const auto sweep = icbe_rate_sweep(model, s, opts);
  io::CsvWriter csv({"s", "R_nats", "lambda", "icbe_gap", "invariance_gap"});
  io::json failures = io::json::array();
  for (const auto& pt : sweep) {
    if (!pt.solution) {
      failures.push_back({{"s", pt.s}, {"error", pt.error}});
      continue;
    }
    const auto& sol = *pt.solution;
    if (!certified(sol, opts))
      failures.push_back({{"s", pt.s},
                          {"error", "certificate residuals above tolerance"},
                          {"icbe_gap", sol.residuals.icbe_gap},
                          {"bellman_gap", sol.residuals.bellman_gap},
                          {"invariance_gap", sol.residuals.invariance_gap},
                          {"structure_gap", sol.residuals.structure_gap},
                          {"cost_gap", sol.residuals.cost_gap}});
    csv.row({sol.s, sol.rate, sol.lambda, sol.residuals.icbe_gap, sol.residuals.invariance_gap});
  }
  if (!failures.empty()) throw SolverFailure("icbe sweep has failed or uncertified points", failures);
  RunOutput out;
  out.artifacts.push_back({"icbe.csv", csv.str()});
  out.tolerances = {{"value_tol", opts.value_tol},
                    {"invariance_tol", opts.invariance_tol},
                    {"icbe_tol", opts.icbe_tol},
                    {"structure_tol", opts.structure_tol}};
  out.summary = {{"points", sweep.size()}};
  return out;
}

inline RunOutput run_lqg(const RunConfig& cfg, const io::ModelDocument& doc) {
  const auto& prm = require_model<lqg::LqgParams>(doc, cfg.command, "lqg");
  const Grid grid = cfg.grid.value_or(Grid{0.0, 5.0, 51});
  if (grid.start < 0.0 || grid.stop < grid.start) throw io::SchemaError("lqg grid must satisfy 0 <= start <= stop", {"--grid"});
  io::CsvWriter csv({"R_nats", "m1", "m2", "k1", "k2", "s1sq", "s2sq", "lambda1", "lambda2"});
  for (double r : grid.values()) {
    lqg::LqgDesign d;
    try {
      d = lqg::design(prm, r);
    } catch (const std::exception& ex) {
      throw SolverFailure(std::string("lqg design failed at R=") + io::format_double(r) + ": " + ex.what(),
                          {{"R_nats", r}});
    }
    csv.row({d.rate, d.m1, d.m2, d.k1, d.k2, d.s1sq, d.s2sq, d.lambda1, d.lambda2});
  }
  RunOutput out;
  out.artifacts.push_back({"lqg.csv", csv.str()});
  out.tolerances = {{"ic_dare", "bisection to adjacent doubles"}};
  return out;
}

inline RunOutput run_discounted(const RunConfig& cfg, const io::ModelDocument& doc) {
  const auto& model = require_model<MdpModel>(doc, cfg.command, "mdp");
  DcoeOptions opts;
  const double gap_tol = cfg.tol.value_or(1e-6);
  const FiniteDistribution mu = initial_law(doc, model);
  const double beta = doc.discount.value_or(0.9);
  const double eps = doc.epsilon.value_or(0.05);
  const double budget = doc.budget.value_or(0.2);
  const double s0 = doc.s.value_or(1.0);
  const MrqBudgetReport rep = [&] {
    try {
      return mrq_cost_and_rate_budget(model, mu, beta, budget, eps, s0, opts);
    } catch (const std::exception& ex) {
      throw SolverFailure(std::string("discounted solve failed: ") + ex.what(), io::json::object());
    }
  }();
  const auto& r = rep.stationary.residuals;
  if (rep.stationary.rate > 0.0 && !certified(rep.stationary, gap_tol))
    throw SolverFailure("IC-DCOE certificate residuals above tolerance",
                        {{"dcoe_gap", r.dcoe_gap}, {"bellman_gap", r.bellman_gap}, {"occupation_gap", r.occupation_gap},
                         {"structure_gap", r.structure_gap}, {"cost_gap", r.cost_gap}});
  io::CsvWriter trace({"t", "info_nats", "cumulative_discounted_cost"});
  for (const auto& st : rep.trace) trace.row({static_cast<double>(st.t), st.info, st.cumulative_discounted_cost});
  io::CsvWriter summary({"quantity", "value"});
  auto kv = [&](const char* k, double v) { summary.row_strings({k, io::format_double(v)}); };
  kv("beta", beta);
  kv("epsilon", eps);
  kv("budget", budget);
  kv("deflated_budget", rep.deflated_budget);
  kv("s", rep.stationary.s);
  kv("stationary_rate", rep.stationary.rate);
  kv("lambda", rep.stationary.lambda);
  kv("t_star", static_cast<double>(rep.wrap.law.t_star));
  kv("info_bound", rep.wrap.info_bound);
  kv("max_stage_info", rep.max_stage_info);
  kv("achieved_cost", rep.achieved_cost);
  kv("cost_bound", rep.cost_bound);
  RunOutput out;
  out.artifacts.push_back({"discounted.csv", trace.str()});
  out.artifacts.push_back({"discounted_summary.csv", summary.str()});
  out.tolerances = {{"value_tol", opts.value_tol}, {"certificate_tol", gap_tol}};
  out.summary = {{"info_within_budget", rep.info_within_budget()}, {"cost_within_bound", rep.cost_within_bound()}};
  return out;
}

inline SimConfig sim_config(const RunConfig& cfg, const io::ModelDocument& doc) {
  SimConfig sc;
  sc.horizon = doc.simulation.horizon.value_or(10000);
  sc.n_paths = doc.simulation.n_paths.value_or(100);
  sc.burn_in = doc.simulation.burn_in;
  sc.seed = cfg.seed.value_or(0);
  try {
    sc.validate();
  } catch (const std::invalid_argument& ex) {
    throw io::SchemaError(ex.what(), {"simulation"});
  }
  return sc;
}

inline void append_paths(io::CsvWriter& csv, double tag, double which, const SimReport& rep) {
  for (std::size_t i = 0; i < rep.paths.size(); ++i) {
    const auto& p = rep.paths[i];
    csv.row({tag, which, static_cast<double>(i), p.mean_cost, p.state_mean, p.state_var, p.diverged ? 1.0 : 0.0});
  }
}

inline RunOutput run_simulate(const RunConfig& cfg, const io::ModelDocument& doc) {
  const SimConfig sc = sim_config(cfg, doc);
  io::CsvWriter paths({"param", "controller", "path", "mean_cost", "state_mean", "state_var", "diverged"});
  io::CsvWriter summary({"param", "controller", "mean_cost", "cost_stderr", "reference_cost", "state_var",
                         "state_var_stderr", "reference_state_var"});
  RunOutput out;
  if (const auto* prm = std::get_if<lqg::LqgParams>(&doc.model)) {
    const Grid grid = cfg.grid.value_or(Grid{0.1, 2.0, 3});
    if (grid.start < 0.0 || grid.stop < grid.start) throw io::SchemaError("simulate grid must satisfy 0 <= start <= stop", {"--grid"});
    for (double r : grid.values()) {
      for (int which = 1; which <= 2; ++which) {
        lqg::GaussianPolicy pol;
        double ref_cost = 0.0;
        try {
          const lqg::LqgDesign d = lqg::design(*prm, r);
          if (which == 1 && !d.phi1_feasible) continue;
          pol = lqg::controller(*prm, r, which);
          ref_cost = which == 1 ? d.lambda1 : d.lambda2;
        } catch (const std::exception& ex) {
          throw SolverFailure(std::string("lqg design failed at R=") + io::format_double(r) + ": " + ex.what(),
                              {{"R_nats", r}});
        }
        const SimReport rep = simulate_lqg(*prm, pol, sc, {0.0, pol.state_var});
        append_paths(paths, r, which, rep);
        summary.row({r, static_cast<double>(which), rep.mean_pathwise_cost, rep.cost_stderr, ref_cost, rep.state_var,
                     rep.state_var_stderr, pol.state_var});
      }
    }
  } else {
    const auto& model = require_model<MdpModel>(doc, cfg.command, "mdp or lqg");
    const double s = doc.s.value_or(1.0);
    const IcbeSolution sol = [&] {
      try {
        return solve_icbe(model, s);
      } catch (const std::exception& ex) {
        throw SolverFailure(std::string("icbe solve failed: ") + ex.what(), {{"s", s}});
      }
    }();
    const FiniteDistribution mu = initial_law(doc, model);
    const SimReport rep = simulate_finite(model, sol.phi, mu, sc);
    append_paths(paths, s, 0.0, rep);
    summary.row({s, 0.0, rep.mean_pathwise_cost, rep.cost_stderr, sol.lambda, rep.state_var, rep.state_var_stderr,
                 std::numeric_limits<double>::quiet_NaN()});
    io::CsvWriter info({"t", "info_nats"});
    for (const auto& p : info_trajectory(model, sol.phi, mu, sc.horizon)) info.row({static_cast<double>(p.t), p.info});
    out.artifacts.push_back({"info_trajectory.csv", info.str()});
  }
  out.artifacts.insert(out.artifacts.begin(), {"simulate_summary.csv", summary.str()});
  out.artifacts.insert(out.artifacts.begin() + 1, {"simulate_paths.csv", paths.str()});
  out.tolerances = {{"horizon", sc.horizon}, {"n_paths", sc.n_paths}, {"burn_in", sc.effective_burn_in()},
                    {"seed", sc.seed}};
  return out;
}

inline void print_error(std::ostream& err, const char* kind, const std::string& message,
                        const io::json& extra = io::json::object()) {
  io::json e = {{"error", kind}, {"message", message}};
  for (auto it = extra.begin(); it != extra.end(); ++it) e[it.key()] = it.value();
  err << e.dump() << '\n';
}

}  // namespace detail

/// Runs one command; returns the process exit status.
inline int run(const RunConfig& cfg, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  RunOutput out;
  std::string input_text;
  try {
    if (cfg.output_dir.empty()) throw io::SchemaError("an output directory is required", {"--out"});
    input_text = io::read_file(cfg.input_path);
    const io::ModelDocument doc = io::parse_model([&] {
      try {
        return io::json::parse(input_text);
      } catch (const io::json::parse_error& e) {
        throw io::SchemaError("'" + cfg.input_path + "' is not valid JSON: " + e.what(), {"<root>"});
      }
    }());
    if (cfg.tol && !(*cfg.tol > 0.0)) throw io::SchemaError("--tol must be positive", {"--tol"});
    switch (cfg.command) {
      case Command::kDrf: out = detail::run_drf(cfg, doc); break;
      case Command::kIcbe: out = detail::run_icbe(cfg, doc); break;
      case Command::kLqg: out = detail::run_lqg(cfg, doc); break;
      case Command::kDiscounted: out = detail::run_discounted(cfg, doc); break;
      case Command::kSimulate: out = detail::run_simulate(cfg, doc); break;
    }
  } catch (const io::InputError& ex) {
    detail::print_error(err, "input", ex.what(), {{"path", cfg.input_path}});
    return 2;
  } catch (const io::SchemaError& ex) {
    detail::print_error(err, "schema", ex.what(), {{"fields", ex.fields}});
    return 2;
  } catch (const SolverFailure& ex) {
    detail::print_error(err, "solver", ex.what(), {{"diagnostics", ex.diagnostics}});
    return 3;
  } catch (const std::invalid_argument& ex) {
    detail::print_error(err, "schema", ex.what(), {{"fields", io::json::array()}});
    return 2;
  } catch (const std::exception& ex) {
    detail::print_error(err, "solver", ex.what());
    return 3;
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  io::json manifest;
  manifest["command"] = command_name(cfg.command);
  manifest["input"] = {{"path", cfg.input_path}, {"sha256", io::sha256_hex(input_text)}};
  io::json files = io::json::array();
  for (const auto& a : out.artifacts) files.push_back({{"file", a.name}, {"sha256", io::sha256_hex(a.content)}});
  manifest["artifacts"] = std::move(files);
  manifest["tolerances"] = out.tolerances;
  manifest["summary"] = out.summary;
  io::json overrides = io::json::object();
  if (cfg.seed) overrides["seed"] = *cfg.seed;
  if (cfg.grid) overrides["grid"] = {{"start", cfg.grid->start}, {"stop", cfg.grid->stop}, {"n", cfg.grid->n}};
  if (cfg.tol) overrides["tol"] = *cfg.tol;
  manifest["overrides"] = std::move(overrides);
  manifest["versions"] = {{"infoctrl", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"compiler", __VERSION__},
                          {"cxx", __cplusplus}};
  manifest["wall_time_seconds"] = wall;

  try {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output_dir);
    auto write = [&](const std::string& name, const std::string& content) {
      std::ofstream f(fs::path(cfg.output_dir) / name, std::ios::binary);
      f << content;
      if (!f) throw std::runtime_error("cannot write " + name);
    };
    for (const auto& a : out.artifacts) write(a.name, a.content);
    write("manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& ex) {
    detail::print_error(err, "io", ex.what(), {{"out", cfg.output_dir}});
    return 4;
  }
  return 0;
}

}  // namespace infoctrl::cli
