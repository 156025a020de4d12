#pragma once

// JSON model documents, CSV emission and content hashing.
//
// A document has a "type" of "distortion", "mdp" or "lqg":
//
//   {"type": "distortion", "states": [...], "actions": [...],
//    "mu": [...], "cost": [[c(x,u) ...] ...]}
//   {"type": "mdp", "states": [...], "actions": [...],
//    "transitions": [[[Q(.|x,u) ...] per u] per x], "cost": [[...]],
//    "initial": [...], "discount": 0.9, "epsilon": 0.05, "budget": 0.2, "s": 1.0,
//    "simulation": {"horizon": 10000, "n_paths": 100, "burn_in": 1000}}
//   {"type": "lqg", "a": 0.995, "b": 1, "sigma2": 1, "p": 1, "q": 1,
//    "simulation": {...}}
//
// Everything after "cost" in the mdp form, and "simulation" in the lqg form,
// is optional. Doubles round-trip bit-exactly.

#include "infoctrl/avg_cost.hpp"
#include "infoctrl/lqg.hpp"
#include "infoctrl/prob_core.hpp"
#include "infoctrl/rate_distortion.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace infoctrl::io {

using json = nlohmann::json;

/// Malformed document; `fields` names every offending entry.
class SchemaError : public std::invalid_argument {
 public:
  SchemaError(const std::string& what, std::vector<std::string> fields)
      : std::invalid_argument(what), fields(std::move(fields)) {}
  std::vector<std::string> fields;
};

class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimulationSettings {
  std::optional<std::size_t> horizon;
  std::optional<std::size_t> n_paths;
  std::optional<std::size_t> burn_in;
};

using Model = std::variant<DistortionSpec, MdpModel, lqg::LqgParams>;

struct ModelDocument {
  Model model;
  std::optional<Vector> initial;
  std::optional<double> discount;
  std::optional<double> epsilon;
  std::optional<double> budget;
  std::optional<double> s;
  SimulationSettings simulation;

  const char* type() const {
    switch (model.index()) {
      case 0: return "distortion";
      case 1: return "mdp";
      default: return "lqg";
    }
  }
};

namespace detail {

class Collector {
 public:
  void fail(const std::string& field, const std::string& why) {
    fields_.push_back(field);
    messages_.push_back(field + ": " + why);
  }
  bool ok() const { return fields_.empty(); }
  void throw_if_failed(const std::string& context) const {
    if (ok()) return;
    std::string msg = context;
    for (const auto& m : messages_) msg += "; " + m;
    throw SchemaError(msg, fields_);
  }

 private:
  std::vector<std::string> fields_;
  std::vector<std::string> messages_;
};

inline std::optional<double> number(const json& doc, const std::string& key, Collector& err, bool required) {
  if (!doc.contains(key)) {
    if (required) err.fail(key, "missing");
    return std::nullopt;
  }
  const json& v = doc.at(key);
  if (!v.is_number()) {
    err.fail(key, "must be a number");
    return std::nullopt;
  }
  const double x = v.get<double>();
  if (!std::isfinite(x)) {
    err.fail(key, "must be finite");
    return std::nullopt;
  }
  return x;
}

inline std::optional<Labels> labels(const json& doc, const std::string& key, Collector& err) {
  if (!doc.contains(key)) {
    err.fail(key, "missing");
    return std::nullopt;
  }
  const json& v = doc.at(key);
  if (!v.is_array() || v.empty()) {
    err.fail(key, "must be a nonempty array of strings");
    return std::nullopt;
  }
  Labels out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) {
      err.fail(key + "[" + std::to_string(i) + "]", "must be a string");
      return std::nullopt;
    }
    out.push_back(v[i].get<std::string>());
  }
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = i + 1; j < out.size(); ++j)
      if (out[i] == out[j]) {
        err.fail(key + "[" + std::to_string(j) + "]", "duplicate label '" + out[j] + "'");
        return std::nullopt;
      }
  return out;
}

inline std::optional<Vector> vector_field(const json& v, const std::string& name, std::size_t n, Collector& err) {
  if (!v.is_array() || v.size() != n) {
    err.fail(name, "must be an array of " + std::to_string(n) + " numbers");
    return std::nullopt;
  }
  Vector out(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!v[i].is_number()) {
      err.fail(name + "[" + std::to_string(i) + "]", "must be a number");
      return std::nullopt;
    }
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  if (!out.allFinite()) {
    err.fail(name, "entries must be finite");
    return std::nullopt;
  }
  return out;
}

inline std::optional<Matrix> matrix_field(const json& doc, const std::string& key, std::size_t rows, std::size_t cols,
                                          Collector& err) {
  if (!doc.contains(key)) {
    err.fail(key, "missing");
    return std::nullopt;
  }
  const json& v = doc.at(key);
  if (!v.is_array() || v.size() != rows) {
    err.fail(key, "must have " + std::to_string(rows) + " rows");
    return std::nullopt;
  }
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = vector_field(v[r], key + "[" + std::to_string(r) + "]", cols, err);
    if (!row) return std::nullopt;
    out.row(static_cast<Eigen::Index>(r)) = row->transpose();
  }
  return out;
}

inline void check_distribution(const Vector& p, const std::string& name, Collector& err) {
  if ((p.array() < 0.0).any()) err.fail(name, "has a negative entry");
  else if (std::abs(p.sum() - 1.0) > kMassTolerance) err.fail(name, "sums to " + std::to_string(p.sum()) + ", not 1");
}

inline SimulationSettings simulation_settings(const json& doc, Collector& err) {
  SimulationSettings out;
  if (!doc.contains("simulation")) return out;
  const json& sim = doc.at("simulation");
  if (!sim.is_object()) {
    err.fail("simulation", "must be an object");
    return out;
  }
  auto count = [&](const char* key) -> std::optional<std::size_t> {
    if (!sim.contains(key)) return std::nullopt;
    const json& v = sim.at(key);
    if (!v.is_number_unsigned()) {
      err.fail(std::string("simulation.") + key, "must be a nonnegative integer");
      return std::nullopt;
    }
    return v.get<std::size_t>();
  };
  out.horizon = count("horizon");
  out.n_paths = count("n_paths");
  out.burn_in = count("burn_in");
  return out;
}

inline ModelDocument parse_distortion(const json& doc) {
  Collector err;
  auto states = labels(doc, "states", err);
  auto actions = labels(doc, "actions", err);
  err.throw_if_failed("invalid distortion document");
  std::optional<Vector> mu;
  if (!doc.contains("mu")) err.fail("mu", "missing");
  else mu = vector_field(doc.at("mu"), "mu", states->size(), err);
  if (mu) check_distribution(*mu, "mu", err);
  auto cost = matrix_field(doc, "cost", states->size(), actions->size(), err);
  err.throw_if_failed("invalid distortion document");
  return ModelDocument{DistortionSpec(FiniteDistribution(*states, *mu), *cost, *actions), {}, {}, {}, {}, {}, {}};
}

inline ModelDocument parse_mdp(const json& doc) {
  Collector err;
  auto states = labels(doc, "states", err);
  auto actions = labels(doc, "actions", err);
  err.throw_if_failed("invalid mdp document");
  const std::size_t nx = states->size();
  const std::size_t nu = actions->size();

  std::vector<Matrix> trans(nu, Matrix::Zero(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(nx)));
  if (!doc.contains("transitions")) {
    err.fail("transitions", "missing");
  } else if (const json& t = doc.at("transitions"); !t.is_array() || t.size() != nx) {
    err.fail("transitions", "must have one entry per state");
  } else {
    for (std::size_t x = 0; x < nx; ++x) {
      const std::string xname = "transitions[" + std::to_string(x) + "]";
      if (!t[x].is_array() || t[x].size() != nu) {
        err.fail(xname, "must have one row per action");
        continue;
      }
      for (std::size_t u = 0; u < nu; ++u) {
        const std::string name = xname + "[" + std::to_string(u) + "] (x=" + (*states)[x] + ", u=" + (*actions)[u] + ")";
        auto row = vector_field(t[x][u], name, nx, err);
        if (!row) continue;
        check_distribution(*row, name, err);
        trans[u].row(static_cast<Eigen::Index>(x)) = row->transpose();
      }
    }
  }
  auto cost = matrix_field(doc, "cost", nx, nu, err);
  if (cost) {
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t u = 0; u < nu; ++u)
        if ((*cost)(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(u)) < 0.0)
          err.fail("cost[" + std::to_string(x) + "][" + std::to_string(u) + "]", "must be nonnegative");
  }
  std::optional<Vector> initial;
  if (doc.contains("initial")) {
    initial = vector_field(doc.at("initial"), "initial", nx, err);
    if (initial) check_distribution(*initial, "initial", err);
  }
  auto discount = number(doc, "discount", err, false);
  if (discount && !(*discount > 0.0 && *discount < 1.0)) err.fail("discount", "must lie in (0, 1)");
  auto epsilon = number(doc, "epsilon", err, false);
  if (epsilon && !(*epsilon > 0.0)) err.fail("epsilon", "must be positive");
  auto budget = number(doc, "budget", err, false);
  if (budget && !(*budget >= 0.0)) err.fail("budget", "must be nonnegative");
  auto s = number(doc, "s", err, false);
  if (s && !(*s > 0.0)) err.fail("s", "must be positive");
  SimulationSettings sim = simulation_settings(doc, err);
  err.throw_if_failed("invalid mdp document");
  return ModelDocument{MdpModel(*states, *actions, std::move(trans), *cost), initial, discount, epsilon, budget, s, sim};
}

inline ModelDocument parse_lqg(const json& doc) {
  Collector err;
  lqg::LqgParams prm;
  auto a = number(doc, "a", err, true);
  auto b = number(doc, "b", err, true);
  auto sigma2 = number(doc, "sigma2", err, true);
  auto p = number(doc, "p", err, true);
  auto q = number(doc, "q", err, true);
  if (b && *b == 0.0) err.fail("b", "must be nonzero");
  if (sigma2 && !(*sigma2 > 0.0)) err.fail("sigma2", "must be positive");
  if (p && !(*p > 0.0)) err.fail("p", "must be positive");
  if (q && !(*q > 0.0)) err.fail("q", "must be positive");
  SimulationSettings sim = simulation_settings(doc, err);
  err.throw_if_failed("invalid lqg document");
  prm.a = *a;
  prm.b = *b;
  prm.sigma2 = *sigma2;
  prm.p = *p;
  prm.q = *q;
  prm.validate();
  return ModelDocument{prm, {}, {}, {}, {}, {}, sim};
}

inline json to_array(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline json to_array(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_array(Vector(m.row(r).transpose())));
  return out;
}

}  // namespace detail

inline ModelDocument parse_model(const json& doc) {
  if (!doc.is_object()) throw SchemaError("model document must be a JSON object", {"<root>"});
  if (!doc.contains("type") || !doc.at("type").is_string())
    throw SchemaError("model document needs a string \"type\"", {"type"});
  const auto type = doc.at("type").get<std::string>();
  if (type == "distortion") return detail::parse_distortion(doc);
  if (type == "mdp") return detail::parse_mdp(doc);
  if (type == "lqg") return detail::parse_lqg(doc);
  throw SchemaError("unknown model type '" + type + "'", {"type"});
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline ModelDocument load_model(const std::string& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("'" + path + "' is not valid JSON: " + e.what(), {"<root>"});
  }
  return parse_model(doc);
}

inline json to_json(const ModelDocument& d) {
  json out;
  out["type"] = d.type();
  if (const auto* spec = std::get_if<DistortionSpec>(&d.model)) {
    out["states"] = spec->mu().atoms();
    out["actions"] = spec->action_atoms();
    out["mu"] = detail::to_array(spec->mu().probs());
    out["cost"] = detail::to_array(spec->cost());
  } else if (const auto* m = std::get_if<MdpModel>(&d.model)) {
    out["states"] = m->state_atoms();
    out["actions"] = m->action_atoms();
    json trans = json::array();
    for (std::size_t x = 0; x < m->states(); ++x) {
      json per_action = json::array();
      for (std::size_t u = 0; u < m->actions(); ++u)
        per_action.push_back(detail::to_array(Vector(m->transition(u).row(static_cast<Eigen::Index>(x)).transpose())));
      trans.push_back(std::move(per_action));
    }
    out["transitions"] = std::move(trans);
    out["cost"] = detail::to_array(m->cost());
    if (d.initial) out["initial"] = detail::to_array(*d.initial);
    if (d.discount) out["discount"] = *d.discount;
    if (d.epsilon) out["epsilon"] = *d.epsilon;
    if (d.budget) out["budget"] = *d.budget;
    if (d.s) out["s"] = *d.s;
  } else {
    const auto& p = std::get<lqg::LqgParams>(d.model);
    out["a"] = p.a;
    out["b"] = p.b;
    out["sigma2"] = p.sigma2;
    out["p"] = p.p;
    out["q"] = p.q;
  }
  if (d.simulation.horizon || d.simulation.n_paths || d.simulation.burn_in) {
    json sim = json::object();
    if (d.simulation.horizon) sim["horizon"] = *d.simulation.horizon;
    if (d.simulation.n_paths) sim["n_paths"] = *d.simulation.n_paths;
    if (d.simulation.burn_in) sim["burn_in"] = *d.simulation.burn_in;
    out["simulation"] = std::move(sim);
  }
  return out;
}

inline void write_model(const std::string& path, const ModelDocument& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << to_json(d).dump(2) << '\n';
}

/// 17 significant digits.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row_strings(header); }

  void row(std::initializer_list<double> values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_double(v));
    row_strings(cells);
  }
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace infoctrl::io
