#include "infoctrl/model_io.hpp"

#include "fixtures.hpp"
#include "generators.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

using namespace infoctrl;
using infoctrl::io::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "infoctrl_model_io";
  std::filesystem::create_directories(dir);
  return dir / name;
}

json two_state_mdp() {
  return json::parse(R"({
    "type": "mdp",
    "states": ["low", "high"],
    "actions": ["wait", "fix"],
    "transitions": [[[0.9, 0.1], [0.4, 0.6]], [[0.3, 0.7], [0.8, 0.2]]],
    "cost": [[0.0, 0.5], [1.0, 0.3]]
  })");
}

std::vector<std::string> schema_fields(const json& doc) {
  try {
    io::parse_model(doc);
  } catch (const io::SchemaError& e) {
    return e.fields;
  }
  return {};
}

bool mentions(const std::vector<std::string>& fields, const std::string& needle) {
  return std::any_of(fields.begin(), fields.end(), [&](const std::string& f) { return f.find(needle) != std::string::npos; });
}

io::ModelDocument round_trip(const io::ModelDocument& doc, const std::string& name) {
  const auto path = scratch(name);
  io::write_model(path.string(), doc);
  return io::load_model(path.string());
}

}  // namespace

TEST(LoadModel, BundledDocuments) {
  EXPECT_TRUE(std::holds_alternative<DistortionSpec>(fixtures::load("binary_hamming.json").model));
  EXPECT_TRUE(std::holds_alternative<lqg::LqgParams>(fixtures::load("lqg_near_unit.json").model));
  EXPECT_TRUE(std::holds_alternative<lqg::LqgParams>(fixtures::load("lqg_unstable.json").model));
  const auto four = fixtures::load("mdp_4x3.json");
  EXPECT_EQ(std::get<MdpModel>(four.model).states(), 4u);
  const auto two = fixtures::load("mdp_2x2.json");
  const auto& m = std::get<MdpModel>(two.model);
  EXPECT_EQ(m.states(), 2u);
  EXPECT_EQ(m.actions(), 2u);
  EXPECT_EQ(m.transition(1)(1, 0), 0.8);
  EXPECT_EQ(*two.discount, 0.9);
  EXPECT_EQ(*two.budget, 0.2);
  const auto near = std::get<lqg::LqgParams>(fixtures::load("lqg_near_unit.json").model);
  EXPECT_EQ(near.a, 0.995);
  EXPECT_EQ(near.b, 1.0);
  EXPECT_EQ(near.sigma2, 1.0);
}

TEST(LoadModel, WellFormedTwoStateDocument) {
  const auto doc = io::parse_model(two_state_mdp());
  const auto& m = std::get<MdpModel>(doc.model);
  EXPECT_EQ(m.state_atoms(), (Labels{"low", "high"}));
  EXPECT_EQ(m.transition(0)(1, 1), 0.7);
  EXPECT_EQ(m.transition(1)(0, 1), 0.6);
  EXPECT_FALSE(doc.initial.has_value());
}

TEST(LoadModel, BadRowNamesTheSlice) {
  auto doc = two_state_mdp();
  doc["transitions"][1][0] = json::array({0.3, 0.6});
  const auto fields = schema_fields(doc);
  ASSERT_EQ(fields.size(), 1u);
  EXPECT_NE(fields[0].find("transitions[1][0]"), std::string::npos);
  EXPECT_NE(fields[0].find("x=high, u=wait"), std::string::npos);
}

TEST(LoadModel, NegativeCostRejected) {
  auto doc = two_state_mdp();
  doc["cost"][0][1] = -0.5;
  EXPECT_TRUE(mentions(schema_fields(doc), "cost[0][1]"));
}

TEST(LoadModel, EveryOffendingFieldIsListed) {
  auto doc = two_state_mdp();
  doc["transitions"][0][1] = json::array({0.5, 0.6});
  doc["cost"][1][1] = -1.0;
  doc["discount"] = 1.5;
  const auto fields = schema_fields(doc);
  EXPECT_EQ(fields.size(), 3u);
  EXPECT_TRUE(mentions(fields, "transitions[0][1]"));
  EXPECT_TRUE(mentions(fields, "cost[1][1]"));
  EXPECT_TRUE(mentions(fields, "discount"));
}

TEST(LoadModel, LqgRequiresNonzeroB) {
  const auto doc = json::parse(R"({"type": "lqg", "a": 0.5, "b": 0.0, "sigma2": 1, "p": 1, "q": 1})");
  EXPECT_EQ(schema_fields(doc), std::vector<std::string>{"b"});
  const auto missing = json::parse(R"({"type": "lqg", "a": 0.5, "sigma2": -1, "p": 1, "q": 1})");
  const auto fields = schema_fields(missing);
  EXPECT_TRUE(mentions(fields, "b"));
  EXPECT_TRUE(mentions(fields, "sigma2"));
}

TEST(LoadModel, DocumentLevelErrors) {
  EXPECT_EQ(schema_fields(json::array()), std::vector<std::string>{"<root>"});
  EXPECT_EQ(schema_fields(json::parse(R"({"type": "banana"})")), std::vector<std::string>{"type"});
  EXPECT_EQ(schema_fields(json::parse(R"({"states": ["a"]})")), std::vector<std::string>{"type"});
  EXPECT_THROW(io::load_model(scratch("does_not_exist.json").string()), io::InputError);
  const auto bad = scratch("bad.json");
  std::ofstream(bad) << "{ not json";
  EXPECT_THROW(io::load_model(bad.string()), io::SchemaError);
}

TEST(LoadModel, DistortionDocument) {
  const auto doc = fixtures::load("binary_hamming.json");
  const auto& spec = std::get<DistortionSpec>(doc.model);
  EXPECT_EQ(spec.mu()[0], 0.5);
  EXPECT_EQ(spec.cost()(0, 1), 1.0);
  auto j = io::to_json(doc);
  j["mu"] = json::array({0.5, 0.6});
  EXPECT_TRUE(mentions(schema_fields(j), "mu"));
}

TEST(FormatDouble, SeventeenDigits) {
  EXPECT_EQ(io::format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(io::format_double(1.0), "1");
  EXPECT_EQ(io::format_double(std::nan("")), "nan");
  EXPECT_EQ(io::format_double(-std::numeric_limits<double>::infinity()), "-inf");
  testgen::Rng rng(61);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.index(200)) - 100);
    EXPECT_EQ(std::strtod(io::format_double(x).c_str(), nullptr), x);
  }
}

TEST(CsvWriter, Layout) {
  io::CsvWriter csv({"R", "D"});
  csv.row({0.0, 0.5});
  csv.row({0.25, 1.0 / 3.0});
  EXPECT_EQ(csv.str(), "R,D\n0,0.5\n0.25,0.33333333333333331\n");
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(io::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

// Round trips over random documents.

TEST(Properties, MdpRoundTripIsBitExact) {
  testgen::Rng rng(62);
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = rng.mdp(1 + rng.index(6), 1 + rng.index(4));
    io::ModelDocument doc{m, std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt, {}};
    if (rng.coin()) doc.initial = rng.simplex(m.states());
    if (rng.coin()) doc.discount = rng.uniform(0.01, 0.99);
    if (rng.coin()) doc.epsilon = rng.uniform(0.001, 1.0);
    if (rng.coin()) doc.budget = rng.uniform(0.0, 2.0);
    if (rng.coin()) doc.s = rng.uniform(0.01, 10.0);
    if (rng.coin()) doc.simulation.horizon = 1 + rng.index(100000);
    const auto back = round_trip(doc, "mdp.json");
    const auto& mb = std::get<MdpModel>(back.model);
    EXPECT_EQ(mb.state_atoms(), m.state_atoms());
    EXPECT_EQ(mb.action_atoms(), m.action_atoms());
    EXPECT_EQ(mb.cost(), m.cost());
    for (std::size_t u = 0; u < m.actions(); ++u) EXPECT_EQ(mb.transition(u), m.transition(u));
    EXPECT_EQ(back.initial.has_value(), doc.initial.has_value());
    if (doc.initial) EXPECT_EQ(*back.initial, *doc.initial);
    EXPECT_EQ(back.discount, doc.discount);
    EXPECT_EQ(back.epsilon, doc.epsilon);
    EXPECT_EQ(back.budget, doc.budget);
    EXPECT_EQ(back.s, doc.s);
    EXPECT_EQ(back.simulation.horizon, doc.simulation.horizon);
  }
}

TEST(Properties, DistortionAndLqgRoundTripsAreBitExact) {
  testgen::Rng rng(63);
  for (int trial = 0; trial < 50; ++trial) {
    const Labels xs = make_labels("x", 1 + rng.index(5));
    const Labels us = make_labels("u", 1 + rng.index(5));
    const DistortionSpec spec(rng.distribution(xs, true), rng.costs(xs.size(), us.size(), 5.0), us);
    const auto back = round_trip({spec, {}, {}, {}, {}, {}, {}}, "spec.json");
    const auto& sb = std::get<DistortionSpec>(back.model);
    EXPECT_EQ(sb.mu().probs(), spec.mu().probs());
    EXPECT_EQ(sb.cost(), spec.cost());

    const lqg::LqgParams prm{rng.uniform(-2.0, 2.0), rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0),
                             rng.uniform(0.1, 3.0)};
    const auto lb = std::get<lqg::LqgParams>(round_trip({prm, {}, {}, {}, {}, {}, {}}, "lqg.json").model);
    EXPECT_EQ(lb.a, prm.a);
    EXPECT_EQ(lb.b, prm.b);
    EXPECT_EQ(lb.sigma2, prm.sigma2);
    EXPECT_EQ(lb.p, prm.p);
    EXPECT_EQ(lb.q, prm.q);
  }
}
