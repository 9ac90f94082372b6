#include <doctest.h>

#include <filesystem>
#include <json.hpp>

#include "generators.hpp"
#include "qualdyn/errors.hpp"
#include "qualdyn/scenario.hpp"

using namespace qualdyn;
using nlohmann::json;

namespace {

const std::filesystem::path kScenarios = std::filesystem::path(QUALDYN_SOURCE_DIR) / "scenarios";

json base_doc() {
  return json::parse(R"({
    "version": 1,
    "economy": {"wage": 0.6, "payoff_tp": 1, "cost_fp": 1},
    "groups": [{"id": "a", "proportion": 0.5}, {"id": "b", "proportion": 0.5}],
    "features": {"variant": "uniform_threshold", "thresholds": {"a": 0.4, "b": 0.8}}
  })");
}

std::string error_of(const json& doc) {
  try {
    parse_scenario(doc.dump());
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

Scenario random_scenario(testing::Gen& gen) {
  Scenario sc;
  sc.economy = EconomyConfig(gen.uniform(0.1, 2.0), gen.uniform(0.5, 3.0), gen.uniform(0.5, 3.0));
  const int variant = gen.integer(0, 2);
  const int n = variant == 1 ? 2 : gen.integer(1, 3);
  std::vector<GroupSpec> specs;
  for (int i = 0; i < n; ++i)
    specs.push_back({std::string(1, static_cast<char>('a' + i)), gen.uniform(0.1, 1.0), gen.cost()});
  double total = 0.0;
  for (const auto& s : specs) total += s.proportion;
  for (auto& s : specs) s.proportion /= total;
  specs.back().proportion = 1.0;
  for (int i = 0; i + 1 < n; ++i) specs.back().proportion -= specs[static_cast<std::size_t>(i)].proportion;
  sc.groups = GroupSet(specs);

  for (const auto& s : specs) {
    switch (variant) {
      case 0:
        sc.features.variant = FeatureDecl::Variant::uniform_threshold;
        sc.features.thresholds[s.id] = gen.uniform(0.05, 0.95);
        break;
      case 1:
        sc.features.variant = FeatureDecl::Variant::gaussian_halfspace;
        sc.features.normals[s.id] = {gen.uniform(0.1, 2.0), gen.uniform(0.1, 2.0)};
        break;
      default: {
        sc.features.variant = FeatureDecl::Variant::score;
        auto dist = [&] {
          if (gen.coin()) return gen.beta();
          auto k = gen.cdf_knots(gen.integer(1, 3));
          k.front().y = 0.0;
          return ScoreDistribution::empirical(k);
        };
        ScoreDistribution y1 = dist();
        ScoreDistribution y0 = dist();
        sc.features.scores.emplace(s.id, FeatureDecl::ScorePair{y1, y0});
      }
    }
  }
  sc.solver.grid_size = static_cast<std::size_t>(gen.integer(3, 3000));
  sc.solver.plateau_cells = static_cast<std::size_t>(gen.integer(1, 20));
  sc.solver.tie_tol = gen.uniform(0.0, 1e-9);
  sc.dynamics.mode = gen.coin() ? Mode::joint : Mode::decoupled;
  sc.dynamics.max_iters = gen.integer(1, 1000);
  sc.dynamics.cycle_window = gen.integer(2, 100);
  sc.dynamics.fix_tol = gen.uniform(1e-12, 1e-6);
  sc.dynamics.perturb_eps = gen.uniform(1e-6, 1e-2);
  sc.intervention.decouple = gen.coin();
  if (gen.coin())
    sc.intervention.subsidy = SubsidyDecl{specs.front().id, gen.coin() ? Subsidy::shift(gen.uniform(0.0, 0.3))
                                                                       : Subsidy::scale(gen.uniform(1.0, 3.0))};
  sc.seed = static_cast<std::uint64_t>(gen.integer(0, 1 << 30));
  return sc;
}

}  // namespace

TEST_SUITE("scenario") {

TEST_CASE("every shipped scenario loads and builds") {
  int count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kScenarios)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const Scenario sc = load_scenario(entry.path());
    CHECK_NOTHROW(sc.build_system());
    CHECK(parse_scenario(serialize_scenario(sc)) == sc);
    ++count;
  }
  CHECK(count >= 10);
}

TEST_CASE("defaults and the shared cost") {
  const Scenario sc = load_scenario(kScenarios / "decoupling_bimodal.json");
  CHECK(sc.groups[0].cost == CostModel::bimodal_normal(0.3, 0.1, 0.6, 0.1, 0.5));
  CHECK(sc.groups[1].cost == sc.groups[0].cost);
  CHECK(sc.dynamics_config().mode == Mode::decoupled);
  CHECK(sc.solver == SolverConfig{});
  const Scenario u = parse_scenario(base_doc().dump());
  CHECK(u.groups[0].cost == CostModel::uniform01());
  CHECK(u.dynamics_config().mode == Mode::joint);
  CHECK(u.seed == 0);
}

TEST_CASE("subsidy is applied when building the system") {
  const Scenario sc = load_scenario(kScenarios / "unequal_costs_subsidized.json");
  const System sys = sc.build_system();
  CHECK(sys.groups()[0].cost == subsidize(sc.groups[0].cost, Subsidy::shift(0.1)));
  CHECK(sys.groups()[1].cost == sc.groups[1].cost);
}

TEST_CASE("seed flows into the dynamics settings") {
  json doc = base_doc();
  doc["seed"] = 42;
  CHECK(parse_scenario(doc.dump()).dynamics_config().seed == 42);
}

TEST_CASE("property: scenarios survive a serialize and parse round trip") {
  testing::Gen gen(77);
  for (int it = 0; it < 200; ++it) {
    const Scenario sc = random_scenario(gen);
    const std::string text = serialize_scenario(sc);
    CAPTURE(text);
    const Scenario back = parse_scenario(text);
    CHECK(back == sc);
    CHECK(serialize_scenario(back) == text);
  }
}

TEST_CASE("errors carry the field path") {
  json doc = base_doc();
  doc["economy"].erase("wage");
  CHECK(error_of(doc) == "economy.wage: missing required field");

  doc = base_doc();
  doc["economy"]["wages"] = 1;
  CHECK(error_of(doc) == "economy.wages: unknown field");

  doc = base_doc();
  doc["colour"] = "red";
  CHECK(error_of(doc) == "colour: unknown field");

  doc = base_doc();
  doc["groups"][1]["cost"] = {{"kind", "lognormal"}};
  CHECK(error_of(doc).rfind("groups[1].cost.kind:", 0) == 0);

  doc = base_doc();
  doc["groups"][0]["proportion"] = "half";
  CHECK(error_of(doc) == "groups[0].proportion: expected a number");

  doc = base_doc();
  doc["features"]["thresholds"]["c"] = 0.5;
  CHECK(error_of(doc).rfind("features.thresholds.c:", 0) == 0);

  doc = base_doc();
  doc["features"]["thresholds"].erase("b");
  CHECK(error_of(doc).rfind("features.thresholds.b:", 0) == 0);

  doc = base_doc();
  doc["features"]["variant"] = "forest";
  CHECK(error_of(doc).rfind("features.variant:", 0) == 0);

  doc = base_doc();
  doc["version"] = 2;
  CHECK(error_of(doc).rfind("version:", 0) == 0);

  doc = base_doc();
  doc["solver"] = {{"grid_size", 2}};
  CHECK(error_of(doc).rfind("solver.grid_size:", 0) == 0);

  doc = base_doc();
  doc["dynamics"] = {{"mode", "sideways"}};
  CHECK(error_of(doc).rfind("dynamics.mode:", 0) == 0);

  doc = base_doc();
  doc["dynamics"] = {{"max_iters", 0}};
  CHECK(error_of(doc).rfind("dynamics:", 0) == 0);

  doc = base_doc();
  doc["intervention"] = {{"subsidy", {{"group", "z"}, {"shift", 0.1}}}};
  CHECK(error_of(doc).rfind("intervention.subsidy.group:", 0) == 0);

  doc = base_doc();
  doc["intervention"] = {{"subsidy", {{"group", "a"}, {"shift", 0.1}, {"scale", 2}}}};
  CHECK(error_of(doc).rfind("intervention.subsidy:", 0) == 0);

  doc = base_doc();
  doc["intervention"] = {{"subsidy", {{"group", "a"}, {"shift", -0.1}}}};
  CHECK(error_of(doc).rfind("intervention.subsidy:", 0) == 0);

  doc = base_doc();
  doc["groups"][1]["proportion"] = 0.7;
  CHECK(error_of(doc).rfind("groups:", 0) == 0);

  doc = base_doc();
  doc["economy"]["wage"] = -1;
  CHECK(error_of(doc).rfind("economy:", 0) == 0);

  doc = base_doc();
  doc["seed"] = -3;
  CHECK(error_of(doc).rfind("seed:", 0) == 0);

  CHECK_THROWS_AS(parse_scenario("{not json"), ConfigError);
  CHECK_THROWS_AS(load_scenario(kScenarios / "missing.json"), ConfigError);
}

TEST_CASE("halfspace scenarios need two groups and numeric normals") {
  json doc = base_doc();
  doc["features"] = {{"variant", "gaussian_halfspace"}, {"normals", {{"a", {1, 0}}, {"b", {0, "x"}}}}};
  CHECK(error_of(doc).rfind("features.normals.b:", 0) == 0);
}

}
