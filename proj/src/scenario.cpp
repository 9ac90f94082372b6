#include "qualdyn/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qualdyn/errors.hpp"

namespace qualdyn {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

// A JSON object together with its field path, checking that every key is
// consumed exactly once.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string sub(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    if (!j_.contains(key)) fail(sub(key), "missing required field");
    seen_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_number()) fail(sub(key), "expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_number_integer()) fail(sub(key), "expected an integer");
    return v.get<std::int64_t>();
  }

  std::string string(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) fail(sub(key), "expected a string");
    return v.get<std::string>();
  }

  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const json& v = raw(key);
    if (!v.is_boolean()) fail(sub(key), "expected true or false");
    return v.get<bool>();
  }

  Node object(const std::string& key) { return Node(raw(key), sub(key)); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(sub(it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto guarded(const std::string& path, F f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    fail(path, msg);
  } catch (const DomainError& e) {
    fail(path, e.what());
  }
}

std::vector<Knot> parse_knots(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array of [x, y] pairs");
  std::vector<Knot> knots;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto& k = v[i];
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!k.is_array() || k.size() != 2 || !k[0].is_number() || !k[1].is_number())
      fail(p, "expected [x, y]");
    knots.push_back({k[0].get<double>(), k[1].get<double>()});
  }
  return knots;
}

CostModel parse_cost(Node n) {
  const std::string kind = n.string("kind");
  const std::string path = n.path();
  std::optional<double> lip;
  if (n.has("lipschitz")) lip = n.number("lipschitz");
  CostModel m = guarded(path, [&]() -> CostModel {
    if (kind == "uniform01") return CostModel::uniform01();
    if (kind == "truncated_normal")
      return CostModel::truncated_normal(n.number("mu"), n.number("sigma", 0.1),
                                         n.number("lo", 0.0), n.number("hi", 1.0));
    if (kind == "bimodal_normal")
      return CostModel::bimodal_normal(n.number("mu1"), n.number("sigma1", 0.1), n.number("mu2"),
                                       n.number("sigma2", 0.1), n.number("mix", 0.5));
    if (kind == "empirical")
      return CostModel::empirical(parse_knots(n.raw("knots"), n.sub("knots")));
    if (kind == "shifted") return CostModel::shifted(parse_cost(n.object("base")), n.number("delta"));
    if (kind == "scaled") return CostModel::scaled(parse_cost(n.object("base")), n.number("factor"));
    fail(n.sub("kind"), "unknown cost kind '" + kind + "'");
  });
  n.finish();
  if (lip) m = guarded(path, [&] { return m.with_lipschitz(*lip); });
  return m;
}

ojson cost_json(const CostModel& m) {
  ojson j;
  std::visit(
      [&](const auto& k) {
        using T = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<T, CostModel::Uniform01>) {
          j["kind"] = "uniform01";
        } else if constexpr (std::is_same_v<T, CostModel::TruncatedNormal>) {
          j["kind"] = "truncated_normal";
          j["mu"] = k.mu;
          j["sigma"] = k.sigma;
          j["lo"] = k.lo;
          j["hi"] = k.hi;
        } else if constexpr (std::is_same_v<T, CostModel::BimodalNormal>) {
          j["kind"] = "bimodal_normal";
          j["mu1"] = k.mu1;
          j["sigma1"] = k.sigma1;
          j["mu2"] = k.mu2;
          j["sigma2"] = k.sigma2;
          j["mix"] = k.mix;
        } else if constexpr (std::is_same_v<T, CostModel::Empirical>) {
          j["kind"] = "empirical";
          j["knots"] = ojson::array();
          for (const auto& kn : k.knots) j["knots"].push_back({kn.x, kn.y});
        } else if constexpr (std::is_same_v<T, CostModel::Shifted>) {
          j["kind"] = "shifted";
          j["base"] = cost_json(*k.base);
          j["delta"] = k.delta;
        } else {
          j["kind"] = "scaled";
          j["base"] = cost_json(*k.base);
          j["factor"] = k.factor;
        }
      },
      m.kind());
  if (m.lipschitz_override()) j["lipschitz"] = *m.lipschitz_override();
  return j;
}

ScoreDistribution parse_score(Node n) {
  const std::string path = n.path();
  ScoreDistribution d = guarded(path, [&]() -> ScoreDistribution {
    if (n.has("knots")) return ScoreDistribution::empirical(parse_knots(n.raw("knots"), n.sub("knots")));
    return ScoreDistribution::beta(n.number("alpha"), n.number("beta"));
  });
  n.finish();
  return d;
}

ojson score_json(const ScoreDistribution& d) {
  ojson j;
  if (const auto* b = std::get_if<ScoreDistribution::Beta>(&d.kind())) {
    j["alpha"] = b->alpha;
    j["beta"] = b->beta;
  } else {
    j["knots"] = ojson::array();
    for (const auto& k : std::get<ScoreDistribution::Empirical>(d.kind()).knots)
      j["knots"].push_back({k.x, k.y});
  }
  return j;
}

const char* variant_name(FeatureDecl::Variant v) {
  switch (v) {
    case FeatureDecl::Variant::uniform_threshold: return "uniform_threshold";
    case FeatureDecl::Variant::gaussian_halfspace: return "gaussian_halfspace";
    case FeatureDecl::Variant::score: return "score";
  }
  return "?";
}

template <class Map>
void check_keys(const Map& m, const std::vector<std::string>& ids, const std::string& path) {
  for (const auto& [k, v] : m)
    if (std::find(ids.begin(), ids.end(), k) == ids.end())
      fail(path + "." + k, "unknown group '" + k + "'");
  for (const auto& id : ids)
    if (!m.count(id)) fail(path + "." + id, "missing entry for group '" + id + "'");
}

FeatureDecl parse_features(Node n, const std::vector<std::string>& ids) {
  FeatureDecl f;
  const std::string variant = n.string("variant");
  if (variant == "uniform_threshold") {
    f.variant = FeatureDecl::Variant::uniform_threshold;
    Node t = n.object("thresholds");
    for (const auto& id : ids)
      if (t.has(id)) f.thresholds[id] = t.number(id);
    t.finish();
    check_keys(f.thresholds, ids, t.path());
  } else if (variant == "gaussian_halfspace") {
    f.variant = FeatureDecl::Variant::gaussian_halfspace;
    Node t = n.object("normals");
    for (const auto& id : ids) {
      if (!t.has(id)) continue;
      const json& v = t.raw(id);
      if (!v.is_array()) fail(t.sub(id), "expected a numeric array");
      std::vector<double> vec;
      for (const auto& x : v) {
        if (!x.is_number()) fail(t.sub(id), "expected a numeric array");
        vec.push_back(x.get<double>());
      }
      f.normals[id] = std::move(vec);
    }
    t.finish();
    check_keys(f.normals, ids, t.path());
  } else if (variant == "score") {
    f.variant = FeatureDecl::Variant::score;
    Node t = n.object("groups");
    for (const auto& id : ids) {
      if (!t.has(id)) continue;
      Node g = t.object(id);
      ScoreDistribution y1 = parse_score(g.object("y1"));
      ScoreDistribution y0 = parse_score(g.object("y0"));
      g.finish();
      f.scores.emplace(id, FeatureDecl::ScorePair{std::move(y1), std::move(y0)});
    }
    t.finish();
    check_keys(f.scores, ids, t.path());
  } else {
    fail(n.sub("variant"), "unknown feature variant '" + variant + "'");
  }
  n.finish();
  guarded(n.path(), [&] { return f.build(ids); });
  return f;
}

}  // namespace

FeatureModel FeatureDecl::build(const std::vector<std::string>& ids) const {
  switch (variant) {
    case Variant::uniform_threshold: {
      std::vector<double> h;
      for (const auto& id : ids) h.push_back(thresholds.at(id));
      return FeatureModel::uniform_threshold(std::move(h));
    }
    case Variant::gaussian_halfspace: {
      std::vector<std::vector<double>> v;
      for (const auto& id : ids) v.push_back(normals.at(id));
      return FeatureModel::gaussian_halfspace(std::move(v));
    }
    case Variant::score: {
      std::vector<ScoreDistribution> f1;
      std::vector<ScoreDistribution> f0;
      for (const auto& id : ids) {
        f1.push_back(scores.at(id).y1);
        f0.push_back(scores.at(id).y0);
      }
      return FeatureModel::score(std::move(f1), std::move(f0));
    }
  }
  throw ConfigError("unknown feature variant");
}

System Scenario::build_system() const {
  GroupSet g = groups;
  if (intervention.subsidy) {
    const auto idx = g.index_of(intervention.subsidy->group);
    g = g.with_cost(idx, subsidize(g[idx].cost, intervention.subsidy->transform));
  }
  return System(economy, g, features.build(g.ids()), solver);
}

DynamicsConfig Scenario::dynamics_config() const {
  DynamicsConfig c = dynamics;
  if (intervention.decouple) c.mode = Mode::decoupled;
  c.seed = seed;
  return c;
}

Scenario parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  Node root(doc, "");
  Scenario sc;
  sc.version = static_cast<int>(root.integer("version", -1));
  if (sc.version != 1) fail("version", "expected 1");

  {
    Node e = root.object("economy");
    const double w = e.number("wage");
    const double p = e.number("payoff_tp");
    const double c = e.number("cost_fp");
    e.finish();
    sc.economy = guarded("economy", [&] { return EconomyConfig(w, p, c); });
  }

  std::optional<CostModel> default_cost;
  if (root.has("cost")) default_cost = parse_cost(root.object("cost"));

  {
    const json& arr = root.raw("groups");
    if (!arr.is_array() || arr.empty()) fail("groups", "expected a non-empty array");
    std::vector<GroupSpec> specs;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Node g(arr[i], "groups[" + std::to_string(i) + "]");
      GroupSpec s;
      s.id = g.string("id");
      s.proportion = g.number("proportion");
      if (g.has("cost"))
        s.cost = parse_cost(g.object("cost"));
      else if (default_cost)
        s.cost = *default_cost;
      g.finish();
      specs.push_back(std::move(s));
    }
    sc.groups = guarded("groups", [&] { return GroupSet(std::move(specs)); });
  }

  sc.features = parse_features(root.object("features"), sc.groups.ids());

  if (root.has("solver")) {
    Node s = root.object("solver");
    const auto grid = s.integer("grid_size", static_cast<std::int64_t>(sc.solver.grid_size));
    if (grid < 3) fail(s.sub("grid_size"), "must be >= 3");
    sc.solver.grid_size = static_cast<std::size_t>(grid);
    sc.solver.tie_tol = s.number("tie_tol", sc.solver.tie_tol);
    sc.solver.tol = s.number("tol", sc.solver.tol);
    const auto cells = s.integer("plateau_cells", static_cast<std::int64_t>(sc.solver.plateau_cells));
    if (cells < 1) fail(s.sub("plateau_cells"), "must be >= 1");
    sc.solver.plateau_cells = static_cast<std::size_t>(cells);
    s.finish();
  }

  if (root.has("dynamics")) {
    Node d = root.object("dynamics");
    if (d.has("mode")) {
      const std::string mode = d.string("mode");
      if (mode == "joint")
        sc.dynamics.mode = Mode::joint;
      else if (mode == "decoupled")
        sc.dynamics.mode = Mode::decoupled;
      else
        fail(d.sub("mode"), "expected 'joint' or 'decoupled'");
    }
    sc.dynamics.max_iters = static_cast<int>(d.integer("max_iters", sc.dynamics.max_iters));
    sc.dynamics.fix_tol = d.number("fix_tol", sc.dynamics.fix_tol);
    sc.dynamics.cycle_window = static_cast<int>(d.integer("cycle_window", sc.dynamics.cycle_window));
    sc.dynamics.perturb_eps = d.number("perturb_eps", sc.dynamics.perturb_eps);
    sc.dynamics.stability_tol = d.number("stability_tol", sc.dynamics.stability_tol);
    d.finish();
    guarded("dynamics", [&] {
      sc.dynamics.validate();
      return 0;
    });
  }

  if (root.has("intervention")) {
    Node iv = root.object("intervention");
    sc.intervention.decouple = iv.boolean("decouple", false);
    if (iv.has("subsidy")) {
      Node s = iv.object("subsidy");
      SubsidyDecl decl;
      decl.group = s.string("group");
      guarded(s.sub("group"), [&] { return sc.groups.index_of(decl.group); });
      if (s.has("shift") == s.has("scale")) fail(s.path(), "give exactly one of 'shift' or 'scale'");
      decl.transform = s.has("shift") ? Subsidy::shift(s.number("shift"))
                                      : Subsidy::scale(s.number("scale"));
      s.finish();
      guarded(s.path(), [&] { return subsidize(CostModel::uniform01(), decl.transform); });
      sc.intervention.subsidy = decl;
    }
    iv.finish();
  }

  const auto seed = root.integer("seed", 0);
  if (seed < 0) fail("seed", "must be nonnegative");
  sc.seed = static_cast<std::uint64_t>(seed);
  root.finish();
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::string serialize_scenario(const Scenario& sc) {
  ojson j;
  j["version"] = sc.version;
  j["economy"] = {{"wage", sc.economy.wage()},
                  {"payoff_tp", sc.economy.payoff_tp()},
                  {"cost_fp", sc.economy.cost_fp()}};
  j["groups"] = ojson::array();
  for (const auto& g : sc.groups)
    j["groups"].push_back({{"id", g.id}, {"proportion", g.proportion}, {"cost", cost_json(g.cost)}});

  ojson f;
  f["variant"] = variant_name(sc.features.variant);
  switch (sc.features.variant) {
    case FeatureDecl::Variant::uniform_threshold:
      f["thresholds"] = ojson::object();
      for (const auto& [id, h] : sc.features.thresholds) f["thresholds"][id] = h;
      break;
    case FeatureDecl::Variant::gaussian_halfspace:
      f["normals"] = ojson::object();
      for (const auto& [id, v] : sc.features.normals) f["normals"][id] = v;
      break;
    case FeatureDecl::Variant::score:
      f["groups"] = ojson::object();
      for (const auto& [id, p] : sc.features.scores)
        f["groups"][id] = {{"y1", score_json(p.y1)}, {"y0", score_json(p.y0)}};
      break;
  }
  j["features"] = f;
  j["solver"] = {{"grid_size", sc.solver.grid_size},
                 {"tie_tol", sc.solver.tie_tol},
                 {"tol", sc.solver.tol},
                 {"plateau_cells", sc.solver.plateau_cells}};
  j["dynamics"] = {{"mode", sc.dynamics.mode == Mode::joint ? "joint" : "decoupled"},
                   {"max_iters", sc.dynamics.max_iters},
                   {"fix_tol", sc.dynamics.fix_tol},
                   {"cycle_window", sc.dynamics.cycle_window},
                   {"perturb_eps", sc.dynamics.perturb_eps},
                   {"stability_tol", sc.dynamics.stability_tol}};
  ojson iv;
  iv["decouple"] = sc.intervention.decouple;
  if (sc.intervention.subsidy) {
    const auto& s = *sc.intervention.subsidy;
    iv["subsidy"] = {{"group", s.group},
                     {s.transform.type == Subsidy::Type::shift ? "shift" : "scale",
                      s.transform.amount}};
  }
  j["intervention"] = iv;
  j["seed"] = sc.seed;
  return j.dump(2) + "\n";
}

}  // namespace qualdyn
