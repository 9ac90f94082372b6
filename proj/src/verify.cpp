#include "qualdyn/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>

#include "qualdyn/dynamics.hpp"
#include "qualdyn/errors.hpp"
#include "qualdyn/ingest.hpp"

namespace qualdyn {

bool CriterionResult::passed() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

namespace instances {

System uniform_two_group(double wage) {
  GroupSet groups({{"a", 0.5, CostModel::uniform01()}, {"b", 0.5, CostModel::uniform01()}});
  return System(EconomyConfig(wage, 1.0, 1.0), groups, FeatureModel::uniform_threshold({0.4, 0.8}));
}

System uniform_realizable(double h, double wage, std::vector<CostModel> costs) {
  std::vector<GroupSpec> specs;
  const double n = 1.0 / static_cast<double>(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i)
    specs.push_back({std::string(1, static_cast<char>('a' + i)), n, costs[i]});
  return System(EconomyConfig(wage, 1.0, 1.0), GroupSet(std::move(specs)),
                FeatureModel::uniform_threshold(std::vector<double>(costs.size(), h)));
}

System near_realizable(double wage) {
  auto f1 = ScoreDistribution::empirical({{0.0, 0.0}, {0.5, 0.05}, {1.0, 1.0}});
  auto f0 = ScoreDistribution::empirical({{0.0, 0.0}, {0.5, 0.95}, {1.0, 1.0}});
  return System(EconomyConfig(wage, 1.0, 1.0), GroupSet({{"a", 1.0, CostModel::uniform01()}}),
                FeatureModel::score({f1}, {f0}));
}

System gaussian_orthogonal(double payoff_tp, double cost_fp) {
  GroupSet groups({{"a", 0.5, CostModel::uniform01()}, {"b", 0.5, CostModel::uniform01()}});
  return System(EconomyConfig(0.8, payoff_tp, cost_fp), groups,
                FeatureModel::gaussian_halfspace({{1.0, 0.0}, {0.0, 1.0}}));
}

System gaussian_unequal_costs(const CostModel& g1, const CostModel& g2) {
  const double r = std::numbers::sqrt2 / 2.0;
  return System(EconomyConfig(0.8, 2.0, 1.0), GroupSet({{"a", 0.5, g1}, {"b", 0.5, g2}}),
                FeatureModel::gaussian_halfspace({{1.0, 0.0}, {r, r}}));
}

System beta_single_group(double wage) {
  return System(EconomyConfig(wage, 1.0, 1.0), GroupSet({{"a", 1.0, CostModel::uniform01()}}),
                FeatureModel::score({ScoreDistribution::beta(5, 2)}, {ScoreDistribution::beta(2, 5)}));
}

System multi_equilibrium(double wage) {
  const System base = beta_single_group(wage);
  const CostModel g = construct_multi_equilibrium_cost(beta_of_pi(base), wage);
  return base.with_groups(base.groups().with_cost(0, g));
}

System decoupling_bimodal() {
  const CostModel g = CostModel::bimodal_normal(0.3, 0.1, 0.6, 0.1, 0.5);
  return System(EconomyConfig(0.8, 1.0, 1.0), GroupSet({{"a", 0.5, g}, {"b", 0.5, g}}),
                FeatureModel::score({ScoreDistribution::beta(5, 2), ScoreDistribution::beta(3, 2)},
                                    {ScoreDistribution::beta(2, 5), ScoreDistribution::beta(2, 3)}));
}

}  // namespace instances

namespace {

std::string fmt(const QualificationState& s) {
  std::string out = "(";
  char buf[32];
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.7g", i ? ", " : "", s[i]);
    out += buf;
  }
  return out + ")";
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

QualificationState qs(std::initializer_list<double> v) { return QualificationState{v}; }

double theta_at(const System& sys, const QualificationState& s) {
  return step(sys, s, Mode::joint).theta.front().value;
}

std::vector<const Equilibrium*> nontrivial(const std::vector<Equilibrium>& eqs) {
  std::vector<const Equilibrium*> out;
  for (const auto& e : eqs)
    if (e.kind == EquilibriumKind::fixed_point) out.push_back(&e);
  return out;
}

const Equilibrium* nearest(const std::vector<Equilibrium>& eqs, const QualificationState& target) {
  const Equilibrium* best = nullptr;
  for (const auto& e : eqs) {
    if (e.kind == EquilibriumKind::limit_cycle) continue;
    if (!best || sup_distance(e.pi, target) < sup_distance(best->pi, target)) best = &e;
  }
  return best;
}

// ---------------------------------------------------------------- 1

CriterionResult uniform_golden() {
  CriterionResult r{1, "uniform golden values", {}};
  const System sys = instances::uniform_two_group();
  const DynamicsConfig cfg;
  struct Case {
    QualificationState init;
    double theta;
  };
  for (const Case& c : {Case{qs({0.6, 0.3}), 0.4}, Case{qs({0.2, 0.6}), 0.8}}) {
    const auto out = run(sys, c.init, cfg);
    const std::string tag = "init " + fmt(c.init);
    r.checks.push_back({tag + " fixed point", out.verdict == Verdict::fixed_point,
                        to_string(out.verdict)});
    const double th = theta_at(sys, out.state);
    r.checks.push_back({tag + " theta = " + fmt(c.theta), std::abs(th - c.theta) <= 1e-6,
                        "theta " + fmt(th)});
    r.checks.push_back({tag + " pi within 1e-6", sup_distance(out.state, c.init) <= 1e-6,
                        "pi " + fmt(out.state)});
    r.checks.push_back({tag + " stable", out.stability == Stability::stable,
                        to_string(out.stability)});
  }
  return r;
}

// ---------------------------------------------------------------- 2

CriterionResult uniform_unstable() {
  CriterionResult r{2, "uniform unstable equilibrium", {}};
  const System sys = instances::uniform_two_group();
  const auto cf = uniform_closed_forms(sys);
  r.checks.push_back({"h_mid = 0.571429 +- 1e-5", std::abs(cf.h_mid - 0.571429) <= 1e-5,
                      "h_mid " + fmt(cf.h_mid)});
  const QualificationState mid = cf.equilibria[1].pi;
  r.checks.push_back({"pi(h_mid) = (0.428571, 0.428571) +- 1e-5",
                      sup_distance(mid, qs({0.428571, 0.428571})) <= 1e-5, "pi " + fmt(mid)});

  DynamicsConfig cfg;
  cfg.max_iters = 100;
  const auto stay = iterate(sys, mid, cfg);
  double drift = 0.0;
  for (const auto& rec : stay.trace) drift = std::max(drift, sup_distance(rec.pi, mid));
  r.checks.push_back({"iteration from h_mid stays within 1e-6", drift <= 1e-6 &&
                                                                    stay.verdict == Verdict::fixed_point,
                      "max drift " + fmt(drift)});

  const std::vector<QualificationState> stable{qs({0.6, 0.3}), qs({0.2, 0.6})};
  for (std::size_t a = 0; a < 2; ++a)
    for (double sgn : {-1.0, 1.0}) {
      QualificationState start = mid;
      start[a] += sgn * 1e-3;
      const auto out = iterate(sys, start, DynamicsConfig{});
      double d = std::min(sup_distance(out.state, stable[0]), sup_distance(out.state, stable[1]));
      r.checks.push_back({"perturbed start " + fmt(start) + " reaches a stable equilibrium",
                          out.verdict == Verdict::fixed_point && d <= 1e-6,
                          "end " + fmt(out.state)});
    }
  return r;
}

// ---------------------------------------------------------------- 3

CriterionResult realizability() {
  CriterionResult r{3, "realizability", {}};
  struct Case {
    std::string name;
    System sys;
  };
  const std::vector<Case> cases{
      {"one group, h = 0.5, w = 0.6", instances::uniform_realizable(0.5, 0.6, {CostModel::uniform01()})},
      {"two groups, h = 0.6, w = 0.7",
       instances::uniform_realizable(0.6, 0.7, {CostModel::uniform01(), CostModel::uniform01()})},
      {"two groups, unequal costs, w = 0.8",
       instances::uniform_realizable(
           0.5, 0.8, {CostModel::uniform01(), CostModel::truncated_normal(0.5, 0.2)})},
  };
  for (const auto& c : cases) {
    const std::size_t n = c.sys.group_count();
    const double w = c.sys.economy().wage();
    QualificationState target;
    for (std::size_t a = 0; a < n; ++a) target.pi.push_back(c.sys.groups()[a].cost.cdf(w));

    const auto eqs = find_equilibria_scan(c.sys, ScanConfig{});
    const auto nz = nontrivial(eqs);
    const bool cycles = std::any_of(eqs.begin(), eqs.end(), [](const Equilibrium& e) {
      return e.kind == EquilibriumKind::limit_cycle;
    });
    r.checks.push_back({c.name + ": exactly one non-zero equilibrium", nz.size() == 1 && !cycles,
                        std::to_string(nz.size()) + " found"});
    if (nz.size() == 1)
      r.checks.push_back({c.name + ": equilibrium at G(w) +- 1e-9",
                          sup_distance(nz[0]->pi, target) <= 1e-9,
                          fmt(nz[0]->pi) + " vs " + fmt(target)});

    const std::vector<double> axis{0.05, 0.3, 0.55, 0.8, 1.0};
    double worst = 0.0;
    bool all_fixed = true;
    std::vector<QualificationState> starts;
    if (n == 1) {
      for (double x : axis) starts.push_back(qs({x}));
    } else {
      for (double x : axis)
        for (double y : axis) starts.push_back(qs({x, y}));
    }
    for (const auto& s : starts) {
      const auto out = iterate(c.sys, s, DynamicsConfig{});
      all_fixed = all_fixed && out.verdict == Verdict::fixed_point;
      worst = std::max(worst, sup_distance(out.state, target));
    }
    r.checks.push_back({c.name + ": every start >= 0.05 reaches G(w) +- 1e-9",
                        all_fixed && worst <= 1e-9,
                        std::to_string(starts.size()) + " starts, max error " + fmt(worst)});
  }
  return r;
}

// ---------------------------------------------------------------- 4

CriterionResult near_realizability() {
  CriterionResult r{4, "near-realizability bound", {}};
  const double eps = 0.05;
  const double s = 0.25;
  const double w = 0.5;
  const System sys = instances::near_realizable(w);
  const RatePair rates = sys.features().line_rates(0, 0.5);
  r.checks.push_back({"theta = 0.5 has TPR = 1 - eps, FPR = eps",
                      std::abs(rates.tpr - (1 - eps)) <= 1e-12 && std::abs(rates.fpr - eps) <= 1e-12,
                      "TPR " + fmt(rates.tpr) + ", FPR " + fmt(rates.fpr)});
  const auto bound = near_realizability_bound(eps, s, w, sys.groups()[0].cost);
  r.checks.push_back({"bound G(w (1 - eps / s)) = 0.4", std::abs(bound.bound - 0.4) <= 1e-12,
                      "bound " + fmt(bound.bound)});
  r.checks.push_back({"hypotheses checked", bound.hypotheses_checked, ""});
  for (double x : {0.25, 0.5, 0.75}) {
    const auto out = iterate(sys, qs({x}), DynamicsConfig{});
    r.checks.push_back({"start " + fmt(x) + " converges above the bound",
                        out.verdict == Verdict::fixed_point && out.state[0] >= bound.bound - 1e-9,
                        to_string(out.verdict) + std::string(" at ") + fmt(out.state)});
  }
  return r;
}

// ---------------------------------------------------------------- 5

CriterionResult gaussian_equilibria() {
  CriterionResult r{5, "gaussian equilibria", {}};
  const System sys = instances::gaussian_orthogonal(2.0, 1.0);
  const auto eqs = find_equilibria_scan(sys, ScanConfig{});
  struct Expect {
    QualificationState pi;
    Stability stability;
  };
  for (const Expect& e : {Expect{qs({0.8, 0.0}), Stability::stable},
                          Expect{qs({0.0, 0.8}), Stability::stable},
                          Expect{qs({0.4, 0.4}), Stability::unstable}}) {
    const Equilibrium* got = nearest(eqs, e.pi);
    const bool found = got && sup_distance(got->pi, e.pi) <= 1e-4;
    r.checks.push_back({"equilibrium " + fmt(e.pi) + " within 1e-4", found,
                        got ? "nearest " + fmt(got->pi) : "none"});
    if (found)
      r.checks.push_back({"equilibrium " + fmt(e.pi) + " is " + to_string(e.stability),
                          got->stability == e.stability, to_string(got->stability)});
  }
  const auto cf = gaussian_closed_forms(sys);
  double worst = 0.0;
  for (const auto& row : cf.equilibria) {
    if (!row.exists) continue;
    const Equilibrium* got = nearest(eqs, row.pi);
    worst = std::max(worst, got ? sup_distance(got->pi, row.pi) : 1.0);
  }
  r.checks.push_back({"scan agrees with closed forms within 1e-4", worst <= 1e-4,
                      "max discrepancy " + fmt(worst)});
  return r;
}

// ---------------------------------------------------------------- 6

CriterionResult gaussian_cycle() {
  CriterionResult r{6, "gaussian limit cycle", {}};
  const System sys = instances::gaussian_orthogonal(1.0, 2.0);
  const auto out = iterate(sys, qs({0.3, 0.5}), DynamicsConfig{});
  r.checks.push_back({"limit cycle of period 2",
                      out.verdict == Verdict::limit_cycle && out.period == 2,
                      to_string(out.verdict) + std::string(", period ") + std::to_string(out.period)});
  bool saw_h1 = false;
  bool saw_h2 = false;
  std::string thetas;
  for (const auto& s : out.cycle) {
    const double th = theta_at(sys, s);
    saw_h1 = saw_h1 || std::abs(th) <= 1e-9;
    saw_h2 = saw_h2 || std::abs(th - 1.0) <= 1e-9;
    thetas += (thetas.empty() ? "" : ", ") + fmt(th);
  }
  r.checks.push_back({"theta alternates between h1 and h2",
                      saw_h1 && saw_h2 && out.cycle.size() == 2, "theta " + thetas});

  ScanConfig scan;
  scan.starts_per_axis = 21;
  const auto eqs = find_equilibria_scan(sys, scan);
  int stable = 0;
  for (const auto& e : eqs)
    if (e.kind != EquilibriumKind::limit_cycle && e.stability == Stability::stable) ++stable;
  r.checks.push_back({"no stable fixed point in a 21x21 scan", stable == 0,
                      std::to_string(stable) + " stable"});
  return r;
}

// ---------------------------------------------------------------- 7

CriterionResult multiple_equilibria() {
  CriterionResult r{7, "multiple equilibria", {}};
  const double w = 0.8;
  const System base = instances::beta_single_group(w);
  const BetaOfPi map = beta_of_pi(base);
  const CostModel g = construct_multi_equilibrium_cost(map, w);
  bool witness = false;
  double at = 0.0;
  for (std::size_t k = 0; k < map.pi.size() && !witness; ++k)
    if (map.pi[k] > 0.0 && map.pi[k] < g.cdf(w * map.beta[k])) {
      witness = true;
      at = map.pi[k];
    }
  r.checks.push_back({"some grid x has x < G(w beta(x))", witness, "x = " + fmt(at)});

  const System sys = base.with_groups(base.groups().with_cost(0, g));
  const auto eqs = find_equilibria_scan(sys, ScanConfig{});
  const auto nz = nontrivial(eqs);
  std::string list;
  for (const auto* e : nz) list += (list.empty() ? "" : ", ") + fmt(e->pi[0]);
  r.checks.push_back({"scan finds >= 2 non-zero equilibria", nz.size() >= 2, list});
  const int changes = count_sign_changes(sys, 1001);
  r.checks.push_back({"Phi(pi) - pi changes sign >= 2 times", changes >= 2,
                      std::to_string(changes) + " sign changes"});
  return r;
}

// ---------------------------------------------------------------- 8

CriterionResult subsidy_improvement() {
  CriterionResult r{8, "subsidy improvement", {}};
  const System sys = instances::multi_equilibrium();
  const CostModel bar = subsidize(sys.groups()[0].cost, Subsidy::shift(0.05));
  const auto rep = subsidy_equilibrium_shift(sys, 0, bar, ScanConfig{}, 1e-6);
  r.checks.push_back({"equilibria before the subsidy", !rep.pairs.empty(),
                      std::to_string(rep.pairs.size()) + " non-zero"});
  for (const auto& p : rep.pairs)
    r.checks.push_back({"pi* = " + fmt(p.before) + " has a strictly better equilibrium",
                        p.improved.has_value() && p.strict,
                        p.improved ? "pi-bar = " + fmt(*p.improved) : "none"});
  return r;
}

// ---------------------------------------------------------------- 9

CriterionResult unequal_costs() {
  CriterionResult r{9, "unequal costs", {}};
  const CostModel g1 = CostModel::truncated_normal(0.9, 0.1);
  const CostModel g2 = CostModel::uniform01();
  const System sys = instances::gaussian_unequal_costs(g1, g2);
  const double w = sys.economy().wage();
  const double ang = std::get<GaussianHalfspace>(sys.features().variant()).angle();
  r.checks.push_back({"angle = 0.25", std::abs(ang - 0.25) <= 1e-12, fmt(ang)});
  const double low = w * (1 - 2 * ang);
  r.checks.push_back({"G1(w) < G2(w (1 - 2 angle))", g1.cdf(w) < g2.cdf(low),
                      fmt(g1.cdf(w)) + " < " + fmt(g2.cdf(low))});

  const CostModel bar = subsidize(g1, Subsidy::shift(0.1));
  r.checks.push_back({"subsidized G1(w) > G2(w (1 - 2 angle))", bar.cdf(w) > g2.cdf(low),
                      fmt(bar.cdf(w))});
  const auto rep = subsidy_equilibrium_shift(sys, 0, bar, ScanConfig{});
  const auto& chk = *rep.unequal_costs;
  r.checks.push_back({"exactly one non-trivial equilibrium, at h2", chk.unique_h2, ""});
  r.checks.push_back({"h2 equilibrium stable", chk.h2_stable, ""});
  const auto nz = nontrivial(rep.before);
  if (nz.size() == 1) {
    const QualificationState expect{{g1.cdf(low), g2.cdf(w)}};
    r.checks.push_back({"rates (G1(w (1 - 2 angle)), G2(w)) within 1e-4",
                        sup_distance(nz[0]->pi, expect) <= 1e-4,
                        fmt(nz[0]->pi) + " vs " + fmt(expect)});
  }
  r.checks.push_back({"h1 equilibrium after subsidy", chk.h1_after, ""});
  return r;
}

// ---------------------------------------------------------------- 10

CriterionResult decoupling() {
  CriterionResult r{10, "decoupling dominance", {}};
  const System sys = instances::uniform_two_group();
  const double gw = sys.groups()[0].cost.cdf(sys.economy().wage());
  const QualificationState target{{gw, gw}};
  DynamicsConfig dec;
  dec.mode = Mode::decoupled;
  const std::vector<double> axis{0.05, 0.3, 0.55, 0.8, 1.0};
  double worst = 0.0;
  bool all_fixed = true;
  for (double x : axis)
    for (double y : axis) {
      const auto out = iterate(sys, qs({x, y}), dec);
      all_fixed = all_fixed && out.verdict == Verdict::fixed_point;
      worst = std::max(worst, sup_distance(out.state, target));
    }
  r.checks.push_back({"decoupled dynamics reach G(w) for every group", all_fixed && worst <= 1e-9,
                      "max error " + fmt(worst)});
  const auto joint = find_equilibria_scan(sys, ScanConfig{});
  bool dominated = true;
  std::string detail;
  for (const auto& e : joint) {
    if (e.kind == EquilibriumKind::limit_cycle) continue;
    detail += (detail.empty() ? "" : " ") + fmt(e.pi);
    for (std::size_t a = 0; a < 2; ++a) dominated = dominated && target[a] >= e.pi[a] - 1e-9;
  }
  r.checks.push_back({"decoupled rates dominate every joint equilibrium", dominated && !joint.empty(),
                      detail});

  const System bimodal = instances::decoupling_bimodal();
  const auto rows = initial_rate_sweep(bimodal, linspace(21), DynamicsConfig{}, true);
  bool converged = true;
  double lo = 0.0;
  double hi = 0.0;
  for (const auto& row : rows) {
    converged = converged && row.joint.verdict != Verdict::non_converged &&
                row.decoupled->verdict != Verdict::non_converged;
    for (double d : row.delta) {
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  r.checks.push_back({"bimodal sweep converges at every start", converged, ""});
  r.checks.push_back({"bimodal sweep: decoupled - joint changes sign",
                      delta_changes_sign(rows, 1e-3), "delta range [" + fmt(lo) + ", " + fmt(hi) + "]"});
  return r;
}

// ---------------------------------------------------------------- 11

CriterionResult beta_round_trip() {
  CriterionResult r{11, "beta MLE round-trip", {}};
  struct Case {
    double a;
    double b;
  };
  ScoreHistogram hist;
  const std::vector<Case> cases{{2, 5}, {5, 2}, {1, 1}};
  for (std::size_t i = 0; i < cases.size(); ++i)
    hist.series.push_back(beta_histogram("g" + std::to_string(i), 1, cases[i].a, cases[i].b, 100, 1e6));
  const ScoreHistogram parsed = parse_histogram(format_histogram(hist));
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    const BetaFit fit = fit_beta(parsed, "g" + std::to_string(i), 1);
    r.checks.push_back({"Beta(" + fmt(c.a) + ", " + fmt(c.b) + ") recovered within 0.02",
                        fit.converged && std::abs(fit.alpha - c.a) <= 0.02 &&
                            std::abs(fit.beta - c.b) <= 0.02,
                        "fit (" + fmt(fit.alpha) + ", " + fmt(fit.beta) + ")"});
  }
  return r;
}

const std::map<std::string, std::vector<int>>& suites() {
  static const std::map<std::string, std::vector<int>> m{
      {"uniform", {1, 2}},  {"realizable", {3}},   {"near-realizable", {4}},
      {"gaussian", {5, 6}}, {"multi-eq", {7}},     {"subsidy", {8, 9}},
      {"decoupling", {10}}, {"fit", {11}},
      {"all", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}},
  };
  return m;
}

}  // namespace

std::vector<std::string> suite_names() {
  return {"uniform", "realizable", "near-realizable", "gaussian", "multi-eq",
          "subsidy", "decoupling", "fit",             "all"};
}

std::vector<int> suite_criteria(const std::string& suite) {
  const auto it = suites().find(suite);
  if (it == suites().end()) throw ConfigError("unknown suite '" + suite + "'");
  return it->second;
}

CriterionResult run_criterion(int id) {
  CriterionResult (*const table[])() = {
      uniform_golden, uniform_unstable,    realizability,       near_realizability,
      gaussian_equilibria, gaussian_cycle, multiple_equilibria, subsidy_improvement,
      unequal_costs,  decoupling,          beta_round_trip,
  };
  if (id < 1 || id > 11) throw ConfigError("no criterion " + std::to_string(id));
  try {
    return table[id - 1]();
  } catch (const std::exception& e) {
    return CriterionResult{id, "criterion " + std::to_string(id), {{"ran without error", false, e.what()}}};
  }
}

std::vector<CriterionResult> run_suite(const std::string& suite) {
  std::vector<CriterionResult> out;
  for (int id : suite_criteria(suite)) out.push_back(run_criterion(id));
  return out;
}

}  // namespace qualdyn
