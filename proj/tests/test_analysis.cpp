#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "qualdyn/analysis.hpp"
#include "qualdyn/errors.hpp"
#include "qualdyn/verify.hpp"

using namespace qualdyn;

namespace {

// Indifference along [h1, h2] at the state induced by theta, solved for theta:
// w (1 - t) h2^2 = (1 - h1)^2 (h2 - w t).
double oracle_h_mid(double h1, double h2, double w) {
  const double q2 = (1 - h1) * (1 - h1);
  return (q2 * h2 - w * h2 * h2) / (w * (q2 - h2 * h2));
}

System uniform(double h1, double h2, double w) {
  return System(EconomyConfig(w, 1, 1),
                GroupSet({{"a", 0.5, CostModel::uniform01()}, {"b", 0.5, CostModel::uniform01()}}),
                FeatureModel::uniform_threshold({h1, h2}));
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("linspace") {
  CHECK(linspace(2) == std::vector<double>{0.0, 1.0});
  CHECK(linspace(5)[2] == 0.5);
  CHECK_THROWS_AS(linspace(1), ConfigError);
}

TEST_CASE("uniform closed forms at the reference instance") {
  const auto cf = uniform_closed_forms(0.4, 0.8, 0.6);
  CHECK(cf.h_mid == doctest::Approx(oracle_h_mid(0.4, 0.8, 0.6)).epsilon(1e-12));
  CHECK(cf.h_mid == doctest::Approx(4.0 / 7).epsilon(1e-12));
  CHECK(cf.w_lo == doctest::Approx(0.8 * 0.6 / (0.64 + 0.4 * 0.6)));
  CHECK(cf.w_hi == doctest::Approx(0.36 / (0.2 * 0.8 + 0.36)));
  REQUIRE(cf.equilibria.size() == 3);
  CHECK(cf.equilibria[0].pi == QualificationState{{0.6, 0.3}});
  CHECK(sup_distance(cf.equilibria[2].pi, QualificationState{{0.2, 0.6}}) <= 1e-15);
  for (const auto& r : cf.equilibria) CHECK(r.exists);
  CHECK_THROWS_AS(uniform_closed_forms(0.4, 0.5, 0.6), PreconditionError);
  CHECK_THROWS_AS(uniform_closed_forms(0.8, 0.4, 0.6), PreconditionError);
}

TEST_CASE("uniform closed forms check their assumptions on a system") {
  const System unequal(EconomyConfig(0.6, 1, 1),
                       GroupSet({{"a", 0.3, CostModel::uniform01()}, {"b", 0.7, CostModel::uniform01()}}),
                       FeatureModel::uniform_threshold({0.4, 0.8}));
  CHECK_THROWS_AS(uniform_closed_forms(unequal), PreconditionError);
  const System costly(EconomyConfig(0.6, 1, 1),
                      GroupSet({{"a", 0.5, CostModel::truncated_normal(0.5, 0.1)},
                                {"b", 0.5, CostModel::uniform01()}}),
                      FeatureModel::uniform_threshold({0.4, 0.8}));
  CHECK_THROWS_AS(uniform_closed_forms(costly), PreconditionError);
  const System balanced(EconomyConfig(0.6, 0.7 / 0.3, 1),
                        GroupSet({{"a", 0.3, CostModel::uniform01()}, {"b", 0.7, CostModel::uniform01()}}),
                        FeatureModel::uniform_threshold({0.4, 0.8}));
  CHECK_NOTHROW(uniform_closed_forms(balanced));
}

TEST_CASE("property: closed-form rows exist exactly when they are fixed points") {
  testing::Gen gen(101);
  int checked = 0;
  for (int it = 0; it < 300 && checked < 120; ++it) {
    const double h1 = gen.uniform(0.05, 0.95);
    const double h2 = gen.uniform(std::max(h1, 1 - h1) + 0.02, 0.99);
    if (!(h2 < 0.99)) continue;
    const double w = gen.uniform(0.05, 0.99);
    const auto cf = uniform_closed_forms(h1, h2, w);
    if (std::abs(w - cf.w_lo) < 1e-3 || std::abs(w - cf.w_hi) < 1e-3) continue;
    CHECK(cf.h_mid == doctest::Approx(oracle_h_mid(h1, h2, w)).epsilon(1e-9));
    const System sys = uniform(h1, h2, w);
    for (const auto& row : cf.equilibria) {
      const double res = sup_distance(phi(sys, row.pi, Mode::joint), row.pi);
      CAPTURE(h1);
      CAPTURE(h2);
      CAPTURE(w);
      CAPTURE(row.label);
      CHECK(row.exists == (res <= 1e-9));
    }
    ++checked;
  }
  CHECK(checked >= 50);
}

TEST_CASE("scan reproduces the uniform closed forms") {
  const System sys = instances::uniform_two_group();
  const auto eqs = find_equilibria_scan(sys, ScanConfig{});
  const auto cf = uniform_closed_forms(sys);
  int fixed = 0;
  for (const auto& e : eqs) fixed += e.kind == EquilibriumKind::fixed_point;
  CHECK(fixed == 3);
  for (const auto& row : cf.equilibria) {
    bool found = false;
    for (const auto& e : eqs)
      if (sup_distance(e.pi, row.pi) <= 1e-6) {
        found = true;
        CHECK(e.stability == row.stability);
        CHECK(e.theta.front().value == doctest::Approx(row.theta).epsilon(1e-6));
      }
    CHECK(found);
  }
}

TEST_CASE("gaussian closed forms") {
  const auto cf = gaussian_closed_forms(instances::gaussian_orthogonal(2, 1));
  CHECK(cf.angle == doctest::Approx(0.5));
  REQUIRE(cf.equilibria.size() == 3);
  CHECK(sup_distance(cf.equilibria[0].pi, QualificationState{{0.8, 0.0}}) <= 1e-12);
  CHECK(sup_distance(cf.equilibria[1].pi, QualificationState{{0.4, 0.4}}) <= 1e-12);
  CHECK(sup_distance(cf.equilibria[2].pi, QualificationState{{0.0, 0.8}}) <= 1e-12);
  const auto cyc = gaussian_closed_forms(instances::gaussian_orthogonal(1, 2));
  CHECK(cyc.cycle.size() == 2);
  CHECK_THROWS_AS(gaussian_closed_forms(instances::gaussian_orthogonal(1, 1)), PreconditionError);
  CHECK_THROWS_AS(gaussian_closed_forms(instances::uniform_two_group()), PreconditionError);
}

TEST_CASE("beta map of the single-group score model") {
  const System sys = instances::beta_single_group();
  const auto map = beta_of_pi(sys, 201);
  CHECK(map.pi.size() == 201);
  CHECK(map.beta.front() == doctest::Approx(0.0));
  CHECK(map.beta.back() == doctest::Approx(0.0).epsilon(1e-9));
  for (double b : map.beta) CHECK((b >= 0.0 && b <= 1.0));
  CHECK(map.at(map.pi[10]) == doctest::Approx(map.beta[10]));
  CHECK(map.at(0.5 * (map.pi[10] + map.pi[11])) ==
        doctest::Approx(0.5 * (map.beta[10] + map.beta[11])));
  // beta is TPR - FPR at the best threshold for each pi.
  for (std::size_t k = 20; k < 200; k += 30) {
    const RatePair r = sys.features().line_rates(0, map.theta[k]);
    CHECK(map.beta[k] == doctest::Approx(std::max(0.0, r.tpr - r.fpr)).epsilon(1e-9));
  }
}

TEST_CASE("constructed cost yields several equilibria") {
  const double w = 0.8;
  const auto map = beta_of_pi(instances::beta_single_group(w));
  const CostModel g = construct_multi_equilibrium_cost(map, w);
  bool witness = false;
  for (std::size_t k = 0; k < map.pi.size(); ++k)
    witness = witness || (map.pi[k] > 0 && map.pi[k] < g.cdf(w * map.beta[k]));
  CHECK(witness);
  const System sys = instances::multi_equilibrium(w);
  const auto eqs = find_equilibria_scan(sys, ScanConfig{});
  int nz = 0;
  for (const auto& e : eqs) {
    if (e.kind != EquilibriumKind::fixed_point) continue;
    ++nz;
    CHECK(e.residual <= 1e-9);
    CHECK(e.derivative.has_value());
    CHECK(e.literal_condition.has_value());
  }
  CHECK(nz >= 2);
  CHECK(count_sign_changes(sys, 1001) >= nz - 1);
  BetaOfPi flat;
  flat.pi = {0.0, 1.0};
  flat.beta = {0.0, 0.0};
  flat.theta = {1.0, 0.0};
  flat.dbeta = {0.0, 0.0};
  CHECK_THROWS_AS(construct_multi_equilibrium_cost(flat, w), PreconditionError);
}

TEST_CASE("sign changes") {
  const System r = instances::uniform_realizable(0.5, 0.6, {CostModel::uniform01()});
  CHECK(count_sign_changes(r, 101) == 1);
  CHECK_THROWS_AS(count_sign_changes(instances::uniform_two_group(), 101), PreconditionError);
}

TEST_CASE("near-realizability bound") {
  const auto b = near_realizability_bound(0.05, 0.25, 0.5, CostModel::uniform01());
  CHECK(b.bound == doctest::Approx(0.4));
  CHECK(b.hypotheses_checked);
  CHECK_THROWS_AS(near_realizability_bound(0.0, 0.25, 0.5, CostModel::uniform01()), PreconditionError);
  CHECK_THROWS_AS(near_realizability_bound(0.05, 0.5, 0.5, CostModel::uniform01()), PreconditionError);
  // G(w) = 0.9 > 1 - s
  CHECK_THROWS_AS(near_realizability_bound(0.05, 0.25, 0.9, CostModel::uniform01()), PreconditionError);
  // G(w) = 0.3 < s + w eps / s = 0.31
  CHECK_THROWS_AS(near_realizability_bound(0.05, 0.25, 0.3, CostModel::uniform01()), PreconditionError);
}

TEST_CASE("property: near-realizable trajectories respect the bound") {
  testing::Gen gen(5150);
  for (int it = 0; it < 20; ++it) {
    const double eps = gen.uniform(0.01, 0.08);
    const double w = gen.uniform(0.45, 0.7);
    const double s = 0.25;
    const double cut = gen.uniform(0.3, 0.7);
    auto f1 = ScoreDistribution::empirical({{0, 0}, {cut, eps}, {1, 1}});
    auto f0 = ScoreDistribution::empirical({{0, 0}, {cut, 1 - eps}, {1, 1}});
    const System sys(EconomyConfig(w, 1, 1), GroupSet({{"a", 1.0, CostModel::uniform01()}}),
                     FeatureModel::score({f1}, {f0}));
    NearRealizabilityBound b;
    try {
      b = near_realizability_bound(eps, s, w, CostModel::uniform01());
    } catch (const PreconditionError&) {
      continue;
    }
    const auto out = iterate(sys, QualificationState{{gen.uniform(s, 1 - s)}}, DynamicsConfig{});
    CHECK(out.verdict == Verdict::fixed_point);
    CHECK(out.state[0] >= b.bound - 1e-9);
  }
}

TEST_CASE("subsidy rejects a non-dominating cost") {
  const System sys = instances::uniform_two_group();
  CHECK_THROWS_AS(subsidy_equilibrium_shift(sys, 0, CostModel::truncated_normal(0.9, 0.1), ScanConfig{}),
                  PreconditionError);
  CHECK_THROWS_AS(subsidy_equilibrium_shift(sys, 5, CostModel::uniform01(), ScanConfig{}), ConfigError);
}

TEST_CASE("property: subsidies never lower the best equilibrium of a single group") {
  testing::Gen gen(8);
  const System base = instances::multi_equilibrium();
  for (int it = 0; it < 4; ++it) {
    const double delta = gen.uniform(0.01, 0.1);
    const CostModel bar = subsidize(base.groups()[0].cost, Subsidy::shift(delta));
    const auto rep = subsidy_equilibrium_shift(base, 0, bar, ScanConfig{});
    CHECK(rep.all_improved);
    for (const auto& p : rep.pairs) CHECK(p.improved.has_value());
  }
}

TEST_CASE("equilibrium comparison") {
  const System sys = instances::uniform_two_group();
  const auto rep = compare_equilibria(sys, {{"h1", QualificationState{{0.6, 0.3}}},
                                            {"h_mid", QualificationState{{3.0 / 7, 3.0 / 7}}},
                                            {"h2", QualificationState{{0.2, 0.6}}}});
  CHECK(rep.rows.size() == 3);
  CHECK_FALSE(rep.checks.empty());
  for (const auto& [name, ok] : rep.checks) {
    CAPTURE(name);
    CHECK(ok);
  }
  const System g = instances::gaussian_orthogonal(2, 1);
  const auto grep = compare_equilibria(g, {{"h1", QualificationState{{0.8, 0.0}}},
                                           {"h_mid", QualificationState{{0.4, 0.4}}},
                                           {"h2", QualificationState{{0.0, 0.8}}}});
  REQUIRE(grep.checks.size() == 1);
  CHECK(grep.checks[0].second);
  CHECK_THROWS_AS(compare_equilibria(sys, {{"h1", QualificationState{{0.6, 0.3}}}}), PreconditionError);
}

TEST_CASE("initial-rate sweep") {
  const System sys = instances::uniform_two_group();
  const auto rows = initial_rate_sweep(sys, linspace(2), DynamicsConfig{}, true);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].init == 0.0);
  CHECK(rows[1].init == 1.0);
  for (const auto& r : rows) {
    REQUIRE(r.decoupled.has_value());
    for (std::size_t a = 0; a < 2; ++a)
      CHECK(r.delta[a] == doctest::Approx(r.decoupled->state[a] - r.joint.state[a]));
  }
  const auto many = initial_rate_sweep(sys, linspace(11), DynamicsConfig{}, true);
  for (const auto& r : many)
    for (double d : r.delta) CHECK(d >= -1e-9);
  CHECK_FALSE(delta_changes_sign(many, 1e-6));
  const auto joint_only = initial_rate_sweep(sys, linspace(3), DynamicsConfig{}, false);
  CHECK_FALSE(joint_only[0].decoupled.has_value());
  CHECK_FALSE(delta_changes_sign(joint_only, 1e-6));
}

TEST_CASE("sweep rows are identical across repeated runs") {
  const System sys = instances::decoupling_bimodal();
  const auto a = initial_rate_sweep(sys, linspace(9), DynamicsConfig{}, true);
  const auto b = initial_rate_sweep(sys, linspace(9), DynamicsConfig{}, true);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].joint.state == b[i].joint.state);
    CHECK(a[i].decoupled->state == b[i].decoupled->state);
  }
  CHECK(delta_changes_sign(initial_rate_sweep(sys, linspace(21), DynamicsConfig{}, true), 1e-3));
}

}
