#include <doctest.h>

#include <cmath>

#include "generators.hpp"
#include "qualdyn/dynamics.hpp"
#include "qualdyn/errors.hpp"
#include "qualdyn/verify.hpp"

using namespace qualdyn;

TEST_SUITE("dynamics") {

TEST_CASE("config validation") {
  DynamicsConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.fix_tol = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.cycle_window = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.perturb_eps = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.stability_tol = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("individual response is G(w max(0, TPR - FPR))") {
  const System sys = instances::uniform_two_group();
  for (double t : {0.1, 0.4, 0.6, 0.8, 0.95}) {
    const auto s = individual_best_response(sys, Theta::threshold(t));
    for (std::size_t a = 0; a < 2; ++a) {
      const RatePair r = sys.features().tpr_fpr(a, Theta::threshold(t));
      CHECK(s[a] == doctest::Approx(std::clamp(0.6 * std::max(0.0, r.tpr - r.fpr), 0.0, 1.0)));
    }
  }
  const std::vector<Theta> per{Theta::threshold(0.4), Theta::threshold(0.8)};
  const auto d = individual_best_response(sys, std::span<const Theta>(per));
  CHECK(d[0] == doctest::Approx(0.6));
  CHECK(d[1] == doctest::Approx(0.6));
  const std::vector<Theta> short_list{Theta::threshold(0.4)};
  CHECK_THROWS_AS(individual_best_response(sys, std::span<const Theta>(short_list)), ConfigError);
}

TEST_CASE("step returns one parameter per mode") {
  const System sys = instances::uniform_two_group();
  const QualificationState s{{0.5, 0.5}};
  CHECK(step(sys, s, Mode::joint).theta.size() == 1);
  const auto d = step(sys, s, Mode::decoupled);
  REQUIRE(d.theta.size() == 2);
  CHECK(d.theta[0].value == doctest::Approx(0.4));
  CHECK(d.theta[1].value == doctest::Approx(0.8));
  CHECK(phi(sys, s, Mode::decoupled) == d.next);
}

TEST_CASE("trace records are consistent") {
  const System sys = instances::uniform_two_group();
  const auto out = iterate(sys, QualificationState{{0.9, 0.1}}, DynamicsConfig{});
  REQUIRE(out.verdict == Verdict::fixed_point);
  REQUIRE_FALSE(out.trace.empty());
  for (std::size_t i = 0; i < out.trace.size(); ++i) {
    const auto& r = out.trace[i];
    CHECK(r.t == static_cast<int>(i));
    CHECK(r.theta.size() == 1);
    CHECK(r.utility == doctest::Approx(institutional_utility(sys, r.theta[0], r.pi)));
    CHECK(r.balance == doctest::Approx(balance(r.pi)));
    if (i + 1 < out.trace.size())
      CHECK(sup_distance(out.trace[i + 1].pi, individual_best_response(sys, r.theta[0])) <= 1e-15);
  }
  CHECK(sup_distance(out.state, QualificationState{{0.6, 0.3}}) <= 1e-9);
}

TEST_CASE("iteration limit yields non-convergence") {
  const System sys = instances::gaussian_orthogonal(2.0, 1.0);
  DynamicsConfig c;
  c.max_iters = 1;
  const auto out = iterate(sys, QualificationState{{0.3, 0.2}}, c);
  CHECK(out.verdict == Verdict::non_converged);
  CHECK(out.stability == Stability::not_assessed);
  CHECK_THROWS_AS(cycle_average(out), PreconditionError);
}

TEST_CASE("period-two cycle is detected") {
  const System sys = instances::gaussian_orthogonal(1.0, 2.0);
  const auto out = run(sys, QualificationState{{0.3, 0.5}}, DynamicsConfig{});
  REQUIRE(out.verdict == Verdict::limit_cycle);
  CHECK(out.period == 2);
  REQUIRE(out.cycle.size() == 2);
  const auto avg = cycle_average(out);
  CHECK(avg[0] == doctest::Approx(0.4));
  CHECK(avg[1] == doctest::Approx(0.4));
  CHECK(sup_distance(phi(sys, out.cycle[0], Mode::joint), out.cycle[1]) <= 1e-12);
  CHECK(sup_distance(phi(sys, out.cycle[1], Mode::joint), out.cycle[0]) <= 1e-12);
}

TEST_CASE("stability probing") {
  const System sys = instances::uniform_two_group();
  DynamicsConfig c;
  const auto stable = classify_stability(sys, QualificationState{{0.6, 0.3}}, c);
  CHECK(stable.stability == Stability::stable);
  CHECK(stable.probes.size() == stable.probe_verdicts.size());
  CHECK(stable.probes.size() >= 4);
  CHECK(classify_stability(sys, QualificationState{{3.0 / 7, 3.0 / 7}}, c).stability ==
        Stability::unstable);
  CHECK(classify_stability(sys, QualificationState{{0.0, 0.0}}, c).stability == Stability::unstable);
  CHECK_THROWS_AS(classify_stability(sys, QualificationState{{0.5, 0.5}}, c), PreconditionError);
}

TEST_CASE("runs are deterministic") {
  const System sys = instances::decoupling_bimodal();
  DynamicsConfig c;
  c.seed = 123;
  const auto a = run(sys, QualificationState{{0.35, 0.6}}, c);
  const auto b = run(sys, QualificationState{{0.35, 0.6}}, c);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].pi == b.trace[i].pi);
  CHECK(a.probes == b.probes);
}

TEST_CASE("initial state is validated") {
  const System sys = instances::uniform_two_group();
  CHECK_THROWS_AS(iterate(sys, QualificationState{{0.5}}, DynamicsConfig{}), ConfigError);
  CHECK_THROWS_AS(iterate(sys, QualificationState{{0.5, 1.5}}, DynamicsConfig{}), ConfigError);
}

TEST_CASE("property: Phi maps the unit cube into itself") {
  testing::Gen gen(77);
  for (int it = 0; it < 40; ++it) {
    const System sys(
        EconomyConfig(gen.uniform(0.1, 2.0), gen.uniform(0.3, 3), gen.uniform(0.3, 3)),
        GroupSet({{"a", 0.5, gen.cost()}, {"b", 0.5, gen.cost()}}),
        FeatureModel::score({gen.beta(), gen.beta()}, {gen.beta(), gen.beta()}));
    for (int k = 0; k < 10; ++k) {
      const QualificationState s{{gen.uniform(0, 1), gen.uniform(0, 1)}};
      for (Mode m : {Mode::joint, Mode::decoupled}) {
        const auto next = phi(sys, s, m);
        for (double v : next.pi) REQUIRE((v >= 0.0 && v <= 1.0));
      }
    }
  }
}

TEST_CASE("property: realizable systems converge to G(w) from positive starts") {
  testing::Gen gen(13);
  for (int it = 0; it < 30; ++it) {
    const int n = gen.integer(1, 3);
    std::vector<CostModel> costs;
    for (int a = 0; a < n; ++a) costs.push_back(gen.cost());
    const double w = gen.uniform(0.2, 1.0);
    const System sys = instances::uniform_realizable(gen.uniform(0.2, 0.8), w, costs);
    QualificationState s;
    QualificationState target;
    for (int a = 0; a < n; ++a) {
      s.pi.push_back(gen.uniform(0.05, 1.0));
      target.pi.push_back(costs[a].cdf(w));
    }
    bool positive = true;
    for (double v : target.pi) positive = positive && v > 0.0;
    if (!positive) continue;
    const auto out = iterate(sys, s, DynamicsConfig{});
    CAPTURE(it);
    CHECK(out.verdict == Verdict::fixed_point);
    CHECK(sup_distance(out.state, target) <= 1e-9);
  }
}

TEST_CASE("property: decoupled uniform dynamics reach G(w) in every group") {
  testing::Gen gen(19);
  for (int it = 0; it < 30; ++it) {
    const double h1 = gen.uniform(0.1, 0.9);
    const double h2 = gen.uniform(0.1, 0.9);
    const double w = gen.uniform(0.2, 1.0);
    const System sys(EconomyConfig(w, gen.uniform(0.5, 2), gen.uniform(0.5, 2)),
                     GroupSet({{"a", 0.5, CostModel::uniform01()}, {"b", 0.5, CostModel::uniform01()}}),
                     FeatureModel::uniform_threshold({h1, h2}));
    DynamicsConfig c;
    c.mode = Mode::decoupled;
    const auto out = iterate(sys, QualificationState{{gen.uniform(0.01, 1), gen.uniform(0.01, 1)}}, c);
    CHECK(out.verdict == Verdict::fixed_point);
    CHECK(out.state[0] == doctest::Approx(std::min(w, 1.0)).epsilon(1e-9));
    CHECK(out.state[1] == doctest::Approx(std::min(w, 1.0)).epsilon(1e-9));
  }
}

}
