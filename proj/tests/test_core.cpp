#include <doctest.h>

#include <vector>

#include "generators.hpp"
#include "qualdyn/core.hpp"
#include "qualdyn/errors.hpp"

using namespace qualdyn;

TEST_SUITE("core") {

TEST_CASE("economy rejects non-positive and non-finite parameters") {
  CHECK_NOTHROW(EconomyConfig(0.6, 1.0, 1.0));
  CHECK_THROWS_AS(EconomyConfig(0.0, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(EconomyConfig(0.5, -1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(EconomyConfig(0.5, 1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(EconomyConfig(1.0 / 0.0, 1.0, 1.0), ConfigError);
  CHECK(EconomyConfig(0.5, 2.0, 1.0).ratio() == doctest::Approx(2.0));
}

TEST_CASE("groups are stored in id order") {
  GroupSet g({{"b", 0.3, CostModel::uniform01()}, {"a", 0.7, CostModel::uniform01()}});
  CHECK(g.ids() == std::vector<std::string>{"a", "b"});
  CHECK(g.index_of("b") == 1);
  CHECK(g.proportions() == std::vector<double>{0.7, 0.3});
  CHECK_THROWS_AS(g.index_of("c"), ConfigError);
}

TEST_CASE("group validation") {
  CHECK_THROWS_AS(GroupSet({}), ConfigError);
  CHECK_THROWS_AS(GroupSet({{"a", 0.5, CostModel::uniform01()}, {"a", 0.5, CostModel::uniform01()}}),
                  ConfigError);
  CHECK_THROWS_AS(GroupSet({{"a", 0.5, CostModel::uniform01()}, {"b", 0.4, CostModel::uniform01()}}),
                  ConfigError);
  CHECK_THROWS_AS(GroupSet({{"", 1.0, CostModel::uniform01()}}), ConfigError);
  CHECK_THROWS_AS(GroupSet({{"a", 0.0, CostModel::uniform01()}, {"b", 1.0, CostModel::uniform01()}}),
                  ConfigError);
}

TEST_CASE("with_cost replaces one group only") {
  GroupSet g({{"a", 0.5, CostModel::uniform01()}, {"b", 0.5, CostModel::uniform01()}});
  auto h = g.with_cost(1, CostModel::truncated_normal(0.5, 0.1));
  CHECK(h[0].cost == g[0].cost);
  CHECK_FALSE(h[1].cost == g[1].cost);
}

TEST_CASE("state validation") {
  CHECK_NOTHROW(validate_state(QualificationState{{0.0, 1.0}}, 2));
  CHECK_THROWS_AS(validate_state(QualificationState{{0.5}}, 2), ConfigError);
  CHECK_THROWS_AS(validate_state(QualificationState{{0.5, 1.1}}, 2), ConfigError);
  CHECK_THROWS_AS(validate_state(QualificationState{{-0.1, 0.5}}, 2), ConfigError);
}

TEST_CASE("utility matches the weighted gain minus loss") {
  testing::Gen gen(11);
  for (int it = 0; it < 200; ++it) {
    const int n = gen.integer(1, 4);
    std::vector<double> props;
    std::vector<RatePair> rates;
    QualificationState s;
    double total = 0.0;
    for (int a = 0; a < n; ++a) {
      props.push_back(gen.uniform(0.1, 1.0));
      total += props.back();
      rates.push_back({gen.uniform(0, 1), gen.uniform(0, 1)});
      s.pi.push_back(gen.uniform(0, 1));
    }
    for (auto& p : props) p /= total;
    const EconomyConfig e(0.5, gen.uniform(0.1, 3), gen.uniform(0.1, 3));
    double expect = 0.0;
    for (int a = 0; a < n; ++a)
      expect += props[a] * (e.payoff_tp() * rates[a].tpr * s[a] -
                            e.cost_fp() * rates[a].fpr * (1.0 - s[a]));
    CHECK(institutional_utility(e, props, rates, s) == doctest::Approx(expect).epsilon(1e-12));
  }
  const std::vector<double> one{1.0};
  const std::vector<RatePair> two(2);
  CHECK_THROWS_AS(institutional_utility(EconomyConfig(1, 1, 1), one, two, QualificationState{{0.5}}),
                  ConfigError);
}

TEST_CASE("balance is the largest pairwise gap") {
  CHECK(balance(QualificationState{{0.3}}) == 0.0);
  CHECK(balance(QualificationState{{0.2, 0.9, 0.5}}) == doctest::Approx(0.7));
  CHECK_THROWS_AS(balance(QualificationState{}), ConfigError);
}

TEST_CASE("sup distance") {
  CHECK(sup_distance(QualificationState{{0.1, 0.5}}, QualificationState{{0.2, 0.2}}) ==
        doctest::Approx(0.3));
  CHECK_THROWS_AS(sup_distance(QualificationState{{0.1}}, QualificationState{{0.1, 0.2}}),
                  ConfigError);
}

}
