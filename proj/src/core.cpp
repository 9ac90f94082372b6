#include "qualdyn/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "qualdyn/errors.hpp"

namespace qualdyn {

EconomyConfig::EconomyConfig(double wage, double payoff_tp, double cost_fp)
    : wage_(wage), payoff_tp_(payoff_tp), cost_fp_(cost_fp), ratio_(payoff_tp / cost_fp) {
  if (!(wage > 0.0) || !std::isfinite(wage)) throw ConfigError("wage must be positive");
  if (!(payoff_tp > 0.0) || !std::isfinite(payoff_tp))
    throw ConfigError("payoff_tp must be positive");
  if (!(cost_fp > 0.0) || !std::isfinite(cost_fp)) throw ConfigError("cost_fp must be positive");
}

GroupSet::GroupSet(std::vector<GroupSpec> groups) : groups_(std::move(groups)) {
  if (groups_.empty()) throw ConfigError("at least one group is required");
  std::sort(groups_.begin(), groups_.end(),
            [](const GroupSpec& a, const GroupSpec& b) { return a.id < b.id; });
  double total = 0.0;
  std::set<std::string> seen;
  for (const auto& g : groups_) {
    if (g.id.empty()) throw ConfigError("group id must not be empty");
    if (!seen.insert(g.id).second) throw ConfigError("duplicate group id '" + g.id + "'");
    if (!(g.proportion > 0.0 && g.proportion <= 1.0))
      throw ConfigError("group '" + g.id + "' proportion must lie in (0,1]");
    total += g.proportion;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("group proportions must sum to 1");
}

std::size_t GroupSet::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < groups_.size(); ++i)
    if (groups_[i].id == id) return i;
  throw ConfigError("unknown group '" + id + "'");
}

std::vector<std::string> GroupSet::ids() const {
  std::vector<std::string> out;
  for (const auto& g : groups_) out.push_back(g.id);
  return out;
}

std::vector<double> GroupSet::proportions() const {
  std::vector<double> out;
  for (const auto& g : groups_) out.push_back(g.proportion);
  return out;
}

GroupSet GroupSet::with_cost(std::size_t index, CostModel cost) const {
  auto copy = groups_;
  copy.at(index).cost = std::move(cost);
  return GroupSet(std::move(copy));
}

void validate_state(const QualificationState& state, std::size_t group_count) {
  if (state.size() != group_count)
    throw ConfigError("state has " + std::to_string(state.size()) + " rates, expected " +
                      std::to_string(group_count));
  for (double p : state.pi)
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("qualification rates must lie in [0,1]");
}

double sup_distance(const QualificationState& a, const QualificationState& b) {
  if (a.size() != b.size()) throw ConfigError("state size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

double institutional_utility(const EconomyConfig& economy, std::span<const double> proportions,
                             std::span<const RatePair> rates, const QualificationState& state) {
  if (proportions.size() != state.size() || rates.size() != state.size())
    throw ConfigError("institutional_utility: group index sets do not match");
  double gain = 0.0;
  double loss = 0.0;
  for (std::size_t a = 0; a < state.size(); ++a) {
    gain += rates[a].tpr * state[a] * proportions[a];
    loss += rates[a].fpr * (1.0 - state[a]) * proportions[a];
  }
  return economy.payoff_tp() * gain - economy.cost_fp() * loss;
}

double balance(const QualificationState& state) {
  if (state.pi.empty()) throw ConfigError("balance of an empty state");
  auto [lo, hi] = std::minmax_element(state.pi.begin(), state.pi.end());
  return *hi - *lo;
}

}  // namespace qualdyn
