#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qualdyn/costs.hpp"

namespace qualdyn {

inline constexpr double kDefaultTolerance = 1e-9;

// Wage paid to individuals assessed as qualified, and the institution's
// payoff for a true positive / loss for a false positive.
class EconomyConfig {
 public:
  EconomyConfig(double wage, double payoff_tp, double cost_fp);

  double wage() const noexcept { return wage_; }
  double payoff_tp() const noexcept { return payoff_tp_; }
  double cost_fp() const noexcept { return cost_fp_; }
  // p_TP / c_FP
  double ratio() const noexcept { return ratio_; }

  friend bool operator==(const EconomyConfig&, const EconomyConfig&) = default;

 private:
  double wage_;
  double payoff_tp_;
  double cost_fp_;
  double ratio_;
};

struct GroupSpec {
  std::string id;
  double proportion = 1.0;
  CostModel cost = CostModel::uniform01();

  friend bool operator==(const GroupSpec&, const GroupSpec&) = default;
};

// Groups in canonical (lexicographic by id) order. Every per-group vector in
// the library is indexed by position in this order.
class GroupSet {
 public:
  explicit GroupSet(std::vector<GroupSpec> groups);

  std::size_t size() const noexcept { return groups_.size(); }
  const GroupSpec& operator[](std::size_t i) const { return groups_[i]; }
  std::size_t index_of(const std::string& id) const;
  std::vector<std::string> ids() const;
  std::vector<double> proportions() const;

  auto begin() const { return groups_.begin(); }
  auto end() const { return groups_.end(); }

  // Same groups with the cost model of one group replaced.
  GroupSet with_cost(std::size_t index, CostModel cost) const;

  friend bool operator==(const GroupSet&, const GroupSet&) = default;

 private:
  std::vector<GroupSpec> groups_;
};

// Per-group qualification rates pi_a = Pr(Y=1 | A=a), in canonical group order.
struct QualificationState {
  std::vector<double> pi;

  std::size_t size() const noexcept { return pi.size(); }
  double operator[](std::size_t i) const { return pi[i]; }
  double& operator[](std::size_t i) { return pi[i]; }

  friend bool operator==(const QualificationState&, const QualificationState&) = default;
};

// Throws ConfigError unless every rate is in [0,1] and the size matches.
void validate_state(const QualificationState& state, std::size_t group_count);

double sup_distance(const QualificationState& a, const QualificationState& b);

struct RatePair {
  double tpr = 0.0;
  double fpr = 0.0;
};

// p_TP * sum_a TPR_a pi_a n_a - c_FP * sum_a FPR_a (1 - pi_a) n_a
double institutional_utility(const EconomyConfig& economy, std::span<const double> proportions,
                             std::span<const RatePair> rates, const QualificationState& state);

// Largest pairwise gap between group rates; zero for one group.
double balance(const QualificationState& state);

struct Metrics {
  std::vector<double> qualification_rates;
  double balance = 0.0;
  double institutional_utility = 0.0;
};

}  // namespace qualdyn
