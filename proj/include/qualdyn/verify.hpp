#pragma once

#include <string>
#include <vector>

#include "qualdyn/analysis.hpp"
#include "qualdyn/features.hpp"

namespace qualdyn {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CriterionResult {
  int id = 0;
  std::string title;
  std::vector<Check> checks;

  bool passed() const;
};

// Reference instances shared by the verification suites, the scenario files
// and the tests.
namespace instances {

// Uniform scores, thresholds (0.4, 0.8), equal sizes, p_TP = c_FP = 1.
System uniform_two_group(double wage = 0.6);
// Thresholds all equal to `h`; one cost model per group.
System uniform_realizable(double h, double wage, std::vector<CostModel> costs);
// One group with TPR = 0.95, FPR = 0.05 at theta = 0.5; uniform cost.
System near_realizable(double wage = 0.5);
// Normals (1,0) and (0,1), equal sizes, uniform costs, w = 0.8.
System gaussian_orthogonal(double payoff_tp, double cost_fp);
// Normals 45 degrees apart, w = 0.8, p_TP = 2, c_FP = 1.
System gaussian_unequal_costs(const CostModel& g1, const CostModel& g2);
// F1 = Beta(5,2), F0 = Beta(2,5), uniform cost.
System beta_single_group(double wage = 0.8);
// beta_single_group with the constructed multi-equilibrium cost.
System multi_equilibrium(double wage = 0.8);
// Two score groups of differing informativeness and a bimodal cost.
System decoupling_bimodal();

}  // namespace instances

// Suite names accepted by run_suite, in criterion order.
std::vector<std::string> suite_names();
// Throws ConfigError for an unknown suite. "all" runs every criterion.
std::vector<int> suite_criteria(const std::string& suite);

CriterionResult run_criterion(int id);
std::vector<CriterionResult> run_suite(const std::string& suite);

}  // namespace qualdyn
