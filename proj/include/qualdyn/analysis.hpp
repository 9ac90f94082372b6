#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qualdyn/core.hpp"
#include "qualdyn/costs.hpp"
#include "qualdyn/dynamics.hpp"
#include "qualdyn/features.hpp"

namespace qualdyn {

// n evenly spaced points on [0,1], endpoints included; n >= 2.
std::vector<double> linspace(std::size_t n);

struct ClosedFormRow {
  std::string label;
  // Threshold (uniform) or arc fraction from h_1 (halfspace).
  double theta = 0.0;
  QualificationState pi;
  Stability stability = Stability::not_assessed;
  bool exists = true;
};

struct UniformClosedForms {
  double g = 0.0;
  double h_mid = 0.0;
  // The two interval expressions, sorted.
  double w_lo = 0.0;
  double w_hi = 0.0;
  std::vector<ClosedFormRow> equilibria;  // h1, h_mid, h2
};

// Requires 0 < h1 < h2 < 1 and h2 > 1 - h1; uniform costs.
UniformClosedForms uniform_closed_forms(double h1, double h2, double w);
// Also checks n_1 p_TP = n_2 c_FP and uniform costs in both groups.
UniformClosedForms uniform_closed_forms(const System& system);

struct GaussianClosedForms {
  double angle = 0.0;
  std::vector<ClosedFormRow> equilibria;
  // Two-cycle {h1 state, h2 state} when p_TP < c_FP.
  std::vector<QualificationState> cycle;
};

GaussianClosedForms gaussian_closed_forms(std::span<const double> h1, std::span<const double> h2,
                                          double w, const CostModel& g1, const CostModel& g2,
                                          const EconomyConfig& economy);
// Requires equal group sizes.
GaussianClosedForms gaussian_closed_forms(const System& system);

struct BetaOfPi {
  std::vector<double> pi;
  std::vector<double> theta;
  std::vector<double> beta;
  std::vector<double> dbeta;
  // Largest grid pi with beta = 0 on [0, pi_bar].
  double pi_bar = 0.0;

  double at(double x) const;  // linear interpolation
};

BetaOfPi beta_of_pi(const System& system, std::size_t grid_size = 1001);

// Piecewise-linear cost G with x < G(w beta(x)) at the peak of beta, built
// from the sampled map. Throws PreconditionError when beta vanishes.
CostModel construct_multi_equilibrium_cost(const BetaOfPi& map, double w);

enum class EquilibriumKind { trivial, fixed_point, limit_cycle };
const char* to_string(EquilibriumKind k);

struct Equilibrium {
  EquilibriumKind kind = EquilibriumKind::fixed_point;
  QualificationState pi;
  std::vector<Theta> theta;
  double residual = 0.0;
  // Basin probing; the authoritative label.
  Stability stability = Stability::not_assessed;
  // Single group only: central-difference slope of Phi and |Phi'| < 1.
  std::optional<double> derivative;
  std::optional<Stability> derivative_stability;
  // Single group only: G'(w beta(pi)) < |beta'(pi)| as literally stated.
  std::optional<bool> literal_condition;
  // True when the derivative label disagrees with basin probing.
  bool flagged = false;
  std::vector<QualificationState> cycle;
};

struct ScanConfig {
  // Points of the one-dimensional sign-change scan.
  std::size_t grid = 1001;
  // Starts per axis for the multi-group iteration scan.
  std::size_t starts_per_axis = 21;
  DynamicsConfig dynamics;
  double derivative_step = 1e-6;
  // Additionally scan assessment parameters s for pi^br(s) being a fixed point.
  bool theta_scan = true;
};

std::vector<Equilibrium> find_equilibria_scan(const System& system, const ScanConfig& config);

// Signs of Phi(pi) - pi on the grid for one group: number of strict sign changes.
int count_sign_changes(const System& system, std::size_t grid, Mode mode = Mode::joint);

struct NearRealizabilityBound {
  double bound = 0.0;
  // False when the cost model has no Lipschitz constant to check against.
  bool hypotheses_checked = false;
};

NearRealizabilityBound near_realizability_bound(double eps, double s, double w,
                                                const CostModel& cost);

struct SubsidyPair {
  QualificationState before;
  // Equilibrium after the subsidy that weakly dominates `before`, if any.
  std::optional<QualificationState> improved;
  // Some coordinate of `improved` exceeds `before` by more than the tolerance.
  bool strict = false;
};

struct UnequalCostCheck {
  bool precondition = false;  // G1(w) < G2(w (1 - 2 angle))
  bool unique_h2 = false;
  bool h2_stable = false;
  bool h1_after = false;
};

struct SubsidyReport {
  std::vector<Equilibrium> before;
  std::vector<Equilibrium> after;
  std::vector<SubsidyPair> pairs;
  bool all_improved = false;
  std::optional<UnequalCostCheck> unequal_costs;
};

// Equilibria before and after replacing the cost of `group` by `subsidized`.
SubsidyReport subsidy_equilibrium_shift(const System& system, std::size_t group,
                                        const CostModel& subsidized, const ScanConfig& config,
                                        double tol = 1e-6);

struct RankedEquilibrium {
  std::string label;
  QualificationState pi;
  double theta = 0.0;
  double balance = 0.0;
  double utility = 0.0;
};

struct ComparisonReport {
  std::vector<RankedEquilibrium> rows;
  // Metric name -> preference chain such as "h1 > h_mid ~ h2".
  std::vector<std::pair<std::string, std::string>> rankings;
  std::vector<std::pair<std::string, bool>> checks;
};

struct SweepOutcome {
  Verdict verdict = Verdict::non_converged;
  // Fixed point, cycle average, or last state reached.
  QualificationState state;
};

struct SweepRow {
  double init = 0.0;
  SweepOutcome joint;
  std::optional<SweepOutcome> decoupled;
  // decoupled - joint per group; empty without a decoupled run.
  std::vector<double> delta;
};

// One row per initial rate, shared by every group. Rows run concurrently and
// come back in input order.
std::vector<SweepRow> initial_rate_sweep(const System& system, const std::vector<double>& inits,
                                         const DynamicsConfig& config, bool with_decoupled);

// Sign change of some group's delta beyond tol across the rows.
bool delta_changes_sign(const std::vector<SweepRow>& rows, double tol);

ComparisonReport compare_equilibria(const System& system,
                                    const std::vector<std::pair<std::string, QualificationState>>& eqs,
                                    double tol = 1e-9);

}  // namespace qualdyn
