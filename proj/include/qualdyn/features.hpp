#pragma once

#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "qualdyn/core.hpp"
#include "qualdyn/costs.hpp"

namespace qualdyn {

// Assessment parameter theta. For threshold models `value` is the threshold.
// For halfspace models `normal` is the unit normal and `value` its arc
// fraction from h_1 (0) toward h_2 (1), NaN when the normal is off that arc.
struct Theta {
  double value = 0.0;
  std::vector<double> normal;

  static Theta threshold(double t) { return Theta{t, {}}; }
};

// Conditional score distribution on [0,1]; cdf(x) = Pr(X < x).
class ScoreDistribution {
 public:
  struct Beta {
    double alpha = 1.0;
    double beta = 1.0;
    friend bool operator==(const Beta&, const Beta&) = default;
  };
  // Piecewise-linear CDF; first knot (0,0), last knot (1,1).
  struct Empirical {
    std::vector<Knot> knots;
    friend bool operator==(const Empirical&, const Empirical&) = default;
  };

  static ScoreDistribution beta(double alpha, double beta);
  static ScoreDistribution empirical(std::vector<Knot> knots);

  double cdf(double x) const;
  // Analytic Beta density; for empirical CDFs the slope of the segment
  // containing x (right-continuous at knots).
  double density(double x) const;
  // Density used for the likelihood ratio: analytic for Beta, central
  // differences with the given step for empirical CDFs.
  double ratio_density(double x, double step = 1e-4) const;
  std::vector<double> breakpoints() const;

  const std::variant<Beta, Empirical>& kind() const noexcept { return kind_; }
  friend bool operator==(const ScoreDistribution&, const ScoreDistribution&) = default;

 private:
  explicit ScoreDistribution(std::variant<Beta, Empirical> k) : kind_(std::move(k)) {}
  std::variant<Beta, Empirical> kind_;
};

// Scores uniform on [0,1]; in group i those above h_i are qualified. Decision 1{X > theta}.
struct UniformThreshold {
  std::vector<double> thresholds;
};

// Spherical Gaussian features; group i is qualified on the halfspace x'h_i >= 0.
// Exactly two groups. Decision 1{x'theta >= 0}.
struct GaussianHalfspace {
  std::vector<std::vector<double>> normals;

  // Angle between h_1 and h_2 normalized by pi.
  double angle() const;
  std::vector<double> midpoint() const;
  // Point on the geodesic from h_1 (t=0) to h_2 (t=1).
  std::vector<double> arc_point(double t) const;
};

// Per-group F1 (qualified) and F0 (unqualified) score CDFs. Decision 1{X > theta}.
struct ScoreModel {
  std::vector<ScoreDistribution> qualified;
  std::vector<ScoreDistribution> unqualified;

  // phi(x) = f0(x) / f1(x); +inf where f1 vanishes and f0 does not.
  double likelihood_ratio(std::size_t group, double x) const;
};

// Angle between two vectors normalized by pi, in [0,1].
double normalized_angle(std::span<const double> a, std::span<const double> b);

class FeatureModel {
 public:
  using Variant = std::variant<UniformThreshold, GaussianHalfspace, ScoreModel>;

  static FeatureModel uniform_threshold(std::vector<double> thresholds);
  // Normals are normalized; they must share a dimension and differ.
  static FeatureModel gaussian_halfspace(std::vector<std::vector<double>> normals);
  static FeatureModel score(std::vector<ScoreDistribution> qualified,
                            std::vector<ScoreDistribution> unqualified);

  std::size_t group_count() const;
  const Variant& variant() const noexcept { return variant_; }

  // Throws DomainError when theta lies outside Theta.
  RatePair tpr_fpr(std::size_t group, const Theta& theta) const;

  // Every model is searched along a line s in [0,1]: the threshold itself for
  // scalar models, the h_1 -> h_2 geodesic for halfspaces.
  Theta line_point(double s) const;
  RatePair line_rates(std::size_t group, double s) const;
  // Points where the rate curves along the line have kinks.
  std::vector<double> breakpoints() const;
  bool has_line_derivatives() const;
  // d/ds of (TPR, FPR) along the line.
  RatePair line_rate_derivatives(std::size_t group, double s) const;

 private:
  explicit FeatureModel(Variant v) : variant_(std::move(v)) {}
  Variant variant_;
};

struct SolverConfig {
  std::size_t grid_size = 2001;
  // Utilities within tie_tol of the maximum count as optimal.
  double tie_tol = 1e-12;
  // Equality tolerance for rates (Gaussian indifference test).
  double tol = kDefaultTolerance;
  // A run of tied grid points at least this many cells from the maximizer
  // is treated as a plateau of optimal parameters.
  std::size_t plateau_cells = 8;

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

// Economy, groups and features bundled with the solver grid. Rates and
// individual responses on the grid are tabulated once at construction.
class System {
 public:
  System(EconomyConfig economy, GroupSet groups, FeatureModel features, SolverConfig solver = {});

  const EconomyConfig& economy() const noexcept { return economy_; }
  const GroupSet& groups() const noexcept { return groups_; }
  const FeatureModel& features() const noexcept { return features_; }
  const SolverConfig& solver() const noexcept { return solver_; }
  std::size_t group_count() const noexcept { return groups_.size(); }
  const std::vector<double>& proportions() const noexcept { return proportions_; }

  const std::vector<double>& line_grid() const noexcept { return grid_; }
  RatePair grid_rates(std::size_t k, std::size_t group) const { return rates_[k * n_ + group]; }
  double grid_response(std::size_t k, std::size_t group) const {
    return responses_[k * n_ + group];
  }

  // G_a(w * (TPR - FPR)), the argument clamped at 0.
  double response(std::size_t group, RatePair rates) const;

  System with_groups(GroupSet groups) const;
  System with_economy(EconomyConfig economy) const;

 private:
  EconomyConfig economy_;
  GroupSet groups_;
  FeatureModel features_;
  SolverConfig solver_;
  std::size_t n_;
  std::vector<double> proportions_;
  std::vector<double> grid_;
  std::vector<RatePair> rates_;
  std::vector<double> responses_;
};

double institutional_utility(const System& system, const Theta& theta,
                             const QualificationState& state);
// Decoupled form: one parameter per group.
double institutional_utility(const System& system, std::span<const Theta> per_group,
                             const QualificationState& state);

Metrics compute_metrics(const System& system, const Theta& theta, const QualificationState& state);

// Utility-maximizing shared parameter. Grid argmax over the line, refined by
// a root search on the utility derivative when the model provides one. Ties:
// the Gaussian indifference case returns h_mid; score models keep the smallest
// maximizer; any other plateau of optimal parameters is resolved toward the
// parameter whose induced rates are closest to the current state, then toward
// the smallest parameter.
Theta institution_best_response(const System& system, const QualificationState& state);

// Per-group parameter maximizing p_TP TPR_a pi_a - c_FP FPR_a (1 - pi_a).
Theta group_best_response(const System& system, std::size_t group, double pi);

// h_mid = (h_1 + h_2) / |h_1 + h_2|, used when every arc point is optimal.
Theta gaussian_tiebreak(const GaussianHalfspace& model);

struct CoateLouryResult {
  double theta = 1.0;
  // True when phi failed the monotonicity checks and the grid solver was used.
  bool fallback = false;
};

// inf{x : r >= (1 - pi)/pi * phi(x)} for a single-group score model.
CoateLouryResult coate_loury_threshold(const System& system, const QualificationState& state);

}  // namespace qualdyn
