#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qualdyn/core.hpp"
#include "qualdyn/features.hpp"

namespace qualdyn {

enum class Mode { joint, decoupled };

struct DynamicsConfig {
  Mode mode = Mode::joint;
  int max_iters = 500;
  double fix_tol = kDefaultTolerance;
  int cycle_window = 64;
  double perturb_eps = 1e-4;
  // A stability probe counts as returning when it settles this close to the
  // fixed point.
  double stability_tol = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const DynamicsConfig&, const DynamicsConfig&) = default;
};

enum class Verdict { fixed_point, limit_cycle, non_converged };
enum class Stability { stable, unstable, not_assessed };

const char* to_string(Verdict v);
const char* to_string(Stability s);

struct TraceRecord {
  int t = 0;
  QualificationState pi;
  // One entry in joint mode, one per group in decoupled mode.
  std::vector<Theta> theta;
  double utility = 0.0;
  double balance = 0.0;
};

struct DynamicsOutcome {
  std::vector<TraceRecord> trace;
  Verdict verdict = Verdict::non_converged;
  // The fixed point, or the last state reached.
  QualificationState state;
  // States of the limit cycle in visiting order; empty unless limit_cycle.
  std::vector<QualificationState> cycle;
  int period = 0;
  Stability stability = Stability::not_assessed;
  // Starting points used by the stability probe.
  std::vector<QualificationState> probes;
};

struct StepResult {
  std::vector<Theta> theta;
  QualificationState next;
};

// pi_a = G_a(w (TPR_a - FPR_a)) with the argument clamped at zero.
QualificationState individual_best_response(const System& system, const Theta& theta);
QualificationState individual_best_response(const System& system, std::span<const Theta> per_group);

StepResult step(const System& system, const QualificationState& state, Mode mode);

// Phi(state) without the assessment parameters.
QualificationState phi(const System& system, const QualificationState& state, Mode mode);

double step_utility(const System& system, const StepResult& result,
                    const QualificationState& state);

DynamicsOutcome iterate(const System& system, const QualificationState& initial,
                        const DynamicsConfig& config);

struct StabilityReport {
  Stability stability = Stability::not_assessed;
  std::vector<QualificationState> probes;
  std::vector<Verdict> probe_verdicts;
};

// Basin probing: +-perturb_eps on each coordinate, plus one seeded joint
// perturbation. Throws PreconditionError unless the input is a fixed point
// within fix_tol.
StabilityReport classify_stability(const System& system, const QualificationState& fixed_point,
                                   const DynamicsConfig& config);

// Coordinate-wise mean of the cycle states.
QualificationState cycle_average(const DynamicsOutcome& outcome);

// iterate, followed by classify_stability when the run ends at a fixed point.
DynamicsOutcome run(const System& system, const QualificationState& initial,
                    const DynamicsConfig& config);

}  // namespace qualdyn
