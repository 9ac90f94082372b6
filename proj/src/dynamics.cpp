#include "qualdyn/dynamics.hpp"

#include <algorithm>
#include <random>

#include "qualdyn/errors.hpp"
#include "qualdyn/parallel.hpp"

namespace qualdyn {

void DynamicsConfig::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(fix_tol > 0.0)) throw ConfigError("fix_tol must be positive");
  if (cycle_window < 2) throw ConfigError("cycle_window must be >= 2");
  if (!(perturb_eps > 0.0)) throw ConfigError("perturb_eps must be positive");
  if (!(stability_tol > 0.0)) throw ConfigError("stability_tol must be positive");
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::fixed_point: return "fixed_point";
    case Verdict::limit_cycle: return "limit_cycle";
    case Verdict::non_converged: return "non_converged";
  }
  return "?";
}

const char* to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::unstable: return "unstable";
    case Stability::not_assessed: return "not_assessed";
  }
  return "?";
}

QualificationState individual_best_response(const System& system, const Theta& theta) {
  QualificationState out;
  for (std::size_t a = 0; a < system.group_count(); ++a)
    out.pi.push_back(system.response(a, system.features().tpr_fpr(a, theta)));
  return out;
}

QualificationState individual_best_response(const System& system,
                                            std::span<const Theta> per_group) {
  if (per_group.size() != system.group_count())
    throw ConfigError("one assessment parameter per group is required");
  QualificationState out;
  for (std::size_t a = 0; a < system.group_count(); ++a)
    out.pi.push_back(system.response(a, system.features().tpr_fpr(a, per_group[a])));
  return out;
}

namespace {

// Response along the search line, avoiding a round trip through unit vectors
// for halfspace models.
double line_response(const System& system, std::size_t group, const Theta& theta) {
  return system.response(group, system.features().line_rates(group, theta.value));
}

}  // namespace

StepResult step(const System& system, const QualificationState& state, Mode mode) {
  validate_state(state, system.group_count());
  StepResult r;
  if (mode == Mode::joint) {
    r.theta.push_back(institution_best_response(system, state));
    for (std::size_t a = 0; a < system.group_count(); ++a)
      r.next.pi.push_back(line_response(system, a, r.theta[0]));
  } else {
    for (std::size_t a = 0; a < system.group_count(); ++a) {
      r.theta.push_back(group_best_response(system, a, state[a]));
      r.next.pi.push_back(line_response(system, a, r.theta[a]));
    }
  }
  return r;
}

QualificationState phi(const System& system, const QualificationState& state, Mode mode) {
  return step(system, state, mode).next;
}

double step_utility(const System& system, const StepResult& result,
                    const QualificationState& state) {
  std::vector<RatePair> rates;
  for (std::size_t a = 0; a < system.group_count(); ++a) {
    const Theta& th = result.theta.size() == 1 ? result.theta[0] : result.theta[a];
    rates.push_back(system.features().line_rates(a, th.value));
  }
  return institutional_utility(system.economy(), system.proportions(), rates, state);
}

DynamicsOutcome iterate(const System& system, const QualificationState& initial,
                        const DynamicsConfig& config) {
  config.validate();
  validate_state(initial, system.group_count());
  DynamicsOutcome out;
  std::vector<QualificationState> history{initial};
  QualificationState state = initial;
  for (int t = 0; t < config.max_iters; ++t) {
    StepResult s = step(system, state, config.mode);
    out.trace.push_back(
        TraceRecord{t, state, s.theta, step_utility(system, s, state), balance(state)});

    if (sup_distance(s.next, state) <= config.fix_tol) {
      out.verdict = Verdict::fixed_point;
      out.state = state;
      return out;
    }
    // history holds pi(0..t); s.next is pi(t+1).
    const int window = std::min<int>(config.cycle_window, static_cast<int>(history.size()));
    for (int lag = 2; lag <= window; ++lag) {
      const std::size_t idx = history.size() - static_cast<std::size_t>(lag);
      if (sup_distance(s.next, history[idx]) <= config.fix_tol) {
        out.verdict = Verdict::limit_cycle;
        out.period = lag;
        out.cycle.assign(history.begin() + static_cast<std::ptrdiff_t>(idx), history.end());
        out.state = s.next;
        return out;
      }
    }
    state = s.next;
    history.push_back(state);
  }
  out.verdict = Verdict::non_converged;
  out.state = state;
  return out;
}

StabilityReport classify_stability(const System& system, const QualificationState& fixed_point,
                                   const DynamicsConfig& config) {
  config.validate();
  validate_state(fixed_point, system.group_count());
  if (sup_distance(phi(system, fixed_point, config.mode), fixed_point) > config.fix_tol)
    throw PreconditionError("classify_stability: state is not a fixed point");

  StabilityReport report;
  const double eps = config.perturb_eps;
  for (std::size_t i = 0; i < fixed_point.size(); ++i) {
    for (double sign : {-1.0, 1.0}) {
      QualificationState p = fixed_point;
      p[i] = std::clamp(p[i] + sign * eps, 0.0, 1.0);
      report.probes.push_back(p);
    }
  }
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> jitter(-eps, eps);
  QualificationState joint = fixed_point;
  for (double& x : joint.pi) x = std::clamp(x + jitter(rng), 0.0, 1.0);
  report.probes.push_back(joint);

  DynamicsConfig probe_cfg = config;
  auto results = parallel_map(report.probes.size(), [&](std::size_t k) {
    return iterate(system, report.probes[k], probe_cfg);
  });
  bool stable = true;
  for (const auto& r : results) {
    report.probe_verdicts.push_back(r.verdict);
    if (r.verdict != Verdict::fixed_point ||
        sup_distance(r.state, fixed_point) > config.stability_tol)
      stable = false;
  }
  report.stability = stable ? Stability::stable : Stability::unstable;
  return report;
}

QualificationState cycle_average(const DynamicsOutcome& outcome) {
  if (outcome.verdict != Verdict::limit_cycle || outcome.cycle.empty())
    throw PreconditionError("cycle_average requires a limit cycle verdict");
  QualificationState mean{std::vector<double>(outcome.cycle.front().size(), 0.0)};
  for (const auto& s : outcome.cycle)
    for (std::size_t i = 0; i < s.size(); ++i) mean[i] += s[i];
  for (double& x : mean.pi) x /= static_cast<double>(outcome.cycle.size());
  return mean;
}

DynamicsOutcome run(const System& system, const QualificationState& initial,
                    const DynamicsConfig& config) {
  DynamicsOutcome out = iterate(system, initial, config);
  if (out.verdict == Verdict::fixed_point) {
    auto report = classify_stability(system, out.state, config);
    out.stability = report.stability;
    out.probes = std::move(report.probes);
  }
  return out;
}

}  // namespace qualdyn
