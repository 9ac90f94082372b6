#include "qualdyn/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <numbers>
#include <optional>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "qualdyn/errors.hpp"

namespace qualdyn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void check_unit_interval(double theta) {
  if (!(theta >= 0.0 && theta <= 1.0))
    throw DomainError("threshold " + std::to_string(theta) + " is outside [0,1]");
}

std::size_t variant_groups(const FeatureModel::Variant& v) {
  return std::visit(overloaded{
                        [](const UniformThreshold& m) { return m.thresholds.size(); },
                        [](const GaussianHalfspace& m) { return m.normals.size(); },
                        [](const ScoreModel& m) { return m.qualified.size(); },
                    },
                    v);
}

}  // namespace

// ---------------------------------------------------------------- scores

ScoreDistribution ScoreDistribution::beta(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
    throw ConfigError("Beta parameters must be positive");
  return ScoreDistribution(Beta{alpha, beta});
}

ScoreDistribution ScoreDistribution::empirical(std::vector<Knot> knots) {
  if (knots.size() < 2) throw ConfigError("empirical score CDF needs at least two knots");
  if (knots.front().x != 0.0 || knots.front().y != 0.0 || knots.back().x != 1.0 ||
      knots.back().y != 1.0)
    throw ConfigError("empirical score CDF must run from (0,0) to (1,1)");
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i].x > knots[i - 1].x))
      throw ConfigError("empirical score knots must have strictly increasing x");
    if (knots[i].y < knots[i - 1].y)
      throw ConfigError("empirical score knots must be non-decreasing");
  }
  return ScoreDistribution(Empirical{std::move(knots)});
}

double ScoreDistribution::cdf(double x) const {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return std::visit(overloaded{
                        [&](const Beta& b) { return boost::math::ibeta(b.alpha, b.beta, x); },
                        [&](const Empirical& e) {
                          const auto& k = e.knots;
                          auto hi = std::upper_bound(
                              k.begin(), k.end(), x,
                              [](double v, const Knot& kn) { return v < kn.x; });
                          auto lo = hi - 1;
                          return lo->y + (x - lo->x) / (hi->x - lo->x) * (hi->y - lo->y);
                        },
                    },
                    kind_);
}

double ScoreDistribution::density(double x) const {
  if (x < 0.0 || x > 1.0) return 0.0;
  return std::visit(
      overloaded{
          [&](const Beta& b) {
            if ((x == 0.0 && b.alpha < 1.0) || (x == 1.0 && b.beta < 1.0))
              return std::numeric_limits<double>::infinity();
            try {
              return boost::math::ibeta_derivative(b.alpha, b.beta, x);
            } catch (const std::overflow_error&) {
              return std::numeric_limits<double>::infinity();
            }
          },
          [&](const Empirical& e) {
            const auto& k = e.knots;
            auto hi = std::upper_bound(k.begin(), k.end(), x,
                                       [](double v, const Knot& kn) { return v < kn.x; });
            if (hi == k.end()) --hi;
            auto lo = hi - 1;
            return (hi->y - lo->y) / (hi->x - lo->x);
          },
      },
      kind_);
}

double ScoreDistribution::ratio_density(double x, double step) const {
  if (std::holds_alternative<Beta>(kind_)) return density(x);
  const double lo = std::max(0.0, x - step);
  const double hi = std::min(1.0, x + step);
  return (cdf(hi) - cdf(lo)) / (hi - lo);
}

std::vector<double> ScoreDistribution::breakpoints() const {
  std::vector<double> out;
  if (const auto* e = std::get_if<Empirical>(&kind_))
    for (const auto& k : e->knots)
      if (k.x > 0.0 && k.x < 1.0) out.push_back(k.x);
  return out;
}

double ScoreModel::likelihood_ratio(std::size_t group, double x) const {
  const double f1 = qualified.at(group).ratio_density(x);
  const double f0 = unqualified.at(group).ratio_density(x);
  if (f1 <= 0.0) return f0 > 0.0 ? std::numeric_limits<double>::infinity() : kNaN;
  return f0 / f1;
}

// ---------------------------------------------------------------- halfspaces

double normalized_angle(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DomainError("vector dimensions differ");
  // 2 atan2(|a - b|, |a + b|) stays accurate near 0 and pi, unlike acos.
  const double na = norm(a);
  const double nb = norm(b);
  double diff = 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double u = a[i] / na;
    const double v = b[i] / nb;
    diff += (u - v) * (u - v);
    sum += (u + v) * (u + v);
  }
  return 2.0 * std::atan2(std::sqrt(diff), std::sqrt(sum)) / std::numbers::pi;
}

double GaussianHalfspace::angle() const { return normalized_angle(normals.at(0), normals.at(1)); }

std::vector<double> GaussianHalfspace::midpoint() const {
  const auto& a = normals.at(0);
  const auto& b = normals.at(1);
  std::vector<double> m(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) m[i] = a[i] + b[i];
  const double n = norm(m);
  for (double& x : m) x /= n;
  return m;
}

std::vector<double> GaussianHalfspace::arc_point(double t) const {
  if (t == 0.0) return normals.at(0);
  if (t == 1.0) return normals.at(1);
  if (t == 0.5) return midpoint();
  const auto& a = normals.at(0);
  const auto& b = normals.at(1);
  const double omega = angle() * std::numbers::pi;
  const double wa = std::sin((1.0 - t) * omega) / std::sin(omega);
  const double wb = std::sin(t * omega) / std::sin(omega);
  std::vector<double> p(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) p[i] = wa * a[i] + wb * b[i];
  const double n = norm(p);
  for (double& x : p) x /= n;
  return p;
}

// ---------------------------------------------------------------- model

FeatureModel FeatureModel::uniform_threshold(std::vector<double> thresholds) {
  if (thresholds.empty()) throw ConfigError("uniform threshold model needs at least one group");
  for (double h : thresholds)
    if (!(h > 0.0 && h < 1.0)) throw ConfigError("qualification thresholds must lie in (0,1)");
  return FeatureModel(UniformThreshold{std::move(thresholds)});
}

FeatureModel FeatureModel::gaussian_halfspace(std::vector<std::vector<double>> normals) {
  if (normals.size() != 2) throw ConfigError("halfspace model requires exactly two groups");
  const std::size_t d = normals[0].size();
  if (d < 2) throw ConfigError("halfspace normals need dimension >= 2");
  for (auto& v : normals) {
    if (v.size() != d) throw ConfigError("halfspace normals must share a dimension");
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw ConfigError("halfspace normal must be nonzero");
    if (std::abs(n - 1.0) > 1e-15)
      for (double& x : v) x /= n;
  }
  const double ang = normalized_angle(normals[0], normals[1]);
  if (!(ang > 0.0 && ang < 1.0))
    throw ConfigError("halfspace normals must differ and not be antipodal");
  return FeatureModel(GaussianHalfspace{std::move(normals)});
}

FeatureModel FeatureModel::score(std::vector<ScoreDistribution> qualified,
                                 std::vector<ScoreDistribution> unqualified) {
  if (qualified.empty() || qualified.size() != unqualified.size())
    throw ConfigError("score model needs F1 and F0 for every group");
  return FeatureModel(ScoreModel{std::move(qualified), std::move(unqualified)});
}

std::size_t FeatureModel::group_count() const { return variant_groups(variant_); }

RatePair FeatureModel::tpr_fpr(std::size_t group, const Theta& theta) const {
  return std::visit(
      overloaded{
          [&](const UniformThreshold& m) {
            check_unit_interval(theta.value);
            const double h = m.thresholds.at(group);
            const double t = theta.value;
            return RatePair{std::min(1.0, (1.0 - std::max(t, h)) / (1.0 - h)),
                            std::max(0.0, h - t) / h};
          },
          [&](const GaussianHalfspace& m) {
            const auto& h = m.normals.at(group);
            if (theta.normal.size() != h.size())
              throw DomainError("halfspace parameter has the wrong dimension");
            if (std::abs(norm(theta.normal) - 1.0) > 1e-9)
              throw DomainError("halfspace parameter must be a unit vector");
            const double x = normalized_angle(theta.normal, h);
            return RatePair{1.0 - x, x};
          },
          [&](const ScoreModel& m) {
            check_unit_interval(theta.value);
            return RatePair{1.0 - m.qualified.at(group).cdf(theta.value),
                            1.0 - m.unqualified.at(group).cdf(theta.value)};
          },
      },
      variant_);
}

Theta FeatureModel::line_point(double s) const {
  if (const auto* g = std::get_if<GaussianHalfspace>(&variant_)) return Theta{s, g->arc_point(s)};
  return Theta::threshold(s);
}

RatePair FeatureModel::line_rates(std::size_t group, double s) const {
  if (const auto* g = std::get_if<GaussianHalfspace>(&variant_)) {
    // Geodesic points split the angle exactly.
    const double total = g->angle();
    const double x = group == 0 ? s * total : (1.0 - s) * total;
    return RatePair{1.0 - x, x};
  }
  return tpr_fpr(group, Theta::threshold(s));
}

std::vector<double> FeatureModel::breakpoints() const {
  std::vector<double> out;
  std::visit(overloaded{
                 [&](const UniformThreshold& m) { out = m.thresholds; },
                 [&](const GaussianHalfspace&) { out = {0.5}; },
                 [&](const ScoreModel& m) {
                   for (std::size_t a = 0; a < m.qualified.size(); ++a) {
                     for (double x : m.qualified[a].breakpoints()) out.push_back(x);
                     for (double x : m.unqualified[a].breakpoints()) out.push_back(x);
                   }
                 },
             },
             variant_);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool FeatureModel::has_line_derivatives() const {
  return std::holds_alternative<ScoreModel>(variant_);
}

RatePair FeatureModel::line_rate_derivatives(std::size_t group, double s) const {
  const auto* m = std::get_if<ScoreModel>(&variant_);
  if (!m) throw UnsupportedError("rate derivatives are only available for score models");
  return RatePair{-m->qualified.at(group).density(s), -m->unqualified.at(group).density(s)};
}

// ---------------------------------------------------------------- system

System::System(EconomyConfig economy, GroupSet groups, FeatureModel features, SolverConfig solver)
    : economy_(economy),
      groups_(std::move(groups)),
      features_(std::move(features)),
      solver_(solver),
      n_(groups_.size()),
      proportions_(groups_.proportions()) {
  if (features_.group_count() != n_)
    throw ConfigError("feature model describes " + std::to_string(features_.group_count()) +
                      " groups, economy has " + std::to_string(n_));
  if (solver_.grid_size < 3) throw ConfigError("solver grid needs at least 3 points");
  if (!(solver_.tie_tol >= 0.0) || !(solver_.tol > 0.0))
    throw ConfigError("solver tolerances must be positive");

  const std::size_t m = solver_.grid_size;
  for (std::size_t k = 0; k < m; ++k) grid_.push_back(static_cast<double>(k) / (m - 1));
  const double spacing = 1.0 / (m - 1);
  for (double b : features_.breakpoints()) {
    if (b <= 0.0 || b >= 1.0) continue;
    const double nearest = std::round(b / spacing) * spacing;
    if (std::abs(nearest - b) > 1e-15) grid_.push_back(b);
  }
  std::sort(grid_.begin(), grid_.end());

  rates_.reserve(grid_.size() * n_);
  responses_.reserve(grid_.size() * n_);
  for (double s : grid_) {
    for (std::size_t a = 0; a < n_; ++a) {
      const RatePair r = features_.line_rates(a, s);
      rates_.push_back(r);
      responses_.push_back(response(a, r));
    }
  }
}

double System::response(std::size_t group, RatePair rates) const {
  const double gap = std::max(0.0, rates.tpr - rates.fpr);
  return groups_[group].cost.cdf(economy_.wage() * gap);
}

System System::with_groups(GroupSet groups) const {
  return System(economy_, std::move(groups), features_, solver_);
}

System System::with_economy(EconomyConfig economy) const {
  return System(economy, groups_, features_, solver_);
}

double institutional_utility(const System& system, const Theta& theta,
                             const QualificationState& state) {
  validate_state(state, system.group_count());
  std::vector<RatePair> rates;
  for (std::size_t a = 0; a < system.group_count(); ++a)
    rates.push_back(system.features().tpr_fpr(a, theta));
  return institutional_utility(system.economy(), system.proportions(), rates, state);
}

double institutional_utility(const System& system, std::span<const Theta> per_group,
                             const QualificationState& state) {
  validate_state(state, system.group_count());
  if (per_group.size() != system.group_count())
    throw ConfigError("decoupled utility needs one parameter per group");
  std::vector<RatePair> rates;
  for (std::size_t a = 0; a < system.group_count(); ++a)
    rates.push_back(system.features().tpr_fpr(a, per_group[a]));
  return institutional_utility(system.economy(), system.proportions(), rates, state);
}

Metrics compute_metrics(const System& system, const Theta& theta, const QualificationState& state) {
  return Metrics{state.pi, balance(state), institutional_utility(system, theta, state)};
}

// ---------------------------------------------------------------- best response

namespace {

// U(s) = sum_a gain_a TPR_a(s) - loss_a FPR_a(s). Groups flagged in `involved`
// enter the consistency tie-break against `target`.
struct LineObjective {
  std::vector<double> gain;
  std::vector<double> loss;
  std::vector<bool> involved;
  QualificationState target;
};

class LineSearch {
 public:
  LineSearch(const System& system, const LineObjective& objective)
      : sys_(system), obj_(objective), grid_(system.line_grid()) {}

  double solve() const {
    const std::size_t m = grid_.size();
    std::vector<double> u(m);
    std::size_t best = 0;
    for (std::size_t k = 0; k < m; ++k) {
      u[k] = grid_utility(k);
      if (u[k] > u[best]) best = k;
    }
    double best_s = grid_[best];
    double best_u = u[best];
    if (sys_.features().has_line_derivatives()) {
      if (auto refined = refine_by_derivative(best)) {
        const double ur = utility(*refined);
        if (ur >= best_u) {
          best_s = *refined;
          best_u = ur;
        }
      }
    }

    // Smooth models keep the first (smallest) maximizer.
    if (sys_.features().has_line_derivatives()) return best_s;

    const double tie = sys_.solver().tie_tol;
    std::vector<std::size_t> tied;
    bool plateau = false;
    for (std::size_t k = 0; k < m; ++k) {
      if (u[k] >= best_u - tie) {
        tied.push_back(k);
        const std::size_t gap = k > best ? k - best : best - k;
        if (gap >= sys_.solver().plateau_cells) plateau = true;
      }
    }
    if (!plateau) return best_s;

    // Plateau: prefer the parameter whose induced rates match the state.
    std::size_t pick = tied.front();
    double pick_d = grid_consistency(pick);
    for (std::size_t k : tied) {
      const double d = grid_consistency(k);
      if (d < pick_d) {
        pick = k;
        pick_d = d;
      }
    }
    auto is_tied = [&](std::size_t k) { return u[k] >= best_u - tie; };
    const double lo = (pick > 0 && is_tied(pick - 1)) ? grid_[pick - 1] : grid_[pick];
    const double hi = (pick + 1 < m && is_tied(pick + 1)) ? grid_[pick + 1] : grid_[pick];
    if (hi > lo) {
      auto penalized = [&](double s) {
        if (utility(s) < best_u - tie) return std::numeric_limits<double>::infinity();
        return consistency(s);
      };
      double a = lo;
      double b = hi;
      for (int i = 0; i < 200 && b - a > 1e-15; ++i) {
        const double m1 = a + (b - a) / 3.0;
        const double m2 = b - (b - a) / 3.0;
        if (penalized(m1) <= penalized(m2))
          b = m2;
        else
          a = m1;
      }
      const double s = 0.5 * (a + b);
      if (penalized(s) < pick_d) return s;
    }
    return grid_[pick];
  }

 private:
  double grid_utility(std::size_t k) const {
    double u = 0.0;
    for (std::size_t a = 0; a < obj_.gain.size(); ++a) {
      const RatePair r = sys_.grid_rates(k, a);
      u += obj_.gain[a] * r.tpr - obj_.loss[a] * r.fpr;
    }
    return u;
  }

  double utility(double s) const {
    double u = 0.0;
    for (std::size_t a = 0; a < obj_.gain.size(); ++a) {
      const RatePair r = sys_.features().line_rates(a, s);
      u += obj_.gain[a] * r.tpr - obj_.loss[a] * r.fpr;
    }
    return u;
  }

  double derivative(double s) const {
    double d = 0.0;
    for (std::size_t a = 0; a < obj_.gain.size(); ++a) {
      if (obj_.gain[a] == 0.0 && obj_.loss[a] == 0.0) continue;
      const RatePair r = sys_.features().line_rate_derivatives(a, s);
      d += obj_.gain[a] * r.tpr - obj_.loss[a] * r.fpr;
    }
    return d;
  }

  double grid_consistency(std::size_t k) const {
    double d = 0.0;
    for (std::size_t a = 0; a < obj_.involved.size(); ++a)
      if (obj_.involved[a])
        d = std::max(d, std::abs(sys_.grid_response(k, a) - obj_.target[a]));
    return d;
  }

  double consistency(double s) const {
    double d = 0.0;
    for (std::size_t a = 0; a < obj_.involved.size(); ++a)
      if (obj_.involved[a])
        d = std::max(d, std::abs(sys_.response(a, sys_.features().line_rates(a, s)) -
                                 obj_.target[a]));
    return d;
  }

  // Root of U' inside a cell adjacent to grid point k where U' changes sign
  // from + to -.
  std::optional<double> refine_by_derivative(std::size_t k) const {
    const double dk = derivative(grid_[k]);
    if (!std::isfinite(dk)) return std::nullopt;
    double lo;
    double hi;
    if (dk > 0.0 && k + 1 < grid_.size()) {
      const double dn = derivative(grid_[k + 1]);
      if (!(dn < 0.0)) return std::nullopt;
      lo = grid_[k];
      hi = grid_[k + 1];
    } else if (dk < 0.0 && k > 0) {
      const double dp = derivative(grid_[k - 1]);
      if (!(dp > 0.0)) return std::nullopt;
      lo = grid_[k - 1];
      hi = grid_[k];
    } else {
      return std::nullopt;
    }
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double dm = derivative(mid);
      if (!std::isfinite(dm)) break;
      if (dm > 0.0)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  const System& sys_;
  const LineObjective& obj_;
  const std::vector<double>& grid_;
};

}  // namespace

Theta gaussian_tiebreak(const GaussianHalfspace& model) { return Theta{0.5, model.midpoint()}; }

Theta institution_best_response(const System& system, const QualificationState& state) {
  validate_state(state, system.group_count());
  const auto& econ = system.economy();
  const auto& n = system.proportions();

  if (const auto* g = std::get_if<GaussianHalfspace>(&system.features().variant())) {
    // Along the arc the objective is linear; it is flat exactly when the
    // groups are equal-sized and either the rates or p_TP and c_FP coincide.
    const double tol = system.solver().tol;
    const bool equal_sizes = std::abs(n[0] - n[1]) <= tol;
    const bool equal_rates = std::abs(state[0] - state[1]) <= tol;
    const bool equal_payoffs = std::abs(econ.payoff_tp() - econ.cost_fp()) <= tol;
    if (equal_sizes && (equal_rates || equal_payoffs)) return gaussian_tiebreak(*g);
  }

  LineObjective obj;
  for (std::size_t a = 0; a < system.group_count(); ++a) {
    obj.gain.push_back(econ.payoff_tp() * state[a] * n[a]);
    obj.loss.push_back(econ.cost_fp() * (1.0 - state[a]) * n[a]);
    obj.involved.push_back(true);
  }
  obj.target = state;
  return system.features().line_point(LineSearch(system, obj).solve());
}

Theta group_best_response(const System& system, std::size_t group, double pi) {
  if (group >= system.group_count()) throw ConfigError("group index out of range");
  if (!(pi >= 0.0 && pi <= 1.0)) throw ConfigError("qualification rate must lie in [0,1]");
  const auto& econ = system.economy();
  const std::size_t n = system.group_count();
  LineObjective obj{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                    std::vector<bool>(n, false), QualificationState{std::vector<double>(n, 0.0)}};
  obj.gain[group] = econ.payoff_tp() * pi;
  obj.loss[group] = econ.cost_fp() * (1.0 - pi);
  obj.involved[group] = true;
  obj.target[group] = pi;
  return system.features().line_point(LineSearch(system, obj).solve());
}

CoateLouryResult coate_loury_threshold(const System& system, const QualificationState& state) {
  if (system.group_count() != 1)
    throw PreconditionError("coate_loury_threshold requires a single group");
  const auto* model = std::get_if<ScoreModel>(&system.features().variant());
  if (!model) throw PreconditionError("coate_loury_threshold requires a score model");
  validate_state(state, 1);
  const double pi = state[0];
  if (pi <= 0.0) return {1.0, false};

  // phi must be positive, finite and strictly decreasing on the interior.
  const int probes = 999;
  bool monotone = true;
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= probes; ++i) {
    const double x = static_cast<double>(i) / (probes + 1);
    const double phi = model->likelihood_ratio(0, x);
    if (!(phi > 0.0) || !std::isfinite(phi) || !(phi < prev)) {
      monotone = false;
      break;
    }
    prev = phi;
  }
  if (!monotone) return {institution_best_response(system, state).value, true};

  const double r = system.economy().ratio();
  const auto& f1 = model->qualified[0];
  const auto& f0 = model->unqualified[0];
  // r >= (1-pi)/pi * f0/f1, written without dividing by f1.
  auto accepts = [&](double x) {
    return r * pi * f1.ratio_density(x) >= (1.0 - pi) * f0.ratio_density(x);
  };
  // Densities may vanish or blow up at the endpoints; decide just inside.
  const double edge = 1e-12;
  if (accepts(edge)) return {0.0, false};
  if (!accepts(1.0 - edge)) return {1.0, false};
  double lo = edge;
  double hi = 1.0 - edge;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (accepts(mid))
      hi = mid;
    else
      lo = mid;
  }
  return {hi, false};
}

}  // namespace qualdyn
