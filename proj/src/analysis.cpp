#include "qualdyn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "qualdyn/errors.hpp"
#include "qualdyn/parallel.hpp"

namespace qualdyn {

namespace {

double uniform_g(double x) { return std::clamp(x, 0.0, 1.0); }

bool is_uniform(const CostModel& m) {
  return std::holds_alternative<CostModel::Uniform01>(m.kind());
}

}  // namespace

std::vector<double> linspace(std::size_t n) {
  if (n < 2) throw ConfigError("grid needs at least 2 points");
  std::vector<double> xs(n);
  for (std::size_t k = 0; k < n; ++k) xs[k] = static_cast<double>(k) / static_cast<double>(n - 1);
  return xs;
}

// ---------------------------------------------------------------- uniform

UniformClosedForms uniform_closed_forms(double h1, double h2, double w) {
  if (!(h1 > 0.0 && h1 < h2 && h2 < 1.0))
    throw PreconditionError("uniform closed forms need 0 < h1 < h2 < 1");
  if (!(h2 > 1.0 - h1)) throw PreconditionError("uniform closed forms need h2 > 1 - h1");
  if (!(w > 0.0)) throw PreconditionError("wage must be positive");

  UniformClosedForms out;
  const double q = 1.0 - h1;
  out.g = q * (-w * h2 * h2 + h2 * q - w * h1 * q) / (w * (q * q - h2 * h2));
  out.h_mid = h1 + out.g;
  const double e1 = q * q / ((1.0 - h2) * h2 + q * q);
  const double e2 = h2 * q / (h2 * h2 + h1 * q);
  out.w_lo = std::min(e1, e2);
  out.w_hi = std::max(e1, e2);

  // Institution prefers h1 at the h1 state, and h2 at the h2 state.
  const bool h1_exists = uniform_g(w) / q > (1.0 - uniform_g(w * h1 / h2)) / h2;
  const bool h2_exists = uniform_g(w * (1.0 - h2) / q) / q < (1.0 - uniform_g(w)) / h2;
  const bool mid_exists = h1_exists && h2_exists && out.g > 0.0 && out.g < h2 - h1;

  out.equilibria.push_back(
      {"h1", h1, QualificationState{{uniform_g(w), uniform_g(w * h1 / h2)}}, Stability::stable,
       h1_exists});
  out.equilibria.push_back({"h_mid", out.h_mid,
                            QualificationState{{uniform_g(w * (q - out.g) / q),
                                                uniform_g(w * (h1 + out.g) / h2)}},
                            Stability::unstable, mid_exists});
  out.equilibria.push_back(
      {"h2", h2, QualificationState{{uniform_g(w * (1.0 - h2) / q), uniform_g(w)}},
       Stability::stable, h2_exists});
  return out;
}

UniformClosedForms uniform_closed_forms(const System& system) {
  const auto* m = std::get_if<UniformThreshold>(&system.features().variant());
  if (!m || m->thresholds.size() != 2)
    throw PreconditionError("uniform closed forms need a two-group uniform threshold model");
  const auto& n = system.proportions();
  const auto& e = system.economy();
  const double lhs = n[0] * e.payoff_tp();
  const double rhs = n[1] * e.cost_fp();
  if (std::abs(lhs - rhs) > 1e-12 * std::max(lhs, rhs))
    throw PreconditionError("uniform closed forms need n_1 p_TP = n_2 c_FP");
  for (const auto& g : system.groups())
    if (!is_uniform(g.cost)) throw PreconditionError("uniform closed forms need uniform costs");
  return uniform_closed_forms(m->thresholds[0], m->thresholds[1], e.wage());
}

// ---------------------------------------------------------------- gaussian

GaussianClosedForms gaussian_closed_forms(std::span<const double> h1, std::span<const double> h2,
                                          double w, const CostModel& g1, const CostModel& g2,
                                          const EconomyConfig& economy) {
  const double ang = normalized_angle(h1, h2);
  if (!(ang > 0.0 && ang < 1.0))
    throw PreconditionError("gaussian closed forms need distinct, non-antipodal normals");
  if (economy.payoff_tp() == economy.cost_fp())
    throw PreconditionError("gaussian closed forms are not characterized for p_TP = c_FP");

  auto G = [](const CostModel& c, double x) { return c.cdf(std::max(0.0, x)); };
  GaussianClosedForms out;
  out.angle = ang;
  const QualificationState at_h1{{G(g1, w), G(g2, w * (1.0 - 2.0 * ang))}};
  const QualificationState at_h2{{G(g1, w * (1.0 - 2.0 * ang)), G(g2, w)}};
  const QualificationState at_mid{{G(g1, w * (1.0 - ang)), G(g2, w * (1.0 - ang))}};
  const bool mid_exists = std::abs(at_mid[0] - at_mid[1]) <= 1e-12;

  if (economy.payoff_tp() > economy.cost_fp()) {
    out.equilibria.push_back({"h1", 0.0, at_h1, Stability::stable, at_h1[0] > at_h1[1]});
    out.equilibria.push_back({"h_mid", 0.5, at_mid, Stability::unstable, mid_exists});
    out.equilibria.push_back({"h2", 1.0, at_h2, Stability::stable, at_h2[1] > at_h2[0]});
  } else {
    out.equilibria.push_back({"h_mid", 0.5, at_mid, Stability::unstable, mid_exists});
    out.cycle = {at_h1, at_h2};
  }
  return out;
}

GaussianClosedForms gaussian_closed_forms(const System& system) {
  const auto* m = std::get_if<GaussianHalfspace>(&system.features().variant());
  if (!m) throw PreconditionError("gaussian closed forms need a halfspace model");
  const auto& n = system.proportions();
  if (std::abs(n[0] - n[1]) > 1e-12) throw PreconditionError("groups must be equal-sized");
  return gaussian_closed_forms(m->normals[0], m->normals[1], system.economy().wage(),
                               system.groups()[0].cost, system.groups()[1].cost,
                               system.economy());
}

// ---------------------------------------------------------------- beta map

double BetaOfPi::at(double x) const {
  if (pi.empty()) throw PreconditionError("empty beta map");
  if (x <= pi.front()) return beta.front();
  if (x >= pi.back()) return beta.back();
  auto it = std::upper_bound(pi.begin(), pi.end(), x);
  const std::size_t k = static_cast<std::size_t>(it - pi.begin());
  const double f = (x - pi[k - 1]) / (pi[k] - pi[k - 1]);
  return beta[k - 1] + f * (beta[k] - beta[k - 1]);
}

BetaOfPi beta_of_pi(const System& system, std::size_t grid_size) {
  if (system.group_count() != 1) throw PreconditionError("beta_of_pi needs a single group");
  if (grid_size < 11) throw PreconditionError("beta_of_pi needs at least 11 grid points");
  BetaOfPi out;
  out.pi = linspace(grid_size);
  struct Point {
    double theta;
    double beta;
  };
  auto pts = parallel_map(grid_size, [&](std::size_t k) {
    const Theta th = institution_best_response(system, QualificationState{{out.pi[k]}});
    const RatePair r = system.features().line_rates(0, th.value);
    return Point{th.value, std::max(0.0, r.tpr - r.fpr)};
  });
  for (const auto& p : pts) {
    out.theta.push_back(p.theta);
    out.beta.push_back(p.beta);
  }
  out.dbeta.resize(grid_size);
  for (std::size_t k = 0; k < grid_size; ++k) {
    const std::size_t lo = k == 0 ? 0 : k - 1;
    const std::size_t hi = k + 1 == grid_size ? k : k + 1;
    out.dbeta[k] = (out.beta[hi] - out.beta[lo]) / (out.pi[hi] - out.pi[lo]);
  }
  for (std::size_t k = 0; k < grid_size && out.beta[k] == 0.0; ++k) out.pi_bar = out.pi[k];
  return out;
}

CostModel construct_multi_equilibrium_cost(const BetaOfPi& map, double w) {
  if (!(w > 0.0)) throw PreconditionError("wage must be positive");
  const auto peak = std::max_element(map.beta.begin(), map.beta.end());
  const double beta_max = *peak;
  if (!(beta_max > 0.0)) throw PreconditionError("beta vanishes on the whole grid");
  const std::size_t k_hi = static_cast<std::size_t>(peak - map.beta.begin());
  std::size_t k_lo = 0;
  while (map.beta[k_lo] < beta_max / 4.0) ++k_lo;
  const double x_lo = map.pi[k_lo];
  const double x_hi = map.pi[k_hi];
  const double c_lo = w * map.beta[k_lo];
  const double c_hi = w * beta_max;
  if (!(k_lo < k_hi && x_lo > 0.0 && c_lo > 0.0 && c_lo < c_hi && c_hi < 1.0))
    throw PreconditionError("beta map does not admit the construction at this wage");

  // G(w beta(x_lo)) = x_lo / 2 < x_lo and G(w beta(x_hi)) = (1 + x_hi) / 2 > x_hi.
  CostModel cost = CostModel::empirical(
      {{0.0, 0.0}, {c_lo, x_lo / 2.0}, {c_hi, (1.0 + x_hi) / 2.0}, {1.0, 1.0}});
  if (!(cost.inverse_cdf(x_hi) < c_hi))
    throw PreconditionError("constructed cost does not satisfy x < G(w beta(x))");
  return cost;
}

// ---------------------------------------------------------------- scans

const char* to_string(EquilibriumKind k) {
  switch (k) {
    case EquilibriumKind::trivial: return "trivial";
    case EquilibriumKind::fixed_point: return "fixed_point";
    case EquilibriumKind::limit_cycle: return "limit_cycle";
  }
  return "?";
}

namespace {

using ScalarMap = std::function<double(double)>;

struct Root {
  double x;
  double residual;
};

// Roots of map(x) - x on [0,1]: grid zeros plus bisection across sign
// changes. Candidates whose residual exceeds tol are jump discontinuities.
std::vector<Root> scalar_roots(const ScalarMap& map, std::size_t grid, double tol) {
  const auto xs = linspace(grid);
  const auto f = parallel_map(grid, [&](std::size_t k) { return map(xs[k]) - xs[k]; });
  std::vector<Root> roots;
  auto add = [&](double x, double r) {
    for (auto& existing : roots) {
      if (std::abs(existing.x - x) <= 10.0 * tol) {
        if (r < existing.residual) existing = Root{x, r};
        return;
      }
    }
    roots.push_back(Root{x, r});
  };
  for (std::size_t k = 0; k < grid; ++k) {
    if (std::abs(f[k]) <= tol) add(xs[k], std::abs(f[k]));
    if (k + 1 == grid) continue;
    if (std::abs(f[k]) <= tol || std::abs(f[k + 1]) <= tol) continue;
    if ((f[k] > 0.0) == (f[k + 1] > 0.0)) continue;
    double lo = xs[k];
    double hi = xs[k + 1];
    double flo = f[k];
    double fhi = f[k + 1];
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      const double fm = map(mid) - mid;
      if (fm == 0.0) {
        lo = hi = mid;
        flo = fhi = 0.0;
        break;
      }
      if ((fm > 0.0) == (flo > 0.0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
        fhi = fm;
      }
    }
    const bool pick_lo = std::abs(flo) <= std::abs(fhi);
    const double x = pick_lo ? lo : hi;
    const double r = std::abs(pick_lo ? flo : fhi);
    if (r <= tol) add(x, r);
  }
  std::sort(roots.begin(), roots.end(), [](const Root& a, const Root& b) { return a.x < b.x; });
  return roots;
}

bool is_trivial(const QualificationState& s, double tol) {
  return std::all_of(s.pi.begin(), s.pi.end(), [&](double x) { return x <= tol; });
}

void finish(const System& system, Equilibrium& e, const ScanConfig& cfg) {
  const StepResult st = step(system, e.pi, cfg.dynamics.mode);
  e.theta = st.theta;
  e.residual = sup_distance(st.next, e.pi);
  e.kind = is_trivial(e.pi, cfg.dynamics.fix_tol) ? EquilibriumKind::trivial
                                                  : EquilibriumKind::fixed_point;
  e.stability = classify_stability(system, e.pi, cfg.dynamics).stability;
}

// Derivative test and the literal stability condition for one group.
void single_group_diagnostics(const System& system, Equilibrium& e, const ScanConfig& cfg) {
  const Mode mode = cfg.dynamics.mode;
  const double x = e.pi[0];
  const double h = cfg.derivative_step;
  const double lo = std::max(0.0, x - h);
  const double hi = std::min(1.0, x + h);
  auto phi1 = [&](double v) { return phi(system, QualificationState{{v}}, mode)[0]; };
  const double d = (phi1(hi) - phi1(lo)) / (hi - lo);
  e.derivative = d;
  e.derivative_stability = std::abs(d) < 1.0 ? Stability::stable : Stability::unstable;
  e.flagged = *e.derivative_stability != e.stability;

  auto beta_at = [&](double v) {
    const Theta th = mode == Mode::joint
                         ? institution_best_response(system, QualificationState{{v}})
                         : group_best_response(system, 0, v);
    const RatePair r = system.features().line_rates(0, th.value);
    return std::max(0.0, r.tpr - r.fpr);
  };
  const double dbeta = (beta_at(hi) - beta_at(lo)) / (hi - lo);
  const double arg = system.economy().wage() * beta_at(x);
  const auto& cost = system.groups()[0].cost;
  const double gprime = (cost.cdf(arg + h) - cost.cdf(std::max(0.0, arg - h))) /
                        (arg + h - std::max(0.0, arg - h));
  e.literal_condition = gprime < std::abs(dbeta);
}

void dedup(std::vector<Equilibrium>& eqs, double radius) {
  std::vector<Equilibrium> out;
  for (auto& e : eqs) {
    bool merged = false;
    for (auto& o : out) {
      if (o.kind == e.kind && o.pi.size() == e.pi.size() && sup_distance(o.pi, e.pi) <= radius) {
        if (e.residual < o.residual) o = e;
        merged = true;
        break;
      }
    }
    if (!merged) out.push_back(std::move(e));
  }
  eqs = std::move(out);
}

std::vector<QualificationState> scan_starts(std::size_t groups, std::size_t per_axis) {
  const auto axis = linspace(per_axis);
  std::vector<QualificationState> starts;
  if (groups == 2) {
    for (double a : axis)
      for (double b : axis) starts.push_back(QualificationState{{a, b}});
    return starts;
  }
  for (std::size_t g = 0; g < groups; ++g)
    for (double a : axis) {
      QualificationState s{std::vector<double>(groups, 0.5)};
      s[g] = a;
      starts.push_back(s);
    }
  for (double a : axis) starts.push_back(QualificationState{std::vector<double>(groups, a)});
  return starts;
}

std::vector<QualificationState> theta_side_candidates(const System& system, double tol) {
  const auto& grid = system.line_grid();
  const std::size_t n = system.group_count();
  auto state_at = [&](double s) {
    QualificationState st;
    for (std::size_t a = 0; a < n; ++a)
      st.pi.push_back(system.response(a, system.features().line_rates(a, s)));
    return st;
  };
  auto g_at = [&](double s) {
    return institution_best_response(system, state_at(s)).value - s;
  };
  auto residual = [&](double s) {
    const auto st = state_at(s);
    return sup_distance(phi(system, st, Mode::joint), st);
  };
  const auto gs = parallel_map(grid.size(), [&](std::size_t k) { return g_at(grid[k]); });

  std::vector<QualificationState> out;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (gs[k] == 0.0 && residual(grid[k]) <= tol) out.push_back(state_at(grid[k]));
    if (k + 1 == grid.size() || gs[k] == 0.0 || gs[k + 1] == 0.0) continue;
    if ((gs[k] > 0.0) == (gs[k + 1] > 0.0)) continue;
    double lo = grid[k];
    double hi = grid[k + 1];
    const bool lo_positive = gs[k] > 0.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if ((g_at(mid) > 0.0) == lo_positive)
        lo = mid;
      else
        hi = mid;
    }
    for (double s : {lo, hi})
      if (residual(s) <= tol) out.push_back(state_at(s));
  }
  return out;
}

}  // namespace

std::vector<Equilibrium> find_equilibria_scan(const System& system, const ScanConfig& config) {
  config.dynamics.validate();
  if (config.grid < 3) throw ConfigError("scan grid needs at least 3 points");
  if (config.starts_per_axis < 2) throw ConfigError("scan needs at least 2 starts per axis");
  const std::size_t n = system.group_count();
  const double tol = config.dynamics.fix_tol;
  const Mode mode = config.dynamics.mode;
  std::vector<Equilibrium> eqs;

  if (n == 1 || mode == Mode::decoupled) {
    // Decoupled dynamics is a product of independent scalar maps.
    std::vector<std::vector<Root>> per_group;
    for (std::size_t a = 0; a < n; ++a) {
      ScalarMap map = [&, a](double x) {
        if (mode == Mode::joint) return phi(system, QualificationState{{x}}, mode)[0];
        const Theta th = group_best_response(system, a, x);
        return system.response(a, system.features().line_rates(a, th.value));
      };
      per_group.push_back(scalar_roots(map, config.grid, tol));
    }
    std::vector<std::size_t> idx(n, 0);
    const bool any_empty =
        std::any_of(per_group.begin(), per_group.end(), [](const auto& r) { return r.empty(); });
    while (!any_empty) {
      Equilibrium e;
      for (std::size_t a = 0; a < n; ++a) e.pi.pi.push_back(per_group[a][idx[a]].x);
      eqs.push_back(std::move(e));
      std::size_t a = 0;
      while (a < n && ++idx[a] == per_group[a].size()) idx[a++] = 0;
      if (a == n) break;
    }
    // Components are verified one at a time; drop combinations that fail jointly.
    std::vector<Equilibrium> verified;
    for (auto& e : eqs) {
      if (sup_distance(phi(system, e.pi, mode), e.pi) > tol) continue;
      finish(system, e, config);
      if (n == 1) single_group_diagnostics(system, e, config);
      verified.push_back(std::move(e));
    }
    eqs = std::move(verified);
    dedup(eqs, 10.0 * tol);
    return eqs;
  }

  const auto starts = scan_starts(n, config.starts_per_axis);
  const auto outcomes = parallel_map(starts.size(), [&](std::size_t k) {
    return iterate(system, starts[k], config.dynamics);
  });
  std::vector<Equilibrium> cycles;
  for (const auto& o : outcomes) {
    if (o.verdict == Verdict::fixed_point) {
      Equilibrium e;
      e.pi = o.state;
      eqs.push_back(std::move(e));
    } else if (o.verdict == Verdict::limit_cycle) {
      Equilibrium e;
      e.kind = EquilibriumKind::limit_cycle;
      e.cycle = o.cycle;
      // Rotate so the lexicographically smallest state comes first.
      auto first = std::min_element(e.cycle.begin(), e.cycle.end(),
                                    [](const auto& x, const auto& y) { return x.pi < y.pi; });
      std::rotate(e.cycle.begin(), first, e.cycle.end());
      e.pi = cycle_average(DynamicsOutcome{{}, Verdict::limit_cycle, {}, e.cycle, 0, {}, {}});
      bool seen = false;
      for (const auto& c : cycles) {
        if (c.cycle.size() != e.cycle.size()) continue;
        bool same = true;
        for (std::size_t i = 0; i < c.cycle.size() && same; ++i)
          same = sup_distance(c.cycle[i], e.cycle[i]) <= 10.0 * tol;
        if (same) seen = true;
      }
      if (!seen) cycles.push_back(std::move(e));
    }
  }
  if (config.theta_scan)
    for (auto& s : theta_side_candidates(system, tol)) {
      Equilibrium e;
      e.pi = std::move(s);
      eqs.push_back(std::move(e));
    }
  // Residuals first so deduplication can keep the best representative.
  for (auto& e : eqs) e.residual = sup_distance(phi(system, e.pi, mode), e.pi);
  dedup(eqs, 10.0 * tol);
  auto finished = parallel_map(eqs.size(), [&](std::size_t k) {
    Equilibrium e = eqs[k];
    finish(system, e, config);
    return e;
  });
  std::sort(finished.begin(), finished.end(),
            [](const Equilibrium& a, const Equilibrium& b) { return a.pi.pi < b.pi.pi; });
  for (auto& c : cycles) {
    for (const auto& s : c.cycle) c.theta.push_back(step(system, s, mode).theta.front());
    finished.push_back(std::move(c));
  }
  return finished;
}

int count_sign_changes(const System& system, std::size_t grid, Mode mode) {
  if (system.group_count() != 1) throw PreconditionError("sign-change count needs one group");
  const auto xs = linspace(grid);
  const auto f = parallel_map(grid, [&](std::size_t k) {
    return phi(system, QualificationState{{xs[k]}}, mode)[0] - xs[k];
  });
  int changes = 0;
  int last = 0;
  for (double v : f) {
    const int sign = v > 1e-12 ? 1 : (v < -1e-12 ? -1 : 0);
    if (sign == 0) continue;
    if (last != 0 && sign != last) ++changes;
    last = sign;
  }
  return changes;
}

// ---------------------------------------------------------------- bounds

NearRealizabilityBound near_realizability_bound(double eps, double s, double w,
                                                const CostModel& cost) {
  if (!(eps > 0.0 && eps < 1.0)) throw PreconditionError("eps must lie in (0,1)");
  if (!(s > 0.0 && s < 0.5)) throw PreconditionError("s must lie in (0,1/2)");
  if (!(w > 0.0)) throw PreconditionError("wage must be positive");
  const double gw = cost.cdf(w);
  if (gw > 1.0 - s) throw PreconditionError("hypothesis 1 - s >= G(w) fails");
  NearRealizabilityBound out;
  if (auto lip = cost.lipschitz()) {
    if (gw < s + *lip * w * eps / s)
      throw PreconditionError("hypothesis G(w) >= s + L_G w eps / s fails");
    out.hypotheses_checked = true;
  }
  out.bound = cost.cdf(std::max(0.0, w * (1.0 - eps / s)));
  return out;
}

// ---------------------------------------------------------------- subsidies

SubsidyReport subsidy_equilibrium_shift(const System& system, std::size_t group,
                                        const CostModel& subsidized, const ScanConfig& config,
                                        double tol) {
  if (group >= system.group_count()) throw ConfigError("group index out of range");
  if (!dominates(subsidized, system.groups()[group].cost))
    throw PreconditionError("subsidized cost does not dominate the original");
  const System after = system.with_groups(system.groups().with_cost(group, subsidized));

  SubsidyReport rep;
  rep.before = find_equilibria_scan(system, config);
  rep.after = find_equilibria_scan(after, config);
  rep.all_improved = true;
  for (const auto& b : rep.before) {
    if (b.kind != EquilibriumKind::fixed_point) continue;
    SubsidyPair pair{b.pi, std::nullopt, false};
    double best_gain = -1.0;
    for (const auto& a : rep.after) {
      if (a.kind == EquilibriumKind::limit_cycle) continue;
      double worst = std::numeric_limits<double>::infinity();
      double gain = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < b.pi.size(); ++i) {
        worst = std::min(worst, a.pi[i] - b.pi[i]);
        gain = std::max(gain, a.pi[i] - b.pi[i]);
      }
      if (worst >= -tol && gain > best_gain) {
        best_gain = gain;
        pair.improved = a.pi;
        pair.strict = gain > tol;
      }
    }
    if (!pair.improved) rep.all_improved = false;
    rep.pairs.push_back(std::move(pair));
  }

  if (const auto* m = std::get_if<GaussianHalfspace>(&system.features().variant());
      m && system.group_count() == 2) {
    const double ang = m->angle();
    const double w = system.economy().wage();
    const auto& g1 = system.groups()[0].cost;
    const auto& g2 = system.groups()[1].cost;
    UnequalCostCheck chk;
    chk.precondition = g1.cdf(w) < g2.cdf(std::max(0.0, w * (1.0 - 2.0 * ang)));
    std::vector<const Equilibrium*> nontrivial;
    for (const auto& e : rep.before)
      if (e.kind == EquilibriumKind::fixed_point) nontrivial.push_back(&e);
    chk.unique_h2 = nontrivial.size() == 1 && std::abs(nontrivial[0]->theta[0].value - 1.0) <= 1e-9;
    chk.h2_stable = chk.unique_h2 && nontrivial[0]->stability == Stability::stable;
    for (const auto& e : rep.after)
      if (e.kind == EquilibriumKind::fixed_point && std::abs(e.theta[0].value) <= 1e-9)
        chk.h1_after = true;
    rep.unequal_costs = chk;
  }
  return rep;
}

// ---------------------------------------------------------------- sweeps

std::vector<SweepRow> initial_rate_sweep(const System& system, const std::vector<double>& inits,
                                         const DynamicsConfig& config, bool with_decoupled) {
  config.validate();
  const std::size_t n = system.group_count();
  auto settle = [&](double x, Mode mode) {
    DynamicsConfig cfg = config;
    cfg.mode = mode;
    const auto out = iterate(system, QualificationState{std::vector<double>(n, x)}, cfg);
    return SweepOutcome{out.verdict,
                        out.verdict == Verdict::limit_cycle ? cycle_average(out) : out.state};
  };
  return parallel_map(inits.size(), [&](std::size_t k) {
    SweepRow row;
    row.init = inits[k];
    row.joint = settle(inits[k], Mode::joint);
    if (with_decoupled) {
      row.decoupled = settle(inits[k], Mode::decoupled);
      for (std::size_t a = 0; a < n; ++a)
        row.delta.push_back(row.decoupled->state[a] - row.joint.state[a]);
    }
    return row;
  });
}

bool delta_changes_sign(const std::vector<SweepRow>& rows, double tol) {
  if (rows.empty() || rows.front().delta.empty()) return false;
  for (std::size_t a = 0; a < rows.front().delta.size(); ++a) {
    bool pos = false;
    bool neg = false;
    for (const auto& r : rows) {
      pos = pos || r.delta[a] > tol;
      neg = neg || r.delta[a] < -tol;
    }
    if (pos && neg) return true;
  }
  return false;
}

// ---------------------------------------------------------------- comparison

namespace {

std::string chain(const std::vector<RankedEquilibrium>& rows, const std::vector<double>& key,
                  double tol) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key[a] > key[b] + tol; });
  std::string out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0) out += std::abs(key[order[i - 1]] - key[order[i]]) <= tol ? " ~ " : " > ";
    out += rows[order[i]].label;
  }
  return out;
}

}  // namespace

ComparisonReport compare_equilibria(
    const System& system, const std::vector<std::pair<std::string, QualificationState>>& eqs,
    double tol) {
  if (eqs.size() < 2) throw PreconditionError("comparison needs at least two equilibria");
  ComparisonReport rep;
  for (const auto& [label, pi] : eqs) {
    validate_state(pi, system.group_count());
    const Theta th = institution_best_response(system, pi);
    rep.rows.push_back(
        {label, pi, th.value, balance(pi), institutional_utility(system, th, pi)});
  }
  const auto ids = system.groups().ids();
  for (std::size_t a = 0; a < ids.size(); ++a) {
    std::vector<double> key;
    for (const auto& r : rep.rows) key.push_back(r.pi[a]);
    rep.rankings.emplace_back("pi_" + ids[a], chain(rep.rows, key, tol));
  }
  std::vector<double> bal;
  std::vector<double> util;
  for (const auto& r : rep.rows) {
    bal.push_back(-r.balance);
    util.push_back(r.utility);
  }
  rep.rankings.emplace_back("balance", chain(rep.rows, bal, tol));
  rep.rankings.emplace_back("utility", chain(rep.rows, util, tol));

  auto find = [&](const std::string& label) -> const RankedEquilibrium* {
    for (const auto& r : rep.rows)
      if (r.label == label) return &r;
    return nullptr;
  };
  const auto* h1 = find("h1");
  const auto* hm = find("h_mid");
  const auto* h2 = find("h2");
  if (!(h1 && hm && h2)) return rep;

  const auto& variant = system.features().variant();
  if (std::holds_alternative<UniformThreshold>(variant)) {
    try {
      const auto cf = uniform_closed_forms(system);
      const double w = system.economy().wage();
      if (w > cf.w_lo && w < cf.w_hi) {
        rep.checks.emplace_back("pi_a1: h1 > h_mid > h2",
                                h1->pi[0] > hm->pi[0] + tol && hm->pi[0] > h2->pi[0] + tol);
        rep.checks.emplace_back("pi_a2: h2 > h_mid > h1",
                                h2->pi[1] > hm->pi[1] + tol && hm->pi[1] > h1->pi[1] + tol);
        rep.checks.emplace_back("balance: h_mid > h1 > h2", hm->balance + tol < h1->balance &&
                                                                h1->balance + tol < h2->balance);
      }
    } catch (const PreconditionError&) {
    }
  } else if (std::holds_alternative<GaussianHalfspace>(variant) &&
             system.economy().payoff_tp() > system.economy().cost_fp()) {
    rep.checks.emplace_back("utility: h1 ~ h2 > h_mid",
                            std::abs(h1->utility - h2->utility) <= tol &&
                                h1->utility > hm->utility + tol);
  }
  return rep;
}

}  // namespace qualdyn
