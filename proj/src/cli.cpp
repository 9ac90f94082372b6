#include "qualdyn/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qualdyn/errors.hpp"
#include "qualdyn/scenario.hpp"
#include "qualdyn/verify.hpp"

namespace qualdyn {

using ojson = nlohmann::ordered_json;

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

ojson rates_json(const System& system, const QualificationState& s) {
  ojson j = ojson::object();
  for (std::size_t a = 0; a < s.size(); ++a) j[system.groups()[a].id] = s[a];
  return j;
}

ojson theta_json(const System& system, const std::vector<Theta>& theta, Mode mode) {
  if (mode == Mode::joint) return theta.front().value;
  ojson j = ojson::object();
  for (std::size_t a = 0; a < theta.size(); ++a) j[system.groups()[a].id] = theta[a].value;
  return j;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
  if (!f) throw ConfigError("failed writing '" + path + "'");
}

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> grid;
  std::string init;
  bool decoupled = false;
};

struct Loaded {
  Scenario scenario;
  System system;
  DynamicsConfig dynamics;
};

Loaded load(const Common& c, bool grid_is_solver) {
  Scenario sc = load_scenario(c.config);
  if (c.seed) sc.seed = *c.seed;
  if (grid_is_solver && c.grid) {
    if (*c.grid < 3) throw ConfigError("--grid: solver grid needs at least 3 points");
    sc.solver.grid_size = *c.grid;
  }
  DynamicsConfig dyn = sc.dynamics_config();
  if (c.decoupled) dyn.mode = Mode::decoupled;
  System sys = sc.build_system();
  return {std::move(sc), std::move(sys), dyn};
}

// ---------------------------------------------------------------- run

int cmd_run(const Common& c, std::ostream& out) {
  const Loaded l = load(c, true);
  const std::size_t n = l.system.group_count();
  const QualificationState init =
      c.init.empty() ? QualificationState{std::vector<double>(n, 0.5)} : parse_init(c.init, n);
  const DynamicsOutcome res = run(l.system, init, l.dynamics);
  const std::string trace = trace_jsonl(l.system, res, l.dynamics.mode);
  if (c.out.empty()) {
    out << trace;
  } else {
    write_file(c.out, trace);
    out << "verdict: " << to_string(res.verdict) << "\n";
    out << "state: " << rates_json(l.system, res.state).dump() << "\n";
    if (res.verdict == Verdict::fixed_point)
      out << "stability: " << to_string(res.stability) << "\n";
    if (res.verdict == Verdict::limit_cycle)
      out << "period: " << res.period << "\n"
          << "cycle_average: " << rates_json(l.system, cycle_average(res)).dump() << "\n";
  }
  return res.verdict == Verdict::non_converged ? exit_nonconverged : exit_ok;
}

// ---------------------------------------------------------------- sweep

int cmd_sweep(const Common& c, std::ostream& out) {
  const Loaded l = load(c, false);
  const std::size_t grid = c.grid.value_or(21);
  if (grid < 2) throw ConfigError("--grid: sweep needs at least 2 points");
  DynamicsConfig joint = l.dynamics;
  const bool decoupled = c.decoupled || l.scenario.intervention.decouple;
  joint.mode = Mode::joint;
  const auto rows = initial_rate_sweep(l.system, linspace(grid), joint, decoupled);
  const std::string csv = sweep_csv(l.system, rows);
  if (c.out.empty())
    out << csv;
  else {
    write_file(c.out, csv);
    out << rows.size() << " rows written to " << c.out << "\n";
  }
  return exit_ok;
}

// ---------------------------------------------------------------- find

const Equilibrium* nearest(const std::vector<Equilibrium>& eqs, const QualificationState& s) {
  const Equilibrium* best = nullptr;
  for (const auto& e : eqs) {
    if (e.kind == EquilibriumKind::limit_cycle) continue;
    if (!best || sup_distance(e.pi, s) < sup_distance(best->pi, s)) best = &e;
  }
  return best;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string state_str(const QualificationState& s) {
  std::string o = "(";
  for (std::size_t i = 0; i < s.size(); ++i) o += (i ? ", " : "") + num(s[i]);
  return o + ")";
}

void print_closed_forms(const std::vector<ClosedFormRow>& rows,
                        const std::vector<QualificationState>& cycle,
                        const std::vector<Equilibrium>& eqs, std::ostream& out) {
  out << "\nclosed forms\n";
  out << pad("label", 8) << pad("theta", 14) << pad("pi", 30) << pad("stability", 11)
      << pad("scan pi", 30) << "discrepancy\n";
  double worst = 0.0;
  for (const auto& r : rows) {
    out << pad(r.label, 8) << pad(num(r.theta), 14) << pad(state_str(r.pi), 30);
    if (!r.exists) {
      out << "does not exist\n";
      continue;
    }
    out << pad(to_string(r.stability), 11);
    const Equilibrium* e = nearest(eqs, r.pi);
    if (!e) {
      out << "(none)\n";
      worst = std::numeric_limits<double>::infinity();
      continue;
    }
    const double d = sup_distance(e->pi, r.pi);
    worst = std::max(worst, d);
    out << pad(state_str(e->pi), 30) << num(d) << "\n";
  }
  if (!cycle.empty()) {
    const Equilibrium* found = nullptr;
    for (const auto& e : eqs)
      if (e.kind == EquilibriumKind::limit_cycle && e.cycle.size() == cycle.size()) found = &e;
    out << "cycle   ";
    for (const auto& s : cycle) out << state_str(s) << " ";
    if (!found) {
      out << "(no cycle found by scan)\n";
      worst = std::numeric_limits<double>::infinity();
    } else {
      double d = 0.0;
      for (const auto& s : cycle) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& t : found->cycle) best = std::min(best, sup_distance(s, t));
        d = std::max(d, best);
      }
      worst = std::max(worst, d);
      out << "discrepancy " << num(d) << "\n";
    }
  }
  out << "max discrepancy: " << num(worst) << "\n";
}

int cmd_find(const Common& c, std::ostream& out) {
  const Loaded l = load(c, true);
  ScanConfig scan;
  scan.dynamics = l.dynamics;
  const auto eqs = find_equilibria_scan(l.system, scan);
  const auto ids = l.system.groups().ids();

  out << "equilibria (" << (l.dynamics.mode == Mode::joint ? "joint" : "decoupled") << ", "
      << eqs.size() << " found)\n";
  out << pad("kind", 13) << pad("pi", 30) << pad("theta", 24) << pad("stability", 14)
      << "residual\n";
  for (const auto& e : eqs) {
    std::string th;
    for (std::size_t i = 0; i < e.theta.size(); ++i) th += (i ? " " : "") + num(e.theta[i].value);
    std::string stab = e.kind == EquilibriumKind::limit_cycle ? "-" : to_string(e.stability);
    if (e.flagged) stab += " (!)";
    out << pad(to_string(e.kind), 13) << pad(state_str(e.pi), 30) << pad(th, 24)
        << pad(stab, 14) << (e.kind == EquilibriumKind::limit_cycle ? "-" : num(e.residual))
        << "\n";
    if (e.kind == EquilibriumKind::limit_cycle) {
      out << "  cycle:";
      for (const auto& s : e.cycle) out << " " << state_str(s);
      out << "\n";
    }
    if (e.derivative)
      out << "  Phi' = " << num(*e.derivative) << " (" << to_string(*e.derivative_stability)
          << "), literal condition " << (*e.literal_condition ? "holds" : "fails") << "\n";
  }
  bool flagged = std::any_of(eqs.begin(), eqs.end(), [](const Equilibrium& e) { return e.flagged; });
  if (flagged) out << "(!) derivative test disagrees with basin probing\n";

  if (l.dynamics.mode != Mode::joint) return exit_ok;
  const auto& variant = l.system.features().variant();
  try {
    if (std::holds_alternative<UniformThreshold>(variant)) {
      const auto cf = uniform_closed_forms(l.system);
      out << "\nw interval (" << num(cf.w_lo) << ", " << num(cf.w_hi) << "), g = " << num(cf.g)
          << ", h_mid = " << num(cf.h_mid) << "\n";
      print_closed_forms(cf.equilibria, {}, eqs, out);
    } else if (std::holds_alternative<GaussianHalfspace>(variant)) {
      const auto cf = gaussian_closed_forms(l.system);
      out << "\nangle = " << num(cf.angle) << "\n";
      print_closed_forms(cf.equilibria, cf.cycle, eqs, out);
    }
  } catch (const PreconditionError& e) {
    out << "\nclosed forms not applicable: " << e.what() << "\n";
  }
  return exit_ok;
}

// ---------------------------------------------------------------- fit

int cmd_fit(const std::string& path, const std::string& out_path, std::size_t resample,
            std::uint64_t seed, std::ostream& out) {
  const ScoreHistogram hist = load_histogram(path);
  const auto groups = hist.groups();
  FitTable fits;
  out << pad("group", 10) << pad("label", 7) << pad("alpha", 14) << pad("beta", 14)
      << pad("loglik", 14) << pad("iters", 7) << "|grad|\n";
  for (const auto& g : groups)
    for (int label : {1, 0}) {
      if (!hist.contains(g, label))
        throw ConfigError("group '" + g + "' has no rows for label " + std::to_string(label));
      const auto& series = hist.find(g, label);
      const BetaFit fit = resample > 0 ? fit_beta_resampled(series, resample, seed) : fit_beta(series);
      fits[{g, label}] = fit;
      out << pad(g, 10) << pad(std::to_string(label), 7) << pad(num(fit.alpha), 14)
          << pad(num(fit.beta), 14) << pad(num(fit.log_likelihood), 14)
          << pad(std::to_string(fit.iterations), 7) << num(fit.gradient_norm) << "\n";
    }
  const std::string snippet = fit_snippet(fits, groups);
  if (out_path.empty())
    out << snippet;
  else
    write_file(out_path, snippet);
  return exit_ok;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const std::string& suite, std::ostream& out) {
  const auto results = run_suite(suite);
  bool all = true;
  for (const auto& r : results) {
    out << "criterion " << r.id << " (" << r.title << "): " << (r.passed() ? "PASS" : "FAIL")
        << "\n";
    for (const auto& c : r.checks) {
      out << "  [" << (c.passed ? "pass" : "FAIL") << "] " << c.name;
      if (!c.detail.empty()) out << "  -- " << c.detail;
      out << "\n";
    }
    all = all && r.passed();
  }
  return all ? exit_ok : exit_error;
}

}  // namespace

QualificationState parse_init(const std::string& text, std::size_t groups) {
  QualificationState s;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("--init: '" + item + "' is not a number");
    }
    if (used != item.size()) throw ConfigError("--init: '" + item + "' is not a number");
    s.pi.push_back(v);
  }
  if (s.size() != groups)
    throw ConfigError("--init: expected " + std::to_string(groups) + " rates, got " +
                      std::to_string(s.size()));
  validate_state(s, groups);
  return s;
}

std::string trace_jsonl(const System& system, const DynamicsOutcome& outcome, Mode mode) {
  std::string text;
  for (const auto& rec : outcome.trace) {
    ojson j;
    j["t"] = rec.t;
    j["pi"] = rates_json(system, rec.pi);
    if (!rec.theta.empty()) j["theta"] = theta_json(system, rec.theta, mode);
    j["utility"] = rec.utility;
    j["balance"] = rec.balance;
    text += j.dump() + "\n";
  }
  ojson s;
  s["verdict"] = to_string(outcome.verdict);
  s["state"] = rates_json(system, outcome.state);
  s["iterations"] = outcome.trace.empty() ? 0 : outcome.trace.back().t;
  s["stability"] = to_string(outcome.stability);
  if (outcome.verdict == Verdict::limit_cycle) {
    s["period"] = outcome.period;
    s["cycle"] = ojson::array();
    for (const auto& c : outcome.cycle) s["cycle"].push_back(rates_json(system, c));
    s["cycle_average"] = rates_json(system, cycle_average(outcome));
  }
  text += s.dump() + "\n";
  return text;
}

std::string sweep_csv(const System& system, const std::vector<SweepRow>& rows) {
  const auto ids = system.groups().ids();
  const bool dec = !rows.empty() && rows.front().decoupled.has_value();
  std::string text = "init";
  for (const auto& id : ids) text += ",joint_" + id;
  text += ",joint_verdict";
  if (dec) {
    for (const auto& id : ids) text += ",decoupled_" + id;
    text += ",decoupled_verdict";
    for (const auto& id : ids) text += ",delta_" + id;
  }
  text += "\n";
  for (const auto& r : rows) {
    text += num(r.init);
    for (double v : r.joint.state.pi) text += "," + num(v);
    text += std::string(",") + to_string(r.joint.verdict);
    if (dec) {
      for (double v : r.decoupled->state.pi) text += "," + num(v);
      text += std::string(",") + to_string(r.decoupled->verdict);
      for (double v : r.delta) text += "," + num(v);
    }
    text += "\n";
  }
  return text;
}

std::string fit_snippet(const FitTable& fits, const std::vector<std::string>& groups) {
  to_score_model(fits, groups);
  ojson f;
  f["variant"] = "score";
  f["groups"] = ojson::object();
  for (const auto& g : groups) {
    const auto& y1 = fits.at({g, 1});
    const auto& y0 = fits.at({g, 0});
    f["groups"][g] = {{"y1", {{"alpha", y1.alpha}, {"beta", y1.beta}}},
                      {"y0", {{"alpha", y0.alpha}, {"beta", y0.beta}}}};
  }
  ojson j;
  j["features"] = f;
  return j.dump(2) + "\n";
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate and analyze qualification dynamics under assessment policies."};
  app.name("qualdyn");
  app.require_subcommand(1);

  Common run_opts;
  Common sweep_opts;
  Common find_opts;
  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "Scenario file")->required();
    sub->add_option("--out", c.out, "Output file");
    sub->add_option("--seed", c.seed, "Seed for randomized probes");
    sub->add_flag("--decoupled", c.decoupled, "Use one assessment parameter per group");
  };

  auto* run_cmd = app.add_subcommand("run", "Iterate the dynamics from one initial state");
  add_common(run_cmd, run_opts);
  run_cmd->add_option("--grid", run_opts.grid, "Solver grid size");
  run_cmd->add_option("--init", run_opts.init, "Initial rates r1,r2,... in group id order");

  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep a shared initial rate over [0,1]");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--grid", sweep_opts.grid, "Number of initial rates (default 21)");

  auto* find_cmd = app.add_subcommand("find", "Locate equilibria and compare with closed forms");
  add_common(find_cmd, find_opts);
  find_cmd->add_option("--grid", find_opts.grid, "Solver grid size");

  std::string hist_path;
  std::string fit_out;
  std::size_t resample = 0;
  std::uint64_t fit_seed = 0;
  auto* fit_cmd = app.add_subcommand("fit", "Fit Beta score distributions to a histogram");
  fit_cmd->add_option("histogram", hist_path, "CSV with columns group,label,score,count")->required();
  fit_cmd->add_option("--out", fit_out, "Write the features snippet here");
  fit_cmd->add_option("--resample", resample, "Fit N resampled points instead of the bins");
  fit_cmd->add_option("--seed", fit_seed, "Seed for --resample");

  std::string suite;
  auto* verify_cmd = app.add_subcommand("verify", "Run a verification suite");
  verify_cmd->add_option("suite", suite, "One of: " + [] {
    std::string s;
    for (const auto& n : suite_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  }())->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return exit_ok;
    }
    err << "error: " << e.what() << "\n";
    return exit_error;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run_opts, out);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep_opts, out);
    if (find_cmd->parsed()) return cmd_find(find_opts, out);
    if (fit_cmd->parsed()) return cmd_fit(hist_path, fit_out, resample, fit_seed, out);
    if (verify_cmd->parsed()) return cmd_verify(suite, out);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const FitError& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return exit_error;
}

}  // namespace qualdyn
