#include "qualdyn/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "qualdyn/errors.hpp"

namespace qualdyn {

double HistogramSeries::total() const {
  double t = 0.0;
  for (double c : counts) t += c;
  return t;
}

std::size_t HistogramSeries::nonempty_bins() const {
  return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(),
                                                [](double c) { return c > 0.0; }));
}

const HistogramSeries& ScoreHistogram::find(const std::string& group, int label) const {
  for (const auto& s : series)
    if (s.group == group && s.label == label) return s;
  throw ConfigError("histogram has no rows for group '" + group + "' label " +
                    std::to_string(label));
}

bool ScoreHistogram::contains(const std::string& group, int label) const {
  return std::any_of(series.begin(), series.end(),
                     [&](const auto& s) { return s.group == group && s.label == label; });
}

std::vector<std::string> ScoreHistogram::groups() const {
  std::set<std::string> ids;
  for (const auto& s : series) ids.insert(s.group);
  return {ids.begin(), ids.end()};
}

// ---------------------------------------------------------------- parsing

namespace {

std::string trim(std::string s) {
  const auto ws = " \t\r";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

ScoreHistogram parse_histogram(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  ScoreHistogram hist;
  std::vector<std::vector<std::size_t>> lines;  // source line per bin, per series

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    if (!header) {
      if (f != std::vector<std::string>{"group", "label", "score", "count"})
        throw ParseError(lineno, "expected header 'group,label,score,count'");
      header = true;
      continue;
    }
    if (f.size() != 4) throw ParseError(lineno, "expected 4 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) throw ParseError(lineno, "empty group id");
    int label = 0;
    if (!parse_number(f[1], label) || (label != 0 && label != 1))
      throw ParseError(lineno, "label must be 0 or 1");
    double score = 0.0;
    if (!parse_number(f[2], score) || !std::isfinite(score))
      throw ParseError(lineno, "score is not a number");
    if (score < 0.0 || score >= 1.0) throw ParseError(lineno, "score must lie in [0,1)");
    long long count = 0;
    if (!parse_number(f[3], count)) throw ParseError(lineno, "count must be an integer");
    if (count < 0) throw ParseError(lineno, "count must be nonnegative");

    auto it = std::find_if(hist.series.begin(), hist.series.end(),
                           [&](const auto& s) { return s.group == f[0] && s.label == label; });
    if (it == hist.series.end()) {
      hist.series.push_back(HistogramSeries{f[0], label, 0.0, {}, {}});
      lines.emplace_back();
      it = hist.series.end() - 1;
    }
    auto& s = *it;
    auto& src = lines[static_cast<std::size_t>(it - hist.series.begin())];
    if (!s.edges.empty() && !(score > s.edges.back()))
      throw ParseError(lineno, "bin edges must be strictly increasing within a series");
    s.edges.push_back(score);
    s.counts.push_back(static_cast<double>(count));
    src.push_back(lineno);
  }
  if (!header) throw ParseError(lineno == 0 ? 1 : lineno, "missing header");

  for (std::size_t i = 0; i < hist.series.size(); ++i) {
    auto& s = hist.series[i];
    if (s.edges.size() == 1) {
      s.width = 1.0 - s.edges[0];
      continue;
    }
    s.width = s.edges[1] - s.edges[0];
    for (std::size_t k = 2; k < s.edges.size(); ++k)
      if (std::abs(s.edges[k] - s.edges[k - 1] - s.width) > 1e-9)
        throw ParseError(lines[i][k], "non-uniform bins in series '" + s.group + "' label " +
                                          std::to_string(s.label));
    if (s.edges.back() + s.width > 1.0 + 1e-9)
      throw ParseError(lines[i].back(), "last bin extends past 1");
  }
  std::sort(hist.series.begin(), hist.series.end(), [](const auto& a, const auto& b) {
    return std::tie(a.group, a.label) < std::tie(b.group, b.label);
  });
  return hist;
}

ScoreHistogram load_histogram(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open histogram file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_histogram(buf.str());
}

std::string format_histogram(const ScoreHistogram& hist) {
  std::ostringstream out;
  out << "group,label,score,count\n";
  char buf[32];
  for (const auto& s : hist.series)
    for (std::size_t k = 0; k < s.edges.size(); ++k)
      out << s.group << ',' << s.label << ','
          << std::string_view(buf, std::to_chars(buf, buf + sizeof buf, s.edges[k]).ptr) << ','
          << static_cast<long long>(std::llround(s.counts[k])) << '\n';
  return out.str();
}

// ---------------------------------------------------------------- fitting

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Bins {
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<double> weight;  // count / total
};

Bins make_bins(const HistogramSeries& s) {
  Bins b;
  const double total = s.total();
  for (std::size_t k = 0; k < s.edges.size(); ++k) {
    if (s.counts[k] <= 0.0) continue;
    b.lo.push_back(s.edges[k]);
    b.hi.push_back(std::min(1.0, s.edges[k] + s.width));
    b.weight.push_back(s.counts[k] / total);
  }
  return b;
}

double bin_mass(double a, double b, double lo, double hi) {
  // Upper tails through the complement keep precision near 1.
  if (lo >= 0.5) return boost::math::ibetac(a, b, lo) - boost::math::ibetac(a, b, hi);
  return boost::math::ibeta(a, b, hi) - boost::math::ibeta(a, b, lo);
}

double mean_loglik(const Bins& bins, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) return kNegInf;
  double ll = 0.0;
  for (std::size_t k = 0; k < bins.lo.size(); ++k) {
    const double p = bin_mass(a, b, bins.lo[k], bins.hi[k]);
    if (!(p > 0.0)) return kNegInf;
    ll += bins.weight[k] * std::log(p);
  }
  return ll;
}

using Vec2 = std::array<double, 2>;

template <class F>
Vec2 gradient(const F& f, Vec2 x, double h) {
  Vec2 g{};
  for (int i = 0; i < 2; ++i) {
    const double step = h * std::max(1.0, x[i]);
    auto at = [&](double d) {
      Vec2 y = x;
      y[i] += d;
      return f(y[0], y[1]);
    };
    g[i] = (at(-2 * step) - 8 * at(-step) + 8 * at(step) - at(2 * step)) / (12 * step);
  }
  return g;
}

struct NewtonResult {
  Vec2 x;
  int iterations;
  bool converged;
  double grad_norm;
};

// Damped Newton ascent on f; grad and hess supplied by callables.
template <class F, class G, class H>
NewtonResult newton(const F& f, const G& grad, const H& hess, Vec2 x, const FitOptions& opt) {
  auto sup = [](Vec2 g) { return std::max(std::abs(g[0]), std::abs(g[1])); };
  double fx = f(x[0], x[1]);
  int polish = 0;
  for (int it = 0; it < opt.max_iters; ++it) {
    const Vec2 g = grad(x);
    if (sup(g) <= opt.grad_tol) {
      if (polish++ >= 5) return {x, it, true, sup(g)};
    }
    const auto h = hess(x);
    const double det = h[0] * h[3] - h[1] * h[2];
    Vec2 d;
    if (h[0] < 0.0 && det > 0.0) {
      d = {-(h[3] * g[0] - h[1] * g[1]) / det, -(-h[2] * g[0] + h[0] * g[1]) / det};
    } else {
      d = {g[0] / std::max(1.0, std::abs(h[0])), g[1] / std::max(1.0, std::abs(h[3]))};
    }
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const Vec2 y{x[0] + t * d[0], x[1] + t * d[1]};
      if (!(y[0] > 0.0) || !(y[1] > 0.0)) continue;
      const double fy = f(y[0], y[1]);
      if (fy >= fx) {
        x = y;
        fx = fy;
        moved = true;
        break;
      }
    }
    if (!moved) {
      const Vec2 gn = grad(x);
      return {x, it + 1, sup(gn) <= opt.grad_tol, sup(gn)};
    }
  }
  const Vec2 g = grad(x);
  return {x, opt.max_iters, false, sup(g)};
}

void check_series(const HistogramSeries& s, const FitOptions& opt) {
  if (s.nonempty_bins() < opt.min_bins)
    throw FitError("degenerate data for group '" + s.group + "' label " + std::to_string(s.label) +
                   ": " + std::to_string(s.nonempty_bins()) + " nonempty bins");
  if (s.total() < opt.min_total)
    throw FitError("degenerate data for group '" + s.group + "' label " + std::to_string(s.label) +
                   ": total count below " + std::to_string(opt.min_total));
}

Vec2 moments_start(const HistogramSeries& s) {
  const double total = s.total();
  double mean = 0.0;
  for (std::size_t k = 0; k < s.edges.size(); ++k)
    mean += s.counts[k] * (s.edges[k] + 0.5 * s.width) / total;
  double var = 0.0;
  for (std::size_t k = 0; k < s.edges.size(); ++k) {
    const double d = s.edges[k] + 0.5 * s.width - mean;
    var += s.counts[k] * d * d / total;
  }
  const double common = var > 0.0 ? mean * (1.0 - mean) / var - 1.0 : -1.0;
  if (!(common > 0.0) || !(mean > 0.0 && mean < 1.0)) return {1.0, 1.0};
  return {mean * common, (1.0 - mean) * common};
}

BetaFit finish_fit(const HistogramSeries& s, const NewtonResult& r, double ll) {
  if (!r.converged)
    throw FitError("Beta fit for group '" + s.group + "' label " + std::to_string(s.label) +
                   " did not converge after " + std::to_string(r.iterations) +
                   " iterations (gradient " + std::to_string(r.grad_norm) + ")");
  return BetaFit{r.x[0], r.x[1], ll, r.iterations, true, r.grad_norm};
}

}  // namespace

BetaFit fit_beta(const HistogramSeries& series, const FitOptions& options) {
  check_series(series, options);
  const Bins bins = make_bins(series);
  auto f = [&](double a, double b) { return mean_loglik(bins, a, b); };
  const double h = 1e-3;
  auto grad = [&](Vec2 x) { return gradient(f, x, h); };
  auto hess = [&](Vec2 x) {
    std::array<double, 4> H{};
    for (int j = 0; j < 2; ++j) {
      const double step = h * std::max(1.0, x[j]);
      Vec2 up = x;
      Vec2 dn = x;
      up[j] += step;
      dn[j] -= step;
      const Vec2 gu = grad(up);
      const Vec2 gd = grad(dn);
      H[0 * 2 + j] = (gu[0] - gd[0]) / (2 * step);
      H[1 * 2 + j] = (gu[1] - gd[1]) / (2 * step);
    }
    const double off = 0.5 * (H[1] + H[2]);
    H[1] = H[2] = off;
    return H;
  };
  Vec2 start = moments_start(series);
  // Keep the finite-difference stencil inside the domain.
  start[0] = std::max(start[0], 0.05);
  start[1] = std::max(start[1], 0.05);
  const auto r = newton(f, grad, hess, start, options);
  return finish_fit(series, r, f(r.x[0], r.x[1]));
}

BetaFit fit_beta(const ScoreHistogram& hist, const std::string& group, int label,
                 const FitOptions& options) {
  return fit_beta(hist.find(group, label), options);
}

BetaFit fit_beta_resampled(const HistogramSeries& series, std::size_t samples, std::uint64_t seed,
                           const FitOptions& options) {
  check_series(series, options);
  if (samples < 2) throw FitError("resampling needs at least 2 samples");
  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick(series.counts.begin(), series.counts.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double s1 = 0.0;
  double s2 = 0.0;
  const double lo_clamp = 1e-12;
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t k = pick(rng);
    const double hi = std::min(1.0, series.edges[k] + series.width);
    double x = series.edges[k] + unit(rng) * (hi - series.edges[k]);
    x = std::clamp(x, lo_clamp, 1.0 - lo_clamp);
    s1 += std::log(x);
    s2 += std::log1p(-x);
  }
  s1 /= static_cast<double>(samples);
  s2 /= static_cast<double>(samples);

  using boost::math::digamma;
  using boost::math::trigamma;
  auto f = [&](double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) return kNegInf;
    return (a - 1.0) * s1 + (b - 1.0) * s2 - std::log(boost::math::beta(a, b));
  };
  auto grad = [&](Vec2 x) {
    const double ab = digamma(x[0] + x[1]);
    return Vec2{ab - digamma(x[0]) + s1, ab - digamma(x[1]) + s2};
  };
  auto hess = [&](Vec2 x) {
    const double t = trigamma(x[0] + x[1]);
    return std::array<double, 4>{t - trigamma(x[0]), t, t, t - trigamma(x[1])};
  };
  const auto r = newton(f, grad, hess, moments_start(series), options);
  return finish_fit(series, r, f(r.x[0], r.x[1]));
}

FeatureModel to_score_model(const FitTable& fits, const std::vector<std::string>& groups) {
  if (groups.empty()) throw ConfigError("no groups to build a score model from");
  std::vector<ScoreDistribution> f1;
  std::vector<ScoreDistribution> f0;
  for (const auto& g : groups) {
    for (int label : {1, 0}) {
      auto it = fits.find({g, label});
      if (it == fits.end())
        throw ConfigError("group '" + g + "' has no fit for label " + std::to_string(label));
      auto dist = ScoreDistribution::beta(it->second.alpha, it->second.beta);
      (label == 1 ? f1 : f0).push_back(std::move(dist));
    }
  }
  return FeatureModel::score(std::move(f1), std::move(f0));
}

HistogramSeries beta_histogram(const std::string& group, int label, double alpha, double beta,
                               std::size_t bins, double total) {
  if (bins < 1) throw ConfigError("histogram needs at least one bin");
  HistogramSeries s{group, label, 1.0 / static_cast<double>(bins), {}, {}};
  for (std::size_t k = 0; k < bins; ++k) {
    const double lo = static_cast<double>(k) / static_cast<double>(bins);
    const double hi = static_cast<double>(k + 1) / static_cast<double>(bins);
    s.edges.push_back(lo);
    s.counts.push_back(total * bin_mass(alpha, beta, lo, hi));
  }
  return s;
}

}  // namespace qualdyn
