#include <doctest.h>

#include <boost/math/special_functions/beta.hpp>
#include <cmath>

#include "generators.hpp"
#include "qualdyn/errors.hpp"
#include "qualdyn/ingest.hpp"

using namespace qualdyn;

namespace {

std::size_t parse_error_line(const std::string& text) {
  try {
    parse_histogram(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

// Mean binned log-likelihood under Beta(a, b), straight from the regularized
// incomplete beta.
double binned_ll(const HistogramSeries& s, double a, double b) {
  double ll = 0.0, n = 0.0;
  for (std::size_t k = 0; k < s.edges.size(); ++k) {
    if (s.counts[k] <= 0) continue;
    const double hi = std::min(1.0, s.edges[k] + s.width);
    const double mass = boost::math::ibeta(a, b, hi) - boost::math::ibeta(a, b, s.edges[k]);
    ll += s.counts[k] * std::log(mass);
    n += s.counts[k];
  }
  return ll / n;
}

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("parses a small histogram") {
  const auto h = parse_histogram(
      "group,label,score,count\n"
      "b,1,0.0,3\n"
      "a,0,0.0,1\n"
      "a,0,0.5,4\n"
      "\n"
      "b,1,0.5,2\n");
  REQUIRE(h.series.size() == 2);
  CHECK(h.series[0].group == "a");
  CHECK(h.series[0].width == 0.5);
  CHECK(h.find("a", 0).total() == 5);
  CHECK(h.find("b", 1).nonempty_bins() == 2);
  CHECK(h.contains("b", 1));
  CHECK_FALSE(h.contains("b", 0));
  CHECK_THROWS_AS(h.find("b", 0), ConfigError);
  CHECK(h.groups() == std::vector<std::string>{"a", "b"});
}

TEST_CASE("parse errors name the offending line") {
  CHECK(parse_error_line("grp,label,score,count\n") == 1);
  CHECK(parse_error_line("") == 1);
  CHECK(parse_error_line("group,label,score,count\na,1,0.0,3\na,2,0.5,3\n") == 3);
  CHECK(parse_error_line("group,label,score,count\na,1,x,3\n") == 2);
  CHECK(parse_error_line("group,label,score,count\na,1,1.0,3\n") == 2);
  CHECK(parse_error_line("group,label,score,count\na,1,0.1,-3\n") == 2);
  CHECK(parse_error_line("group,label,score,count\na,1,0.1,2.5\n") == 2);
  CHECK(parse_error_line("group,label,score,count\na,1,0.1\n") == 2);
  CHECK(parse_error_line("group,label,score,count\n,1,0.1,3\n") == 2);
  CHECK(parse_error_line("group,label,score,count\na,1,0.5,1\na,1,0.2,1\n") == 3);
  CHECK(parse_error_line("group,label,score,count\na,1,0.0,1\na,1,0.25,1\n\na,1,0.6,1\n") == 5);
  CHECK(parse_error_line("group,label,score,count\na,1,0.0,1\na,1,0.6,1\n") == 3);
}

TEST_CASE("format and parse round trip") {
  ScoreHistogram h;
  h.series.push_back(beta_histogram("a", 0, 2, 5, 25, 1e5));
  h.series.push_back(beta_histogram("a", 1, 5, 2, 25, 1e5));
  const auto back = parse_histogram(format_histogram(h));
  REQUIRE(back.series.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.series[i].edges == h.series[i].edges);
    for (std::size_t k = 0; k < h.series[i].counts.size(); ++k)
      CHECK(back.series[i].counts[k] == std::round(h.series[i].counts[k]));
  }
  CHECK(format_histogram(back) == format_histogram(h));
}

TEST_CASE("binned fit is a stationary point of the binned likelihood") {
  const auto s = beta_histogram("a", 1, 3.0, 1.5, 40, 1e6);
  const auto fit = fit_beta(s);
  CHECK(fit.converged);
  CHECK(fit.log_likelihood == doctest::Approx(binned_ll(s, fit.alpha, fit.beta)).epsilon(1e-9));
  const double h = 1e-4;
  CHECK(std::abs(binned_ll(s, fit.alpha + h, fit.beta) - binned_ll(s, fit.alpha - h, fit.beta)) / (2 * h) < 1e-5);
  CHECK(std::abs(binned_ll(s, fit.alpha, fit.beta + h) - binned_ll(s, fit.alpha, fit.beta - h)) / (2 * h) < 1e-5);
  for (double da : {-0.05, 0.05})
    for (double db : {-0.05, 0.05})
      CHECK(binned_ll(s, fit.alpha + da, fit.beta + db) < fit.log_likelihood);
}

TEST_CASE("property: exact Beta histograms recover their parameters") {
  testing::Gen gen(31);
  for (int it = 0; it < 25; ++it) {
    const double a = gen.uniform(0.5, 8.0), b = gen.uniform(0.5, 8.0);
    const auto s = beta_histogram("g", 1, a, b, 100, 1e6);
    CAPTURE(a);
    CAPTURE(b);
    const auto fit = fit_beta(s);
    CHECK(fit.converged);
    CHECK(fit.alpha == doctest::Approx(a).epsilon(0.02));
    CHECK(fit.beta == doctest::Approx(b).epsilon(0.02));
  }
}

TEST_CASE("degenerate data is rejected") {
  HistogramSeries s{"a", 1, 0.1, {0.0, 0.1, 0.2}, {0, 500, 0}};
  CHECK_THROWS_AS(fit_beta(s), FitError);
  HistogramSeries few{"a", 1, 0.5, {0.0, 0.5}, {10, 10}};
  CHECK_THROWS_AS(fit_beta(few), FitError);
}

TEST_CASE("resampled fits depend only on the seed") {
  const auto s = beta_histogram("a", 0, 2, 5, 50, 1e5);
  const auto f1 = fit_beta_resampled(s, 20000, 7);
  const auto f2 = fit_beta_resampled(s, 20000, 7);
  const auto f3 = fit_beta_resampled(s, 20000, 8);
  CHECK(f1.alpha == f2.alpha);
  CHECK(f1.beta == f2.beta);
  CHECK(f1.alpha != f3.alpha);
  CHECK(f1.alpha == doctest::Approx(2).epsilon(0.1));
  CHECK(f1.beta == doctest::Approx(5).epsilon(0.1));
  CHECK_THROWS_AS(fit_beta_resampled(s, 1, 7), FitError);
}

TEST_CASE("score model from fits") {
  FitTable fits;
  fits[{"a", 1}] = BetaFit{5, 2};
  fits[{"a", 0}] = BetaFit{2, 5};
  fits[{"b", 1}] = BetaFit{3, 2};
  const auto m = to_score_model(fits, {"a"});
  CHECK(m.group_count() == 1);
  CHECK_THROWS_AS(to_score_model(fits, {"a", "b"}), ConfigError);
  CHECK_THROWS_AS(to_score_model(fits, {}), ConfigError);
}

TEST_CASE("shipped histogram fits near its generating parameters") {
  const auto h = load_histogram(std::string(QUALDYN_SOURCE_DIR) + "/data/synthetic_scores.csv");
  CHECK(h.groups() == std::vector<std::string>{"a", "b"});
  const auto fa = fit_beta(h, "a", 1);
  CHECK(fa.alpha == doctest::Approx(5).epsilon(1e-3));
  CHECK(fa.beta == doctest::Approx(2).epsilon(1e-3));
  CHECK_THROWS_AS(load_histogram("/nonexistent/file.csv"), ConfigError);
}

}
