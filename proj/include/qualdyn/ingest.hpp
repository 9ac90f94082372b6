#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qualdyn/features.hpp"

namespace qualdyn {

// Counts per uniform bin for one (group, label) pair. Edges are left edges.
struct HistogramSeries {
  std::string group;
  int label = 0;
  double width = 0.0;
  std::vector<double> edges;
  std::vector<double> counts;

  double total() const;
  std::size_t nonempty_bins() const;
};

struct ScoreHistogram {
  std::vector<HistogramSeries> series;

  const HistogramSeries& find(const std::string& group, int label) const;
  bool contains(const std::string& group, int label) const;
  std::vector<std::string> groups() const;
};

// CSV with header `group,label,score,count`. Throws ParseError naming the line.
ScoreHistogram load_histogram(const std::filesystem::path& path);
ScoreHistogram parse_histogram(const std::string& text);
std::string format_histogram(const ScoreHistogram& hist);

struct BetaFit {
  double alpha = 1.0;
  double beta = 1.0;
  // Mean log-likelihood per observation.
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
};

struct FitOptions {
  int max_iters = 200;
  double grad_tol = 1e-8;
  std::size_t min_bins = 3;
  double min_total = 100.0;
};

// Maximizes the binned log-likelihood by damped Newton from a
// method-of-moments start. Throws FitError on degenerate data or failure.
BetaFit fit_beta(const HistogramSeries& series, const FitOptions& options = {});
BetaFit fit_beta(const ScoreHistogram& hist, const std::string& group, int label,
                 const FitOptions& options = {});

// Draws `samples` points from the histogram (uniform within bins) and fits by
// continuous maximum likelihood.
BetaFit fit_beta_resampled(const HistogramSeries& series, std::size_t samples, std::uint64_t seed,
                           const FitOptions& options = {});

// (group, label) -> fit
using FitTable = std::map<std::pair<std::string, int>, BetaFit>;

// Groups in `groups` order; every group needs both labels.
FeatureModel to_score_model(const FitTable& fits, const std::vector<std::string>& groups);

// Histogram with counts proportional to exact Beta bin masses.
HistogramSeries beta_histogram(const std::string& group, int label, double alpha, double beta,
                               std::size_t bins, double total);

}  // namespace qualdyn
