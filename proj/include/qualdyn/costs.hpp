#pragma once

#include <memory>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

namespace qualdyn {

// Standard normal CDF.
double normal_cdf(double z);

struct Knot {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Knot&, const Knot&) = default;
};

// Distribution G of the cost C of investing in qualification. Immutable; a
// subsidy produces a new model wrapping the old one.
class CostModel {
 public:
  struct Uniform01 {
    friend bool operator==(const Uniform01&, const Uniform01&) = default;
  };
  struct TruncatedNormal {
    double mu = 0.5;
    double sigma = 0.1;
    double lo = 0.0;
    double hi = 1.0;
    friend bool operator==(const TruncatedNormal&, const TruncatedNormal&) = default;
  };
  // Mixture of two normals, each truncated to [0,1]; `mix` weights the first.
  struct BimodalNormal {
    double mu1 = 0.0;
    double sigma1 = 0.1;
    double mu2 = 0.0;
    double sigma2 = 0.1;
    double mix = 0.5;
    friend bool operator==(const BimodalNormal&, const BimodalNormal&) = default;
  };
  // Piecewise-linear CDF through the knots.
  struct Empirical {
    std::vector<Knot> knots;
    friend bool operator==(const Empirical&, const Empirical&) = default;
  };
  // G'(x) = G(x + delta)
  struct Shifted {
    std::shared_ptr<const CostModel> base;
    double delta = 0.0;
  };
  // G'(x) = G(x * factor)
  struct Scaled {
    std::shared_ptr<const CostModel> base;
    double factor = 1.0;
  };
  using Kind = std::variant<Uniform01, TruncatedNormal, BimodalNormal, Empirical, Shifted, Scaled>;

  static CostModel uniform01();
  static CostModel truncated_normal(double mu, double sigma, double lo = 0.0, double hi = 1.0);
  static CostModel bimodal_normal(double mu1, double sigma1, double mu2, double sigma2, double mix);
  static CostModel empirical(std::vector<Knot> knots);
  static CostModel shifted(const CostModel& base, double delta);
  static CostModel scaled(const CostModel& base, double factor);

  double cdf(double x) const;
  // Smallest x in the support with cdf(x) >= p, found by bisection.
  // Throws UnsupportedError for models that are not strictly increasing.
  double inverse_cdf(double p) const;
  bool strictly_increasing() const;
  std::pair<double, double> support() const;

  // Lipschitz constant of the CDF. An explicit override wins; otherwise it is
  // derived analytically for the built-in kinds.
  std::optional<double> lipschitz() const;
  CostModel with_lipschitz(double bound) const;
  const std::optional<double>& lipschitz_override() const noexcept { return lipschitz_; }

  const Kind& kind() const noexcept { return kind_; }

  friend bool operator==(const CostModel& a, const CostModel& b);

 private:
  explicit CostModel(Kind kind) : kind_(std::move(kind)) {}

  Kind kind_;
  std::optional<double> lipschitz_;
};

struct Subsidy {
  enum class Type { shift, scale };
  Type type = Type::shift;
  double amount = 0.0;

  static Subsidy shift(double delta) { return {Type::shift, delta}; }
  static Subsidy scale(double factor) { return {Type::scale, factor}; }

  friend bool operator==(const Subsidy&, const Subsidy&) = default;
};

// A model whose CDF dominates the input pointwise. Negative shifts and
// factors below one are rejected.
CostModel subsidize(const CostModel& model, Subsidy transform);

// True when cdf(dominating) >= cdf(base) - tol on `probes` evenly spaced points of [0,1].
bool dominates(const CostModel& dominating, const CostModel& base, int probes = 1001,
               double tol = 0.0);

}  // namespace qualdyn
