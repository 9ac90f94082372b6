#include "qualdyn/costs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qualdyn/errors.hpp"

namespace qualdyn {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double truncated_normal_cdf(double x, double mu, double sigma, double lo, double hi) {
  if (x <= lo) return 0.0;
  if (x >= hi) return 1.0;
  const double a = normal_cdf((lo - mu) / sigma);
  const double b = normal_cdf((hi - mu) / sigma);
  return std::clamp((normal_cdf((x - mu) / sigma) - a) / (b - a), 0.0, 1.0);
}

double truncated_normal_peak(double mu, double sigma, double lo, double hi) {
  const double z = normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma);
  const double mode = std::clamp(mu, lo, hi);
  return normal_pdf((mode - mu) / sigma) / (sigma * z);
}

void check_normal(double mu, double sigma, double lo, double hi) {
  if (!std::isfinite(mu) || !(sigma > 0.0) || !std::isfinite(sigma))
    throw ConfigError("truncated normal requires finite mu and sigma > 0");
  if (!(lo < hi)) throw ConfigError("truncated normal requires lo < hi");
  if (normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma) <= 0.0)
    throw ConfigError("truncated normal has no mass on [lo, hi]");
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

CostModel CostModel::uniform01() { return CostModel(Uniform01{}); }

CostModel CostModel::truncated_normal(double mu, double sigma, double lo, double hi) {
  check_normal(mu, sigma, lo, hi);
  return CostModel(TruncatedNormal{mu, sigma, lo, hi});
}

CostModel CostModel::bimodal_normal(double mu1, double sigma1, double mu2, double sigma2,
                                    double mix) {
  check_normal(mu1, sigma1, 0.0, 1.0);
  check_normal(mu2, sigma2, 0.0, 1.0);
  if (!(mix >= 0.0 && mix <= 1.0)) throw ConfigError("bimodal mix must lie in [0,1]");
  return CostModel(BimodalNormal{mu1, sigma1, mu2, sigma2, mix});
}

CostModel CostModel::empirical(std::vector<Knot> knots) {
  if (knots.size() < 2) throw ConfigError("empirical CDF needs at least two knots");
  for (std::size_t i = 0; i < knots.size(); ++i) {
    const auto& k = knots[i];
    if (!std::isfinite(k.x) || !(k.y >= 0.0 && k.y <= 1.0))
      throw ConfigError("empirical knot " + std::to_string(i) + " is out of range");
    if (i > 0 && !(k.x > knots[i - 1].x))
      throw ConfigError("empirical knots must have strictly increasing x");
    if (i > 0 && k.y < knots[i - 1].y)
      throw ConfigError("empirical knots must be non-decreasing (knot " + std::to_string(i) + ")");
  }
  if (knots.back().y != 1.0) throw ConfigError("empirical CDF must reach 1 at its last knot");
  return CostModel(Empirical{std::move(knots)});
}

CostModel CostModel::shifted(const CostModel& base, double delta) {
  if (!std::isfinite(delta)) throw ConfigError("shift must be finite");
  return CostModel(Shifted{std::make_shared<const CostModel>(base), delta});
}

CostModel CostModel::scaled(const CostModel& base, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) throw ConfigError("scale factor must be > 0");
  return CostModel(Scaled{std::make_shared<const CostModel>(base), factor});
}

double CostModel::cdf(double x) const {
  return std::visit(
      overloaded{
          [&](const Uniform01&) { return std::clamp(x, 0.0, 1.0); },
          [&](const TruncatedNormal& t) { return truncated_normal_cdf(x, t.mu, t.sigma, t.lo, t.hi); },
          [&](const BimodalNormal& b) {
            return b.mix * truncated_normal_cdf(x, b.mu1, b.sigma1, 0.0, 1.0) +
                   (1.0 - b.mix) * truncated_normal_cdf(x, b.mu2, b.sigma2, 0.0, 1.0);
          },
          [&](const Empirical& e) {
            const auto& k = e.knots;
            if (x < k.front().x) return 0.0;
            if (x >= k.back().x) return 1.0;
            auto hi = std::upper_bound(k.begin(), k.end(), x,
                                       [](double v, const Knot& kn) { return v < kn.x; });
            auto lo = hi - 1;
            const double f = (x - lo->x) / (hi->x - lo->x);
            return lo->y + f * (hi->y - lo->y);
          },
          [&](const Shifted& s) { return s.base->cdf(x + s.delta); },
          [&](const Scaled& s) { return s.base->cdf(x * s.factor); },
      },
      kind_);
}

std::pair<double, double> CostModel::support() const {
  return std::visit(overloaded{
                        [](const Uniform01&) { return std::pair{0.0, 1.0}; },
                        [](const TruncatedNormal& t) { return std::pair{t.lo, t.hi}; },
                        [](const BimodalNormal&) { return std::pair{0.0, 1.0}; },
                        [](const Empirical& e) {
                          return std::pair{e.knots.front().x, e.knots.back().x};
                        },
                        [](const Shifted& s) {
                          auto [lo, hi] = s.base->support();
                          return std::pair{lo - s.delta, hi - s.delta};
                        },
                        [](const Scaled& s) {
                          auto [lo, hi] = s.base->support();
                          return std::pair{lo / s.factor, hi / s.factor};
                        },
                    },
                    kind_);
}

bool CostModel::strictly_increasing() const {
  return std::visit(overloaded{
                        [](const Empirical& e) {
                          for (std::size_t i = 1; i < e.knots.size(); ++i)
                            if (!(e.knots[i].y > e.knots[i - 1].y)) return false;
                          return true;
                        },
                        [](const Shifted& s) { return s.base->strictly_increasing(); },
                        [](const Scaled& s) { return s.base->strictly_increasing(); },
                        [](const auto&) { return true; },
                    },
                    kind_);
}

double CostModel::inverse_cdf(double p) const {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("inverse_cdf: p must lie in [0,1]");
  if (!strictly_increasing())
    throw UnsupportedError("inverse_cdf requires a strictly increasing CDF");
  auto [lo, hi] = support();
  if (cdf(lo) >= p) return lo;
  // Invariant: cdf(lo) < p <= cdf(hi).
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (cdf(mid) < p)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

std::optional<double> CostModel::lipschitz() const {
  if (lipschitz_) return lipschitz_;
  return std::visit(
      overloaded{
          [](const Uniform01&) -> std::optional<double> { return 1.0; },
          [](const TruncatedNormal& t) -> std::optional<double> {
            return truncated_normal_peak(t.mu, t.sigma, t.lo, t.hi);
          },
          [](const BimodalNormal& b) -> std::optional<double> {
            return b.mix * truncated_normal_peak(b.mu1, b.sigma1, 0.0, 1.0) +
                   (1.0 - b.mix) * truncated_normal_peak(b.mu2, b.sigma2, 0.0, 1.0);
          },
          [](const Empirical& e) -> std::optional<double> {
            double slope = 0.0;
            for (std::size_t i = 1; i < e.knots.size(); ++i)
              slope = std::max(slope, (e.knots[i].y - e.knots[i - 1].y) /
                                          (e.knots[i].x - e.knots[i - 1].x));
            return slope;
          },
          [](const Shifted& s) { return s.base->lipschitz(); },
          [](const Scaled& s) -> std::optional<double> {
            auto l = s.base->lipschitz();
            if (!l) return std::nullopt;
            return *l * s.factor;
          },
      },
      kind_);
}

CostModel CostModel::with_lipschitz(double bound) const {
  if (!(bound > 0.0)) throw ConfigError("lipschitz bound must be positive");
  CostModel copy = *this;
  copy.lipschitz_ = bound;
  return copy;
}

bool operator==(const CostModel& a, const CostModel& b) {
  if (a.lipschitz_ != b.lipschitz_ || a.kind_.index() != b.kind_.index()) return false;
  return std::visit(
      overloaded{
          [&](const CostModel::Shifted& s) {
            const auto& t = std::get<CostModel::Shifted>(b.kind_);
            return s.delta == t.delta && *s.base == *t.base;
          },
          [&](const CostModel::Scaled& s) {
            const auto& t = std::get<CostModel::Scaled>(b.kind_);
            return s.factor == t.factor && *s.base == *t.base;
          },
          [&](const auto& s) { return s == std::get<std::decay_t<decltype(s)>>(b.kind_); },
      },
      a.kind_);
}

CostModel subsidize(const CostModel& model, Subsidy transform) {
  switch (transform.type) {
    case Subsidy::Type::shift:
      if (!(transform.amount >= 0.0))
        throw DomainError("subsidy shift must be >= 0 to keep the CDF dominating");
      return CostModel::shifted(model, transform.amount);
    case Subsidy::Type::scale:
      if (!(transform.amount >= 1.0))
        throw DomainError("subsidy scale factor must be >= 1 to keep the CDF dominating");
      return CostModel::scaled(model, transform.amount);
  }
  throw DomainError("unknown subsidy type");
}

bool dominates(const CostModel& dominating, const CostModel& base, int probes, double tol) {
  for (int i = 0; i < probes; ++i) {
    const double x = probes == 1 ? 0.0 : static_cast<double>(i) / (probes - 1);
    if (dominating.cdf(x) < base.cdf(x) - tol) return false;
  }
  return true;
}

}  // namespace qualdyn
