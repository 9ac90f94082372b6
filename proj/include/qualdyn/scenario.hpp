#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qualdyn/core.hpp"
#include "qualdyn/costs.hpp"
#include "qualdyn/dynamics.hpp"
#include "qualdyn/features.hpp"

namespace qualdyn {

// Feature block as declared; halfspace normals are kept un-normalized so a
// scenario serializes back to what was read.
struct FeatureDecl {
  enum class Variant { uniform_threshold, gaussian_halfspace, score };
  struct ScorePair {
    ScoreDistribution y1;
    ScoreDistribution y0;
    friend bool operator==(const ScorePair&, const ScorePair&) = default;
  };

  Variant variant = Variant::uniform_threshold;
  std::map<std::string, double> thresholds;
  std::map<std::string, std::vector<double>> normals;
  std::map<std::string, ScorePair> scores;

  // Builds the model in canonical group order.
  FeatureModel build(const std::vector<std::string>& ids) const;

  friend bool operator==(const FeatureDecl&, const FeatureDecl&) = default;
};

struct SubsidyDecl {
  std::string group;
  Subsidy transform;
  friend bool operator==(const SubsidyDecl&, const SubsidyDecl&) = default;
};

struct Intervention {
  bool decouple = false;
  std::optional<SubsidyDecl> subsidy;
  friend bool operator==(const Intervention&, const Intervention&) = default;
};

struct Scenario {
  int version = 1;
  EconomyConfig economy{1.0, 1.0, 1.0};
  GroupSet groups{{GroupSpec{"a", 1.0, CostModel::uniform01()}}};
  FeatureDecl features;
  SolverConfig solver;
  DynamicsConfig dynamics;
  Intervention intervention;
  std::uint64_t seed = 0;

  // System with any subsidy applied.
  System build_system() const;
  // Dynamics settings with the decoupling intervention and seed applied.
  DynamicsConfig dynamics_config() const;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

// Throws ConfigError with a field path on any problem, including unknown fields.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
std::string serialize_scenario(const Scenario& scenario);

}  // namespace qualdyn
