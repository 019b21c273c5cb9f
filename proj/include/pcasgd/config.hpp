#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcasgd/analysis.hpp"
#include "pcasgd/objective.hpp"
#include "pcasgd/optimizer.hpp"
#include "pcasgd/topology.hpp"

namespace pcasgd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A parsed value from the sectioned key = value format: a number, a quoted
/// string, or a (possibly nested) bracketed array.
struct ConfigValue {
  enum class Kind { number, string, array };
  Kind kind = Kind::number;
  double number = 0.0;
  bool integral = false;
  std::string text;
  std::vector<ConfigValue> items;
};

using ConfigTable = std::map<std::string, std::map<std::string, ConfigValue>>;

/// Parses the TOML-compatible subset: `[section]` headers, `key = value`
/// lines, `#` comments, numbers, "strings" and single-line arrays.
ConfigTable parse_config_table(const std::string& text);

/// Applies `section.key=value` on top of a parsed table.
void apply_override(ConfigTable& table, const std::string& assignment);

struct TopologyConfig {
  int agents = 0;
  std::string graph = "complete";  // complete | ring | edges
  std::vector<Edge> edges;          // 0-based
  std::vector<std::vector<int>> clusters;  // 0-based
  int delay = 1;
};

struct ExperimentConfig {
  TopologyConfig topology;
  ObjectiveSpec objective;
  AlgorithmConfig algorithm;
  std::vector<Variant> variants;
  RFormula r_formula = RFormula::main;
  std::vector<std::uint64_t> seeds{1};
  std::string out_dir = "runs";

  Topology make_topology() const;
  Objective make_objective() const;
  /// The algorithm block with `variant` substituted.
  AlgorithmConfig algorithm_for(Variant variant) const;
};

/// Builds and validates a config; unknown sections or keys are rejected.
ExperimentConfig build_config(const ConfigTable& table);

ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

}  // namespace pcasgd
