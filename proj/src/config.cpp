#include "pcasgd/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "pcasgd/io.hpp"

namespace pcasgd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

class ValueParser {
 public:
  explicit ValueParser(const std::string& text) : s_(text) {}

  ConfigValue parse_all() {
    ConfigValue v = parse();
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("cannot parse value '" + s_ + "': " + what);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  ConfigValue parse() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    if (s_[pos_] == '"') return parse_string();
    if (s_[pos_] == '[') return parse_array();
    return parse_number();
  }

  ConfigValue parse_string() {
    ++pos_;
    const auto end = s_.find('"', pos_);
    if (end == std::string::npos) fail("unterminated string");
    ConfigValue v;
    v.kind = ConfigValue::Kind::string;
    v.text = s_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return v;
  }

  ConfigValue parse_array() {
    ++pos_;
    ConfigValue v;
    v.kind = ConfigValue::Kind::array;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return v;
    }
    while (true) {
      v.items.push_back(parse());
      skip_ws();
      if (pos_ >= s_.size()) fail("unterminated array");
      if (s_[pos_] == ',') {
        ++pos_;
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          return v;
        }
        continue;
      }
      if (s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      fail("expected ',' or ']'");
    }
  }

  ConfigValue parse_number() {
    const auto start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                s_[pos_] == '.' || s_[pos_] == '-' || s_[pos_] == '+' ||
                                s_[pos_] == '_')) {
      ++pos_;
    }
    std::string token = s_.substr(start, pos_ - start);
    std::erase(token, '_');
    if (token.empty()) fail("expected a number, string or array");
    char* end = nullptr;
    ConfigValue v;
    v.number = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size() || !std::isfinite(v.number)) {
      fail("'" + token + "' is not a number (strings must be quoted)");
    }
    v.integral = token.find_first_of(".eE") == std::string::npos;
    v.text = token;
    return v;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

ConfigValue parse_value(const std::string& text) {
  ValueParser p(text);
  return p.parse_all();
}

// Typed access with uniform error messages; records consumed keys so that
// leftovers can be reported as unknown.
class Reader {
 public:
  explicit Reader(const ConfigTable& table) : table_(table) {}

  const ConfigValue* find(const std::string& section, const std::string& key) {
    const auto s = table_.find(section);
    if (s == table_.end()) return nullptr;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return nullptr;
    used_.insert(section + "." + key);
    return &k->second;
  }

  const ConfigValue& require(const std::string& section, const std::string& key) {
    const ConfigValue* v = find(section, key);
    if (!v) throw ConfigError("missing required key " + section + "." + key);
    return *v;
  }

  void reject_unknown() const {
    for (const auto& [section, keys] : table_) {
      for (const auto& [key, value] : keys) {
        if (!used_.count(section + "." + key)) {
          throw ConfigError("unknown config key " + section + "." + key);
        }
      }
    }
  }

 private:
  const ConfigTable& table_;
  std::set<std::string> used_;
};

double as_number(const ConfigValue& v, const std::string& name) {
  if (v.kind != ConfigValue::Kind::number) throw ConfigError(name + " must be a number");
  return v.number;
}

long long as_integer(const ConfigValue& v, const std::string& name) {
  if (v.kind != ConfigValue::Kind::number || !v.integral) {
    throw ConfigError(name + " must be an integer");
  }
  return std::strtoll(v.text.c_str(), nullptr, 10);
}

std::string as_string(const ConfigValue& v, const std::string& name) {
  if (v.kind != ConfigValue::Kind::string) throw ConfigError(name + " must be a quoted string");
  return v.text;
}

std::vector<ConfigValue> as_list(const ConfigValue& v) {
  if (v.kind == ConfigValue::Kind::array) return v.items;
  return {v};
}

std::vector<std::vector<int>> as_groups(const ConfigValue& v, const std::string& name, int agents) {
  if (v.kind != ConfigValue::Kind::array) throw ConfigError(name + " must be an array of arrays");
  std::vector<std::vector<int>> groups;
  for (const auto& g : v.items) {
    if (g.kind != ConfigValue::Kind::array) throw ConfigError(name + " must be an array of arrays");
    std::vector<int> members;
    for (const auto& m : g.items) {
      const long long id = as_integer(m, name);
      if (id < 1 || id > agents) {
        throw ConfigError(name + " refers to agent " + std::to_string(id) +
                          " outside 1.." + std::to_string(agents));
      }
      members.push_back(static_cast<int>(id - 1));
    }
    groups.push_back(std::move(members));
  }
  return groups;
}

template <typename Fn>
auto wrap(const std::string& name, Fn fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

}  // namespace

ConfigTable parse_config_table(const std::string& text) {
  ConfigTable table;
  std::istringstream is(text);
  std::string raw;
  std::string section;
  int lineno = 0;
  while (std::getline(is, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      table[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key outside of a [section]");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (table[section].count(key)) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + section + "." + key);
    }
    try {
      table[section][key] = parse_value(trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return table;
}

void apply_override(ConfigTable& table, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override must look like section.key=value: '" + assignment + "'");
  }
  const std::string section = trim(assignment.substr(0, dot));
  const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
  std::string value = trim(assignment.substr(eq + 1));
  ConfigValue parsed;
  try {
    parsed = parse_value(value);
  } catch (const ConfigError&) {
    // bare words are accepted on the command line for convenience
    parsed = parse_value("\"" + value + "\"");
  }
  table[section][key] = parsed;
}

Topology ExperimentConfig::make_topology() const {
  const int n = topology.agents;
  if (topology.graph == "complete") return Topology::complete(n, topology.clusters, topology.delay);
  if (topology.graph == "ring") return Topology::ring(n, topology.clusters, topology.delay);
  return Topology(n, topology.edges, topology.clusters, topology.delay);
}

Objective ExperimentConfig::make_objective() const { return Objective(objective); }

AlgorithmConfig ExperimentConfig::algorithm_for(Variant variant) const {
  AlgorithmConfig a = algorithm;
  a.variant = variant;
  return a;
}

ExperimentConfig build_config(const ConfigTable& table) {
  static const std::set<std::string> kSections{"topology", "objective", "algorithm", "run"};
  for (const auto& [section, keys] : table) {
    if (!kSections.count(section)) throw ConfigError("unknown config section [" + section + "]");
  }
  Reader rd(table);
  ExperimentConfig cfg;

  // [topology]
  {
    auto& t = cfg.topology;
    const long long agents = as_integer(rd.require("topology", "agents"), "topology.agents");
    if (agents < 1 || agents > 4096) throw ConfigError("topology.agents must be in 1..4096");
    t.agents = static_cast<int>(agents);
    if (const auto* v = rd.find("topology", "graph")) t.graph = as_string(*v, "topology.graph");
    if (t.graph != "complete" && t.graph != "ring" && t.graph != "edges") {
      throw ConfigError("topology.graph must be \"complete\", \"ring\" or \"edges\"");
    }
    if (const auto* v = rd.find("topology", "edges")) {
      if (t.graph != "edges") throw ConfigError("topology.edges requires graph = \"edges\"");
      for (const auto& pair : as_groups(*v, "topology.edges", t.agents)) {
        if (pair.size() != 2) throw ConfigError("topology.edges entries must be [a, b] pairs");
        t.edges.push_back({pair[0], pair[1]});
      }
    } else if (t.graph == "edges") {
      throw ConfigError("graph = \"edges\" needs topology.edges");
    }
    if (const auto* v = rd.find("topology", "clusters")) {
      t.clusters = as_groups(*v, "topology.clusters", t.agents);
    } else {
      t.clusters.emplace_back();
      for (int i = 0; i < t.agents; ++i) t.clusters[0].push_back(i);
    }
    if (const auto* v = rd.find("topology", "delay")) {
      const long long delay = as_integer(*v, "topology.delay");
      if (delay < 1) throw ConfigError("topology.delay must be >= 1");
      t.delay = static_cast<int>(delay);
    }
    if (const auto* v = rd.find("topology", "mixing")) {
      cfg.algorithm.mixing = wrap("topology.mixing",
                                  [&] { return parse_mixing_rule(as_string(*v, "topology.mixing")); });
    }
    wrap("topology", [&] { return cfg.make_topology(); });
  }

  // [objective]
  {
    auto& o = cfg.objective;
    o.n_agents = cfg.topology.agents;
    o.kind = wrap("objective.kind", [&] {
      return parse_objective_kind(as_string(rd.require("objective", "kind"), "objective.kind"));
    });
    if (const auto* v = rd.find("objective", "dimension")) {
      const long long d = as_integer(*v, "objective.dimension");
      if (d < 1 || d > 100000) throw ConfigError("objective.dimension must be positive");
      o.dimension = static_cast<int>(d);
    }
    if (const auto* v = rd.find("objective", "noise_sigma")) {
      o.noise_sigma = as_number(*v, "objective.noise_sigma");
      if (o.noise_sigma < 0.0) throw ConfigError("objective.noise_sigma must be >= 0");
    }
    if (const auto* v = rd.find("objective", "lambda")) {
      cfg.algorithm.lambda = as_number(*v, "objective.lambda");
    }
    if (!(cfg.algorithm.lambda > 0.0 && cfg.algorithm.lambda <= 1.0)) {
      throw ConfigError("objective.lambda = " + format_double(cfg.algorithm.lambda) +
                        " is invalid: λ ∈ (0,1] required");
    }
    if (const auto* v = rd.find("objective", "init")) {
      const auto items = as_list(*v);
      Eigen::VectorXd x0(o.dimension);
      if (items.size() == 1) {
        x0.setConstant(as_number(items[0], "objective.init"));
      } else if (static_cast<int>(items.size()) == o.dimension) {
        for (int k = 0; k < o.dimension; ++k) x0(k) = as_number(items[k], "objective.init");
      } else {
        throw ConfigError("objective.init must be a scalar or have `dimension` entries");
      }
      cfg.algorithm.initial_state = x0;
    }
    if (const auto* v = rd.find("objective", "samples")) {
      o.samples = static_cast<int>(as_integer(*v, "objective.samples"));
    }
    if (const auto* v = rd.find("objective", "batch_size")) {
      o.batch_size = static_cast<int>(as_integer(*v, "objective.batch_size"));
    }
    if (const auto* v = rd.find("objective", "data_seed")) {
      o.data_seed = static_cast<std::uint64_t>(as_integer(*v, "objective.data_seed"));
    }
    if (const auto* v = rd.find("objective", "label_noise")) {
      o.label_noise = as_number(*v, "objective.label_noise");
    }
    wrap("objective", [&] { return cfg.make_objective().dimension(); });
  }

  // [algorithm]
  {
    auto& a = cfg.algorithm;
    if (const auto* v = rd.find("algorithm", "variant")) {
      for (const auto& item : as_list(*v)) {
        cfg.variants.push_back(wrap("algorithm.variant", [&] {
          return parse_variant(as_string(item, "algorithm.variant"));
        }));
      }
      if (cfg.variants.empty()) throw ConfigError("algorithm.variant must not be empty");
    } else {
      cfg.variants.push_back(Variant::pc_fixed);
    }
    a.variant = cfg.variants.front();
    a.eta = as_number(rd.require("algorithm", "eta"), "algorithm.eta");
    if (!(a.eta > 0.0)) throw ConfigError("algorithm.eta must be > 0");
    const long long iters = as_integer(rd.require("algorithm", "iterations"), "algorithm.iterations");
    if (iters < 1 || iters > 100000000) throw ConfigError("algorithm.iterations must be positive");
    a.iterations = static_cast<int>(iters);
    if (const auto* v = rd.find("algorithm", "theta")) {
      a.theta = as_number(*v, "algorithm.theta");
    } else {
      for (Variant var : cfg.variants) {
        if (var == Variant::pc_fixed || var == Variant::pc_bernoulli) {
          throw ConfigError("algorithm.theta is required for " + to_string(var));
        }
      }
    }
    if (!(a.theta >= 0.0 && a.theta <= 1.0)) throw ConfigError("algorithm.theta must be in [0,1]");
    if (const auto* v = rd.find("algorithm", "criterion_sign")) {
      a.criterion_sign = wrap("algorithm.criterion_sign", [&] {
        return parse_criterion_sign(as_string(*v, "algorithm.criterion_sign"));
      });
    }
    if (const auto* v = rd.find("algorithm", "r_formula")) {
      cfg.r_formula = wrap("algorithm.r_formula",
                           [&] { return parse_r_formula(as_string(*v, "algorithm.r_formula")); });
    }
  }

  // [run]
  {
    if (const auto* v = rd.find("run", "seeds")) {
      cfg.seeds.clear();
      for (const auto& item : as_list(*v)) {
        const long long s = as_integer(item, "run.seeds");
        if (s < 0) throw ConfigError("run.seeds must be nonnegative");
        cfg.seeds.push_back(static_cast<std::uint64_t>(s));
      }
      if (cfg.seeds.empty()) throw ConfigError("run.seeds must not be empty");
    }
    if (const auto* v = rd.find("run", "out")) cfg.out_dir = as_string(*v, "run.out");
  }

  rd.reject_unknown();
  return cfg;
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  ConfigTable table = parse_config_table(text);
  for (const auto& o : overrides) apply_override(table, o);
  return build_config(table);
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, overrides);
}

}  // namespace pcasgd
