#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pcasgd/config.hpp"

namespace pcasgd {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int check_failed = 1;
inline constexpr int config_error = 2;
inline constexpr int divergence = 3;
}  // namespace exit_code

/// A config argument may name a file or a shipped preset ("rosenbrock-3agents").
std::filesystem::path resolve_config_path(const std::string& arg);

/// Directory holding the shipped presets (PCASGD_PRESET_DIR overrides it).
std::filesystem::path preset_directory();

/// Parallelism cap from PCASGD_THREADS; 1 when unset or invalid.
int threads_from_env();

struct RunRequest {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

struct SweepRequest {
  std::string config;
  std::string axis;  // tau | theta | variant
  std::vector<std::string> values;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
  int threads = 1;
};

/// One summary row of a sweep.
struct SweepCell {
  std::string value;
  Variant variant = Variant::pc_fixed;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::completed;
  double final_loss = 0.0;
  double avg_grad_sq_norm = 0.0;
  double max_consensus_dev = 0.0;
  double pv_pred_freq = 0.0;
};

inline constexpr const char* kSweepHeader =
    "axis,value,variant,seed,status,final_loss,avg_grad_sq_norm,max_consensus_dev,pv_pred_freq";

/// Summary metrics of a finished trace.
SweepCell summarize(const MetricsTrace& trace, int n_agents);

/// Trace file stem for one (variant, seed) run: "<variant>_seed<seed>".
std::string run_stem(Variant variant, std::uint64_t seed);

/// Report written next to each trace: run status, final state, bound report.
std::string run_report(const MetricsTrace& trace, const ExperimentConfig& cfg, Variant variant);

int cli_run(const RunRequest& req, std::ostream& out, std::ostream& err);
int cli_sweep(const SweepRequest& req, std::ostream& out, std::ostream& err);
int cli_validate(const std::string& config, const std::vector<std::string>& overrides,
                 std::ostream& out, std::ostream& err);
int cli_bounds(const std::filesystem::path& trace_csv, const std::string& config,
               const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err);

}  // namespace pcasgd
