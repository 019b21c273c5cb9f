#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pcasgd/optimizer.hpp"

namespace pcasgd {

/// 17 significant digits; re-parsing with strtod recovers the same double.
std::string format_double(double v);

inline constexpr const char* kTraceHeader = "t,loss,grad_sq_norm,consensus_dev,theta,pv_pred_count";

void write_trace_csv(std::ostream& os, const MetricsTrace& trace);
std::vector<TraceRow> read_trace_csv(std::istream& is);

/// Per-agent step records: t, agent (1-based), theta, choice, the three norm
/// diagnostics, then x, x_pre, x_cli, x_next and g expanded per coordinate.
void write_steps_csv(std::ostream& os, const MetricsTrace& trace);
std::vector<StepRecord> read_steps_csv(std::istream& is);

/// Companion file paths for a trace CSV: foo.csv -> foo.steps.csv, foo.bounds.txt.
std::filesystem::path steps_path_for(const std::filesystem::path& trace_csv);
std::filesystem::path report_path_for(const std::filesystem::path& trace_csv);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace pcasgd
