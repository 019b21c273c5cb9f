#include "pcasgd/harness.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "pcasgd/analysis.hpp"
#include "pcasgd/io.hpp"

#ifndef PCASGD_DEFAULT_PRESET_DIR
#define PCASGD_DEFAULT_PRESET_DIR "presets"
#endif

namespace pcasgd {

namespace fs = std::filesystem;

namespace {

std::string vector_text(const Eigen::VectorXd& v) {
  std::string s;
  for (int k = 0; k < v.size(); ++k) {
    if (k) s += ';';
    s += format_double(v(k));
  }
  return s;
}

struct RunOutput {
  MetricsTrace trace;
  std::string report;
};

RunOutput execute(const ExperimentConfig& cfg, Variant variant, std::uint64_t seed) {
  const Topology topo = cfg.make_topology();
  const Objective obj = cfg.make_objective();
  RunOutput out;
  out.trace = run_experiment(topo, obj, cfg.algorithm_for(variant), seed);
  out.report = run_report(out.trace, cfg, variant);
  return out;
}

void write_run_files(const fs::path& stem, const RunOutput& run) {
  fs::path csv = stem;
  csv += ".csv";
  std::ostringstream trace;
  write_trace_csv(trace, run.trace);
  write_file(csv, trace.str());
  std::ostringstream steps;
  write_steps_csv(steps, run.trace);
  write_file(steps_path_for(csv), steps.str());
  write_file(report_path_for(csv), run.report);
}

std::string axis_key(const std::string& axis) {
  if (axis == "tau") return "topology.delay";
  if (axis == "theta") return "algorithm.theta";
  if (axis == "variant") return "algorithm.variant";
  throw ConfigError("sweep axis must be tau, theta or variant (got '" + axis + "')");
}

}  // namespace

fs::path preset_directory() {
  if (const char* env = std::getenv("PCASGD_PRESET_DIR"); env && *env) return env;
  return PCASGD_DEFAULT_PRESET_DIR;
}

fs::path resolve_config_path(const std::string& arg) {
  const fs::path direct(arg);
  if (fs::exists(direct)) return direct;
  const fs::path preset = preset_directory() / (arg + ".toml");
  if (fs::exists(preset)) return preset;
  return direct;
}

int threads_from_env() {
  const char* env = std::getenv("PCASGD_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) return 1;
  return static_cast<int>(std::min<long>(v, 256));
}

std::string run_stem(Variant variant, std::uint64_t seed) {
  return to_string(variant) + "_seed" + std::to_string(seed);
}

SweepCell summarize(const MetricsTrace& trace, int n_agents) {
  SweepCell c;
  c.status = trace.status;
  c.final_loss = trace.final_loss;
  double grad = 0.0;
  long pred = 0;
  for (const auto& r : trace.rows) {
    grad += r.grad_sq_norm;
    c.max_consensus_dev = std::max(c.max_consensus_dev, r.consensus_dev);
    pred += r.pv_pred_count;
  }
  if (!trace.rows.empty()) {
    c.avg_grad_sq_norm = grad / static_cast<double>(trace.rows.size());
    c.pv_pred_freq = static_cast<double>(pred) /
                     (static_cast<double>(trace.rows.size()) * n_agents);
  }
  return c;
}

std::string run_report(const MetricsTrace& trace, const ExperimentConfig& cfg, Variant variant) {
  std::ostringstream os;
  os << "variant=" << to_string(variant) << '\n';
  os << "status=" << to_string(trace.status) << '\n';
  os << "divergence_iteration=" << trace.divergence_iteration << '\n';
  os << "rows=" << trace.rows.size() << '\n';
  os << "final_loss=" << format_double(trace.final_loss) << '\n';
  for (std::size_t i = 0; i < trace.final_states.size(); ++i) {
    os << "final_state." << i + 1 << '=' << vector_text(trace.final_states[i]) << '\n';
  }
  if (trace.status != RunStatus::completed || trace.rows.empty()) return os.str();

  const Topology topo = cfg.make_topology();
  const Objective obj = cfg.make_objective();
  const BoundInputs in = estimate_constants(trace, obj, topo, cfg.algorithm_for(variant));
  const double f1 = trace.rows.front().loss - obj.minimum();
  os << format_bound_report(make_bound_report(in, f1, static_cast<int>(trace.rows.size()),
                                              cfg.r_formula));
  return os.str();
}

int cli_run(const RunRequest& req, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(resolve_config_path(req.config), req.overrides);
    if (req.seed) cfg.seeds = {*req.seed};
    if (req.out) cfg.out_dir = *req.out;
    cfg.make_topology();
    build_predicting_matrix(cfg.make_topology(), cfg.algorithm.mixing);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  }

  bool diverged = false;
  for (Variant variant : cfg.variants) {
    for (std::uint64_t seed : cfg.seeds) {
      RunOutput run;
      try {
        run = execute(cfg, variant, seed);
        write_run_files(fs::path(cfg.out_dir) / run_stem(variant, seed), run);
      } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::config_error;
      }
      out << "variant=" << to_string(variant) << " seed=" << seed
          << " status=" << to_string(run.trace.status) << " rows=" << run.trace.rows.size()
          << " final_loss=" << format_double(run.trace.final_loss)
          << " wall_seconds=" << run.trace.wall_seconds << '\n';
      if (run.trace.status == RunStatus::diverged) {
        diverged = true;
        err << "divergence: non-finite parameters at iteration "
            << run.trace.divergence_iteration << '\n';
      }
    }
  }
  return diverged ? exit_code::divergence : exit_code::ok;
}

int cli_sweep(const SweepRequest& req, std::ostream& out, std::ostream& err) {
  struct Cell {
    std::string value;
    ExperimentConfig cfg;
    Variant variant;
    std::uint64_t seed;
    SweepCell summary;
    std::string error;
  };
  std::vector<Cell> cells;
  fs::path root;
  try {
    const std::string key = axis_key(req.axis);
    if (req.values.empty()) throw ConfigError("sweep needs at least one value");
    const fs::path path = resolve_config_path(req.config);
    for (const auto& value : req.values) {
      auto overrides = req.overrides;
      overrides.push_back(key + "=" + value);
      ExperimentConfig cfg = load_config(path, overrides);
      if (req.out) cfg.out_dir = *req.out;
      build_predicting_matrix(cfg.make_topology(), cfg.algorithm.mixing);
      root = fs::path(cfg.out_dir);
      for (Variant variant : cfg.variants) {
        for (std::uint64_t seed : cfg.seeds) cells.push_back({value, cfg, variant, seed, {}, {}});
      }
    }
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      Cell& c = cells[i];
      try {
        const RunOutput run = execute(c.cfg, c.variant, c.seed);
        const fs::path dir = root / ("sweep-" + req.axis) / (req.axis + "-" + c.value);
        write_run_files(dir / run_stem(c.variant, c.seed), run);
        c.summary = summarize(run.trace, c.cfg.topology.agents);
      } catch (const std::exception& e) {
        c.error = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(req.threads, static_cast<int>(cells.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::ostringstream summary;
  summary << kSweepHeader << '\n';
  bool diverged = false;
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      err << "error: " << c.error << '\n';
      return exit_code::config_error;
    }
    const auto& s = c.summary;
    diverged = diverged || s.status == RunStatus::diverged;
    summary << req.axis << ',' << c.value << ',' << to_string(c.variant) << ',' << c.seed << ','
            << to_string(s.status) << ',' << format_double(s.final_loss) << ','
            << format_double(s.avg_grad_sq_norm) << ',' << format_double(s.max_consensus_dev)
            << ',' << format_double(s.pv_pred_freq) << '\n';
  }
  const fs::path summary_path = root / ("sweep-" + req.axis + "-summary.csv");
  write_file(summary_path, summary.str());
  out << "cells=" << cells.size() << " summary=" << summary_path.string() << '\n';
  return diverged ? exit_code::divergence : exit_code::ok;
}

int cli_validate(const std::string& config, const std::vector<std::string>& overrides,
                 std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(resolve_config_path(config), overrides);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  const Topology topo = cfg.make_topology();
  const MixingRule rule = cfg.algorithm.mixing;
  if (!topo.connected()) {
    out << "FAIL connectivity: graph not connected\n";
    err << "graph not connected\n";
    return exit_code::check_failed;
  }

  MixingMatrix w, w_tilde;
  try {
    w = build_predicting_matrix(topo, rule);
    w_tilde = build_clipping_matrix(topo, rule);
  } catch (const std::exception& e) {
    out << "FAIL construction: " << e.what() << '\n';
    err << e.what() << '\n';
    return exit_code::check_failed;
  }
  const MixingMatrix mask = build_mask_matrix(topo, w);
  const bool pd = rule == MixingRule::metropolis;

  bool ok = true;
  auto report = [&](const std::string& label, const MixingMatrix& m, const MixingMatrix* ref) {
    out << "[" << label << "] lazy=" << (m.lazy ? "yes" : "no") << '\n';
    out << "  row_sums=" << vector_text(m.weights.rowwise().sum()) << '\n';
    out << "  col_sums=" << vector_text(m.weights.colwise().sum().transpose()) << '\n';
    for (const auto& c : check_mixing_matrix(m, topo, pd, ref)) {
      out << "  " << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
      if (!c.passed) {
        ok = false;
        err << "check failed: " << label << " " << c.name << '\n';
      }
    }
  };
  report("W", w, nullptr);
  report("W_tilde", w_tilde, nullptr);
  report("W_prime", mask, &w);

  const double e2 = second_eigenvalue(w.weights);
  const double e2t = second_eigenvalue(w_tilde.weights);
  const double zero[] = {0.0};
  const double one[] = {1.0};
  const double d0 = effective_delta2(zero, e2, e2t);
  const double d1 = effective_delta2(one, e2, e2t);
  out << "e2=" << format_double(e2) << '\n';
  out << "e2_tilde=" << format_double(e2t) << '\n';
  out << "delta2(theta=0)=" << format_double(d0) << '\n';
  out << "delta2(theta=1)=" << format_double(d1) << '\n';
  const bool gap = e2 < 1.0;
  out << (gap ? "PASS" : "FAIL") << " spectral_gap (e2 < 1)\n";
  if (!gap) {
    ok = false;
    err << "check failed: spectral_gap\n";
  }
  if (e2t >= 1.0 - 1e-12) {
    out << "note: clipped graph has " << topo.clusters().size()
        << " components, so delta2 < 1 needs every theta > 0\n";
  }
  out << (ok ? "OK" : "FAILED") << '\n';
  return ok ? exit_code::ok : exit_code::check_failed;
}

int cli_bounds(const fs::path& trace_csv, const std::string& config,
               const std::vector<std::string>& overrides, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(resolve_config_path(config), overrides);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  MetricsTrace trace;
  try {
    std::ifstream rows(trace_csv);
    if (!rows) throw std::runtime_error("cannot read " + trace_csv.string());
    trace.rows = read_trace_csv(rows);
    const fs::path steps_path = steps_path_for(trace_csv);
    std::ifstream steps(steps_path);
    if (!steps) throw std::runtime_error("cannot read " + steps_path.string());
    trace.steps = read_steps_csv(steps);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  if (static_cast<int>(trace.rows.size()) != cfg.algorithm.iterations ||
      trace.steps.size() != trace.rows.size()) {
    err << "divergence: trace has " << trace.rows.size() << " rows, expected "
        << cfg.algorithm.iterations << '\n';
    return exit_code::divergence;
  }
  try {
    const Topology topo = cfg.make_topology();
    const Objective obj = cfg.make_objective();
    const BoundInputs in = estimate_constants(trace, obj, topo, cfg.algorithm);
    const double f1 = trace.rows.front().loss - obj.minimum();
    out << format_bound_report(
        make_bound_report(in, f1, static_cast<int>(trace.rows.size()), cfg.r_formula));
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  return exit_code::ok;
}

}  // namespace pcasgd
