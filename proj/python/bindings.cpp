#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pcasgd/analysis.hpp"
#include "pcasgd/config.hpp"
#include "pcasgd/harness.hpp"
#include "pcasgd/optimizer.hpp"
#include "pcasgd/topology.hpp"

namespace py = pybind11;
using namespace pcasgd;

namespace {

py::dict trace_columns(const MetricsTrace& trace) {
  const auto n = static_cast<Eigen::Index>(trace.rows.size());
  Eigen::VectorXd loss(n), grad(n), cons(n), theta(n);
  Eigen::VectorXi t(n), pred(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& r = trace.rows[static_cast<std::size_t>(k)];
    t(k) = r.t;
    loss(k) = r.loss;
    grad(k) = r.grad_sq_norm;
    cons(k) = r.consensus_dev;
    theta(k) = r.theta;
    pred(k) = r.pv_pred_count;
  }
  py::dict d;
  d["t"] = t;
  d["loss"] = loss;
  d["grad_sq_norm"] = grad;
  d["consensus_dev"] = cons;
  d["theta"] = theta;
  d["pv_pred_count"] = pred;
  d["status"] = to_string(trace.status);
  d["divergence_iteration"] = trace.divergence_iteration;
  d["final_loss"] = trace.final_loss;
  d["final_states"] = trace.final_states;
  return d;
}

// Runs one (variant, seed) of a config; returns the trace and, when the run
// completed, the estimated bound constants and report text.
py::dict run_config(const ExperimentConfig& cfg, const std::string& variant, std::uint64_t seed, int threads) {
  const Variant v = variant.empty() ? cfg.variants.front() : parse_variant(variant);
  const Topology topo = cfg.make_topology();
  const Objective obj = cfg.make_objective();
  const AlgorithmConfig alg = cfg.algorithm_for(v);
  MetricsTrace trace;
  {
    py::gil_scoped_release release;
    trace = run_experiment(topo, obj, alg, seed, RunOptions{threads, true});
  }
  py::dict d = trace_columns(trace);
  if (trace.status == RunStatus::completed) {
    const BoundInputs in = estimate_constants(trace, obj, topo, alg);
    d["bounds"] = in;
    d["report"] = format_bound_report(
        make_bound_report(in, trace.rows.front().loss - obj.minimum(), alg.iterations, cfg.r_formula));
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Delay-tolerant decentralized SGD simulator and bound calculators";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<Topology>(m, "Topology")
      .def(py::init([](int n, const std::vector<std::pair<int, int>>& edges,
                       std::vector<std::vector<int>> clusters, int delay) {
             std::vector<Edge> es;
             for (const auto& [a, b] : edges) es.push_back({a, b});
             return Topology(n, std::move(es), std::move(clusters), delay);
           }),
           py::arg("n_agents"), py::arg("edges"), py::arg("clusters"), py::arg("delay"))
      .def_static("complete", &Topology::complete, py::arg("n_agents"), py::arg("clusters"), py::arg("delay"))
      .def_static("ring", &Topology::ring, py::arg("n_agents"), py::arg("clusters"), py::arg("delay"))
      .def_property_readonly("n_agents", &Topology::n_agents)
      .def_property_readonly("delay", &Topology::delay)
      .def_property_readonly("clusters", &Topology::clusters)
      .def("connected", &Topology::connected)
      .def("reliable_neighbors", &Topology::reliable_neighbors)
      .def("unreliable_neighbors", &Topology::unreliable_neighbors);

  m.def("predicting_matrix", [](const Topology& t) { return build_predicting_matrix(t).weights; });
  m.def("clipping_matrix", [](const Topology& t) { return build_clipping_matrix(t).weights; });
  m.def("mask_matrix", [](const Topology& t) { return build_mask_matrix(t, build_predicting_matrix(t)).weights; });
  m.def("second_eigenvalue", [](const Eigen::MatrixXd& w) { return second_eigenvalue(w); });
  m.def("effective_delta2",
        [](const std::vector<double>& thetas, double e2, double e2t) { return effective_delta2(thetas, e2, e2t); },
        py::arg("thetas"), py::arg("e2"), py::arg("e2_tilde"));

  m.def("delay_compensated_gradient",
        [](const Eigen::VectorXd& g, double lambda, int tau, const std::vector<Eigen::VectorXd>& traj) {
          return Eigen::VectorXd(delay_compensated_gradient(g, lambda, tau, traj));
        },
        py::arg("g_stale"), py::arg("lambda_"), py::arg("tau"), py::arg("trajectory"));
  m.def("pv_select",
        [](const Eigen::VectorXd& x_pre, const Eigen::VectorXd& x_cli, const Eigen::VectorXd& x,
           const Eigen::VectorXd& g, const std::string& sign) {
          const auto [choice, out] = pv_select(x_pre, x_cli, x, g, parse_criterion_sign(sign));
          return py::make_tuple(to_string(choice), Eigen::VectorXd(out));
        },
        py::arg("x_pre"), py::arg("x_cli"), py::arg("x"), py::arg("g"), py::arg("sign") = "paper");

  py::class_<BoundInputs>(m, "BoundInputs")
      .def(py::init<>())
      .def_readwrite("G", &BoundInputs::G)
      .def_readwrite("B", &BoundInputs::B)
      .def_readwrite("sigma", &BoundInputs::sigma)
      .def_readwrite("M", &BoundInputs::M)
      .def_readwrite("mu", &BoundInputs::mu)
      .def_readwrite("gamma_m", &BoundInputs::gamma_m)
      .def_readwrite("xi_m", &BoundInputs::xi_m)
      .def_readwrite("eps", &BoundInputs::eps)
      .def_readwrite("eps_D", &BoundInputs::eps_D)
      .def_readwrite("lambda_", &BoundInputs::lambda)
      .def_readwrite("eta", &BoundInputs::eta)
      .def_readwrite("tau", &BoundInputs::tau)
      .def_readwrite("theta_m", &BoundInputs::theta_m)
      .def_readwrite("theta_min", &BoundInputs::theta_min)
      .def_readwrite("e2", &BoundInputs::e2)
      .def_readwrite("e2_tilde", &BoundInputs::e2_tilde)
      .def_property_readonly("delta2", &BoundInputs::delta2)
      .def("validate", &BoundInputs::validate);

  m.def("lemma1_bound", &lemma1_bound);
  m.def("theorem1_Q", [](const BoundInputs& in) {
    const auto c = theorem1_constants(in);
    py::dict d;
    d["C1"] = c.C1;
    d["C_r"] = c.C_r;
    d["C2"] = c.C2;
    d["Q"] = c.Q;
    return d;
  });
  m.def("theorem1_envelope", &theorem1_envelope, py::arg("f1_minus_fstar"), py::arg("Q"), py::arg("mu"),
        py::arg("eta"), py::arg("tau"), py::arg("t"));
  m.def("theorem2_R",
        [](const BoundInputs& in, const std::string& formula) { return theorem2_R(in, parse_r_formula(formula)); },
        py::arg("inputs"), py::arg("formula") = "main");
  m.def("theorem2_envelope", &theorem2_envelope, py::arg("f1_minus_fstar"), py::arg("R"), py::arg("eta"),
        py::arg("T"));

  m.def(
      "run",
      [](const std::string& config, const std::vector<std::string>& overrides, const std::string& variant,
         std::optional<std::uint64_t> seed, int threads) {
        const ExperimentConfig cfg = load_config(resolve_config_path(config), overrides);
        return run_config(cfg, variant, seed.value_or(cfg.seeds.front()), threads);
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("variant") = "",
      py::arg("seed") = py::none(), py::arg("threads") = 1,
      "Run one variant of a config file or preset name; returns trace columns as arrays.");
  m.def(
      "run_text",
      [](const std::string& text, const std::vector<std::string>& overrides, const std::string& variant,
         std::optional<std::uint64_t> seed, int threads) {
        const ExperimentConfig cfg = parse_config(text, overrides);
        return run_config(cfg, variant, seed.value_or(cfg.seeds.front()), threads);
      },
      py::arg("text"), py::arg("overrides") = std::vector<std::string>{}, py::arg("variant") = "",
      py::arg("seed") = py::none(), py::arg("threads") = 1);
  m.def("preset_directory", &preset_directory);
}
