#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stalesim/coherence.hpp"
#include "stalesim/config.hpp"
#include "stalesim/delay.hpp"
#include "stalesim/experiment.hpp"

namespace py = pybind11;
using namespace stalesim;

namespace {

ExperimentConfig from_text(const std::string& text) { return parse_experiment(KeyValueConfig::parse_string(text)); }

py::dict summary_dict(const RunSummary& s) {
  py::dict d;
  d["run_id"] = s.run_id;
  d["fingerprint"] = s.fingerprint;
  d["workload"] = s.workload;
  d["optimizer"] = s.optimizer;
  d["staleness"] = s.staleness;
  d["workers"] = s.workers;
  d["seed"] = s.seed;
  d["batches_to_target"] = s.batches_to_target;
  d["final_metric"] = s.final_metric;
  return d;
}

py::tuple command(int (*fn)(const std::filesystem::path&, std::ostream&, std::ostream&), const std::string& path) {
  std::ostringstream out, err;
  int code;
  {
    py::gil_scoped_release release;
    code = fn(path, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_stalesim, m) {
  m.doc() = "Deterministic simulator of data-parallel training under bounded staleness";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);

  m.def("normalize_config", [](const std::string& text) { return to_key_values(from_text(text)).serialize(); },
        py::arg("text"), "Parse a config and return its canonical `key = value` form.");
  m.def("fingerprint", [](const std::string& text) { return fingerprint(from_text(text)); }, py::arg("text"));
  m.def("run_id", &make_run_id, py::arg("fingerprint"), py::arg("seed"));

  m.def(
      "run",
      [](const std::string& text, std::uint64_t seed) {
        const auto cfg = from_text(text);
        RunOutcome outcome;
        {
          py::gil_scoped_release release;
          DatasetCache cache;
          outcome = execute_run(cfg, seed, cache);
        }
        py::list events;
        for (const auto& e : outcome.trace.events) events.append(py::make_tuple(e.batches, e.metric, e.value));
        py::dict d;
        d["summary"] = summary_dict(outcome.summary);
        d["events"] = events;
        d["diverged"] = outcome.trace.diverged;
        return d;
      },
      py::arg("text"), py::arg("seed"), "Run one seed of a config; returns the summary and (batches, metric, value) events.");

  m.def(
      "sample_delays",
      [](int staleness, int workers, std::uint64_t seed) {
        Rng rng = make_rng(seed, Stream::Delay);
        const auto mat = sample_iteration_delays(UniformBounded{staleness}, workers, rng);
        std::vector<std::vector<int>> rows;
        for (int p = 0; p < workers; ++p) rows.emplace_back(mat.row(p).begin(), mat.row(p).end());
        return rows;
      },
      py::arg("staleness"), py::arg("workers"), py::arg("seed"));
  m.def(
      "match_mean_geometric",
      [](int staleness, double straggler_success, int straggler_count, int workers) {
        return match_mean_geometric(staleness, straggler_success, straggler_count, workers).nonstraggler_success;
      },
      py::arg("staleness"), py::arg("straggler_success"), py::arg("straggler_count"), py::arg("workers"));

  auto theorem = [](double mu, double lipschitz, double sigma2, int staleness, double f0, double f_inf,
                    std::uint64_t horizon) {
    TheoremParams p{mu, lipschitz, sigma2, staleness, f0, f_inf, horizon};
    p.validate();
    return p;
  };
  m.def(
      "theorem_bound",
      [theorem](double mu, double lipschitz, double sigma2, int staleness, double f0, double f_inf,
                std::uint64_t horizon) { return theorem_bound(theorem(mu, lipschitz, sigma2, staleness, f0, f_inf, horizon)); },
      py::arg("mu"), py::arg("lipschitz"), py::arg("sigma2"), py::arg("staleness"), py::arg("f0"), py::arg("f_inf"),
      py::arg("horizon"));
  m.def(
      "optimal_staleness",
      [theorem](double mu, double lipschitz, double sigma2, double f0, double f_inf, std::uint64_t horizon) {
        return optimal_staleness(theorem(mu, lipschitz, sigma2, 1, f0, f_inf, horizon));
      },
      py::arg("mu"), py::arg("lipschitz"), py::arg("sigma2"), py::arg("f0"), py::arg("f_inf"), py::arg("horizon"));
  m.def("theorem_stepsize", &theorem_stepsize, py::arg("k"), py::arg("mu"), py::arg("staleness"), py::arg("lipschitz"));

  m.def("cmd_run", [](const std::string& p) { return command(&cmd_run, p); }, py::arg("config"));
  m.def("cmd_verify_theorem", [](const std::string& p) { return command(&cmd_verify_theorem, p); }, py::arg("config"));
  m.def("cmd_probe", [](const std::string& p) { return command(&cmd_probe, p); }, py::arg("config"));
  m.def("cmd_report", [](const std::string& p) { return command(&cmd_report, p); }, py::arg("outdir"));
  m.def(
      "cmd_sweep",
      [](const std::string& p, int jobs) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cmd_sweep(p, jobs, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("config"), py::arg("jobs") = 1);
}
