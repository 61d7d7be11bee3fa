#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "drcox/aipcw.hpp"
#include "drcox/data.hpp"
#include "drcox/sim.hpp"
#include "drcox/study.hpp"
#include "drcox/survival.hpp"

namespace py = pybind11;
using namespace drcox;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<double>& v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

Dataset make_dataset(Array time, py::array_t<int, py::array::forcecast> delta,
                     py::array_t<int, py::array::forcecast> group, std::optional<Array> z,
                     std::optional<double> tau) {
  const auto n = static_cast<std::size_t>(time.size());
  if (static_cast<std::size_t>(delta.size()) != n || static_cast<std::size_t>(group.size()) != n) {
    throw ValidationError("time, delta and group must have the same length");
  }
  std::vector<double> t(time.data(), time.data() + n);
  std::vector<char> d(n), a(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = static_cast<char>(delta.data()[i] != 0);
    a[i] = static_cast<char>(group.data()[i] != 0);
  }
  std::vector<double> cov;
  std::size_t p = 0;
  if (z) {
    if (z->ndim() != 2 || static_cast<std::size_t>(z->shape(0)) != n) {
      throw ValidationError("z must be an (n, p) array");
    }
    p = static_cast<std::size_t>(z->shape(1));
    cov.assign(z->data(), z->data() + n * p);
  }
  double max_time = 0.0;
  for (double x : t) max_time = std::max(max_time, x);
  return Dataset(std::move(t), std::move(d), std::move(a), std::move(cov), p, tau.value_or(max_time));
}

py::dict estimate_dict(const EstimateResult& r) {
  py::dict out;
  out["estimator"] = r.estimator;
  out["beta"] = r.beta;
  out["se"] = r.se;
  out["converged"] = r.converged;
  out["iterations"] = r.iterations;
  out["message"] = r.message;
  out["min_censoring_survival"] = r.min_censoring_survival;
  out["trimmed_share"] = r.trimmed_share;
  return out;
}

py::dict curve_dict(const StepCurve& c) {
  py::dict out;
  out["times"] = to_array(c.jump_times());
  out["values"] = to_array(c.values_after());
  out["value_at_zero"] = c.value_at_zero();
  return out;
}

Target parse_target(const std::string& name) {
  if (name == "failure") return Target::failure;
  if (name == "censoring") return Target::censoring;
  throw ValidationError("target must be 'failure' or 'censoring', got '" + name + "'");
}

}  // namespace

PYBIND11_MODULE(_drcox, m) {
  m.doc() = "Doubly robust hazard ratio estimation under informative censoring";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("time"), py::arg("delta"), py::arg("group"),
           py::arg("z") = py::none(), py::arg("tau") = py::none())
      .def("__len__", &Dataset::size)
      .def_property_readonly("tau", &Dataset::tau)
      .def_property_readonly("dim", &Dataset::dim)
      .def_property_readonly("time", [](const Dataset& d) {
        return to_array(std::vector<double>(d.times().begin(), d.times().end()));
      })
      .def_property_readonly("delta", [](const Dataset& d) {
        std::vector<double> v(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) v[i] = d.delta(i) ? 1.0 : 0.0;
        return to_array(v);
      })
      .def_property_readonly("group", [](const Dataset& d) {
        std::vector<double> v(d.size());
        for (std::size_t i = 0; i < d.size(); ++i) v[i] = d.group(i) ? 1.0 : 0.0;
        return to_array(v);
      })
      .def_property_readonly("z", [](const Dataset& d) {
        Array out({static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.dim())});
        auto w = out.mutable_unchecked<2>();
        for (std::size_t i = 0; i < d.size(); ++i) {
          for (std::size_t j = 0; j < d.dim(); ++j) w(i, j) = d.z(i)[j];
        }
        return out;
      })
      .def("to_csv", [](const Dataset& d) { return to_csv(d); });

  m.def("read_csv", &read_csv, py::arg("path"), py::arg("tau") = 0.0);
  m.def("parse_csv", &parse_csv, py::arg("text"), py::arg("tau") = 0.0);

  m.def(
      "product_limit",
      [](const Dataset& d, const std::string& target) {
        return curve_dict(product_limit(d, parse_target(target)));
      },
      py::arg("data"), py::arg("target") = "failure");
  m.def(
      "nelson_aalen",
      [](const Dataset& d, const std::string& target) {
        return curve_dict(nelson_aalen(d, parse_target(target)));
      },
      py::arg("data"), py::arg("target") = "failure");

  m.def(
      "generate",
      [](const std::string& scenario, std::size_t n, std::uint64_t seed, double tau, double beta) {
        ScenarioSpec spec;
        spec.scenario = parse_scenario(scenario);
        spec.n = n;
        spec.seed = seed;
        spec.tau = tau;
        spec.beta_true = beta;
        auto sim = generate(spec);
        return py::make_tuple(std::move(sim.observed), std::move(sim.full));
      },
      py::arg("scenario") = "one", py::arg("n") = 500, py::arg("seed") = 1, py::arg("tau") = 1.0,
      py::arg("beta") = -1.0, "Returns (observed, full) datasets.");

  m.def(
      "fit",
      [](const Dataset& d, const std::string& estimators, std::size_t folds, std::uint64_t seed,
         double trim, int n_trees) {
        FitOptions options;
        options.folds = folds;
        options.seed = seed;
        options.trim = trim;
        options.forest.n_trees = n_trees;
        options.forest.validate();
        py::list out;
        for (const auto& spec : parse_estimator_list(estimators)) {
          EstimateResult r;
          {
            py::gil_scoped_release release;
            r = run_estimator(spec, d, nullptr, options);
          }
          out.append(estimate_dict(r));
        }
        return out;
      },
      py::arg("data"), py::arg("estimators") = "mple,ipcw-cox,aipcw-cox-cox", py::arg("folds") = 5,
      py::arg("seed") = 1, py::arg("trim") = 0.01, py::arg("n_trees") = 250);

  m.def(
      "aipcw_baseline",
      [](const Dataset& d, std::size_t folds, std::uint64_t seed, double trim) {
        AipcwSettings s;
        s.failure = NuisanceSpec::cox(trim);
        s.censoring = NuisanceSpec::cox(trim);
        s.folds = folds;
        const AipcwFit fit = estimate_aipcw(d, s, seed);
        py::dict out = curve_dict(fit.baseline);
        out["beta"] = fit.beta_hat;
        out["se"] = fit.se;
        out["converged"] = fit.converged;
        return out;
      },
      py::arg("data"), py::arg("folds") = 5, py::arg("seed") = 1, py::arg("trim") = 0.01,
      "Cox-Cox AIPCW fit with its cumulative baseline hazard.");

  m.def(
      "simulate",
      [](const std::string& config_json, std::optional<std::size_t> threads) {
        StudyConfig config = StudyConfig::from_json(config_json);
        if (threads) config.threads = *threads;
        config.validate();
        SimulationReport report;
        {
          py::gil_scoped_release release;
          report = summarize(config, run_replications(config, config.threads));
        }
        return report.to_csv();
      },
      py::arg("config_json"), py::arg("threads") = py::none(), "Runs a study; returns the report CSV.");

  m.def(
      "config_hash",
      [](const std::string& config_json) { return config_hash(StudyConfig::from_json(config_json)); },
      py::arg("config_json"));
}
