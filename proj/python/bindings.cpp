#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "icldyn/errors.hpp"
#include "icldyn/metrics.hpp"
#include "icldyn/reference_lm.hpp"
#include "icldyn/runner.hpp"
#include "icldyn/server.hpp"
#include "icldyn/tokenalign.hpp"

namespace py = pybind11;
using namespace icldyn;

namespace {

/// A reference backend served over HTTP, with everything it borrows.
struct ReferenceServer {
  ExperimentConfig config;
  TaskDataset dataset;
  std::unique_ptr<BackendFactory> factory;
  std::unique_ptr<BackendServer> server;

  explicit ReferenceServer(const std::string& config_json) : config(parse_config(config_json)) {
    if (config.backend.kind == "remote") throw ConfigError("cannot serve a remote backend");
    dataset = config.task.load();
    factory = std::make_unique<BackendFactory>(config.backend, dataset, config.task.make_template(),
                                               config.transforms);
    server = std::make_unique<BackendServer>(factory->get(dataset.class_names()));
    server->start();
  }
};

py::dict curves_dict(const MetricCurves& c) {
  py::dict d;
  d["runs"] = c.runs;
  d["accuracy"] = c.accuracy;
  d["loglik"] = c.log_likelihood;
  d["entropy"] = c.entropy;
  d["accuracy_se"] = c.accuracy_se;
  d["loglik_se"] = c.log_likelihood_se;
  d["entropy_se"] = c.entropy_se;
  return d;
}

py::dict row_dict(const SummaryRow& r) {
  py::dict d;
  d["backend"] = r.backend;
  d["task"] = r.task;
  d["variant"] = r.variant;
  d["metric"] = std::string(metric_name(r.metric));
  d["size"] = r.size;
  d["runs"] = r.runs;
  d["default_mean"] = r.default_stats.mean;
  d["variant_mean"] = r.variant_stats.mean;
  d["mean_difference"] = r.cell.mean_difference;
  d["standard_error"] = r.cell.standard_error;
  d["bold"] = r.cell.bold;
  d["gray"] = r.cell.gray;
  return d;
}

}  // namespace

PYBIND11_MODULE(_icldyn, m) {
  m.doc() = "In-context learning dynamics: single-pass curves, label transforms and significance.";

  // Later registrations are tried first, so subclasses follow their base.
  auto& error = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<MisalignmentError>(m, "MisalignmentError", error.ptr());
  auto& backend_error = py::register_exception<BackendError>(m, "BackendError", error.ptr());
  py::register_exception<TokenLimitError>(m, "TokenLimitError", backend_error.ptr());

  py::enum_<WhitespaceMode>(m, "WhitespaceMode")
      .value("merge", WhitespaceMode::merge)
      .value("dummy_prefix", WhitespaceMode::dummy_prefix);
  py::enum_<Metric>(m, "Metric")
      .value("accuracy", Metric::accuracy)
      .value("loglik", Metric::log_likelihood)
      .value("entropy", Metric::entropy);
  py::enum_<Pairing>(m, "Pairing")
      .value("paired", Pairing::paired)
      .value("independent", Pairing::independent);
  py::enum_<ChangepointMode>(m, "ChangepointMode")
      .value("default_to_flipped", ChangepointMode::default_to_flipped)
      .value("flipped_to_default", ChangepointMode::flipped_to_default)
      .value("alternating", ChangepointMode::alternating);

  py::class_<TaskDataset>(m, "TaskDataset")
      .def_property_readonly("name", &TaskDataset::name)
      .def_property_readonly("class_names", &TaskDataset::class_names)
      .def_property_readonly("class_frequencies", &TaskDataset::class_frequencies)
      .def_property_readonly("arity", &TaskDataset::arity)
      .def("__len__", &TaskDataset::size)
      .def("example", [](const TaskDataset& d, std::size_t i) {
        const auto& ex = d[i];
        return py::make_tuple(ex.inputs, ex.label);
      });
  m.def("load_dataset", &load_dataset, py::arg("path"));
  m.def(
      "synthetic_task",
      [](std::size_t size, std::uint64_t seed) {
        SyntheticTaskOptions o;
        o.size = size;
        o.seed = seed;
        return synthetic_task(o);
      },
      py::arg("size") = 200, py::arg("seed") = 0);

  py::class_<WordTokenizer, std::shared_ptr<WordTokenizer>>(m, "WordTokenizer")
      .def(py::init<std::map<std::string, TokenId>, WhitespaceMode>(), py::arg("pieces"),
           py::arg("mode"))
      .def_static(
          "fit",
          [](const std::vector<std::string>& corpus, WhitespaceMode mode) {
            return std::make_shared<WordTokenizer>(WordTokenizer::fit(corpus, mode));
          },
          py::arg("corpus"), py::arg("mode"))
      .def("tokenize", &WordTokenizer::tokenize, py::arg("text"))
      .def("detokenize",
           [](const WordTokenizer& t, const TokenIds& ids) { return t.detokenize(ids); })
      .def_property_readonly("vocab_size", &WordTokenizer::vocab_size);
  m.def(
      "resolve_label_tokens",
      [](const WordTokenizer& tok, const std::vector<std::string>& class_names,
         const std::string& template_name) {
        return resolve_label_tokens(tok, template_by_name(template_name), class_names)
            .first_tokens();
      },
      py::arg("tokenizer"), py::arg("class_names"), py::arg("template") = "sentence",
      "First in-context token id of each class name.");

  py::class_<MetricTriple>(m, "MetricTriple")
      .def_readonly("accuracy", &MetricTriple::accuracy)
      .def_readonly("loglik", &MetricTriple::log_likelihood)
      .def_readonly("entropy", &MetricTriple::entropy);
  py::class_<SampleStats>(m, "SampleStats")
      .def(py::init([](double mean, double se, std::size_t n) { return SampleStats{mean, se, n}; }),
           py::arg("mean"), py::arg("standard_error"), py::arg("n") = 0)
      .def_readonly("mean", &SampleStats::mean)
      .def_readonly("standard_error", &SampleStats::standard_error)
      .def_readonly("n", &SampleStats::n);
  py::class_<SignificanceCell>(m, "SignificanceCell")
      .def_readonly("mean_difference", &SignificanceCell::mean_difference)
      .def_readonly("standard_error", &SignificanceCell::standard_error)
      .def_readonly("bold", &SignificanceCell::bold)
      .def_readonly("gray", &SignificanceCell::gray);

  m.def(
      "score_prediction",
      [](const std::vector<double>& probs, std::size_t true_class) {
        const auto s = score_prediction(probs, true_class);
        return py::make_tuple(s.correct, s.log_likelihood, s.entropy);
      },
      py::arg("probs"), py::arg("true_class"), "(correct, loglik, entropy) of one prediction.");
  m.def(
      "guessing_baseline",
      [](const std::vector<double>& f) { return guessing_baseline(f); }, py::arg("frequencies"));
  m.def(
      "calibrate",
      [](const std::vector<double>& p, const std::vector<double>& prior) { return calibrate(p, prior); },
      py::arg("probs"), py::arg("prior"));
  m.def(
      "moving_average",
      [](const std::vector<double>& s, std::size_t w, bool trailing) {
        return moving_average(s, w, trailing ? Smoothing::trailing : Smoothing::centered);
      },
      py::arg("series"), py::arg("window"), py::arg("trailing") = false);
  m.def(
      "bootstrap_ci",
      [](const std::vector<double>& v, double level, std::size_t resamples, std::uint64_t seed) {
        const auto ci = bootstrap_ci(v, BootstrapOptions{level, resamples, seed});
        return py::make_tuple(ci.low, ci.high);
      },
      py::arg("values"), py::arg("level") = 0.99, py::arg("resamples") = 10000, py::arg("seed") = 0);
  m.def(
      "difference_stats",
      [](const std::vector<double>& a, const std::vector<double>& b, Pairing p) {
        return difference_stats(a, b, p);
      },
      py::arg("default_values"), py::arg("variant_values"), py::arg("pairing") = Pairing::paired);
  m.def(
      "significance",
      [](const SampleStats& d, bool beats) { return significance(d, beats); },
      py::arg("difference"), py::arg("default_beats_baseline"));
  m.def(
      "bayes_predict",
      [](double rho, double eps, const std::vector<std::pair<std::size_t, std::size_t>>& context,
         std::size_t query_feature) {
        std::vector<FeatureLabel> ctx;
        for (const auto& [f, l] : context) ctx.push_back({f, l});
        const auto p = bayes_predict(BayesParams{rho, eps}, ctx, query_feature);
        return py::make_tuple(p[0], p[1]);
      },
      py::arg("prior_identity"), py::arg("noise"), py::arg("context"), py::arg("query_feature"),
      "Two-hypothesis label-mapping predictive over (feature, label) pairs.");

  py::class_<ExperimentResult>(m, "ExperimentResult")
      .def_readonly("config_hash", &ExperimentResult::config_hash)
      .def_readonly("backend", &ExperimentResult::backend)
      .def_readonly("task", &ExperimentResult::task)
      .def_readonly("class_names", &ExperimentResult::class_names)
      .def_readonly("max_context", &ExperimentResult::max_context)
      .def_readonly("baseline", &ExperimentResult::baseline)
      .def_property_readonly("transforms",
                             [](const ExperimentResult& r) {
                               std::vector<std::string> names;
                               for (const auto& t : r.transforms) names.push_back(t.spec.name);
                               return names;
                             })
      .def(
          "curves",
          [](const ExperimentResult& r, const std::string& name) {
            return curves_dict(r.transform(name).curves);
          },
          py::arg("transform"), "Per-size metric means and standard errors.")
      .def(
          "records",
          [](const ExperimentResult& r, const std::string& name) {
            py::list out;
            for (const auto& rec : r.transform(name).records) {
              py::dict d;
              d["run_index"] = rec.run_index;
              d["example_order"] = rec.example_order;
              d["displayed"] = rec.displayed;
              d["positions"] = rec.positions;
              d["probs"] = rec.probs;
              d["logprob_calls"] = rec.logprob_calls;
              out.append(d);
            }
            return out;
          },
          py::arg("transform"));

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::optional<std::filesystem::path>& output_dir) {
        auto c = parse_config(config_json);
        if (output_dir) c.output_dir = *output_dir;
        py::gil_scoped_release release;
        return run_experiment(c);
      },
      py::arg("config_json"), py::arg("output_dir") = py::none(),
      "Runs a JSON experiment config and writes its outputs.");
  m.def("load_experiment", &load_experiment, py::arg("dir"));
  m.def(
      "config_hash", [](const std::string& json) { return config_hash(parse_config(json)); },
      py::arg("config_json"));
  m.def(
      "summarize",
      [](const ExperimentResult& r, Metric metric, Pairing pairing) {
        py::list out;
        for (const auto& row : summarize(r, metric, pairing)) out.append(row_dict(row));
        return out;
      },
      py::arg("result"), py::arg("metric"), py::arg("pairing") = Pairing::paired);

  py::class_<ReferenceServer>(m, "ReferenceServer")
      .def_property_readonly("url", [](const ReferenceServer& s) { return s.server->url(); })
      .def("stop", [](ReferenceServer& s) { s.server->stop(); })
      .def("__enter__", [](ReferenceServer& s) -> ReferenceServer& { return s; })
      .def("__exit__", [](ReferenceServer& s, py::args) { s.server->stop(); });
  m.def(
      "serve_reference_backend",
      [](const std::string& config_json) { return std::make_unique<ReferenceServer>(config_json); },
      py::arg("config_json"),
      "Serves the config's reference backend over the HTTP protocol on an ephemeral port.");
}
