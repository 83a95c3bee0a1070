#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "icldyn/dataset.hpp"
#include "icldyn/metrics.hpp"
#include "icldyn/reference_lm.hpp"
#include "icldyn/remote.hpp"
#include "icldyn/tokenizer.hpp"
#include "icldyn/transforms.hpp"
#include "icldyn/verbalize.hpp"

namespace icldyn {

/// Where the examples come from and how they are rendered.
struct TaskConfig {
  /// JSONL dataset file; when unset a synthetic task is generated.
  std::optional<std::filesystem::path> path;
  SyntheticTaskOptions synthetic;
  /// "sentence", "sentence_pair" or "question_pair"; ignored when
  /// `example_template` is set.
  std::string template_name = "sentence";
  std::optional<std::string> example_template;
  std::string label_cue = "Answer:";

  TemplateSpec make_template() const;
  TaskDataset load() const;
};

struct BackendConfig {
  /// "echo", "bayes", "frequency" or "remote".
  std::string kind = "echo";
  /// Tokenizer of the reference backends.
  WhitespaceMode whitespace = WhitespaceMode::merge;
  std::size_t max_input_tokens = 2048;
  BayesParams bayes;
  /// Lexicon of the Bayesian backend; defaults to the synthetic task's.
  std::vector<std::vector<std::string>> lexicon;
  /// Frequencies of the frequency backend; defaults to the task marginal.
  std::vector<double> frequencies;
  RemoteConfig remote;
};

enum class EvalMode {
  /// One forward pass per run, a prediction at every context size.
  single_pass,
  /// One prediction per run, for a query after K-1 context examples.
  classic,
};

enum class Calibration {
  none,
  /// Divide each prediction by the prediction for a content-free query
  /// after the same context.
  content_free,
};

struct ExperimentConfig {
  std::string name = "experiment";
  TaskConfig task;
  BackendConfig backend;
  std::vector<TransformSpec> transforms{TransformSpec{}};
  std::size_t repetitions = 1;
  std::uint64_t seed = 0;
  /// Context size K; computed from the token limit when unset.
  std::optional<std::size_t> max_context;
  /// Overrides the backend's declared token limit.
  std::optional<std::size_t> token_limit;
  /// Orderings sampled when computing K.
  std::size_t context_samples = 20;
  std::size_t smoothing_window = 5;
  std::size_t changepoint_smoothing_window = 3;
  BootstrapOptions bootstrap;
  EvalMode mode = EvalMode::single_pass;
  Calibration calibration = Calibration::none;
  std::size_t workers = 1;
  /// Fraction of aborted runs above which the experiment fails.
  double max_abort_fraction = 0.01;
  std::filesystem::path output_dir = "results";

  /// Throws ConfigError or TransformError.
  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON (output_dir excluded).
std::string config_to_json(const ExperimentConfig& config);
/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

TransformSpec transform_from_json(const std::string& json_text);
std::string transform_to_json(const TransformSpec& spec);

/// Builds reference or remote backends. Reference backends are built per
/// displayed label vocabulary and share one tokenizer fitted on everything
/// the experiment can render.
class BackendFactory {
 public:
  BackendFactory(const BackendConfig& config, const TaskDataset& dataset,
                 const TemplateSpec& tmpl,
                 const std::vector<TransformSpec>& transforms);

  std::shared_ptr<const Backend> get(const std::vector<std::string>& class_names);
  const Tokenizer& tokenizer();

 private:
  BackendConfig config_;
  const TaskDataset& dataset_;
  TemplateSpec tmpl_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::shared_ptr<const Backend> remote_;
  std::vector<std::pair<std::vector<std::string>, std::shared_ptr<const Backend>>>
      cache_;
};

/// Minimum n such that some sampled ordering's n-example input exceeds
/// `limit` tokens, capped at the dataset size. Throws TaskInfeasibleError
/// when a single example exceeds the limit.
std::size_t compute_max_context(const TaskDataset& dataset,
                                const TemplateSpec& tmpl,
                                const Tokenizer& tokenizer, std::size_t limit,
                                std::size_t samples, std::uint64_t seed);

struct RunRecord {
  std::string run_id;
  std::string config_hash;
  std::string transform;
  std::size_t transform_index = 0;
  std::size_t run_index = 0;
  std::uint64_t order_seed = 0;
  std::uint64_t transform_seed = 0;
  std::vector<std::size_t> example_order;
  /// Labeled examples sampled before truncation at the token limit.
  std::size_t sampled_length = 0;
  /// 1-based position of each point (a point at position i saw i-1
  /// labeled examples, or more with answer repetitions).
  std::vector<std::size_t> positions;
  std::vector<std::vector<double>> probs;
  std::vector<std::size_t> displayed;
  std::vector<std::size_t> floored;
  std::vector<int> flipped;
  std::size_t tokens_sent = 0;
  std::size_t logprob_calls = 0;

  std::vector<PointScore> scores() const;
};

std::string record_to_json(const RunRecord& record);
RunRecord record_from_json(const std::string& line);

struct AbortedRun {
  std::string run_id;
  std::string error;
};

struct TransformResult {
  TransformSpec spec;
  std::vector<RunRecord> records;
  std::vector<AbortedRun> aborted;
  MetricCurves curves;
  std::size_t smoothing_window = 5;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string config_hash;
  std::string backend;
  std::string task;
  std::vector<std::string> class_names;
  std::vector<double> class_frequencies;
  MetricTriple baseline;
  std::size_t max_context = 0;
  std::vector<TransformResult> transforms;

  const TransformResult& transform(const std::string& name) const;
};

/// Runs every transform for every repetition, writes experiment.json,
/// runs.jsonl, summary_<metric>.csv and plots/ into config.output_dir, and
/// returns the in-memory result. Throws Error when more than
/// max_abort_fraction of a transform's runs abort.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Same, with a caller-supplied backend (used for every label vocabulary).
ExperimentResult run_experiment(const ExperimentConfig& config,
                                std::shared_ptr<const Backend> backend);

/// Reads a result directory back.
ExperimentResult load_experiment(const std::filesystem::path& dir);

struct SummaryRow {
  std::string backend;
  std::string task;
  std::string variant;
  Metric metric = Metric::log_likelihood;
  std::size_t size = 0;
  std::size_t runs = 0;
  SampleStats default_stats;
  SampleStats variant_stats;
  SignificanceCell cell;
};

/// One default-vs-variant cell at the largest context size every run of
/// both scenarios reached. Runs are paired by run index. Throws
/// SummaryError when the scenarios were evaluated at different maximum
/// context sizes.
SummaryRow compare(const TransformResult& default_result,
                   std::size_t default_max_context,
                   const TransformResult& variant_result,
                   std::size_t variant_max_context, Metric metric,
                   Pairing pairing, const MetricTriple& baseline);

/// compare() for every non-default transform of an experiment.
/// `default_name` selects the reference transform ("default" or, if
/// absent, the first).
std::vector<SummaryRow> summarize(const ExperimentResult& result, Metric metric,
                                  Pairing pairing = Pairing::paired,
                                  const std::string& default_name = "default");

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_summary_text(std::ostream& out, const std::vector<SummaryRow>& rows);

/// Writes plots/<transform>_<metric>.csv: size, raw mean, smoothed mean,
/// bootstrap CI of the raw mean, guessing baseline. Returns the files.
std::vector<std::filesystem::path> emit_plot_data(const ExperimentResult& result,
                                                  const std::filesystem::path& dir);

}  // namespace icldyn
