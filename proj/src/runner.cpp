#include "icldyn/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>
#include <variant>

#include <json.hpp>

#include "icldyn/errors.hpp"
#include "icldyn/extract.hpp"
#include "icldyn/random.hpp"
#include "icldyn/tokenalign.hpp"

namespace icldyn {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Seed streams.
constexpr std::uint64_t kMaxContextStream = 0;
constexpr std::uint64_t kOrderStream = 1;
constexpr std::uint64_t kTransformStream = 2;
constexpr std::uint64_t kBootstrapStream = 3;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
          return key == a;
        }) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->template get<T>();
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) {
    out = it->template get<T>();
  }
}

std::string whitespace_name(WhitespaceMode m) {
  return m == WhitespaceMode::merge ? "merge" : "dummy_prefix";
}

WhitespaceMode whitespace_from_name(const std::string& s) {
  if (s == "merge") return WhitespaceMode::merge;
  if (s == "dummy_prefix") return WhitespaceMode::dummy_prefix;
  throw ConfigError("unknown whitespace mode '" + s + "'");
}

std::string mode_name(EvalMode m) {
  return m == EvalMode::single_pass ? "single_pass" : "classic";
}

std::string calibration_name(Calibration c) {
  return c == Calibration::none ? "none" : "content_free";
}

Calibration calibration_from_name(const std::string& s) {
  if (s == "none") return Calibration::none;
  if (s == "content_free") return Calibration::content_free;
  throw ConfigError("unknown calibration '" + s + "'");
}

EvalMode mode_from_name(const std::string& s) {
  if (s == "single_pass") return EvalMode::single_pass;
  if (s == "classic") return EvalMode::classic;
  throw ConfigError("unknown evaluation mode '" + s + "'");
}

json transform_json(const TransformSpec& spec) {
  json j{{"name", spec.name}, {"seed", spec.seed}};
  std::visit(overloaded{
                 [&](const DefaultLabels&) { j["kind"] = "default"; },
                 [&](const RandomizeLabels& r) {
                   j["kind"] = "randomize";
                   j["proportion"] = r.proportion;
                 },
                 [&](const RotateLabels& r) {
                   j["kind"] = "rotate";
                   j["direction"] = r.direction;
                 },
                 [&](const ReplaceLabels& r) {
                   j["kind"] = "replace";
                   j["names"] = r.names;
                   j["assignment"] = r.assignment;
                 },
                 [&](const ChangepointLabels& c) {
                   j["kind"] = "changepoint";
                   j["mode"] = std::string(changepoint_mode_name(c.mode));
                   j["changepoint"] = c.changepoint;
                   j["alternating_starts_flipped"] = c.alternating_starts_flipped;
                 },
             },
             spec.labeling);
  if (spec.prompt) j["prompt"] = std::string(prompt_kind_name(*spec.prompt));
  if (spec.answer_repetitions) j["answer_repetitions"] = *spec.answer_repetitions;
  return j;
}

TransformSpec transform_from(const json& j) {
  check_keys(j,
             {"name", "kind", "seed", "proportion", "direction", "names",
              "assignment", "mode", "changepoint", "alternating_starts_flipped",
              "prompt", "answer_repetitions"},
             "transform");
  TransformSpec spec;
  const std::string kind = j.value("kind", "default");
  spec.name = j.value("name", kind);
  read(j, "seed", spec.seed);
  if (kind == "default") {
    spec.labeling = DefaultLabels{};
  } else if (kind == "randomize") {
    RandomizeLabels r;
    read(j, "proportion", r.proportion);
    spec.labeling = r;
  } else if (kind == "rotate" || kind == "flip") {
    RotateLabels r;
    read(j, "direction", r.direction);
    spec.labeling = r;
  } else if (kind == "replace") {
    ReplaceLabels r;
    read(j, "names", r.names);
    read(j, "assignment", r.assignment);
    spec.labeling = r;
  } else if (kind == "changepoint") {
    ChangepointLabels c;
    c.mode = changepoint_mode_from_name(j.value("mode", "default_to_flipped"));
    read(j, "changepoint", c.changepoint);
    read(j, "alternating_starts_flipped", c.alternating_starts_flipped);
    spec.labeling = c;
  } else {
    throw ConfigError("unknown transform kind '" + kind + "'");
  }
  if (auto it = j.find("prompt"); it != j.end() && !it->is_null()) {
    spec.prompt = prompt_kind_from_name(it->get<std::string>());
  }
  read(j, "answer_repetitions", spec.answer_repetitions);
  return spec;
}

json config_json(const ExperimentConfig& c) {
  const auto& s = c.task.synthetic;
  json task{{"template", c.task.template_name},
            {"label_cue", c.task.label_cue},
            {"synthetic",
             {{"size", s.size},
              {"class_names", s.class_names},
              {"lexicon", s.lexicon},
              {"filler", s.filler},
              {"words_per_example", s.words_per_example},
              {"seed", s.seed}}}};
  if (c.task.path) task["path"] = c.task.path->generic_string();
  if (c.task.example_template) task["example_template"] = *c.task.example_template;

  const auto& b = c.backend;
  json backend{{"kind", b.kind},
               {"whitespace", whitespace_name(b.whitespace)},
               {"max_input_tokens", b.max_input_tokens},
               {"prior_identity", b.bayes.prior_identity},
               {"noise", b.bayes.noise},
               {"lexicon", b.lexicon},
               {"frequencies", b.frequencies}};
  if (b.kind == "remote") {
    backend["url"] = b.remote.url;
    backend["timeout"] = static_cast<double>(b.remote.timeout.count()) / 1000.0;
    backend["max_in_flight"] = b.remote.max_in_flight;
    backend["retries"] = b.remote.retries;
  }

  json transforms = json::array();
  for (const auto& t : c.transforms) transforms.push_back(transform_json(t));

  json j{{"name", c.name},
         {"task", task},
         {"backend", backend},
         {"transforms", transforms},
         {"repetitions", c.repetitions},
         {"seed", c.seed},
         {"context_samples", c.context_samples},
         {"smoothing_window", c.smoothing_window},
         {"changepoint_smoothing_window", c.changepoint_smoothing_window},
         {"bootstrap",
          {{"level", c.bootstrap.level},
           {"resamples", c.bootstrap.resamples},
           {"seed", c.bootstrap.seed}}},
         {"mode", mode_name(c.mode)},
         {"calibration", calibration_name(c.calibration)},
         {"max_abort_fraction", c.max_abort_fraction}};
  if (c.max_context) j["max_context"] = *c.max_context;
  if (c.token_limit) j["token_limit"] = *c.token_limit;
  return j;
}

ExperimentConfig config_from(const json& j) {
  check_keys(j,
             {"name", "task", "backend", "transforms", "repetitions", "seed",
              "max_context", "token_limit", "context_samples", "smoothing_window",
              "changepoint_smoothing_window", "bootstrap", "mode", "calibration",
              "workers",
              "max_abort_fraction", "output_dir"},
             "config");
  ExperimentConfig c;
  read(j, "name", c.name);
  if (auto it = j.find("task"); it != j.end()) {
    const json& t = *it;
    check_keys(t, {"path", "synthetic", "template", "example_template", "label_cue"},
               "task");
    if (auto p = t.find("path"); p != t.end() && !p->is_null()) {
      c.task.path = p->get<std::string>();
    }
    read(t, "template", c.task.template_name);
    read(t, "example_template", c.task.example_template);
    read(t, "label_cue", c.task.label_cue);
    if (auto s = t.find("synthetic"); s != t.end()) {
      check_keys(*s,
                 {"size", "class_names", "lexicon", "filler", "words_per_example",
                  "seed"},
                 "task.synthetic");
      auto& o = c.task.synthetic;
      read(*s, "size", o.size);
      read(*s, "class_names", o.class_names);
      read(*s, "lexicon", o.lexicon);
      read(*s, "filler", o.filler);
      read(*s, "words_per_example", o.words_per_example);
      read(*s, "seed", o.seed);
    }
  }
  if (auto it = j.find("backend"); it != j.end()) {
    const json& b = *it;
    check_keys(b,
               {"kind", "whitespace", "max_input_tokens", "prior_identity", "noise",
                "lexicon", "frequencies", "url", "timeout", "max_in_flight",
                "retries"},
               "backend");
    auto& o = c.backend;
    read(b, "kind", o.kind);
    if (auto w = b.find("whitespace"); w != b.end()) {
      o.whitespace = whitespace_from_name(w->get<std::string>());
    }
    read(b, "max_input_tokens", o.max_input_tokens);
    read(b, "prior_identity", o.bayes.prior_identity);
    read(b, "noise", o.bayes.noise);
    read(b, "lexicon", o.lexicon);
    read(b, "frequencies", o.frequencies);
    read(b, "url", o.remote.url);
    if (auto t = b.find("timeout"); t != b.end()) {
      o.remote.timeout = std::chrono::milliseconds(
          static_cast<std::int64_t>(t->get<double>() * 1000.0 + 0.5));
    }
    read(b, "max_in_flight", o.remote.max_in_flight);
    read(b, "retries", o.remote.retries);
    if (b.contains("max_input_tokens")) o.remote.max_input_tokens = o.max_input_tokens;
  }
  if (auto it = j.find("transforms"); it != j.end()) {
    c.transforms.clear();
    for (const auto& t : *it) c.transforms.push_back(transform_from(t));
  }
  read(j, "repetitions", c.repetitions);
  read(j, "seed", c.seed);
  read(j, "max_context", c.max_context);
  read(j, "token_limit", c.token_limit);
  read(j, "context_samples", c.context_samples);
  read(j, "smoothing_window", c.smoothing_window);
  read(j, "changepoint_smoothing_window", c.changepoint_smoothing_window);
  if (auto it = j.find("bootstrap"); it != j.end()) {
    check_keys(*it, {"level", "resamples", "seed"}, "bootstrap");
    read(*it, "level", c.bootstrap.level);
    read(*it, "resamples", c.bootstrap.resamples);
    read(*it, "seed", c.bootstrap.seed);
  }
  if (auto it = j.find("mode"); it != j.end()) {
    c.mode = mode_from_name(it->get<std::string>());
  }
  if (auto it = j.find("calibration"); it != j.end()) {
    c.calibration = calibration_from_name(it->get<std::string>());
  }
  read(j, "workers", c.workers);
  read(j, "max_abort_fraction", c.max_abort_fraction);
  if (auto it = j.find("output_dir"); it != j.end()) {
    c.output_dir = it->get<std::string>();
  }
  return c;
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> displayed_names(const TransformSpec& spec,
                                         const TaskDataset& dataset) {
  if (const auto* r = std::get_if<ReplaceLabels>(&spec.labeling)) return r->names;
  return dataset.class_names();
}

bool is_changepoint(const TransformSpec& spec) {
  return std::holds_alternative<ChangepointLabels>(spec.labeling);
}

std::vector<std::size_t> sample_order(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.uniform_index(n - i)]);
  }
  idx.resize(k);
  return idx;
}

std::string file_stem(const std::string& name) {
  std::string out;
  for (char ch : name) {
    const auto c = static_cast<unsigned char>(ch);
    out += std::isalnum(c) || ch == '-' ? ch : '_';
  }
  return out.empty() ? "transform" : out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Everything a run needs, shared read-only by the workers.
struct RunContext {
  const ExperimentConfig& config;
  const TaskDataset& dataset;
  const TemplateSpec& tmpl;
  std::string hash;
  std::size_t max_context = 0;
  std::size_t token_budget = 0;
  std::vector<std::shared_ptr<const Backend>> backends;
  std::vector<LabelTokenMap> maps;
};

using RunOutcome = std::variant<RunRecord, AbortedRun>;

RunRecord execute_run(const RunContext& ctx, std::size_t t, std::size_t r) {
  const TransformSpec& spec = ctx.config.transforms[t];
  const Backend& backend = *ctx.backends[t];
  const LabelTokenMap& map = ctx.maps[t];

  RunRecord rec;
  rec.transform = spec.name;
  rec.transform_index = t;
  rec.run_index = r;
  rec.run_id = spec.name + "/" + std::to_string(r);
  rec.config_hash = ctx.hash;
  // Orders depend on the run only, so every transform sees the same
  // contexts and differences can be paired.
  rec.order_seed = derive_seed(ctx.config.seed, {kOrderStream, r});
  rec.transform_seed = derive_seed(ctx.config.seed, {kTransformStream, t, r, spec.seed});
  Rng order_rng(rec.order_seed);
  Rng rng(rec.transform_seed);
  rec.example_order = sample_order(ctx.dataset.size(), ctx.max_context, order_rng);
  rec.sampled_length = rec.example_order.size();

  const LabelAssignment labels = apply(spec, ctx.dataset, rec.example_order, rng);
  std::optional<std::string> prompt;
  if (spec.prompt) prompt = prompt_text(*spec.prompt, labels.class_names);

  if (ctx.config.mode == EvalMode::single_pass) {
    const AssembledInput input = assemble(ctx.dataset, rec.example_order,
                                          labels.label_strings, ctx.tmpl, prompt);
    const SinglePassResult res = evaluate_single_pass(
        input, labels.displayed, backend, map, ctx.token_budget);
    std::vector<std::vector<double>> priors;
    if (ctx.config.calibration == Calibration::content_free) {
      priors = content_free_priors(input, res.curve.size(), ctx.tmpl, backend, map);
    }
    for (std::size_t i = 0; i < res.curve.size(); ++i) {
      const CurvePoint& pt = res.curve.points[i];
      rec.positions.push_back(i + 1);
      rec.probs.push_back(priors.empty() ? pt.prediction.probs
                                         : calibrate(pt.prediction.probs, priors[i]));
      rec.displayed.push_back(pt.true_class);
      rec.flipped.push_back(labels.relations[i] == Relation::flipped ? 1 : 0);
    }
    rec.floored = res.curve.floored_points();
    rec.tokens_sent = res.sent_tokens;
    rec.logprob_calls = 1 + priors.size();
    return rec;
  }

  // Classic: the last sampled example is the query.
  const std::size_t q = rec.example_order.size() - 1;
  const std::size_t query = rec.example_order[q];
  const std::vector<std::size_t> context(rec.example_order.begin(),
                                         rec.example_order.begin() + q);
  const RepetitionPlan plan =
      inject_repetitions(context, query, spec.answer_repetitions.value_or(0), rng);
  std::vector<std::string> strings;
  strings.reserve(plan.order.size());
  std::size_t next = 0;
  for (std::size_t p = 0; p < plan.order.size(); ++p) {
    const bool copy = std::binary_search(plan.copy_positions.begin(),
                                         plan.copy_positions.end(), p);
    strings.push_back(copy ? labels.label_strings[q] : labels.label_strings[next++]);
  }
  const AssembledInput input = assemble(ctx.dataset, plan.order, strings, ctx.tmpl,
                                        prompt, RepeatPolicy::allow);
  const ClassPrediction pred = classic_query_predict(
      input, ctx.dataset[query].inputs, ctx.tmpl, backend, map);
  rec.positions.push_back(plan.order.size() + 1);
  rec.logprob_calls = 1;
  if (ctx.config.calibration == Calibration::content_free) {
    const std::vector<std::string> na(ctx.tmpl.arity(), std::string(kContentFreeInput));
    const ClassPrediction prior = classic_query_predict(input, na, ctx.tmpl, backend, map);
    rec.probs.push_back(calibrate(pred.probs, prior.probs));
    ++rec.logprob_calls;
  } else {
    rec.probs.push_back(pred.probs);
  }
  rec.displayed.push_back(labels.displayed[q]);
  rec.flipped.push_back(labels.relations[q] == Relation::flipped ? 1 : 0);
  if (pred.floored) rec.floored.push_back(0);
  return rec;
}

RunOutcome guarded_run(const RunContext& ctx, std::size_t t, std::size_t r) {
  try {
    return execute_run(ctx, t, r);
  } catch (const MisalignmentError& e) {
    return AbortedRun{ctx.config.transforms[t].name + "/" + std::to_string(r), e.what()};
  } catch (const DegenerateDistributionError& e) {
    return AbortedRun{ctx.config.transforms[t].name + "/" + std::to_string(r), e.what()};
  } catch (const BackendError& e) {
    return AbortedRun{ctx.config.transforms[t].name + "/" + std::to_string(r), e.what()};
  }
}

json manifest_json(const ExperimentResult& res) {
  json transforms = json::array();
  for (const auto& t : res.transforms) {
    json aborted = json::array();
    for (const auto& a : t.aborted) aborted.push_back({{"run_id", a.run_id}, {"error", a.error}});
    transforms.push_back({{"name", t.spec.name},
                          {"runs", t.records.size()},
                          {"aborted", aborted},
                          {"smoothing_window", t.smoothing_window}});
  }
  return json{{"config", config_json(res.config)},
              {"config_hash", res.config_hash},
              {"backend", res.backend},
              {"task", res.task},
              {"class_names", res.class_names},
              {"class_frequencies", res.class_frequencies},
              {"baseline",
               {{"accuracy", res.baseline.accuracy},
                {"loglik", res.baseline.log_likelihood},
                {"entropy", res.baseline.entropy}}},
              {"max_context", res.max_context},
              {"transforms", transforms}};
}

void write_outputs(const ExperimentResult& res) {
  const fs::path dir = res.config.output_dir;
  fs::create_directories(dir);
  write_text(dir / "experiment.json", manifest_json(res).dump(2) + "\n");
  {
    std::ofstream out(dir / "runs.jsonl", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "runs.jsonl").string());
    for (const auto& t : res.transforms) {
      for (const auto& r : t.records) out << record_to_json(r) << '\n';
    }
  }
  const bool comparable = res.transforms.size() > 1;
  for (Metric m : {Metric::accuracy, Metric::log_likelihood, Metric::entropy}) {
    std::ostringstream csv;
    write_summary_csv(csv, comparable ? summarize(res, m) : std::vector<SummaryRow>{});
    write_text(dir / ("summary_" + std::string(metric_name(m)) + ".csv"), csv.str());
  }
  emit_plot_data(res, dir / "plots");
}

ExperimentResult run_with(
    const ExperimentConfig& config, const TaskDataset& dataset,
    const TemplateSpec& tmpl,
    const std::function<std::shared_ptr<const Backend>(const std::vector<std::string>&)>&
        backend_for) {
  config.validate();
  for (const auto& t : config.transforms) t.validate(dataset.num_classes());

  RunContext ctx{config, dataset, tmpl, config_hash(config), 0, 0, {}, {}};
  for (const auto& t : config.transforms) {
    const auto names = displayed_names(t, dataset);
    ctx.backends.push_back(backend_for(names));
    ctx.maps.push_back(resolve_label_tokens(ctx.backends.back()->tokenizer(), tmpl, names));
  }
  const Backend& first = *ctx.backends.front();
  ctx.token_budget = config.token_limit.value_or(first.max_input_tokens());
  if (config.max_context) {
    if (*config.max_context > dataset.size()) {
      throw ConfigError("max_context exceeds the dataset size");
    }
    ctx.max_context = *config.max_context;
  } else {
    ctx.max_context = compute_max_context(
        dataset, tmpl, first.tokenizer(), ctx.token_budget, config.context_samples,
        derive_seed(config.seed, {kMaxContextStream}));
  }

  const std::size_t T = config.transforms.size();
  const std::size_t R = config.repetitions;
  std::vector<std::optional<RunOutcome>> outcomes(T * R);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t job = next++; job < T * R; job = next++) {
      try {
        outcomes[job] = guarded_run(ctx, job / R, job % R);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = T * R;
      }
    }
  };
  const std::size_t n_workers = std::min(config.workers, T * R);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentResult res;
  res.config = config;
  res.config_hash = ctx.hash;
  res.backend = first.describe();
  res.task = dataset.name();
  res.class_names = dataset.class_names();
  res.class_frequencies = dataset.class_frequencies();
  res.baseline = guessing_baseline(res.class_frequencies);
  res.max_context = ctx.max_context;
  for (std::size_t t = 0; t < T; ++t) {
    TransformResult tr;
    tr.spec = config.transforms[t];
    tr.smoothing_window = is_changepoint(tr.spec) ? config.changepoint_smoothing_window
                                                  : config.smoothing_window;
    std::vector<std::vector<PointScore>> scored;
    for (std::size_t r = 0; r < R; ++r) {
      auto& o = *outcomes[t * R + r];
      if (auto* rec = std::get_if<RunRecord>(&o)) {
        scored.push_back(rec->scores());
        tr.records.push_back(std::move(*rec));
      } else {
        auto& a = std::get<AbortedRun>(o);
        std::cerr << "icldyn: run " << a.run_id << " aborted: " << a.error << '\n';
        tr.aborted.push_back(std::move(a));
      }
    }
    if (!scored.empty()) tr.curves = aggregate(scored);
    res.transforms.push_back(std::move(tr));
  }

  write_outputs(res);

  for (const auto& tr : res.transforms) {
    const double frac = static_cast<double>(tr.aborted.size()) / static_cast<double>(R);
    if (frac > config.max_abort_fraction || tr.records.empty()) {
      throw Error("transform '" + tr.spec.name + "': " +
                  std::to_string(tr.aborted.size()) + " of " + std::to_string(R) +
                  " runs aborted");
    }
  }
  return res;
}

}  // namespace

TemplateSpec TaskConfig::make_template() const {
  if (example_template) {
    return TemplateSpec::from_example_template(*example_template, label_cue);
  }
  return template_by_name(template_name);
}

TaskDataset TaskConfig::load() const {
  if (path) return load_dataset(*path);
  return synthetic_task(synthetic);
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (transforms.empty()) throw ConfigError("at least one transform is required");
  std::set<std::string> names;
  for (const auto& t : transforms) {
    if (!names.insert(t.name).second) {
      throw ConfigError("duplicate transform name '" + t.name + "'");
    }
    if (t.answer_repetitions && mode != EvalMode::classic) {
      throw ConfigError("answer repetitions need classic mode (transform '" +
                        t.name + "')");
    }
  }
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (context_samples < 1) throw ConfigError("context_samples must be at least 1");
  if (smoothing_window < 1 || changepoint_smoothing_window < 1) {
    throw ConfigError("smoothing windows must be at least 1");
  }
  if (!(bootstrap.level > 0.0 && bootstrap.level < 1.0) || bootstrap.resamples < 1) {
    throw ConfigError("invalid bootstrap settings");
  }
  if (!(max_abort_fraction >= 0.0 && max_abort_fraction <= 1.0)) {
    throw ConfigError("max_abort_fraction must be in [0, 1]");
  }
  if (max_context && *max_context < 1) throw ConfigError("max_context must be positive");
  static const std::set<std::string> kinds{"echo", "bayes", "frequency", "remote"};
  if (!kinds.count(backend.kind)) {
    throw ConfigError("unknown backend kind '" + backend.kind + "'");
  }
}

ExperimentConfig parse_config(const std::string& json_text) {
  try {
    return config_from(json::parse(json_text, nullptr, true, true));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

ExperimentConfig load_config(const fs::path& path) {
  ExperimentConfig c = parse_config(read_text(path));
  const fs::path base = path.parent_path();
  if (c.task.path && c.task.path->is_relative()) c.task.path = base / *c.task.path;
  return c;
}

std::string config_to_json(const ExperimentConfig& config) {
  return config_json(config).dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
  return fnv1a_hex(config_json(config).dump());
}

TransformSpec transform_from_json(const std::string& json_text) {
  try {
    return transform_from(json::parse(json_text));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid transform: ") + e.what());
  }
}

std::string transform_to_json(const TransformSpec& spec) {
  return transform_json(spec).dump();
}

BackendFactory::BackendFactory(const BackendConfig& config, const TaskDataset& dataset,
                               const TemplateSpec& tmpl,
                               const std::vector<TransformSpec>& transforms)
    : config_(config), dataset_(dataset), tmpl_(tmpl) {
  if (config_.kind == "remote") {
    auto remote =
        std::make_shared<RemoteBackend>(RemoteConfig::with_env_overrides(config_.remote));
    remote_ = remote;
    return;
  }
  // Fit the reference vocabulary on every string the experiment can render.
  std::vector<std::vector<std::string>> vocabularies{dataset.class_names()};
  std::set<PromptKind> prompts;
  for (const auto& t : transforms) {
    vocabularies.push_back(displayed_names(t, dataset));
    if (t.prompt) prompts.insert(*t.prompt);
  }
  std::set<std::string> labels;
  for (const auto& v : vocabularies) labels.insert(v.begin(), v.end());
  std::vector<std::string> corpus;
  for (const auto& ex : dataset.examples()) {
    for (const auto& l : labels) corpus.push_back(render_example(tmpl, ex.inputs, l));
  }
  corpus.push_back(render_query(
      tmpl, std::vector<std::string>(tmpl.arity(), std::string(kContentFreeInput))));
  if (dataset.size() > 0) {
    for (PromptKind p : prompts) {
      for (const auto& v : vocabularies) {
        corpus.push_back(prompt_text(p, v) +
                         render_example(tmpl, dataset[0].inputs, v.front()));
      }
    }
  }
  tokenizer_ = std::make_shared<WordTokenizer>(
      WordTokenizer::fit(corpus, config_.whitespace));
}

const Tokenizer& BackendFactory::tokenizer() {
  return remote_ ? remote_->tokenizer() : *tokenizer_;
}

std::shared_ptr<const Backend> BackendFactory::get(
    const std::vector<std::string>& class_names) {
  if (remote_) return remote_;
  for (const auto& [names, backend] : cache_) {
    if (names == class_names) return backend;
  }
  std::shared_ptr<const Backend> backend;
  const std::size_t limit = config_.max_input_tokens;
  if (config_.kind == "echo") {
    backend = std::make_shared<EchoLM>(tokenizer_, tmpl_, class_names, limit);
  } else if (config_.kind == "frequency") {
    auto freqs = config_.frequencies.empty() ? dataset_.class_frequencies()
                                             : config_.frequencies;
    backend = std::make_shared<FrequencyLM>(tokenizer_, tmpl_, class_names,
                                            std::move(freqs), limit);
  } else if (config_.kind == "bayes") {
    backend = std::make_shared<BayesianMappingLM>(tokenizer_, tmpl_, class_names,
                                                  config_.lexicon, config_.bayes, limit);
  } else {
    throw ConfigError("unknown backend kind '" + config_.kind + "'");
  }
  cache_.emplace_back(class_names, backend);
  return backend;
}

std::size_t compute_max_context(const TaskDataset& dataset, const TemplateSpec& tmpl,
                                const Tokenizer& tokenizer, std::size_t limit,
                                std::size_t samples, std::uint64_t seed) {
  if (samples < 1) throw ConfigError("need at least one sampled ordering");
  if (dataset.size() == 0) throw TaskInfeasibleError("empty dataset");
  Rng rng(seed);
  std::size_t best = dataset.size();
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    order.resize(best);
    std::vector<ClassIndex> labels;
    labels.reserve(order.size());
    for (auto i : order) labels.push_back(dataset[i].label);
    const AssembledInput input = assemble(dataset, order, labels, tmpl);
    auto tokens_for = [&](std::size_t n) {
      return tokenizer.tokenize(
          std::string_view(input.text).substr(0, input.segments[n - 1].full.end)).size();
    };
    if (tokens_for(1) > limit) {
      throw TaskInfeasibleError("a single example exceeds the " +
                                std::to_string(limit) + "-token limit");
    }
    if (best < 2) continue;
    // Grow geometrically, then bisect for the first n over the limit.
    std::size_t lo = 1;
    std::size_t hi = 2;
    while (hi < best && tokens_for(hi) <= limit) {
      lo = hi;
      hi = std::min(best, hi * 2);
    }
    if (tokens_for(hi) <= limit) continue;
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo) / 2;
      (tokens_for(mid) > limit ? hi : lo) = mid;
    }
    best = std::min(best, hi);
  }
  return best;
}

std::vector<PointScore> RunRecord::scores() const {
  std::vector<PointScore> out;
  out.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    out.push_back(score_prediction(probs[i], displayed[i]));
  }
  return out;
}

std::string record_to_json(const RunRecord& r) {
  return json{{"run_id", r.run_id},
              {"config_hash", r.config_hash},
              {"transform", r.transform},
              {"transform_index", r.transform_index},
              {"run_index", r.run_index},
              {"order_seed", r.order_seed},
              {"transform_seed", r.transform_seed},
              {"example_order", r.example_order},
              {"sampled_length", r.sampled_length},
              {"positions", r.positions},
              {"probs", r.probs},
              {"displayed", r.displayed},
              {"floored", r.floored},
              {"flipped", r.flipped},
              {"tokens_sent", r.tokens_sent},
              {"logprob_calls", r.logprob_calls}}
      .dump();
}

RunRecord record_from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    RunRecord r;
    j.at("run_id").get_to(r.run_id);
    j.at("config_hash").get_to(r.config_hash);
    j.at("transform").get_to(r.transform);
    j.at("transform_index").get_to(r.transform_index);
    j.at("run_index").get_to(r.run_index);
    j.at("order_seed").get_to(r.order_seed);
    j.at("transform_seed").get_to(r.transform_seed);
    j.at("example_order").get_to(r.example_order);
    j.at("sampled_length").get_to(r.sampled_length);
    j.at("positions").get_to(r.positions);
    j.at("probs").get_to(r.probs);
    j.at("displayed").get_to(r.displayed);
    j.at("floored").get_to(r.floored);
    j.at("flipped").get_to(r.flipped);
    j.at("tokens_sent").get_to(r.tokens_sent);
    j.at("logprob_calls").get_to(r.logprob_calls);
    if (r.probs.size() != r.displayed.size() || r.positions.size() != r.probs.size()) {
      throw Error("run record arrays differ in length");
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed run record: ") + e.what());
  }
}

const TransformResult& ExperimentResult::transform(const std::string& name) const {
  for (const auto& t : transforms) {
    if (t.spec.name == name) return t;
  }
  throw Error("no transform named '" + name + "'");
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const TaskDataset dataset = config.task.load();
  const TemplateSpec tmpl = config.task.make_template();
  BackendConfig backend = config.backend;
  if (backend.lexicon.empty()) backend.lexicon = config.task.synthetic.lexicon;
  BackendFactory factory(backend, dataset, tmpl, config.transforms);
  return run_with(config, dataset, tmpl,
                  [&](const std::vector<std::string>& names) { return factory.get(names); });
}

ExperimentResult run_experiment(const ExperimentConfig& config,
                                std::shared_ptr<const Backend> backend) {
  config.validate();
  const TaskDataset dataset = config.task.load();
  const TemplateSpec tmpl = config.task.make_template();
  return run_with(config, dataset, tmpl,
                  [&](const std::vector<std::string>&) { return backend; });
}

ExperimentResult load_experiment(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "experiment.json"));
  } catch (const json::exception& e) {
    throw Error("malformed experiment.json: " + std::string(e.what()));
  }
  ExperimentResult res;
  res.config = config_from(manifest.at("config"));
  res.config.output_dir = dir;
  res.config_hash = manifest.at("config_hash").get<std::string>();
  res.backend = manifest.at("backend").get<std::string>();
  res.task = manifest.at("task").get<std::string>();
  res.class_names = manifest.at("class_names").get<std::vector<std::string>>();
  res.class_frequencies = manifest.at("class_frequencies").get<std::vector<double>>();
  res.baseline = guessing_baseline(res.class_frequencies);
  res.max_context = manifest.at("max_context").get<std::size_t>();
  const json& tlist = manifest.at("transforms");
  for (std::size_t t = 0; t < res.config.transforms.size(); ++t) {
    TransformResult tr;
    tr.spec = res.config.transforms[t];
    if (t < tlist.size()) {
      tr.smoothing_window = tlist[t].at("smoothing_window").get<std::size_t>();
      for (const auto& a : tlist[t].at("aborted")) {
        tr.aborted.push_back({a.at("run_id").get<std::string>(),
                              a.at("error").get<std::string>()});
      }
    }
    res.transforms.push_back(std::move(tr));
  }
  std::ifstream in(dir / "runs.jsonl", std::ios::binary);
  if (!in) throw Error("cannot read " + (dir / "runs.jsonl").string());
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    RunRecord r = record_from_json(line);
    if (r.transform_index >= res.transforms.size()) {
      throw Error("run record refers to unknown transform " + r.run_id);
    }
    res.transforms[r.transform_index].records.push_back(std::move(r));
  }
  for (auto& tr : res.transforms) {
    std::vector<std::vector<PointScore>> scored;
    for (const auto& r : tr.records) scored.push_back(r.scores());
    if (!scored.empty()) tr.curves = aggregate(scored);
  }
  return res;
}

SummaryRow compare(const TransformResult& def, std::size_t def_k,
                   const TransformResult& var, std::size_t var_k, Metric metric,
                   Pairing pairing, const MetricTriple& baseline) {
  if (def_k != var_k) {
    throw SummaryError("scenarios were evaluated at different maximum context sizes (" +
                       std::to_string(def_k) + " vs " + std::to_string(var_k) + ")");
  }
  if (def.records.empty() || var.records.empty()) {
    throw SummaryError("a scenario has no completed runs");
  }
  std::size_t size = std::numeric_limits<std::size_t>::max();
  for (const auto* tr : {&def, &var}) {
    for (const auto& r : tr->records) size = std::min(size, r.probs.size());
  }
  if (size == 0) throw SummaryError("a run has an empty curve");

  auto value_at = [&](const RunRecord& r, Metric m) {
    return score_prediction(r.probs[size - 1], r.displayed[size - 1]).value(m);
  };
  std::map<std::size_t, const RunRecord*> by_run;
  for (const auto& r : var.records) by_run[r.run_index] = &r;

  std::vector<double> dv, vv, d_acc, d_ll;
  for (const auto& r : def.records) {
    d_acc.push_back(value_at(r, Metric::accuracy));
    d_ll.push_back(value_at(r, Metric::log_likelihood));
  }
  if (pairing == Pairing::paired) {
    for (const auto& r : def.records) {
      auto it = by_run.find(r.run_index);
      if (it == by_run.end()) continue;
      dv.push_back(value_at(r, metric));
      vv.push_back(value_at(*it->second, metric));
    }
  } else {
    for (const auto& r : def.records) dv.push_back(value_at(r, metric));
    for (const auto& r : var.records) vv.push_back(value_at(r, metric));
  }
  if (dv.empty()) throw SummaryError("no paired runs between the scenarios");

  SummaryRow row;
  row.variant = var.spec.name;
  row.metric = metric;
  row.size = def.records.front().positions[size - 1];
  row.runs = std::min(dv.size(), vv.size());
  row.default_stats = summarize_sample(dv);
  row.variant_stats = summarize_sample(vv);
  row.cell = significance(dv, vv, pairing, summarize_sample(d_acc),
                          summarize_sample(d_ll), baseline);
  return row;
}

std::vector<SummaryRow> summarize(const ExperimentResult& result, Metric metric,
                                  Pairing pairing, const std::string& default_name) {
  if (result.transforms.empty()) throw SummaryError("no transforms");
  const TransformResult* def = &result.transforms.front();
  for (const auto& t : result.transforms) {
    if (t.spec.name == default_name) def = &t;
  }
  std::vector<SummaryRow> rows;
  for (const auto& t : result.transforms) {
    if (&t == def) continue;
    SummaryRow row = compare(*def, result.max_context, t, result.max_context, metric,
                             pairing, result.baseline);
    row.backend = result.backend;
    row.task = result.task;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "backend,task,variant,metric,size,runs,default_mean,default_se,"
         "variant_mean,variant_se,delta,se,bold,gray\n";
  for (const auto& r : rows) {
    out << r.backend << ',' << r.task << ',' << r.variant << ','
        << metric_name(r.metric) << ',' << r.size << ',' << r.runs << ','
        << num(r.default_stats.mean) << ',' << num(r.default_stats.standard_error)
        << ',' << num(r.variant_stats.mean) << ','
        << num(r.variant_stats.standard_error) << ',' << num(r.cell.mean_difference)
        << ',' << num(r.cell.standard_error) << ',' << (r.cell.bold ? 1 : 0) << ','
        << (r.cell.gray ? 1 : 0) << '\n';
  }
}

void write_summary_text(std::ostream& out, const std::vector<SummaryRow>& rows) {
  std::size_t w_backend = 7, w_task = 4, w_variant = 7;
  for (const auto& r : rows) {
    w_backend = std::max(w_backend, r.backend.size());
    w_task = std::max(w_task, r.task.size());
    w_variant = std::max(w_variant, r.variant.size());
  }
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.4f", v);
    return std::string(buf);
  };
  out << std::left << std::setw(static_cast<int>(w_backend)) << "backend" << "  "
      << std::setw(static_cast<int>(w_task)) << "task" << "  "
      << std::setw(static_cast<int>(w_variant)) << "variant" << "  " << std::setw(8)
      << "metric" << std::right << std::setw(6) << "size" << std::setw(6) << "runs"
      << std::setw(22) << "delta +- se" << "  flags\n";
  for (const auto& r : rows) {
    std::string flags;
    if (r.cell.bold) flags += "significant";
    if (r.cell.gray) flags += std::string(flags.empty() ? "" : ",") + "at-baseline";
    char se[32];
    std::snprintf(se, sizeof se, "%.4f", r.cell.standard_error);
    out << std::left << std::setw(static_cast<int>(w_backend)) << r.backend << "  "
        << std::setw(static_cast<int>(w_task)) << r.task << "  "
        << std::setw(static_cast<int>(w_variant)) << r.variant << "  " << std::setw(8)
        << metric_name(r.metric) << std::right << std::setw(6) << r.size
        << std::setw(6) << r.runs << std::setw(22)
        << (fixed(r.cell.mean_difference) + " +- " + se) << "  " << flags << '\n';
  }
}

std::vector<fs::path> emit_plot_data(const ExperimentResult& result,
                                     const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> files;
  for (std::size_t t = 0; t < result.transforms.size(); ++t) {
    const TransformResult& tr = result.transforms[t];
    std::vector<std::vector<PointScore>> scored;
    for (const auto& r : tr.records) scored.push_back(r.scores());
    for (Metric m : {Metric::accuracy, Metric::log_likelihood, Metric::entropy}) {
      const auto values = per_size_values(scored, m);
      std::vector<double> raw;
      for (const auto& v : values) raw.push_back(summarize_sample(v).mean);
      const auto smooth = moving_average(raw, tr.smoothing_window);
      std::ostringstream csv;
      csv << "size,raw_mean,smoothed_mean,ci_low,ci_high,baseline\n";
      for (std::size_t i = 0; i < raw.size(); ++i) {
        Interval ci{raw[i], raw[i]};
        if (values[i].size() >= 2) {
          BootstrapOptions opts = result.config.bootstrap;
          opts.seed = derive_seed(result.config.bootstrap.seed,
                                  {kBootstrapStream, t, static_cast<std::uint64_t>(m), i});
          ci = bootstrap_ci(values[i], opts);
        }
        std::size_t size = i + 1;
        for (const auto& r : tr.records) {
          if (r.positions.size() > i) {
            size = r.positions[i];
            break;
          }
        }
        csv << size << ',' << num(raw[i]) << ',' << num(smooth[i]) << ','
            << num(ci.low) << ',' << num(ci.high) << ','
            << num(result.baseline.value(m)) << '\n';
      }
      const fs::path path =
          dir / (file_stem(tr.spec.name) + "_" + std::string(metric_name(m)) + ".csv");
      write_text(path, csv.str());
      files.push_back(path);
    }
  }
  return files;
}

}  // namespace icldyn
