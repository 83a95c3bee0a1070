#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include "icldyn/dataset.hpp"
#include "icldyn/errors.hpp"
#include "icldyn/metrics.hpp"
#include "icldyn/remote.hpp"
#include "icldyn/runner.hpp"
#include "icldyn/server.hpp"
#include "icldyn/tokenizer.hpp"
#include "icldyn/verbalize.hpp"

namespace {

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

icldyn::TaskConfig task_from(const std::string& path, const std::string& tmpl,
                             std::size_t synthetic_size, std::uint64_t seed) {
  icldyn::TaskConfig task;
  if (!path.empty()) task.path = path;
  task.template_name = tmpl;
  task.synthetic.size = synthetic_size;
  task.synthetic.seed = seed;
  return task;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context learning dynamics: single-pass label predictions, "
               "label manipulations and significance summaries"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run an experiment config");
  std::string config_path;
  std::string output_override;
  std::size_t workers = 0;
  run->add_option("config", config_path, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("-o,--output", output_override, "Override the output directory");
  run->add_option("-j,--workers", workers, "Override the worker count");

  auto* summarize = app.add_subcommand("summarize", "Significance table for result dirs");
  std::vector<std::string> summary_dirs;
  std::string metric = "loglik";
  std::string pairing = "paired";
  bool csv = false;
  summarize->add_option("dirs", summary_dirs, "Result directories")
      ->required()
      ->check(CLI::ExistingDirectory);
  summarize->add_option("--metric", metric, "loglik, entropy or accuracy")
      ->check(CLI::IsMember({"loglik", "entropy", "accuracy"}));
  summarize->add_option("--pairing", pairing, "paired or independent")
      ->check(CLI::IsMember({"paired", "independent"}));
  summarize->add_flag("--csv", csv, "Write CSV instead of an aligned table");

  auto* plotdata = app.add_subcommand("plotdata", "Write per-size curve CSVs");
  std::string plot_dir;
  std::string plot_out;
  plotdata->add_option("dir", plot_dir, "Result directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  plotdata->add_option("-o,--output", plot_out, "Output directory (default <dir>/plots)");

  auto* maxcontext = app.add_subcommand("maxcontext", "Largest context size under a token limit");
  std::string mc_task;
  std::string mc_template = "sentence";
  std::size_t mc_limit = 2048;
  std::size_t mc_samples = 20;
  std::uint64_t mc_seed = 0;
  std::string mc_whitespace = "merge";
  std::string mc_url;
  maxcontext->add_option("task", mc_task, "Task JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  maxcontext->add_option("--template", mc_template, "sentence, sentence_pair or question_pair");
  maxcontext->add_option("--limit", mc_limit, "Token limit");
  maxcontext->add_option("--samples", mc_samples, "Sampled orderings");
  maxcontext->add_option("--seed", mc_seed, "Sampling seed");
  maxcontext->add_option("--whitespace", mc_whitespace, "Reference tokenizer mode")
      ->check(CLI::IsMember({"merge", "dummy_prefix"}));
  maxcontext->add_option("--url", mc_url,
                         "Tokenize with a remote backend instead (or ICLDYN_BACKEND_URL)");

  auto* serve = app.add_subcommand("serve", "Serve a reference backend over HTTP");
  std::string serve_kind = "echo";
  std::string serve_task;
  std::string serve_template = "sentence";
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::size_t serve_size = 200;
  std::uint64_t serve_seed = 0;
  double serve_prior = 0.5;
  double serve_noise = 0.1;
  std::size_t serve_limit = 2048;
  serve->add_option("--backend", serve_kind, "echo, bayes or frequency")
      ->check(CLI::IsMember({"echo", "bayes", "frequency"}));
  serve->add_option("--task", serve_task, "Task JSONL (default: synthetic task)");
  serve->add_option("--template", serve_template, "Template name");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port (0 = ephemeral)");
  serve->add_option("--synthetic-size", serve_size, "Synthetic task size");
  serve->add_option("--seed", serve_seed, "Synthetic task seed");
  serve->add_option("--prior", serve_prior, "Bayesian prior of the identity mapping");
  serve->add_option("--noise", serve_noise, "Bayesian label noise");
  serve->add_option("--limit", serve_limit, "Declared token limit");

  auto* gen = app.add_subcommand("gen-task", "Write a synthetic binary task as JSONL");
  std::string gen_out;
  std::size_t gen_size = 200;
  std::uint64_t gen_seed = 0;
  gen->add_option("output", gen_out, "Output file")->required();
  gen->add_option("--size", gen_size, "Number of examples");
  gen->add_option("--seed", gen_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      icldyn::ExperimentConfig cfg = icldyn::load_config(config_path);
      if (!output_override.empty()) cfg.output_dir = output_override;
      if (workers > 0) cfg.workers = workers;
      const auto res = icldyn::run_experiment(cfg);
      std::cout << "wrote " << cfg.output_dir.string() << " (K = " << res.max_context
                << ", hash " << res.config_hash << ")\n";
      if (res.transforms.size() > 1) {
        icldyn::write_summary_text(
            std::cout, icldyn::summarize(res, icldyn::Metric::log_likelihood));
      }
    } else if (*summarize) {
      std::vector<icldyn::SummaryRow> rows;
      const auto m = icldyn::metric_from_name(metric);
      const auto p = pairing == "paired" ? icldyn::Pairing::paired
                                         : icldyn::Pairing::independent;
      for (const auto& dir : summary_dirs) {
        auto part = icldyn::summarize(icldyn::load_experiment(dir), m, p);
        rows.insert(rows.end(), part.begin(), part.end());
      }
      if (csv) {
        icldyn::write_summary_csv(std::cout, rows);
      } else {
        icldyn::write_summary_text(std::cout, rows);
      }
    } else if (*plotdata) {
      const auto res = icldyn::load_experiment(plot_dir);
      const std::filesystem::path out =
          plot_out.empty() ? std::filesystem::path(plot_dir) / "plots"
                           : std::filesystem::path(plot_out);
      for (const auto& f : icldyn::emit_plot_data(res, out)) {
        std::cout << f.string() << '\n';
      }
    } else if (*maxcontext) {
      const auto dataset = icldyn::load_dataset(mc_task);
      const auto tmpl = icldyn::template_by_name(mc_template);
      std::unique_ptr<icldyn::RemoteBackend> remote;
      std::unique_ptr<icldyn::WordTokenizer> local;
      const icldyn::Tokenizer* tok = nullptr;
      icldyn::RemoteConfig rc = icldyn::RemoteConfig::with_env_overrides({});
      if (!mc_url.empty()) rc.url = mc_url;
      if (!mc_url.empty() || std::getenv("ICLDYN_BACKEND_URL") != nullptr) {
        rc.max_input_tokens = mc_limit;
        remote = std::make_unique<icldyn::RemoteBackend>(rc);
        tok = &remote->tokenizer();
      } else {
        std::vector<std::string> corpus;
        for (const auto& ex : dataset.examples()) {
          corpus.push_back(icldyn::render_example(
              tmpl, ex.inputs, dataset.class_names()[ex.label]));
        }
        local = std::make_unique<icldyn::WordTokenizer>(icldyn::WordTokenizer::fit(
            corpus, mc_whitespace == "merge" ? icldyn::WhitespaceMode::merge
                                             : icldyn::WhitespaceMode::dummy_prefix));
        tok = local.get();
      }
      std::cout << icldyn::compute_max_context(dataset, tmpl, *tok, mc_limit,
                                               mc_samples, mc_seed)
                << '\n';
    } else if (*serve) {
      const auto task = task_from(serve_task, serve_template, serve_size, serve_seed);
      const auto dataset = task.load();
      const auto tmpl = task.make_template();
      icldyn::BackendConfig bc;
      bc.kind = serve_kind;
      bc.max_input_tokens = serve_limit;
      bc.bayes = {serve_prior, serve_noise};
      bc.lexicon = task.synthetic.lexicon;
      icldyn::BackendFactory factory(bc, dataset, tmpl, {});
      icldyn::BackendServer server(factory.get(dataset.class_names()),
                                   {serve_host, serve_port});
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.start();
      std::cout << "serving " << serve_kind << " on " << server.url() << std::endl;
      while (g_stop == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
    } else if (*gen) {
      icldyn::SyntheticTaskOptions opts;
      opts.size = gen_size;
      opts.seed = gen_seed;
      std::ofstream out(gen_out);
      if (!out) throw icldyn::Error("cannot write " + gen_out);
      icldyn::write_dataset(out, icldyn::synthetic_task(opts));
    }
  } catch (const icldyn::Error& e) {
    std::cerr << "icldyn: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "icldyn: unexpected error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
