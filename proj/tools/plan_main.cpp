// plan: command-line front end for experiments, corpora and rating sessions.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "planweave/corpus.hpp"
#include "planweave/errors.hpp"
#include "planweave/rater_server.hpp"
#include "planweave/runner.hpp"

using namespace planweave;

namespace {

RaterHttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

ExperimentConfig load_with_overrides(const std::string& path, const Overrides& o) {
  ExperimentConfig c = load_config(path);
  apply_overrides(c, o);
  return c;
}

void print_summary(const ComparisonReport& r, const std::string& out_dir) {
  std::cout << "plans generated: " << r.plans_generated << ", resumed: " << r.plans_resumed
            << ", failed: " << r.failures << "\n";
  for (const auto& f : r.failure_log) std::cerr << "failure: " << f << "\n";
  std::cout << "report: " << out_dir << "/report.md\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal procedural planning: experiments, metrics and rating sessions"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  Overrides overrides;
  std::uint64_t seed = 0;
  std::string cache_mode;
  int workers = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Sampling / generation seed");
  auto* cache_opt = app.add_option("--cache-mode", cache_mode, "off | record | replay | strict-replay")
                        ->check(CLI::IsMember({"off", "record", "replay", "strict-replay"}));
  auto* workers_opt =
      app.add_option("--workers", workers, "Task-level worker threads")->check(CLI::PositiveNumber);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run the configured methods and write plan records and reports");
  run->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  auto* robust = app.add_subcommand("robustness", "Score bridge templates and select the best per role");
  robust->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  auto* ablate = app.add_subcommand("ablate", "Compare the full pipeline with its bridge ablations");
  ablate->add_option("-c,--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  std::string plans_dir, site_dir;
  auto* gallery = app.add_subcommand("gallery", "Export plan records as static HTML pages");
  gallery->add_option("-i,--input", plans_dir, "Directory of plan records")->required()->check(CLI::ExistingDirectory);
  gallery->add_option("-o,--output", site_dir, "Output directory")->required();

  std::string corpus_path;
  ValidationRules rules;
  auto* validate = app.add_subcommand("validate-corpus", "Validate a corpus and write rejects.txt next to it");
  validate->add_option("path", corpus_path, "Corpus file")->required()->check(CLI::ExistingFile);
  validate->add_option("--min-steps", rules.min_steps, "Minimum step count")->capture_default_str();
  validate->add_option("--max-steps", rules.max_steps, "Maximum step count")->capture_default_str();
  validate->add_option("--min-image-dim", rules.min_image_dim, "Minimum of image width and height")
      ->capture_default_str();
  auto* stats = app.add_subcommand("stats", "Step-count and category statistics of a corpus");
  stats->add_option("path", corpus_path, "Corpus file")->required()->check(CLI::ExistingFile);

  std::string state_dir, ui_dir, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve-ratings", "Serve the pairwise rating REST API");
  serve->add_option("--state-dir", state_dir, "Event log and snapshot directory")->required();
  serve->add_option("--plans-dir", plans_dir, "Plan output directory (images are served from it)")->required();
  serve->add_option("--ui-dir", ui_dir, "Static rater UI bundle served at /");
  serve->add_option("--host", host, "Bind address")->capture_default_str();
  serve->add_option("--port", port, "Port")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (seed_opt->count()) overrides.seed = seed;
  if (cache_opt->count()) overrides.cache_mode = cache_mode_from_string(cache_mode);
  if (workers_opt->count()) overrides.workers = workers;

  try {
    if (run->parsed()) {
      const auto config = load_with_overrides(config_path, overrides);
      print_summary(run_experiment(config), config.output_dir);
    } else if (robust->parsed()) {
      const auto config = load_with_overrides(config_path, overrides);
      const auto report = run_template_robustness(config);
      for (const auto& [role, sel] : report.selected) {
        std::cout << role << ": " << sel.id << (sel.tie_broken ? " (tie broken by id)" : "") << "\n";
      }
      std::cout << "report: " << config.output_dir << "/robustness.md\n";
    } else if (ablate->parsed()) {
      const auto config = load_with_overrides(config_path, overrides);
      const auto report = run_ablation(config);
      std::cout << report.markdown;
    } else if (gallery->parsed()) {
      const auto result = export_gallery(plans_dir, site_dir);
      std::cout << result.pages.size() << " pages written to " << site_dir << "\n";
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    } else if (validate->parsed()) {
      const int w = overrides.workers.value_or(4);
      const auto m = load_corpus(corpus_path, rules, w);
      const std::string report = write_rejection_report(m, corpus_path);
      std::cout << m.dataset << ": " << m.input_count << " examples, " << m.examples.size() << " accepted, "
                << m.rejected_example_count() << " rejected\n";
      for (const auto& r : m.rejected) std::cout << "  " << r.id << "\t" << r.rule << "\t" << r.detail << "\n";
      std::cout << "rejection report: " << report << "\n";
    } else if (stats->parsed()) {
      const auto m = load_corpus(corpus_path, {}, overrides.workers.value_or(4));
      const auto s = corpus_stats(m);
      std::cout << "dataset: " << m.dataset << "\nexamples: " << m.examples.size()
                << "\navg_steps: " << format_fixed(s.avg_steps, 2) << "\nstep histogram:\n";
      for (const auto& [n, c] : s.step_histogram) std::cout << "  " << n << "\t" << c << "\n";
      std::cout << "categories:\n";
      for (const auto& [cat, c] : s.category_counts) std::cout << "  " << (cat.empty() ? "(none)" : cat) << "\t" << c << "\n";
    } else if (serve->parsed()) {
      RaterService service(state_dir);
      RaterHttpServer server(service, plans_dir, ui_dir);
      if (!server.bind(host, port)) {
        std::cerr << "cannot bind " << host << ":" << port << "\n";
        return 1;
      }
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "serving on http://" << host << ":" << port << "\n" << std::flush;
      server.serve();
      g_server = nullptr;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
