#pragma once

// Experiment orchestration: method sweeps with metric tables, template
// robustness sweeps, bridge ablations and static HTML galleries.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "planweave/backends.hpp"
#include "planweave/corpus.hpp"
#include "planweave/metrics.hpp"
#include "planweave/pipeline.hpp"
#include "planweave/replay_cache.hpp"

namespace planweave {

/// kind: "mock", "openai" (text only) or "rest".
struct BackendEndpoint {
  std::string kind = "mock";
  std::string base_url;
  std::string model;
  std::string api_key_env;  // name of the env var holding a bearer token
  int max_in_flight = 4;
};

struct BackendsConfig {
  BackendEndpoint text;
  BackendEndpoint image;
  BackendEndpoint caption;
  BackendEndpoint embed;
  int mock_embed_dim = 64;
};

struct ExperimentConfig {
  std::vector<std::string> corpus_path;
  std::size_t sample_size = 0;  // 0 = every accepted example
  std::uint64_t seed = 0;
  bool balanced_sampling = false;
  std::vector<Method> methods;
  BackendsConfig backends;
  CacheMode cache_mode = CacheMode::off;
  std::string cache_dir;
  /// Template id per role ("vanilla", "t2i_bridge", "i2t_bridge").
  std::map<std::string, std::string> templates;
  /// Candidates per role for the robustness sweep; empty = every registered template of that role.
  std::map<std::string, std::vector<std::string>> robustness_templates;
  MetricToggles metrics;
  ValidationRules validation;
  std::string output_dir;
  int workers = 4;
  int max_steps = 22;
  int image_size = kDefaultImageSize;
  int max_tokens = 512;

  /// Throws ConfigError on an empty method list, unknown templates or bad bounds.
  void check() const;
  PipelineConfig pipeline(Method mode) const;
};

/// Relative paths in the document are resolved against `base_dir`.
ExperimentConfig config_from_json(const nlohmann::json& doc, const std::string& base_dir = ".");
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

/// Command-line values; they win over PLANWEAVE_SEED / PLANWEAVE_CACHE_MODE /
/// PLANWEAVE_WORKERS, which win over the config file.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<CacheMode> cache_mode;
  std::optional<int> workers;
};
void apply_overrides(ExperimentConfig& config, const Overrides& cli);

/// Builds the configured services; images are stored under output_dir and
/// every service is wrapped with the replay cache unless the mode is off.
BackendSuite build_backends(const ExperimentConfig& config);

struct MethodRow {
  std::string dataset;
  std::string method;  // a Method tag, or "reference"
  std::size_t plans = 0;
  std::map<std::string, double> means;        // metric name -> mean over valid values
  std::map<std::string, std::size_t> excluded;  // metric name -> plans without a value
  double avg_steps = 0;
};

/// Metric column names in report order.
const std::vector<std::string>& report_columns();

struct ComparisonReport {
  std::vector<MethodRow> rows;
  std::string backend_fingerprint;
  std::string embedder_fingerprint;
  std::size_t failures = 0;
  std::vector<std::string> failure_log;
  std::size_t plans_generated = 0;
  std::size_t plans_resumed = 0;

  const MethodRow* find(const std::string& dataset, const std::string& method) const;
};

std::string report_markdown(const ComparisonReport& report);
std::string report_tsv(const ComparisonReport& report);

/// Runs every sampled goal x method, writing plan records, metrics.jsonl,
/// report.md and report.tsv under output_dir. Existing plan records are
/// reused; per-task failures are logged to failures.log and counted.
ComparisonReport run_experiment(const ExperimentConfig& config, BackendSuite& backends);
ComparisonReport run_experiment(const ExperimentConfig& config);

struct TemplateScore {
  std::string id;
  TemplateRole role = TemplateRole::t2i_bridge;
  bool misleading = false;
  std::map<std::string, double> alignment;  // dataset -> mean alignment
  double average = 0;
};

struct Selection {
  std::string id;
  bool tie_broken = false;  // another template had the same average
};

/// Argmax of `average`; equal averages go to the lexicographically smallest id.
Selection select_template(const std::vector<TemplateScore>& scores);

struct RobustnessReport {
  std::vector<TemplateScore> scores;
  std::map<std::string, Selection> selected;  // role tag -> selection
  std::string embedder_fingerprint;
};

std::string robustness_markdown(const RobustnessReport& report);

/// Writes robustness.md and robustness.tsv under output_dir.
RobustnessReport run_template_robustness(const ExperimentConfig& config, BackendSuite& backends);
RobustnessReport run_template_robustness(const ExperimentConfig& config);

/// "0.341 (-18.4%)": value to 3 decimals and its change relative to `base`.
std::string format_delta(double value, double base);

/// Mean of the four text-plan metrics (WMD similarity, S-BERT, ROUGE-L, METEOR)
/// that have values.
std::optional<double> avg_textual(const MethodRow& row);

struct AblationReport {
  ComparisonReport comparison;
  std::string markdown;
};

/// Runs tip_procedure, ablation_no_t2ib, ablation_no_i2tb and tip_stepwise and
/// contrasts each against tip_procedure; writes ablation.md.
AblationReport run_ablation(const ExperimentConfig& config, BackendSuite& backends);
AblationReport run_ablation(const ExperimentConfig& config);

struct GalleryResult {
  std::vector<std::string> pages;  // relative to the output directory, sorted
  std::vector<std::string> warnings;
};

/// One HTML page per goal under `out_dir`, methods as columns and steps as
/// rows, images copied alongside. Image locators resolve against `plans_dir`.
GalleryResult export_gallery(const std::string& plans_dir, const std::string& out_dir);

}  // namespace planweave
