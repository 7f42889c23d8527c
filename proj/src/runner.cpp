#include "planweave/runner.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "planweave/digest.hpp"
#include "planweave/errors.hpp"
#include "planweave/mock_backends.hpp"
#include "planweave/parallel.hpp"
#include "planweave/remote_backends.hpp"

namespace planweave {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------------ config

namespace {

std::string template_for(const ExperimentConfig& c, TemplateRole role) {
  auto it = c.templates.find(std::string(to_string(role)));
  return it != c.templates.end() ? it->second : default_template(role).id();
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

BackendEndpoint endpoint_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  reject_unknown_keys(j, {"kind", "base_url", "model", "api_key_env", "max_in_flight"}, where);
  BackendEndpoint e;
  e.kind = get_or<std::string>(j, "kind", e.kind, where);
  e.base_url = get_or<std::string>(j, "base_url", "", where);
  e.model = get_or<std::string>(j, "model", "", where);
  e.api_key_env = get_or<std::string>(j, "api_key_env", "", where);
  e.max_in_flight = get_or<int>(j, "max_in_flight", e.max_in_flight, where);
  if (e.kind != "mock" && e.kind != "openai" && e.kind != "rest") {
    throw ConfigError(where + ".kind: expected mock, openai or rest, got '" + e.kind + "'");
  }
  if (e.kind != "mock" && e.base_url.empty()) throw ConfigError(where + ".base_url: required for " + e.kind);
  return e;
}

json endpoint_to_json(const BackendEndpoint& e) {
  return json{{"kind", e.kind},
              {"base_url", e.base_url},
              {"model", e.model},
              {"api_key_env", e.api_key_env},
              {"max_in_flight", e.max_in_flight}};
}

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

}  // namespace

void ExperimentConfig::check() const {
  if (methods.empty()) throw ConfigError("config: at least one method is required");
  if (corpus_path.empty()) throw ConfigError("config: corpus_path is required");
  if (output_dir.empty()) throw ConfigError("config: output_dir is required");
  if (workers < 1) throw ConfigError("config: workers must be >= 1");
  if (max_steps < 1) throw ConfigError("config: max_steps must be >= 1");
  if (cache_mode != CacheMode::off && cache_dir.empty()) throw ConfigError("config: cache_dir is required");
  validation.check();
  for (const auto& [role, id] : templates) {
    const TemplateRole r = role_from_string(role);
    if (find_template(id).role() != r) throw ConfigError("config: template '" + id + "' is not a " + role);
  }
  for (const auto& [role, ids] : robustness_templates) {
    const TemplateRole r = role_from_string(role);
    for (const auto& id : ids) {
      if (find_template(id).role() != r) throw ConfigError("config: template '" + id + "' is not a " + role);
    }
  }
  pipeline(methods.front()).check();
}

PipelineConfig ExperimentConfig::pipeline(Method mode) const {
  PipelineConfig p;
  p.vanilla_template = find_template(template_for(*this, TemplateRole::vanilla));
  p.t2i_template = find_template(template_for(*this, TemplateRole::t2i_bridge));
  p.i2t_template = find_template(template_for(*this, TemplateRole::i2t_bridge));
  p.mode = mode;
  p.image_width = p.image_height = image_size;
  p.params.max_tokens = max_tokens;
  p.params.seed = static_cast<std::int64_t>(seed);
  p.max_steps = max_steps;
  p.workers = 1;  // parallelism is across tasks
  return p;
}

ExperimentConfig config_from_json(const json& doc, const std::string& base_dir) {
  if (!doc.is_object()) throw ConfigError("config: expected an object");
  reject_unknown_keys(doc,
                      {"corpus_path", "sample_size", "seed", "balanced_sampling", "methods", "backends",
                       "cache_mode", "cache_dir", "templates", "robustness_templates", "metrics", "validation",
                       "output_dir", "workers", "max_steps", "image_size", "max_tokens"},
                      "config");
  ExperimentConfig c;
  const std::string w = "config";
  if (auto it = doc.find("corpus_path"); it != doc.end()) {
    if (it->is_string()) {
      c.corpus_path.push_back(resolve_path(it->get<std::string>(), base_dir));
    } else if (it->is_array()) {
      for (const auto& p : *it) {
        if (!p.is_string()) throw ConfigError("config.corpus_path: expected strings");
        c.corpus_path.push_back(resolve_path(p.get<std::string>(), base_dir));
      }
    } else {
      throw ConfigError("config.corpus_path: expected a string or an array");
    }
  }
  c.sample_size = get_or<std::size_t>(doc, "sample_size", 0, w);
  c.seed = get_or<std::uint64_t>(doc, "seed", 0, w);
  c.balanced_sampling = get_or<bool>(doc, "balanced_sampling", false, w);
  try {
    for (const auto& m : get_or<std::vector<std::string>>(doc, "methods", {}, w)) {
      c.methods.push_back(method_from_string(m));
    }
  } catch (const ParseError& e) {
    throw ConfigError(std::string("config.methods: ") + e.what());
  }
  if (auto it = doc.find("backends"); it != doc.end()) {
    reject_unknown_keys(*it, {"text", "image", "caption", "embed", "mock_embed_dim"}, "config.backends");
    if (it->contains("text")) c.backends.text = endpoint_from_json(it->at("text"), "config.backends.text");
    if (it->contains("image")) c.backends.image = endpoint_from_json(it->at("image"), "config.backends.image");
    if (it->contains("caption")) {
      c.backends.caption = endpoint_from_json(it->at("caption"), "config.backends.caption");
    }
    if (it->contains("embed")) c.backends.embed = endpoint_from_json(it->at("embed"), "config.backends.embed");
    c.backends.mock_embed_dim = get_or<int>(*it, "mock_embed_dim", 64, "config.backends");
    if (c.backends.text.kind == "rest") {
      throw ConfigError("config.backends.text.kind: text generation supports mock or openai");
    }
    for (const auto* e : {&c.backends.image, &c.backends.caption, &c.backends.embed}) {
      if (e->kind == "openai") throw ConfigError("config.backends: openai kind is text-only");
    }
  }
  try {
    c.cache_mode = cache_mode_from_string(get_or<std::string>(doc, "cache_mode", "off", w));
  } catch (const Error& e) {
    throw ConfigError(std::string("config.cache_mode: ") + e.what());
  }
  c.cache_dir = resolve_path(get_or<std::string>(doc, "cache_dir", "", w), base_dir);
  if (auto it = doc.find("templates"); it != doc.end()) {
    reject_unknown_keys(*it, {"vanilla", "t2i_bridge", "i2t_bridge"}, "config.templates");
    c.templates = it->get<std::map<std::string, std::string>>();
  }
  if (auto it = doc.find("robustness_templates"); it != doc.end()) {
    reject_unknown_keys(*it, {"t2i_bridge", "i2t_bridge"}, "config.robustness_templates");
    c.robustness_templates = it->get<std::map<std::string, std::vector<std::string>>>();
  }
  if (auto it = doc.find("metrics"); it != doc.end()) {
    const std::string mw = "config.metrics";
    reject_unknown_keys(*it,
                        {"wmd", "sbert", "rouge_l", "meteor", "clip", "composite", "fid", "wmd_vocab_budget",
                         "wmd_missing"},
                        mw);
    MetricToggles& t = c.metrics;
    t.wmd = get_or<bool>(*it, "wmd", true, mw);
    t.sbert = get_or<bool>(*it, "sbert", true, mw);
    t.rouge_l = get_or<bool>(*it, "rouge_l", true, mw);
    t.meteor = get_or<bool>(*it, "meteor", true, mw);
    t.clip = get_or<bool>(*it, "clip", true, mw);
    t.composite = get_or<bool>(*it, "composite", true, mw);
    t.fid = get_or<bool>(*it, "fid", true, mw);
    t.wmd_options.vocab_budget = get_or<std::size_t>(*it, "wmd_vocab_budget", 200, mw);
    const std::string missing = get_or<std::string>(*it, "wmd_missing", "error", mw);
    if (missing != "error" && missing != "skip") throw ConfigError(mw + ".wmd_missing: expected error or skip");
    t.wmd_options.missing = missing == "skip" ? MissingWordPolicy::skip : MissingWordPolicy::error;
  }
  if (auto it = doc.find("validation"); it != doc.end()) {
    reject_unknown_keys(*it, {"min_steps", "max_steps", "min_image_dim"}, "config.validation");
    c.validation.min_steps = get_or<int>(*it, "min_steps", 3, "config.validation");
    c.validation.max_steps = get_or<int>(*it, "max_steps", 22, "config.validation");
    c.validation.min_image_dim = get_or<int>(*it, "min_image_dim", 400, "config.validation");
  }
  c.output_dir = resolve_path(get_or<std::string>(doc, "output_dir", "", w), base_dir);
  c.workers = get_or<int>(doc, "workers", 4, w);
  c.max_steps = get_or<int>(doc, "max_steps", 22, w);
  c.image_size = get_or<int>(doc, "image_size", kDefaultImageSize, w);
  c.max_tokens = get_or<int>(doc, "max_tokens", 512, w);
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(std::string(to_string(m)));
  const auto& t = c.metrics;
  return json{
      {"corpus_path", c.corpus_path},
      {"sample_size", c.sample_size},
      {"seed", c.seed},
      {"balanced_sampling", c.balanced_sampling},
      {"methods", methods},
      {"backends",
       {{"text", endpoint_to_json(c.backends.text)},
        {"image", endpoint_to_json(c.backends.image)},
        {"caption", endpoint_to_json(c.backends.caption)},
        {"embed", endpoint_to_json(c.backends.embed)},
        {"mock_embed_dim", c.backends.mock_embed_dim}}},
      {"cache_mode", std::string(to_string(c.cache_mode))},
      {"cache_dir", c.cache_dir},
      {"templates", c.templates},
      {"robustness_templates", c.robustness_templates},
      {"metrics",
       {{"wmd", t.wmd},
        {"sbert", t.sbert},
        {"rouge_l", t.rouge_l},
        {"meteor", t.meteor},
        {"clip", t.clip},
        {"composite", t.composite},
        {"fid", t.fid},
        {"wmd_vocab_budget", t.wmd_options.vocab_budget},
        {"wmd_missing", t.wmd_options.missing == MissingWordPolicy::skip ? "skip" : "error"}}},
      {"validation",
       {{"min_steps", c.validation.min_steps},
        {"max_steps", c.validation.max_steps},
        {"min_image_dim", c.validation.min_image_dim}}},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
      {"max_steps", c.max_steps},
      {"image_size", c.image_size},
      {"max_tokens", c.max_tokens},
  };
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return config_from_json(doc, fs::absolute(fs::path(path)).parent_path().string());
}

void apply_overrides(ExperimentConfig& config, const Overrides& cli) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  try {
    if (auto v = env("PLANWEAVE_SEED")) config.seed = std::stoull(*v);
    if (auto v = env("PLANWEAVE_WORKERS")) config.workers = std::stoi(*v);
  } catch (const std::logic_error&) {
    throw ConfigError("PLANWEAVE_SEED / PLANWEAVE_WORKERS must be integers");
  }
  if (auto v = env("PLANWEAVE_CACHE_MODE")) config.cache_mode = cache_mode_from_string(*v);
  if (cli.seed) config.seed = *cli.seed;
  if (cli.cache_mode) config.cache_mode = *cli.cache_mode;
  if (cli.workers) config.workers = *cli.workers;
}

// ---------------------------------------------------------------- backends

namespace {

EndpointConfig endpoint_config(const BackendEndpoint& e) {
  EndpointConfig c;
  c.base_url = e.base_url;
  c.model = e.model;
  c.max_in_flight = e.max_in_flight;
  if (!e.api_key_env.empty()) {
    const char* token = std::getenv(e.api_key_env.c_str());
    if (!token) throw ConfigError("environment variable '" + e.api_key_env + "' is not set");
    c.bearer_token = token;
  }
  return c;
}

}  // namespace

BackendSuite build_backends(const ExperimentConfig& config) {
  BackendSuite suite = make_mock_suite(config.output_dir, static_cast<std::int64_t>(config.seed));
  const auto& b = config.backends;
  if (b.text.kind == "openai") suite.text = std::make_shared<OpenAIChatGenerator>(endpoint_config(b.text));
  if (b.image.kind == "rest") suite.image = std::make_shared<RestImageGenerator>(endpoint_config(b.image));
  if (b.caption.kind == "rest") suite.captioner = std::make_shared<RestCaptioner>(endpoint_config(b.caption));
  std::shared_ptr<Embedder> embedder;
  if (b.embed.kind == "rest") {
    embedder = std::make_shared<RestEmbedder>(endpoint_config(b.embed));
  } else {
    embedder = std::make_shared<HashingEmbedder>(b.mock_embed_dim);
  }
  suite.sentence_embedder = suite.word_embedder = suite.joint_embedder = embedder;
  if (config.cache_mode == CacheMode::off) return suite;
  return wrap_with_replay(suite, config.cache_dir, config.cache_mode);
}

// ------------------------------------------------------------------ reports

const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"wmd",  "sbert",  "rouge_l", "meteor", "fid",
                                             "clip", "cap_s", "text_s",  "all_s"};
  return cols;
}

namespace {

const std::map<std::string, std::string>& column_titles() {
  static const std::map<std::string, std::string> titles{
      {"wmd", "WMD"},   {"sbert", "S-BERT"}, {"rouge_l", "ROUGE-L"}, {"meteor", "METEOR"}, {"fid", "FID"},
      {"clip", "CLIP"}, {"cap_s", "Cap-S"},  {"text_s", "Text-S"},   {"all_s", "ALL-S"},
  };
  return titles;
}

std::optional<double> metric_value(const MetricReport& r, const std::string& name) {
  if (name == "wmd") return r.wmd_similarity;
  if (name == "sbert") return r.sbert;
  if (name == "rouge_l") return r.rouge_l;
  if (name == "meteor") return r.meteor;
  if (name == "fid") return r.fid;
  if (name == "clip") return r.clip;
  if (name == "cap_s") return r.cap_s;
  if (name == "text_s") return r.text_s;
  if (name == "all_s") return r.all_s;
  throw PreconditionError("unknown metric column '" + name + "'");
}

std::string cell(const MethodRow& row, const std::string& col, int decimals) {
  auto it = row.means.find(col);
  return it == row.means.end() ? "-" : format_fixed(it->second, decimals);
}

std::string excluded_note(const MethodRow& row) {
  std::string out;
  for (const auto& col : report_columns()) {
    auto it = row.excluded.find(col);
    if (it == row.excluded.end() || it->second == 0) continue;
    if (!out.empty()) out += ", ";
    out += col + "=" + std::to_string(it->second);
  }
  return out.empty() ? "0" : out;
}

}  // namespace

const MethodRow* ComparisonReport::find(const std::string& dataset, const std::string& method) const {
  for (const auto& r : rows) {
    if (r.dataset == dataset && r.method == method) return &r;
  }
  return nullptr;
}

std::string report_markdown(const ComparisonReport& report) {
  std::ostringstream out;
  out << "# Automatic evaluation\n\n";
  out << "| Dataset | Method | n |";
  for (const auto& c : report_columns()) out << " " << column_titles().at(c) << " |";
  out << " Avg. steps | Excluded |\n|---|---|---|";
  for (std::size_t i = 0; i < report_columns().size(); ++i) out << "---|";
  out << "---|---|\n";
  for (const auto& row : report.rows) {
    out << "| " << row.dataset << " | " << row.method << " | " << row.plans << " |";
    for (const auto& c : report_columns()) out << " " << cell(row, c, 2) << " |";
    out << " " << format_fixed(row.avg_steps, 2) << " | "
        << (row.method == "reference" ? "-" : excluded_note(row)) << " |\n";
  }
  out << "\nWMD is reported as similarity 1/(1+distance). FID is corpus-level per method.\n";
  out << "\nBackends: `" << report.backend_fingerprint << "`  \n";
  out << "Embedders: `" << report.embedder_fingerprint << "`  \n";
  out << "Failed tasks: " << report.failures << "\n";
  return out.str();
}

std::string report_tsv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "dataset\tmethod\tn";
  for (const auto& c : report_columns()) out << "\t" << c;
  out << "\tavg_steps";
  for (const auto& c : report_columns()) out << "\texcluded_" << c;
  out << "\n";
  for (const auto& row : report.rows) {
    out << row.dataset << "\t" << row.method << "\t" << row.plans;
    for (const auto& c : report_columns()) out << "\t" << cell(row, c, 6);
    out << "\t" << format_fixed(row.avg_steps, 2);
    for (const auto& c : report_columns()) {
      auto it = row.excluded.find(c);
      out << "\t" << (it == row.excluded.end() ? 0 : it->second);
    }
    out << "\n";
  }
  return out.str();
}

// -------------------------------------------------------------- experiment

namespace {

struct Dataset {
  CorpusManifest manifest;
  std::vector<Goal> goals;
};

std::vector<Dataset> load_datasets(const ExperimentConfig& config) {
  std::vector<Dataset> out;
  for (const auto& path : config.corpus_path) {
    Dataset d;
    d.manifest = load_corpus(path, config.validation, config.workers);
    const std::size_t n = config.sample_size == 0 ? d.manifest.examples.size() : config.sample_size;
    d.goals = sample_tasks(d.manifest, n, config.seed, config.balanced_sampling);
    if (d.goals.empty()) throw ConfigError("corpus '" + path + "' has no sampled tasks");
    out.push_back(std::move(d));
  }
  return out;
}

struct Task {
  const Dataset* dataset;
  const Goal* goal;
  Method method;
};

struct TaskOutcome {
  std::optional<MultimodalPlan> plan;
  MetricReport metrics;
  std::string error;
  bool resumed = false;
};

}  // namespace

ComparisonReport run_experiment(const ExperimentConfig& config, BackendSuite& backends) {
  config.check();
  const auto datasets = load_datasets(config);
  fs::create_directories(config.output_dir);

  std::vector<Task> tasks;
  for (const auto& d : datasets) {
    for (const auto& g : d.goals) {
      for (Method m : config.methods) tasks.push_back({&d, &g, m});
    }
  }
  MetricToggles per_plan = config.metrics;
  per_plan.fid = false;

  auto outcomes = parallel_map(tasks.size(), config.workers, [&](std::size_t i) {
    const Task& t = tasks[i];
    TaskOutcome o;
    const ReferencePlan* ref = t.dataset->manifest.find(t.goal->id);
    const std::string path = plan_output_path(config.output_dir, *t.goal, t.method);
    try {
      if (fs::exists(path)) {
        o.plan = read_plan_record(path);
        o.resumed = true;
      } else {
        o.plan = run_method(*t.goal, ref, backends, config.pipeline(t.method));
        write_plan_record(path, *o.plan);
      }
      o.metrics = evaluate_plan(*o.plan, *ref, backends, per_plan);
    } catch (const std::exception& e) {
      o.plan.reset();
      o.error = t.goal->dataset + "/" + t.goal->id + "/" + std::string(to_string(t.method)) + ": " + e.what();
    }
    return o;
  });

  ComparisonReport report;
  report.backend_fingerprint = backends.fingerprint();
  report.embedder_fingerprint = backends.embedder_fingerprint();
  std::string jsonl, failures;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const auto& o = outcomes[i];
    if (!o.plan) {
      ++report.failures;
      report.failure_log.push_back(o.error);
      failures += o.error + "\n";
      continue;
    }
    (o.resumed ? report.plans_resumed : report.plans_generated) += 1;
    json line{{"dataset", tasks[i].goal->dataset},
              {"goal_id", tasks[i].goal->id},
              {"method", std::string(to_string(tasks[i].method))},
              {"steps", o.plan->steps.size()},
              {"metrics", report_to_json(o.metrics)}};
    jsonl += line.dump() + "\n";
  }

  for (const auto& d : datasets) {
    MethodRow ref_row;
    ref_row.dataset = d.manifest.dataset;
    ref_row.method = "reference";
    std::vector<std::vector<double>> ref_features;
    bool ref_features_ok = true;
    for (const auto& g : d.goals) {
      const ReferencePlan* ref = d.manifest.find(g.id);
      ++ref_row.plans;
      ref_row.avg_steps += static_cast<double>(ref->steps.size());
      if (config.metrics.fid && ref_features_ok) {
        try {
          for (const auto& s : ref->steps) {
            if (s.image) ref_features.push_back(embed(*backends.joint_embedder, *backends.store, *s.image).values);
          }
        } catch (const std::exception& e) {
          ref_features_ok = false;
          report.failure_log.push_back(d.manifest.dataset + "/reference: fid features: " + e.what());
        }
      }
    }
    ref_row.avg_steps /= static_cast<double>(std::max<std::size_t>(ref_row.plans, 1));

    for (Method m : config.methods) {
      MethodRow row;
      row.dataset = d.manifest.dataset;
      row.method = std::string(to_string(m));
      std::map<std::string, double> sums;
      std::map<std::string, std::size_t> counts;
      std::vector<std::vector<double>> features;
      bool features_ok = true;
      std::size_t tasks_for_row = 0;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].dataset != &d || tasks[i].method != m) continue;
        ++tasks_for_row;
        const auto& o = outcomes[i];
        if (!o.plan) continue;
        ++row.plans;
        row.avg_steps += static_cast<double>(o.plan->steps.size());
        for (const auto& c : report_columns()) {
          if (c == "fid") continue;
          if (auto v = metric_value(o.metrics, c)) {
            sums[c] += *v;
            ++counts[c];
          }
        }
        if (config.metrics.fid && features_ok) {
          try {
            for (const auto& s : o.plan->steps) {
              if (s.image) features.push_back(embed(*backends.joint_embedder, *backends.store, *s.image).values);
            }
          } catch (const std::exception& e) {
            features_ok = false;
            report.failure_log.push_back(row.dataset + "/" + row.method + ": fid features: " + e.what());
          }
        }
      }
      if (row.plans > 0) row.avg_steps /= static_cast<double>(row.plans);
      for (const auto& c : report_columns()) {
        if (c == "fid") continue;
        if (counts[c] > 0) row.means[c] = sums[c] / static_cast<double>(counts[c]);
        row.excluded[c] = tasks_for_row - counts[c];
      }
      row.excluded["fid"] = tasks_for_row;
      if (config.metrics.fid && features_ok && ref_features_ok) {
        try {
          row.means["fid"] = frechet_distance(moments_from_features(features), moments_from_features(ref_features));
          row.excluded["fid"] = tasks_for_row - row.plans;
        } catch (const std::exception& e) {
          report.failure_log.push_back(row.dataset + "/" + row.method + ": fid: " + e.what());
        }
      }
      report.rows.push_back(std::move(row));
    }
    report.rows.push_back(std::move(ref_row));
  }

  write_file_atomic((fs::path(config.output_dir) / "metrics.jsonl").string(), jsonl);
  write_file_atomic((fs::path(config.output_dir) / "failures.log").string(), failures);
  write_file_atomic((fs::path(config.output_dir) / "report.md").string(), report_markdown(report));
  write_file_atomic((fs::path(config.output_dir) / "report.tsv").string(), report_tsv(report));
  for (const auto& d : datasets) {
    std::string rejects;
    for (const auto& r : d.manifest.rejected) rejects += r.id + "\t" + r.rule + "\t" + r.detail + "\n";
    write_file_atomic((fs::path(config.output_dir) / (d.manifest.dataset + ".rejects.txt")).string(), rejects);
  }
  return report;
}

ComparisonReport run_experiment(const ExperimentConfig& config) {
  config.check();
  BackendSuite suite = build_backends(config);
  return run_experiment(config, suite);
}

// -------------------------------------------------------------- robustness

Selection select_template(const std::vector<TemplateScore>& scores) {
  if (scores.empty()) throw PreconditionError("select_template: no candidates");
  const TemplateScore* best = nullptr;
  bool tie = false;
  for (const auto& s : scores) {
    if (!best || s.average > best->average) {
      best = &s;
      tie = false;
    } else if (s.average == best->average) {
      tie = true;
      if (s.id < best->id) best = &s;
    }
  }
  return {best->id, tie};
}

std::string robustness_markdown(const RobustnessReport& report) {
  std::set<std::string> datasets;
  for (const auto& s : report.scores) {
    for (const auto& [d, _] : s.alignment) datasets.insert(d);
  }
  std::ostringstream out;
  out << "# Template robustness\n";
  for (const std::string role : {"t2i_bridge", "i2t_bridge"}) {
    std::vector<const TemplateScore*> rows;
    for (const auto& s : report.scores) {
      if (to_string(s.role) == role) rows.push_back(&s);
    }
    if (rows.empty()) continue;
    std::stable_sort(rows.begin(), rows.end(), [](const TemplateScore* a, const TemplateScore* b) {
      return a->average != b->average ? a->average > b->average : a->id < b->id;
    });
    out << "\n## " << role << "\n\n| Rank | Template | Text |";
    for (const auto& d : datasets) out << " " << d << " |";
    out << " Average | Misleading | Selected |\n|---|---|---|";
    for (std::size_t i = 0; i < datasets.size(); ++i) out << "---|";
    out << "---|---|---|\n";
    const auto& sel = report.selected.at(role);
    int rank = 0;
    for (const auto* s : rows) {
      out << "| " << ++rank << " | " << s->id << " | " << find_template(s->id).body() << " |";
      for (const auto& d : datasets) {
        auto it = s->alignment.find(d);
        out << " " << (it == s->alignment.end() ? "-" : format_fixed(it->second, 4)) << " |";
      }
      out << " " << format_fixed(s->average, 4) << " | " << (s->misleading ? "yes" : "no") << " | "
          << (s->id == sel.id ? "yes" : "") << " |\n";
    }
    if (sel.tie_broken) out << "\nTie on the best average; broken by template id.\n";
  }
  out << "\nEmbedders: `" << report.embedder_fingerprint << "`\n";
  return out.str();
}

RobustnessReport run_template_robustness(const ExperimentConfig& config, BackendSuite& backends) {
  config.check();
  const auto datasets = load_datasets(config);
  RobustnessReport report;
  report.embedder_fingerprint = backends.embedder_fingerprint();
  for (const TemplateRole role : {TemplateRole::t2i_bridge, TemplateRole::i2t_bridge}) {
    const std::string tag(to_string(role));
    std::vector<std::string> ids;
    if (auto it = config.robustness_templates.find(tag); it != config.robustness_templates.end()) {
      ids = it->second;
    } else {
      for (const auto& t : builtin_templates()) {
        if (t.role() == role) ids.push_back(t.id());
      }
    }
    if (ids.size() < 2) throw ConfigError("robustness: need at least two " + tag + " templates");
    std::vector<TemplateScore> scores;
    for (const auto& id : ids) {
      const PromptTemplate& tmpl = find_template(id);
      TemplateScore s{id, role, tmpl.misleading(), {}, 0};
      PipelineConfig p = config.pipeline(Method::tip_procedure);
      for (const auto& d : datasets) {
        std::vector<ReferencePlan> sample;
        for (const auto& g : d.goals) sample.push_back(*d.manifest.find(g.id));
        s.alignment[d.manifest.dataset] = template_alignment(tmpl, sample, backends, p).mean;
      }
      for (const auto& [_, a] : s.alignment) s.average += a;
      s.average /= static_cast<double>(s.alignment.size());
      scores.push_back(std::move(s));
    }
    report.selected[tag] = select_template(scores);
    report.scores.insert(report.scores.end(), scores.begin(), scores.end());
  }
  fs::create_directories(config.output_dir);
  write_file_atomic((fs::path(config.output_dir) / "robustness.md").string(), robustness_markdown(report));
  std::string tsv = "role\ttemplate\tdataset\talignment\taverage\tmisleading\tselected\n";
  for (const auto& s : report.scores) {
    const std::string role(to_string(s.role));
    for (const auto& [d, a] : s.alignment) {
      tsv += role + "\t" + s.id + "\t" + d + "\t" + format_fixed(a, 6) + "\t" + format_fixed(s.average, 6) + "\t" +
             (s.misleading ? "1" : "0") + "\t" + (report.selected[role].id == s.id ? "1" : "0") + "\n";
    }
  }
  write_file_atomic((fs::path(config.output_dir) / "robustness.tsv").string(), tsv);
  return report;
}

RobustnessReport run_template_robustness(const ExperimentConfig& config) {
  config.check();
  BackendSuite suite = build_backends(config);
  return run_template_robustness(config, suite);
}

// ---------------------------------------------------------------- ablation

std::string format_delta(double value, double base) {
  std::string out = format_fixed(value, 3);
  if (base == 0) return out + " (n/a)";
  const double pct = (value - base) / std::abs(base) * 100.0;
  std::string p = format_fixed(pct, 1);
  if (p == "-0.0") p = "0.0";
  if (p[0] != '-') p = "+" + p;
  return out + " (" + p + "%)";
}

std::optional<double> avg_textual(const MethodRow& row) {
  double sum = 0;
  int n = 0;
  for (const char* c : {"wmd", "sbert", "rouge_l", "meteor"}) {
    if (auto it = row.means.find(c); it != row.means.end()) {
      sum += it->second;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

AblationReport run_ablation(const ExperimentConfig& config, BackendSuite& backends) {
  ExperimentConfig c = config;
  c.methods = {Method::tip_procedure, Method::ablation_no_t2ib, Method::ablation_no_i2tb, Method::tip_stepwise};
  AblationReport out;
  out.comparison = run_experiment(c, backends);
  const std::vector<std::string> cols{"wmd", "sbert", "rouge_l", "meteor", "avg_textual", "fid", "clip", "all_s"};
  const std::map<std::string, std::string> titles{
      {"wmd", "WMD"},       {"sbert", "S-BERT"}, {"rouge_l", "ROUGE-L"}, {"meteor", "METEOR"},
      {"avg_textual", "Avg. Textual"}, {"fid", "FID"}, {"clip", "CLIP"}, {"all_s", "ALL-S"}};
  auto value = [](const MethodRow& r, const std::string& col) -> std::optional<double> {
    if (col == "avg_textual") return avg_textual(r);
    auto it = r.means.find(col);
    if (it == r.means.end()) return std::nullopt;
    return it->second;
  };
  std::ostringstream md;
  md << "# Bridge ablation\n";
  std::set<std::string> seen;
  for (const auto& row : out.comparison.rows) {
    if (!seen.insert(row.dataset).second) continue;
    const MethodRow* base = out.comparison.find(row.dataset, "tip_procedure");
    md << "\n## " << row.dataset << "\n\n| Method |";
    for (const auto& col : cols) md << " " << titles.at(col) << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) md << "---|";
    md << "\n";
    for (Method m : c.methods) {
      const MethodRow* r = out.comparison.find(row.dataset, std::string(to_string(m)));
      md << "| " << to_string(m) << " |";
      for (const auto& col : cols) {
        const auto v = value(*r, col);
        const auto b = base ? value(*base, col) : std::nullopt;
        if (!v) {
          md << " - |";
        } else if (m == Method::tip_procedure || !b) {
          md << " " << format_fixed(*v, 3) << " |";
        } else {
          md << " " << format_delta(*v, *b) << " |";
        }
      }
      md << "\n";
    }
  }
  md << "\nPercentages are relative to tip_procedure; FID is lower-is-better.\n";
  out.markdown = md.str();
  write_file_atomic((fs::path(c.output_dir) / "ablation.md").string(), out.markdown);
  return out;
}

AblationReport run_ablation(const ExperimentConfig& config) {
  config.check();
  BackendSuite suite = build_backends(config);
  return run_ablation(config, suite);
}

// ----------------------------------------------------------------- gallery

namespace {

std::string html_escape(std::string_view s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string file_component(const std::string& s) {
  std::string out;
  for (char ch : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    out += ok ? ch : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

constexpr std::string_view kStyle =
    "body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}"
    "td,th{border:1px solid #ccc;padding:6px;vertical-align:top;max-width:320px}"
    "img{max-width:300px}.missing{background:#fee;color:#900}";

}  // namespace

GalleryResult export_gallery(const std::string& plans_dir, const std::string& out_dir) {
  if (!fs::is_directory(plans_dir)) throw Error("plans directory not found: '" + plans_dir + "'");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(plans_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".plan") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  GalleryResult result;
  // dataset -> goal id -> plans (all_methods order)
  std::map<std::string, std::map<std::string, std::vector<MultimodalPlan>>> grouped;
  for (const auto& f : files) {
    try {
      MultimodalPlan p = read_plan_record(f.string());
      grouped[p.goal.dataset][p.goal.id].push_back(std::move(p));
    } catch (const std::exception& e) {
      result.warnings.push_back("skipped " + fs::relative(f, plans_dir).generic_string() + ": " + e.what());
    }
  }
  auto method_rank = [](Method m) {
    const auto& all = all_methods();
    return std::find(all.begin(), all.end(), m) - all.begin();
  };

  fs::create_directories(fs::path(out_dir) / "images");
  std::ostringstream index;
  index << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Plans</title><style>" << kStyle
        << "</style></head><body>\n<h1>Plans</h1>\n";
  for (auto& [dataset, goals] : grouped) {
    index << "<h2>" << html_escape(dataset) << "</h2>\n<ul>\n";
    for (auto& [goal_id, plans] : goals) {
      std::sort(plans.begin(), plans.end(), [&](const MultimodalPlan& a, const MultimodalPlan& b) {
        return method_rank(a.method) < method_rank(b.method);
      });
      const std::string rel = file_component(dataset) + "/" + file_component(goal_id) + ".html";
      std::vector<std::string> page_warnings;
      std::size_t rows = 0;
      for (const auto& p : plans) rows = std::max(rows, p.steps.size());
      std::ostringstream page;
      page << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << html_escape(plans[0].goal.title)
           << "</title><style>" << kStyle << "</style></head><body>\n<p><a href=\"../index.html\">index</a></p>\n<h1>"
           << html_escape(plans[0].goal.title) << "</h1>\n<table>\n<tr><th>Step</th>";
      for (const auto& p : plans) page << "<th>" << html_escape(to_string(p.method)) << "</th>";
      page << "</tr>\n";
      for (std::size_t k = 0; k < rows; ++k) {
        page << "<tr><th>" << k + 1 << "</th>";
        for (const auto& p : plans) {
          if (k >= p.steps.size()) {
            page << "<td></td>";
            continue;
          }
          const PlanStep& s = p.steps[k];
          page << "<td><p>" << html_escape(s.text) << "</p>";
          if (s.image) {
            const fs::path src = fs::path(s.image->locator).is_absolute()
                                     ? fs::path(s.image->locator)
                                     : fs::path(plans_dir) / s.image->locator;
            if (fs::is_regular_file(src)) {
              const auto bytes = read_file_bytes(src.string());
              const std::string name =
                  sha256_hex(bytes) + "." + (s.image->format.empty() ? "img" : file_component(s.image->format));
              const fs::path dst = fs::path(out_dir) / "images" / name;
              if (!fs::exists(dst)) write_file_atomic(dst.string(), bytes);
              page << "<img src=\"../images/" << name << "\" alt=\"step " << k + 1 << "\">";
            } else {
              page << "<div class=\"missing\">image missing: " << html_escape(s.image->locator) << "</div>";
              page_warnings.push_back(std::string(to_string(p.method)) + " step " + std::to_string(k + 1) +
                                      ": missing image " + s.image->locator);
            }
          }
          page << "</td>";
        }
        page << "</tr>\n";
      }
      page << "</table>\n";
      if (!page_warnings.empty()) {
        page << "<h2>Warnings</h2>\n<ul>\n";
        for (const auto& w : page_warnings) page << "<li>" << html_escape(w) << "</li>\n";
        page << "</ul>\n";
      }
      page << "</body></html>\n";
      write_file_atomic((fs::path(out_dir) / rel).string(), page.str());
      result.pages.push_back(rel);
      for (auto& w : page_warnings) result.warnings.push_back(rel + ": " + w);
      index << "<li><a href=\"" << rel << "\">" << html_escape(plans[0].goal.title) << "</a></li>\n";
    }
    index << "</ul>\n";
  }
  index << "</body></html>\n";
  write_file_atomic((fs::path(out_dir) / "index.html").string(), index.str());
  std::sort(result.pages.begin(), result.pages.end());
  return result;
}

}  // namespace planweave
