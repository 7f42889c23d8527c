#include "planweave/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "planweave/digest.hpp"
#include "planweave/errors.hpp"
#include "planweave/parallel.hpp"

namespace planweave {

namespace fs = std::filesystem;

void PipelineConfig::check() const {
  if (vanilla_template.role() != TemplateRole::vanilla) {
    throw ConfigError("vanilla template '" + vanilla_template.id() + "' has the wrong role");
  }
  if (t2i_template.role() != TemplateRole::t2i_bridge) {
    throw ConfigError("t2i template '" + t2i_template.id() + "' has the wrong role");
  }
  if (i2t_template.role() != TemplateRole::i2t_bridge) {
    throw ConfigError("i2t template '" + i2t_template.id() + "' has the wrong role");
  }
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
}

namespace {

std::string completion_text(BackendSuite& b, const std::string& prompt, const GenerationParams& params) {
  Completion c = text_complete(b, prompt, params);
  if (c.finish_reason == FinishReason::error) {
    throw BackendError(BackendErrorKind::malformed, "text backend reported an error completion");
  }
  return c.text;
}

// Re-throws anything but a StepError as one tagged with `step`.
template <class F>
auto at_step(int step, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StepError&) {
    throw;
  } catch (const std::exception& e) {
    throw StepError(step, e.what());
  }
}

bool t2i_enabled(Method m) { return m == Method::tip_procedure || m == Method::tip_stepwise; }

}  // namespace

std::vector<std::string> generate_vanilla_plan(const Goal& goal, BackendSuite& backends,
                                               const PipelineConfig& config) {
  RenderedPrompt p = render_vanilla_prompt(goal, config.vanilla_template);
  return parse_step_list(completion_text(backends, p.text, config.params));
}

std::vector<ImagePlanEntry> generate_image_plan(const std::vector<std::string>& text_steps,
                                                BackendSuite& backends, const PipelineConfig& config) {
  if (text_steps.empty()) throw PreconditionError("generate_image_plan: no steps");
  const bool bridge = t2i_enabled(config.mode);
  return parallel_map(text_steps.size(), config.workers, [&](std::size_t i) {
    return at_step(static_cast<int>(i) + 1, [&] {
      std::string scene = text_steps[i];
      if (bridge) {
        RenderedPrompt p = render_imagination_prompt(text_steps[i], config.t2i_template);
        scene = trim(completion_text(backends, p.text, config.params));
      }
      ImageHandle img = image_generate(backends, scene, config.image_width, config.image_height);
      return ImagePlanEntry{scene, img};
    });
  });
}

std::vector<std::string> verbalize_images(const std::vector<ImageHandle>& images, BackendSuite& backends,
                                          const std::string& question, int workers) {
  return parallel_map(images.size(), workers, [&](std::size_t i) {
    return at_step(static_cast<int>(i) + 1, [&] { return caption(backends, images[i], question); });
  });
}

MultimodalPlan run_tip(const Goal& goal, BackendSuite& backends, const PipelineConfig& config) {
  if (config.mode != Method::tip_procedure && config.mode != Method::ablation_no_t2ib &&
      config.mode != Method::ablation_no_i2tb) {
    throw PreconditionError("run_tip: mode must be tip_procedure or a bridge ablation");
  }
  config.check();
  MultimodalPlan plan;
  plan.goal = goal;
  plan.method = config.mode;
  plan.backend_fingerprint = backends.fingerprint();
  plan.vanilla_text = generate_vanilla_plan(goal, backends, config);

  auto image_plan = generate_image_plan(plan.vanilla_text, backends, config);
  std::vector<ImageHandle> images;
  for (const auto& e : image_plan) images.push_back(e.image);
  auto captions = verbalize_images(images, backends, config.caption_question, config.workers);

  std::vector<std::string> final_text = plan.vanilla_text;
  if (config.mode != Method::ablation_no_i2tb) {
    RenderedPrompt p = render_revision_prompt(plan.vanilla_text, captions, config.i2t_template);
    final_text = parse_step_list(completion_text(backends, p.text, config.params));
  }
  const std::size_t n = std::min(final_text.size(), image_plan.size());
  plan.pairing_adjusted = final_text.size() != image_plan.size();
  for (std::size_t i = 0; i < n; ++i) {
    PlanStep s;
    s.index = static_cast<int>(i) + 1;
    s.text = final_text[i];
    s.image = image_plan[i].image;
    s.imagination_prompt = image_plan[i].imagination_prompt;
    s.caption = captions[i];
    plan.steps.push_back(std::move(s));
  }
  return plan;
}

MultimodalPlan run_tip_stepwise(const Goal& goal, BackendSuite& backends, const PipelineConfig& config) {
  if (config.mode != Method::tip_stepwise) throw PreconditionError("run_tip_stepwise: mode must be tip_stepwise");
  config.check();
  MultimodalPlan plan;
  plan.goal = goal;
  plan.method = Method::tip_stepwise;
  plan.backend_fingerprint = backends.fingerprint();
  std::vector<std::string> captions;
  while (static_cast<int>(plan.vanilla_text.size()) < config.max_steps) {
    const int k = static_cast<int>(plan.vanilla_text.size()) + 1;
    RenderedPrompt p = render_stepwise_prompt(goal, config.vanilla_template, plan.vanilla_text);
    auto next = parse_stepwise_reply(completion_text(backends, p.text, config.params));
    if (!next) break;
    plan.vanilla_text.push_back(*next);

    auto entry = at_step(k, [&] {
      RenderedPrompt ip = render_imagination_prompt(*next, config.t2i_template);
      std::string scene = trim(completion_text(backends, ip.text, config.params));
      return ImagePlanEntry{scene, image_generate(backends, scene, config.image_width, config.image_height)};
    });
    captions.push_back(at_step(k, [&] { return caption(backends, entry.image, config.caption_question); }));

    // Revise the current prefix and keep the revision of the newest step.
    RenderedPrompt rp = render_revision_prompt(plan.vanilla_text, captions, config.i2t_template);
    auto revised = parse_step_list(completion_text(backends, rp.text, config.params));
    if (static_cast<int>(revised.size()) != k) plan.pairing_adjusted = true;
    const std::size_t pick = std::min<std::size_t>(revised.size(), static_cast<std::size_t>(k)) - 1;

    PlanStep s;
    s.index = k;
    s.text = revised[pick];
    s.image = entry.image;
    s.imagination_prompt = entry.imagination_prompt;
    s.caption = captions.back();
    plan.steps.push_back(std::move(s));
  }
  if (plan.steps.empty()) throw UnparseablePlan("step-based generation stopped before the first step");
  return plan;
}

MultimodalPlan run_baseline(const Goal& goal, const ReferencePlan* reference, BackendSuite& backends,
                            Method variant, const PipelineConfig& config) {
  MultimodalPlan plan;
  plan.goal = goal;
  plan.method = variant;
  plan.backend_fingerprint = backends.fingerprint();
  PipelineConfig raw = config;
  raw.mode = variant;  // bridges off for every baseline
  switch (variant) {
    case Method::baseline_no_bridge: {
      plan.vanilla_text = generate_vanilla_plan(goal, backends, config);
      auto images = generate_image_plan(plan.vanilla_text, backends, raw);
      for (std::size_t i = 0; i < images.size(); ++i) {
        plan.steps.push_back(PlanStep{static_cast<int>(i) + 1, plan.vanilla_text[i], images[i].image,
                                      images[i].imagination_prompt, std::nullopt});
      }
      return plan;
    }
    case Method::baseline_text_ref: {
      if (!reference) throw PreconditionError("baseline_text_ref requires a reference plan");
      for (const auto& s : reference->steps) plan.vanilla_text.push_back(s.text);
      auto images = generate_image_plan(plan.vanilla_text, backends, raw);
      for (std::size_t i = 0; i < images.size(); ++i) {
        plan.steps.push_back(PlanStep{static_cast<int>(i) + 1, plan.vanilla_text[i], images[i].image,
                                      images[i].imagination_prompt, std::nullopt});
      }
      return plan;
    }
    case Method::baseline_image_ref: {
      if (!reference) throw PreconditionError("baseline_image_ref requires a reference plan");
      std::vector<ImageHandle> images;
      for (const auto& s : reference->steps) {
        if (!s.image) throw PreconditionError("reference step " + std::to_string(s.index) + " has no image");
        images.push_back(*s.image);
      }
      auto captions = verbalize_images(images, backends, config.caption_question, config.workers);
      plan.vanilla_text = captions;
      for (std::size_t i = 0; i < images.size(); ++i) {
        plan.steps.push_back(
            PlanStep{static_cast<int>(i) + 1, captions[i], images[i], std::nullopt, captions[i]});
      }
      return plan;
    }
    default:
      throw PreconditionError("run_baseline: '" + std::string(to_string(variant)) + "' is not a baseline");
  }
}

MultimodalPlan run_method(const Goal& goal, const ReferencePlan* reference, BackendSuite& backends,
                          const PipelineConfig& config) {
  switch (config.mode) {
    case Method::tip_procedure:
    case Method::ablation_no_t2ib:
    case Method::ablation_no_i2tb:
      return run_tip(goal, backends, config);
    case Method::tip_stepwise:
      return run_tip_stepwise(goal, backends, config);
    default:
      return run_baseline(goal, reference, backends, config.mode, config);
  }
}

namespace {

std::string path_component(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    out += ok ? c : '_';
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

}  // namespace

std::string plan_output_path(const std::string& out_dir, const Goal& goal, Method method) {
  return (fs::path(out_dir) / path_component(goal.dataset) / path_component(goal.id) /
          (std::string(to_string(method)) + ".plan"))
      .string();
}

void write_plan_record(const std::string& path, const MultimodalPlan& plan) {
  write_file_atomic(path, serialize_plan(plan) + "\n");
}

MultimodalPlan read_plan_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open plan record '" + path + "'");
  std::string line;
  std::getline(in, line);
  try {
    return parse_plan(line);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace planweave
