#pragma once

// Orchestration of the bridged planning flow:
//   vanilla text plan -> imagination prompts -> images -> captions -> revised text
// plus the step-based, baseline and ablation variants.

#include <optional>
#include <string>
#include <vector>

#include "planweave/backends.hpp"
#include "planweave/plan.hpp"
#include "planweave/prompts.hpp"

namespace planweave {

struct PipelineConfig {
  PromptTemplate vanilla_template = default_template(TemplateRole::vanilla);
  PromptTemplate t2i_template = default_template(TemplateRole::t2i_bridge);
  PromptTemplate i2t_template = default_template(TemplateRole::i2t_bridge);
  Method mode = Method::tip_procedure;
  int image_width = kDefaultImageSize;
  int image_height = kDefaultImageSize;
  GenerationParams params;
  int max_steps = 22;  // step-based bound
  int workers = 4;     // per-plan parallelism across steps
  std::string caption_question = std::string(kDefaultCaptionQuestion);

  /// Throws ConfigError when templates sit in the wrong role slot.
  void check() const;
};

struct ImagePlanEntry {
  std::string imagination_prompt;
  ImageHandle image;
};

/// Vanilla prompt -> LLM -> parsed steps.
std::vector<std::string> generate_vanilla_plan(const Goal& goal, BackendSuite& backends,
                                               const PipelineConfig& config);

/// Per step: scene description from the imagination prompt (or the raw step
/// when the T2I bridge is disabled), then an image of it.
std::vector<ImagePlanEntry> generate_image_plan(const std::vector<std::string>& text_steps,
                                                BackendSuite& backends, const PipelineConfig& config);

std::vector<std::string> verbalize_images(const std::vector<ImageHandle>& images, BackendSuite& backends,
                                          const std::string& question = std::string(kDefaultCaptionQuestion),
                                          int workers = 4);

/// Modes: tip_procedure, ablation_no_t2ib, ablation_no_i2tb.
MultimodalPlan run_tip(const Goal& goal, BackendSuite& backends, const PipelineConfig& config);

/// Mode: tip_stepwise.
MultimodalPlan run_tip_stepwise(const Goal& goal, BackendSuite& backends, const PipelineConfig& config);

/// Variants: baseline_no_bridge (goal only), baseline_text_ref and
/// baseline_image_ref (need `reference`).
MultimodalPlan run_baseline(const Goal& goal, const ReferencePlan* reference, BackendSuite& backends,
                            Method variant, const PipelineConfig& config);

/// Dispatches on config.mode.
MultimodalPlan run_method(const Goal& goal, const ReferencePlan* reference, BackendSuite& backends,
                          const PipelineConfig& config);

/// {out_dir}/{dataset}/{goal_id}/{method}.plan
std::string plan_output_path(const std::string& out_dir, const Goal& goal, Method method);
void write_plan_record(const std::string& path, const MultimodalPlan& plan);
MultimodalPlan read_plan_record(const std::string& path);

}  // namespace planweave
