#pragma once

// Core value types shared by every module: goals, plan steps, multimodal
// plans, prompt templates and generation parameters, plus the JSON Lines
// plan record codec.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace planweave {

struct Goal {
  std::string id;
  std::string title;
  std::string dataset;
  std::optional<std::string> category;

  bool operator==(const Goal&) const = default;
};

struct ImageHandle {
  std::string locator;  // content-addressed path, relative to an image root or absolute
  int width = 0;
  int height = 0;
  std::string format;  // "png", "jpeg", ...

  bool operator==(const ImageHandle&) const = default;
};

struct PlanStep {
  int index = 1;  // 1-based
  std::string text;
  std::optional<ImageHandle> image;
  std::optional<std::string> imagination_prompt;
  std::optional<std::string> caption;

  bool operator==(const PlanStep&) const = default;
};

enum class Method {
  tip_procedure,
  tip_stepwise,
  baseline_no_bridge,
  baseline_text_ref,
  baseline_image_ref,
  ablation_no_t2ib,
  ablation_no_i2tb,
};

std::string_view to_string(Method m);
/// Throws ParseError("unknown method '...'") for tags outside the enum.
Method method_from_string(std::string_view tag);
/// True for the methods that run the bridge pipeline (tip_* and ablation_*).
bool is_bridge_method(Method m);
const std::vector<Method>& all_methods();

struct MultimodalPlan {
  Goal goal;
  Method method = Method::tip_procedure;
  std::vector<PlanStep> steps;
  std::vector<std::string> vanilla_text;
  bool pairing_adjusted = false;
  std::string backend_fingerprint;

  bool operator==(const MultimodalPlan&) const = default;
};

struct ReferencePlan {
  Goal goal;
  std::vector<PlanStep> steps;

  bool operator==(const ReferencePlan&) const = default;
};

enum class TemplateRole { vanilla, t2i_bridge, i2t_bridge };

std::string_view to_string(TemplateRole r);
TemplateRole role_from_string(std::string_view tag);

class PromptTemplate {
 public:
  PromptTemplate(std::string id, TemplateRole role, std::string body, bool misleading = false);

  const std::string& id() const noexcept { return id_; }
  TemplateRole role() const noexcept { return role_; }
  const std::string& body() const noexcept { return body_; }
  bool misleading() const noexcept { return misleading_; }

  bool operator==(const PromptTemplate&) const = default;

 private:
  std::string id_;
  TemplateRole role_;
  std::string body_;
  bool misleading_;
};

struct GenerationParams {
  double temperature = 0.0;  // greedy
  int max_tokens = 512;
  std::optional<std::int64_t> seed;

  bool operator==(const GenerationParams&) const = default;
};

/// One broken invariant: the offending field and the rule it violates.
struct Violation {
  std::string field;
  std::string rule;

  std::string describe() const { return rule; }
  bool operator==(const Violation&) const = default;
};

std::vector<Violation> validate_plan(const MultimodalPlan& plan);

// Plan record (one JSON object per line).
nlohmann::json plan_to_json(const MultimodalPlan& plan);
MultimodalPlan plan_from_json(const nlohmann::json& j);
std::string serialize_plan(const MultimodalPlan& plan);
MultimodalPlan parse_plan(std::string_view record);

nlohmann::json goal_to_json(const Goal& g);
Goal goal_from_json(const nlohmann::json& j, const std::string& where = "goal");
nlohmann::json step_to_json(const PlanStep& s);
PlanStep step_from_json(const nlohmann::json& j, const std::string& where);

/// Trims ASCII whitespace from both ends.
std::string trim(std::string_view s);

}  // namespace planweave
