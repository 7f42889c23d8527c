#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "planweave/plan.hpp"

namespace planweave {

struct RenderedPrompt {
  TemplateRole role;
  std::string text;
  std::map<std::string, std::string> slots;
};

inline constexpr std::string_view kRevisionHeader = "Step-by-step Procedure:";
inline constexpr std::string_view kCaptionsHeader = "Captions:";
inline constexpr std::string_view kStopMarker = "DONE";

/// "{body} Task: {title}?"
RenderedPrompt render_vanilla_prompt(const Goal& goal, const PromptTemplate& tmpl);

/// "{step_text} {body}"
RenderedPrompt render_imagination_prompt(const std::string& step_text, const PromptTemplate& tmpl);

/// "Step-by-step Procedure: Step 1: ...\nStep 2: ... Captions: Step 1: ...\nStep 2: ... {body}"
RenderedPrompt render_revision_prompt(const std::vector<std::string>& initial_steps,
                                      const std::vector<std::string>& captions,
                                      const PromptTemplate& tmpl);

/// History prompt for the step-based mode: the vanilla prompt, the accepted
/// steps so far, then a request for step `history.size() + 1` or the stop marker.
RenderedPrompt render_stepwise_prompt(const Goal& goal, const PromptTemplate& tmpl,
                                      const std::vector<std::string>& history);

/// "Step 1: a\nStep 2: b" (no trailing newline).
std::string number_steps(const std::vector<std::string>& steps);

/// Accepts "Step k:" and "k." style prefixes; unprefixed lines after a step
/// continue it. Throws UnparseablePlan when no step is found.
std::vector<std::string> parse_step_list(std::string_view completion_text);

/// Parses one step-based reply: std::nullopt for the stop marker.
std::optional<std::string> parse_stepwise_reply(std::string_view completion_text);

/// Built-in template registry.
const std::vector<PromptTemplate>& builtin_templates();
const PromptTemplate& find_template(std::string_view id);
const PromptTemplate& default_template(TemplateRole role);

}  // namespace planweave
