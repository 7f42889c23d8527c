#include "planweave/prompts.hpp"

#include <cctype>
#include <regex>

#include "planweave/errors.hpp"

namespace planweave {

namespace {

void require_role(const PromptTemplate& tmpl, TemplateRole expected) {
  if (tmpl.role() != expected) {
    throw PreconditionError("template '" + tmpl.id() + "' has role " +
                            std::string(to_string(tmpl.role())) + ", expected " +
                            std::string(to_string(expected)));
  }
}

// "Step 3:", "step 3 -", "3.", "3)" at the start of a line.
const std::regex& step_prefix() {
  static const std::regex re(R"(^\s*(?:[Ss][Tt][Ee][Pp]\s*(\d+)\s*[:.)\-]?|(\d+)\s*[.):])\s*)");
  return re;
}

// Splits "Step 1: a Step 2: b" onto separate lines.
std::string split_inline_steps(std::string_view text) {
  static const std::regex inline_step(R"(([^\n])[ \t]+([Ss]tep\s*\d+\s*:))");
  return std::regex_replace(std::string(text), inline_step, "$1\n$2");
}

}  // namespace

std::string number_steps(const std::vector<std::string>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += '\n';
    out += "Step " + std::to_string(i + 1) + ": " + steps[i];
  }
  return out;
}

RenderedPrompt render_vanilla_prompt(const Goal& goal, const PromptTemplate& tmpl) {
  require_role(tmpl, TemplateRole::vanilla);
  if (trim(goal.title).empty()) throw PreconditionError("render_vanilla_prompt: empty goal title");
  RenderedPrompt p{TemplateRole::vanilla, tmpl.body() + " Task: " + goal.title + "?", {}};
  p.slots = {{"TEMPLATE", tmpl.body()}, {"GOAL", goal.title}};
  return p;
}

RenderedPrompt render_imagination_prompt(const std::string& step_text, const PromptTemplate& tmpl) {
  require_role(tmpl, TemplateRole::t2i_bridge);
  if (trim(step_text).empty()) throw PreconditionError("render_imagination_prompt: empty step");
  RenderedPrompt p{TemplateRole::t2i_bridge, trim(step_text) + " " + tmpl.body(), {}};
  p.slots = {{"STEP", step_text}, {"T2I-B", tmpl.body()}};
  return p;
}

RenderedPrompt render_revision_prompt(const std::vector<std::string>& initial_steps,
                                      const std::vector<std::string>& captions,
                                      const PromptTemplate& tmpl) {
  require_role(tmpl, TemplateRole::i2t_bridge);
  if (initial_steps.size() != captions.size()) {
    throw PreconditionError("render_revision_prompt: arity mismatch: " +
                            std::to_string(initial_steps.size()) + " steps vs " +
                            std::to_string(captions.size()) + " captions");
  }
  if (initial_steps.empty()) throw PreconditionError("render_revision_prompt: no steps");
  const std::string initial = number_steps(initial_steps);
  const std::string caps = number_steps(captions);
  RenderedPrompt p{TemplateRole::i2t_bridge,
                   std::string(kRevisionHeader) + " " + initial + " " + std::string(kCaptionsHeader) + " " +
                       caps + " " + tmpl.body(),
                   {}};
  p.slots = {{"INITIAL", initial}, {"CAPTION", caps}, {"I2T-B", tmpl.body()}};
  return p;
}

RenderedPrompt render_stepwise_prompt(const Goal& goal, const PromptTemplate& tmpl,
                                      const std::vector<std::string>& history) {
  RenderedPrompt base = render_vanilla_prompt(goal, tmpl);
  const std::string k = std::to_string(history.size() + 1);
  std::string text = base.text + "\n";
  if (!history.empty()) text += number_steps(history) + "\n";
  text += "What is Step " + k + "? Reply with that single step, or " + std::string(kStopMarker) +
          " if the procedure is complete.";
  RenderedPrompt p{TemplateRole::vanilla, std::move(text), base.slots};
  p.slots["HISTORY"] = number_steps(history);
  return p;
}

std::vector<std::string> parse_step_list(std::string_view completion_text) {
  const std::string text = split_inline_steps(completion_text);
  std::vector<std::string> steps;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    if (trim(line).empty()) continue;
    std::smatch m;
    if (std::regex_search(line, m, step_prefix())) {
      std::string body = trim(line.substr(m.length(0)));
      if (!body.empty()) steps.push_back(body);
    } else if (!steps.empty()) {
      steps.back() += " " + trim(line);
    }
  }
  if (steps.empty()) throw UnparseablePlan(std::string(completion_text));
  return steps;
}

std::optional<std::string> parse_stepwise_reply(std::string_view completion_text) {
  std::string t = trim(completion_text);
  if (t.rfind(kStopMarker, 0) == 0) return std::nullopt;
  // Only the first step of the reply is accepted.
  std::smatch m;
  std::string first_line = trim(t.substr(0, t.find('\n')));
  if (std::regex_search(first_line, m, step_prefix())) first_line = trim(first_line.substr(m.length(0)));
  if (first_line.empty()) throw UnparseablePlan(std::string(completion_text));
  if (first_line == kStopMarker) return std::nullopt;
  return first_line;
}

const std::vector<PromptTemplate>& builtin_templates() {
  using R = TemplateRole;
  static const std::vector<PromptTemplate> templates{
      {"vanilla-procedure", R::vanilla, "What's the step-by-step procedure of"},
      {"t2i-draw", R::t2i_bridge, "What do I need to draw in the picture to describe the above text?"},
      {"t2i-see", R::t2i_bridge, "What do you see in the figure?"},
      {"t2i-describe", R::t2i_bridge, "Describe what the picture corresponding to the text should have."},
      {"t2i-visualize", R::t2i_bridge,
       "Let's think about what we need to visualize to present the above idea."},
      {"t2i-irrelevant", R::t2i_bridge, "Describe something irrelevant to the above text.", true},
      {"t2i-usual", R::t2i_bridge, "What do you usually draw?", true},
      {"i2t-rewrite", R::i2t_bridge,
       "Rewrite the textual instruction with the knowledge from visualized instruction pair-wisely."},
      {"i2t-paired", R::i2t_bridge,
       "Based on the visual caption, can you revise the step-by-step procedure according to the "
       "paired captions?"},
      {"i2t-imagination", R::i2t_bridge, "Revise each step according to the visual imagination."},
      {"i2t-captions", R::i2t_bridge, "Let's revise the procedure using the captions."},
      {"i2t-disobey", R::i2t_bridge, "What's the procedure that disobey the captions?", true},
      {"i2t-irrelevant", R::i2t_bridge,
       "Provide an interesting procedure to be irrelevant with the captions.", true},
  };
  return templates;
}

const PromptTemplate& find_template(std::string_view id) {
  for (const auto& t : builtin_templates()) {
    if (t.id() == id) return t;
  }
  throw ConfigError("unknown template id '" + std::string(id) + "'");
}

const PromptTemplate& default_template(TemplateRole role) {
  switch (role) {
    case TemplateRole::vanilla: return find_template("vanilla-procedure");
    case TemplateRole::t2i_bridge: return find_template("t2i-draw");
    case TemplateRole::i2t_bridge: return find_template("i2t-rewrite");
  }
  throw ConfigError("no default template");
}

}  // namespace planweave
