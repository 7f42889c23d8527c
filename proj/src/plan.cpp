#include "planweave/plan.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "planweave/errors.hpp"

namespace planweave {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 7> kMethodTags{{
    {Method::tip_procedure, "tip_procedure"},
    {Method::tip_stepwise, "tip_stepwise"},
    {Method::baseline_no_bridge, "baseline_no_bridge"},
    {Method::baseline_text_ref, "baseline_text_ref"},
    {Method::baseline_image_ref, "baseline_image_ref"},
    {Method::ablation_no_t2ib, "ablation_no_t2ib"},
    {Method::ablation_no_i2tb, "ablation_no_i2tb"},
}};

// Required top-level record fields, in serialization order.
constexpr std::array<std::string_view, 6> kRecordFields{
    "goal", "method", "vanilla_text", "steps", "pairing_adjusted", "backend_fingerprint"};

const json& require(const json& j, const std::string& key, const std::string& where) {
  if (!j.is_object()) throw ParseError("expected object at '" + where + "'");
  auto it = j.find(key);
  if (it == j.end()) {
    throw ParseError("missing field '" + (where.empty() ? key : where + "." + key) + "'");
  }
  return *it;
}

std::string require_string(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_string()) throw ParseError("field '" + where + "." + key + "' must be a string");
  return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const std::string& key,
                                           const std::string& where) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ParseError("field '" + where + "." + key + "' must be a string");
  return it->get<std::string>();
}

int require_int(const json& j, const std::string& key, const std::string& where) {
  const json& v = require(j, key, where);
  if (!v.is_number_integer()) {
    throw ParseError("field '" + where + "." + key + "' must be an integer");
  }
  return v.get<int>();
}

json optional_to_json(const std::optional<std::string>& s) {
  return s ? json(*s) : json(nullptr);
}

}  // namespace

std::string trim(std::string_view s) {
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string_view to_string(Method m) {
  for (const auto& [method, tag] : kMethodTags) {
    if (method == m) return tag;
  }
  return "unknown";
}

Method method_from_string(std::string_view tag) {
  for (const auto& [method, t] : kMethodTags) {
    if (t == tag) return method;
  }
  throw ParseError("unknown method '" + std::string(tag) + "'");
}

bool is_bridge_method(Method m) {
  return m == Method::tip_procedure || m == Method::tip_stepwise ||
         m == Method::ablation_no_t2ib || m == Method::ablation_no_i2tb;
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = [] {
    std::vector<Method> out;
    for (const auto& [m, _] : kMethodTags) out.push_back(m);
    return out;
  }();
  return methods;
}

std::string_view to_string(TemplateRole r) {
  switch (r) {
    case TemplateRole::vanilla: return "vanilla";
    case TemplateRole::t2i_bridge: return "t2i_bridge";
    case TemplateRole::i2t_bridge: return "i2t_bridge";
  }
  return "unknown";
}

TemplateRole role_from_string(std::string_view tag) {
  if (tag == "vanilla") return TemplateRole::vanilla;
  if (tag == "t2i_bridge") return TemplateRole::t2i_bridge;
  if (tag == "i2t_bridge") return TemplateRole::i2t_bridge;
  throw ParseError("unknown template role '" + std::string(tag) + "'");
}

PromptTemplate::PromptTemplate(std::string id, TemplateRole role, std::string body, bool misleading)
    : id_(std::move(id)), role_(role), body_(std::move(body)), misleading_(misleading) {
  if (trim(body_).empty()) throw PreconditionError("template '" + id_ + "' has an empty body");
}

std::vector<Violation> validate_plan(const MultimodalPlan& plan) {
  std::vector<Violation> out;
  if (trim(plan.goal.title).empty()) out.push_back({"goal.title", "empty goal title"});
  if (plan.steps.empty()) {
    out.push_back({"steps", "plan has no steps"});
    return out;
  }
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    if (plan.steps[i].index != static_cast<int>(i) + 1) {
      out.push_back({"steps.index", "non-contiguous step indices"});
      break;
    }
  }
  const bool needs_prompt = is_bridge_method(plan.method);
  for (const PlanStep& s : plan.steps) {
    const std::string at = " at step " + std::to_string(s.index);
    if (trim(s.text).empty()) out.push_back({"steps.text", "empty text" + at});
    if (s.image) {
      if (s.image->width < 1 || s.image->height < 1) {
        out.push_back({"steps.image", "invalid image dimensions" + at});
      }
      if (s.image->locator.empty()) out.push_back({"steps.image.locator", "empty locator" + at});
      if (needs_prompt && !s.imagination_prompt) {
        out.push_back({"steps.imagination_prompt", "missing imagination_prompt" + at});
      }
    }
  }
  return out;
}

json goal_to_json(const Goal& g) {
  return json{{"id", g.id}, {"title", g.title}, {"dataset", g.dataset},
              {"category", optional_to_json(g.category)}};
}

Goal goal_from_json(const json& j, const std::string& where) {
  Goal g;
  g.id = require_string(j, "id", where);
  g.title = require_string(j, "title", where);
  g.dataset = require_string(j, "dataset", where);
  g.category = optional_string(j, "category", where);
  return g;
}

json step_to_json(const PlanStep& s) {
  json image = nullptr;
  if (s.image) {
    image = json{{"locator", s.image->locator},
                 {"width", s.image->width},
                 {"height", s.image->height},
                 {"format", s.image->format}};
  }
  return json{{"index", s.index},
              {"text", s.text},
              {"image", image},
              {"imagination_prompt", optional_to_json(s.imagination_prompt)},
              {"caption", optional_to_json(s.caption)}};
}

PlanStep step_from_json(const json& j, const std::string& where) {
  PlanStep s;
  s.index = require_int(j, "index", where);
  s.text = require_string(j, "text", where);
  auto it = j.find("image");
  if (it != j.end() && !it->is_null()) {
    const std::string iw = where + ".image";
    ImageHandle h;
    h.locator = require_string(*it, "locator", iw);
    h.width = require_int(*it, "width", iw);
    h.height = require_int(*it, "height", iw);
    h.format = require_string(*it, "format", iw);
    s.image = std::move(h);
  }
  s.imagination_prompt = optional_string(j, "imagination_prompt", where);
  s.caption = optional_string(j, "caption", where);
  return s;
}

json plan_to_json(const MultimodalPlan& plan) {
  json steps = json::array();
  for (const auto& s : plan.steps) steps.push_back(step_to_json(s));
  // nlohmann::json orders object keys lexicographically, so the dump is canonical.
  return json{{"goal", goal_to_json(plan.goal)},
              {"method", std::string(to_string(plan.method))},
              {"vanilla_text", plan.vanilla_text},
              {"steps", std::move(steps)},
              {"pairing_adjusted", plan.pairing_adjusted},
              {"backend_fingerprint", plan.backend_fingerprint}};
}

MultimodalPlan plan_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("plan record must be a JSON object");
  MultimodalPlan p;
  p.goal = goal_from_json(require(j, "goal", ""), "goal");
  const json& method = require(j, "method", "");
  if (!method.is_string()) throw ParseError("field 'method' must be a string");
  p.method = method_from_string(method.get<std::string>());
  const json& vt = require(j, "vanilla_text", "");
  if (!vt.is_array()) throw ParseError("field 'vanilla_text' must be an array");
  for (std::size_t i = 0; i < vt.size(); ++i) {
    if (!vt[i].is_string()) {
      throw ParseError("field 'vanilla_text[" + std::to_string(i) + "]' must be a string");
    }
    p.vanilla_text.push_back(vt[i].get<std::string>());
  }
  const json& steps = require(j, "steps", "");
  if (!steps.is_array()) throw ParseError("field 'steps' must be an array");
  for (std::size_t i = 0; i < steps.size(); ++i) {
    p.steps.push_back(step_from_json(steps[i], "steps[" + std::to_string(i) + "]"));
  }
  const json& pa = require(j, "pairing_adjusted", "");
  if (!pa.is_boolean()) throw ParseError("field 'pairing_adjusted' must be a boolean");
  p.pairing_adjusted = pa.get<bool>();
  p.backend_fingerprint = require_string(j, "backend_fingerprint", "");
  return p;
}

std::string serialize_plan(const MultimodalPlan& plan) { return plan_to_json(plan).dump(); }

MultimodalPlan parse_plan(std::string_view record) {
  // Track which top-level fields were completely read so that a truncated
  // record can report the first field it is missing.
  std::set<std::string> completed;
  std::string pending;
  auto cb = [&](int depth, json::parse_event_t ev, json& parsed) {
    if (depth == 1 && ev == json::parse_event_t::key) {
      pending = parsed.get<std::string>();
    } else if (!pending.empty() &&
               ((depth == 1 && ev == json::parse_event_t::value) ||
                (depth == 1 && (ev == json::parse_event_t::object_end ||
                                ev == json::parse_event_t::array_end)))) {
      completed.insert(pending);
      pending.clear();
    }
    return true;
  };
  json j;
  try {
    j = json::parse(record.begin(), record.end(), cb);
  } catch (const json::parse_error& e) {
    std::string msg = "malformed plan record at byte " + std::to_string(e.byte);
    for (auto field : kRecordFields) {
      if (!completed.count(std::string(field))) {
        msg += ": missing field '" + std::string(field) + "'";
        break;
      }
    }
    throw ParseError(msg);
  }
  return plan_from_json(j);
}

}  // namespace planweave
