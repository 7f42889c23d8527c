#include <doctest.h>

#include <random>

#include "planweave/errors.hpp"
#include "planweave/plan.hpp"
#include "support.hpp"

using namespace planweave;

namespace {

std::string random_text(std::mt19937_64& rng) {
  static const std::vector<std::string> pieces{"tea", " ", "\n", "\"quoted\"", "naïve", "\\", "Step 1:", "\t", "é中"};
  std::uniform_int_distribution<std::size_t> n(1, 6), pick(0, pieces.size() - 1);
  std::string out;
  for (std::size_t i = n(rng); i > 0; --i) out += pieces[pick(rng)];
  return out;
}

MultimodalPlan random_plan(std::mt19937_64& rng) {
  MultimodalPlan p;
  p.goal = Goal{"id-" + std::to_string(rng() % 100), random_text(rng), "wikiplan",
                rng() % 2 ? std::optional<std::string>("recipe") : std::nullopt};
  p.method = all_methods()[rng() % all_methods().size()];
  const int steps = 1 + static_cast<int>(rng() % 5);
  for (int i = 1; i <= steps; ++i) {
    PlanStep s;
    s.index = i;
    s.text = random_text(rng);
    if (rng() % 2) s.image = ImageHandle{"images/" + std::to_string(rng()) + ".png", 512, 384, "png"};
    if (rng() % 2) s.imagination_prompt = random_text(rng);
    if (rng() % 2) s.caption = random_text(rng);
    p.steps.push_back(s);
    p.vanilla_text.push_back(random_text(rng));
  }
  p.pairing_adjusted = rng() % 2;
  p.backend_fingerprint = "text=" + random_text(rng);
  return p;
}

}  // namespace

TEST_CASE("plan records round-trip") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_plan(rng);
    const std::string line = serialize_plan(p);
    CHECK(line.find('\n') == std::string::npos);
    const auto back = parse_plan(line);
    CHECK(back == p);
    CHECK(serialize_plan(back) == line);
  }
}

TEST_CASE("truncated record names the first missing field") {
  auto p = pwtest::small_plan("g", Method::tip_procedure);
  const std::string line = serialize_plan(p);
  // Keys serialize sorted: backend_fingerprint, goal, method, pairing_adjusted, steps, vanilla_text.
  const auto cut = line.find("\"steps\"");
  REQUIRE(cut != std::string::npos);
  CHECK_THROWS_WITH_AS(parse_plan(line.substr(0, cut + 12)), doctest::Contains("missing field"), ParseError);
  CHECK_THROWS_WITH_AS(parse_plan("{}"), doctest::Contains("missing field 'goal'"), ParseError);
}

TEST_CASE("unknown method tags are parse errors") {
  auto j = plan_to_json(pwtest::small_plan("g", Method::tip_procedure));
  j["method"] = "tip_magic";
  CHECK_THROWS_WITH_AS(plan_from_json(j), "unknown method 'tip_magic'", ParseError);
  for (Method m : all_methods()) CHECK(method_from_string(to_string(m)) == m);
}

TEST_CASE("field errors carry the step path") {
  auto j = plan_to_json(pwtest::small_plan("g", Method::tip_procedure));
  j["steps"][1].erase("text");
  CHECK_THROWS_WITH_AS(plan_from_json(j), doctest::Contains("steps[1].text"), ParseError);
}

TEST_CASE("validate_plan rules") {
  auto p = pwtest::small_plan("g", Method::baseline_no_bridge);
  CHECK(validate_plan(p).empty());

  auto gap = p;
  gap.steps[2].index = 5;
  REQUIRE(validate_plan(gap).size() == 1);
  CHECK(validate_plan(gap)[0].field == "steps.index");

  auto bridged = pwtest::small_plan("g", Method::tip_procedure);
  bridged.steps[0].image = ImageHandle{"images/x.png", 512, 512, "png"};
  auto v = validate_plan(bridged);
  REQUIRE(v.size() == 1);
  CHECK(v[0].rule == "missing imagination_prompt at step 1");

  auto empty = p;
  empty.steps[1].text = "  ";
  empty.goal.title = "";
  CHECK(validate_plan(empty).size() == 2);

  p.steps.clear();
  CHECK(validate_plan(p)[0].rule == "plan has no steps");
}

TEST_CASE("templates reject empty bodies") {
  CHECK_THROWS_AS(PromptTemplate("x", TemplateRole::vanilla, "   "), PreconditionError);
  CHECK(role_from_string("t2i_bridge") == TemplateRole::t2i_bridge);
  CHECK_THROWS_AS(role_from_string("nope"), ParseError);
}

TEST_CASE("trim") {
  CHECK(trim("  a b \n\t") == "a b");
  CHECK(trim("") == "");
}
