#include <doctest.h>

#include "planweave/backends.hpp"
#include "planweave/errors.hpp"
#include "planweave/prompts.hpp"
#include "support.hpp"

using namespace planweave;

namespace {

std::string golden(const std::string& name) { return pwtest::slurp(pwtest::fixtures() + "/prompts/" + name); }

}  // namespace

TEST_CASE("golden vanilla prompt") {
  CHECK(render_vanilla_prompt(pwtest::tea_goal(), default_template(TemplateRole::vanilla)).text ==
        golden("vanilla.txt"));
}

TEST_CASE("golden imagination prompt") {
  CHECK(render_imagination_prompt("Heat fresh water until it is just below boiling.",
                                  default_template(TemplateRole::t2i_bridge))
            .text == golden("t2i.txt"));
}

TEST_CASE("golden revision prompt") {
  const auto p = render_revision_prompt(
      {"Heat fresh water until it is just below boiling.", "Pour the water over the leaves."},
      {"a kettle on a stove with steam rising", "hot water poured into a cup of tea leaves"},
      default_template(TemplateRole::i2t_bridge));
  CHECK(p.text == golden("i2t.txt"));
}

TEST_CASE("golden caption question") { CHECK(std::string(kDefaultCaptionQuestion) == golden("caption_question.txt")); }

TEST_CASE("revision prompt needs matching lists") {
  const auto& t = default_template(TemplateRole::i2t_bridge);
  CHECK_THROWS_AS(render_revision_prompt({"a"}, {}, t), PreconditionError);
  CHECK_THROWS_AS(render_revision_prompt({"a"}, {"x"}, default_template(TemplateRole::vanilla)), PreconditionError);
}

TEST_CASE("stepwise prompt ends with the next step request") {
  const auto p = render_stepwise_prompt(pwtest::tea_goal(), default_template(TemplateRole::vanilla), {"Boil water."});
  CHECK(p.text.rfind(golden("vanilla.txt") + "\nStep 1: Boil water.\n", 0) == 0);
  CHECK(p.text.find("What is Step 2?") != std::string::npos);
}

TEST_CASE("parse_step_list formats") {
  using V = std::vector<std::string>;
  CHECK(parse_step_list("Step 1: a\nStep 2: b") == V{"a", "b"});
  CHECK(parse_step_list("1. a\n2) b\n") == V{"a", "b"});
  CHECK(parse_step_list("Sure!\nStep 1: a\n  more of a\n\nStep 2: b") == V{"a more of a", "b"});
  CHECK_THROWS_AS(parse_step_list("no steps here"), UnparseablePlan);
  try {
    parse_step_list("nothing");
  } catch (const UnparseablePlan& e) {
    CHECK(e.raw_text() == "nothing");
  }
}

TEST_CASE("number_steps inverts parse_step_list") {
  const std::vector<std::string> steps{"Mix flour.", "Add 2 eggs.", "Step into the kitchen."};
  CHECK(number_steps(steps) == "Step 1: Mix flour.\nStep 2: Add 2 eggs.\nStep 3: Step into the kitchen.");
  CHECK(parse_step_list(number_steps(steps)) == steps);
}

TEST_CASE("parse_stepwise_reply") {
  CHECK_FALSE(parse_stepwise_reply("DONE").has_value());
  CHECK_FALSE(parse_stepwise_reply("  DONE.\n").has_value());
  CHECK(parse_stepwise_reply("Step 3: Rinse.\nStep 4: extra") == std::optional<std::string>("Rinse."));
  CHECK_THROWS_AS(parse_stepwise_reply("Step 3:"), UnparseablePlan);
}

TEST_CASE("template registry") {
  for (auto role : {TemplateRole::vanilla, TemplateRole::t2i_bridge, TemplateRole::i2t_bridge}) {
    CHECK(default_template(role).role() == role);
    CHECK_FALSE(default_template(role).misleading());
  }
  CHECK(find_template("t2i-irrelevant").misleading());
  CHECK_THROWS_AS(find_template("nope"), ConfigError);
}
