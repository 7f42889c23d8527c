#include <doctest.h>

#include "planweave/errors.hpp"
#include "planweave/mock_backends.hpp"
#include "planweave/pipeline.hpp"
#include "planweave/replay_cache.hpp"
#include "support.hpp"

using namespace planweave;

namespace {

PipelineConfig config_for(Method m) {
  PipelineConfig c;
  c.mode = m;
  c.image_width = c.image_height = 128;
  return c;
}

BackendSuite scripted_suite(const std::string& root, ScriptedTextGenerator::Script script) {
  auto s = make_mock_suite(root);
  s.text = std::make_shared<ScriptedTextGenerator>("scripted", std::move(script));
  return s;
}

}  // namespace

TEST_CASE("run_tip is deterministic with mocks") {
  pwtest::TempDir a, b;
  auto sa = make_mock_suite(a.str()), sb = make_mock_suite(b.str());
  const auto pa = run_tip(pwtest::tea_goal(), sa, config_for(Method::tip_procedure));
  const auto pb = run_tip(pwtest::tea_goal(), sb, config_for(Method::tip_procedure));
  CHECK(serialize_plan(pa) == serialize_plan(pb));
  CHECK(validate_plan(pa).empty());
  CHECK_FALSE(pa.pairing_adjusted);
  CHECK(pa.steps.size() == pa.vanilla_text.size());
  for (const auto& s : pa.steps) {
    REQUIRE(s.image);
    CHECK(s.image->width == 128);
    CHECK(s.caption);
    CHECK(s.imagination_prompt->rfind("A detailed scene of: ", 0) == 0);
  }
}

TEST_CASE("strict replay of a recorded run makes no backend calls") {
  pwtest::TempDir dir;
  auto recorded = wrap_with_replay(make_mock_suite(dir.sub("out")), dir.sub("cache"), CacheMode::record);
  const auto first = run_tip(pwtest::tea_goal(), recorded, config_for(Method::tip_procedure));
  CHECK(forwarded_calls(recorded) > 0);

  auto raw = make_mock_suite(dir.sub("out"));
  auto replayed = wrap_with_replay(raw, dir.sub("cache"), CacheMode::strict_replay);
  const auto second = run_tip(pwtest::tea_goal(), replayed, config_for(Method::tip_procedure));
  CHECK(serialize_plan(first) == serialize_plan(second));
  CHECK(forwarded_calls(replayed) == 0);
  CHECK(raw.total_calls() == 0);
}

TEST_CASE("disabling the T2I bridge only changes imagination prompts and what derives from them") {
  pwtest::TempDir dir;
  auto suite = scripted_suite(dir.str(), pwtest::caption_blind_script);
  const auto full = run_tip(pwtest::tea_goal(), suite, config_for(Method::tip_procedure));
  const auto ablated = run_tip(pwtest::tea_goal(), suite, config_for(Method::ablation_no_t2ib));
  CHECK(full.goal == ablated.goal);
  CHECK(full.vanilla_text == ablated.vanilla_text);
  REQUIRE(full.steps.size() == ablated.steps.size());
  for (std::size_t i = 0; i < full.steps.size(); ++i) {
    CHECK(full.steps[i].text == ablated.steps[i].text);
    CHECK(full.steps[i].index == ablated.steps[i].index);
    CHECK(full.steps[i].imagination_prompt != ablated.steps[i].imagination_prompt);
    CHECK(*ablated.steps[i].imagination_prompt == ablated.vanilla_text[i]);
    CHECK_FALSE(full.steps[i].image == ablated.steps[i].image);
  }
}

TEST_CASE("disabling the I2T bridge keeps the vanilla text") {
  pwtest::TempDir dir;
  auto suite = make_mock_suite(dir.str());
  const auto p = run_tip(pwtest::tea_goal(), suite, config_for(Method::ablation_no_i2tb));
  REQUIRE(p.steps.size() == p.vanilla_text.size());
  for (std::size_t i = 0; i < p.steps.size(); ++i) CHECK(p.steps[i].text == p.vanilla_text[i]);
  CHECK(p.steps[0].caption.has_value());
}

TEST_CASE("step-based mode stops at DONE") {
  pwtest::TempDir dir;
  auto suite = scripted_suite(dir.str(), pwtest::stepwise_script(4));
  const auto p = run_tip_stepwise(pwtest::tea_goal(), suite, config_for(Method::tip_stepwise));
  CHECK(p.steps.size() == 4);
  CHECK(p.vanilla_text.size() == 4);
  for (int k = 0; k < 4; ++k) CHECK(p.steps[k].index == k + 1);
  CHECK(p.steps[3].text.find("do part 4") != std::string::npos);
  CHECK(validate_plan(p).empty());
}

TEST_CASE("step-based mode enforces the step bound") {
  pwtest::TempDir dir;
  auto suite = scripted_suite(dir.str(), pwtest::stepwise_script(-1));
  const auto p = run_tip_stepwise(pwtest::tea_goal(), suite, config_for(Method::tip_stepwise));
  CHECK(p.steps.size() == 22);
  auto small = config_for(Method::tip_stepwise);
  small.max_steps = 5;
  CHECK(run_tip_stepwise(pwtest::tea_goal(), suite, small).steps.size() == 5);
}

TEST_CASE("step-based mode with the mock generator") {
  pwtest::TempDir dir;
  auto suite = make_mock_suite(dir.str());
  const auto p = run_tip_stepwise(pwtest::tea_goal(), suite, config_for(Method::tip_stepwise));
  CHECK(p.steps.size() >= 3);
  CHECK(p.steps.size() <= 6);
}

TEST_CASE("a revision with fewer steps pairs by the shorter list") {
  pwtest::TempDir dir;
  auto suite = scripted_suite(dir.str(), [](const std::string& prompt, const GenerationParams& p) {
    auto c = pwtest::caption_blind_script(prompt, p);
    if (prompt.rfind(std::string(kRevisionHeader), 0) == 0) {
      auto steps = parse_step_list(c.text);
      steps.pop_back();
      c.text = number_steps(steps);
    }
    return c;
  });
  const auto p = run_tip(pwtest::tea_goal(), suite, config_for(Method::tip_procedure));
  CHECK(p.pairing_adjusted);
  CHECK(p.steps.size() == p.vanilla_text.size() - 1);
}

TEST_CASE("step failures carry the step number") {
  pwtest::TempDir dir;
  auto suite = make_mock_suite(dir.str());
  struct Failing : MockCaptioner {
    std::string do_caption(std::span<const std::uint8_t> img, const std::string& q) override {
      if (calls() == 2) throw BackendError(BackendErrorKind::refusal, "nope");
      return MockCaptioner::do_caption(img, q);
    }
  };
  suite.captioner = std::make_shared<Failing>();
  auto cfg = config_for(Method::tip_procedure);
  cfg.workers = 1;
  CHECK_THROWS_WITH_AS(run_tip(pwtest::tea_goal(), suite, cfg), "step=2: nope", StepError);
}

TEST_CASE("unparseable vanilla output") {
  pwtest::TempDir dir;
  auto suite = scripted_suite(dir.str(), [](const std::string&, const GenerationParams&) {
    return Completion{"I cannot help with that.", FinishReason::stop};
  });
  CHECK_THROWS_AS(run_tip(pwtest::tea_goal(), suite, config_for(Method::tip_procedure)), UnparseablePlan);
}

TEST_CASE("baselines") {
  pwtest::TempDir dir;
  auto suite = make_mock_suite(dir.str());
  const auto cfg = config_for(Method::tip_procedure);
  const auto tip = run_tip(pwtest::tea_goal(), suite, cfg);
  ReferencePlan ref{tip.goal, tip.steps};

  auto none = run_baseline(pwtest::tea_goal(), nullptr, suite, Method::baseline_no_bridge, cfg);
  CHECK(none.steps.size() == none.vanilla_text.size());
  CHECK(*none.steps[0].imagination_prompt == none.vanilla_text[0]);

  auto text_ref = run_baseline(pwtest::tea_goal(), &ref, suite, Method::baseline_text_ref, cfg);
  CHECK(text_ref.steps[0].text == ref.steps[0].text);

  auto image_ref = run_baseline(pwtest::tea_goal(), &ref, suite, Method::baseline_image_ref, cfg);
  CHECK(image_ref.steps[0].image == ref.steps[0].image);
  CHECK(image_ref.steps[0].text == *image_ref.steps[0].caption);

  CHECK_THROWS_AS(run_baseline(pwtest::tea_goal(), nullptr, suite, Method::baseline_text_ref, cfg),
                  PreconditionError);
  CHECK_THROWS_AS(run_baseline(pwtest::tea_goal(), nullptr, suite, Method::tip_procedure, cfg), PreconditionError);
}

TEST_CASE("config checks template roles") {
  PipelineConfig c;
  c.t2i_template = default_template(TemplateRole::i2t_bridge);
  CHECK_THROWS_AS(c.check(), ConfigError);
}

TEST_CASE("plan record files") {
  pwtest::TempDir dir;
  auto p = pwtest::small_plan("g/1", Method::tip_stepwise);
  const auto path = plan_output_path(dir.str(), p.goal, p.method);
  CHECK(path == dir.str() + "/synthetic/g_1/tip_stepwise.plan");
  write_plan_record(path, p);
  CHECK(read_plan_record(path) == p);
  CHECK(pwtest::slurp(path) == serialize_plan(p) + "\n");
}
