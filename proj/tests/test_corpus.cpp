#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "planweave/corpus.hpp"
#include "planweave/errors.hpp"
#include "support.hpp"

using namespace planweave;
namespace fs = std::filesystem;

namespace {

std::string corpus(const std::string& name) { return pwtest::fixtures() + "/corpus/" + name; }

const Rejection* rejection_for(const CorpusManifest& m, const std::string& id) {
  for (const auto& r : m.rejected) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

/// Copies the invalid fixture next to its assets in a scratch dir so the
/// rejection report does not land in the source tree.
std::string scratch_copy(const pwtest::TempDir& dir, const std::string& name) {
  fs::copy(pwtest::fixtures() + "/corpus/assets", dir.sub("assets"), fs::copy_options::recursive);
  fs::copy_file(corpus(name), dir.sub(name));
  return dir.sub(name);
}

}  // namespace

TEST_CASE("validation rejects each broken rule") {
  const auto m = load_corpus(corpus("invalid.json"));
  CHECK(m.dataset == "invalid");
  CHECK(m.input_count == 5);
  REQUIRE(m.examples.size() == 1);
  CHECK(m.examples[0].goal.id == "ok-task");
  CHECK(m.rejected_example_count() == 4);

  REQUIRE(rejection_for(m, "short-task"));
  CHECK(rejection_for(m, "short-task")->rule == "min_steps");
  REQUIRE(rejection_for(m, "long-task"));
  CHECK(rejection_for(m, "long-task")->rule == "max_steps");
  REQUIRE(rejection_for(m, "small-image"));
  CHECK(rejection_for(m, "small-image")->rule == "min_image_dim");
  CHECK(rejection_for(m, "small-image")->detail.find("399x500") != std::string::npos);
  REQUIRE(rejection_for(m, "missing-image"));
  CHECK(rejection_for(m, "missing-image")->rule == "image_missing");
}

TEST_CASE("rules are configurable") {
  ValidationRules loose;
  loose.min_steps = 2;
  loose.max_steps = 30;
  loose.min_image_dim = 300;
  const auto m = load_corpus(corpus("invalid.json"), loose);
  CHECK(m.examples.size() == 4);
  CHECK(m.rejected.size() == 1);
  ValidationRules bad;
  bad.min_steps = 5;
  bad.max_steps = 4;
  CHECK_THROWS(bad.check());
}

TEST_CASE("accepted examples carry resolved images") {
  const auto m = load_corpus(corpus("wikiplan.json"));
  REQUIRE(m.examples.size() == 3);
  for (const auto& ex : m.examples) {
    CHECK(ex.goal.dataset == "wikiplan");
    for (const auto& s : ex.steps) {
      REQUIRE(s.image);
      CHECK(fs::path(s.image->locator).is_absolute());
      CHECK(fs::exists(s.image->locator));
      CHECK(std::min(s.image->width, s.image->height) >= 400);
    }
  }
  CHECK(m.find("brew-tea")->goal.title == "How to Brew Loose Leaf Tea");
  CHECK(m.find("nope") == nullptr);
}

TEST_CASE("stats") {
  const auto s = corpus_stats(load_corpus(corpus("wikiplan.json")));
  CHECK(format_fixed(s.avg_steps, 2) == "5.00");
  CHECK(s.step_histogram.at(7) == 1);
  CHECK(corpus_stats(load_corpus(corpus("recipeplan.json"))).category_counts.at("recipe") == 4);
  CorpusManifest empty;
  CHECK_THROWS(corpus_stats(empty));
}

TEST_CASE("save then load is idempotent") {
  pwtest::TempDir dir;
  const auto m = load_corpus(corpus("wikiplan.json"));
  save_corpus(m, dir.sub("copy/wikiplan.json"));
  const auto again = load_corpus(dir.sub("copy/wikiplan.json"));
  REQUIRE(again.examples.size() == m.examples.size());
  for (std::size_t i = 0; i < m.examples.size(); ++i) CHECK(again.examples[i] == m.examples[i]);
  save_corpus(again, dir.sub("copy2/wikiplan.json"));
  const auto text = pwtest::slurp(dir.sub("copy/wikiplan.json"));
  // Relative paths from equally deep directories serialize identically.
  CHECK(text == pwtest::slurp(dir.sub("copy2/wikiplan.json")));
}

TEST_CASE("malformed corpora report positions and field paths") {
  pwtest::TempDir dir;
  std::ofstream(dir.sub("broken.json")) << "[\n  {\"id\": \"a\",\n   \"title\": }\n]";
  CHECK_THROWS_WITH_AS(load_corpus(dir.sub("broken.json")), doctest::Contains("3:"), ParseError);
  std::ofstream(dir.sub("schema.json")) << R"([{"id": "a", "title": "t", "steps": [{"image": "x.png"}]}])";
  CHECK_THROWS_WITH_AS(load_corpus(dir.sub("schema.json")), doctest::Contains("[0].steps[0]: missing field 'text'"),
                       ParseError);
}

TEST_CASE("rejection report") {
  pwtest::TempDir dir;
  const auto path = scratch_copy(dir, "invalid.json");
  const auto m = load_corpus(path);
  const auto report = write_rejection_report(m, path);
  CHECK(report == dir.sub("rejects.txt"));
  const auto text = pwtest::slurp(report);
  CHECK(text.find("short-task\tmin_steps\tstep count 2 < 3\n") != std::string::npos);
  CHECK(text.find("long-task\tmax_steps\tstep count 23 > 22\n") != std::string::npos);
}

TEST_CASE("sample_tasks is a deterministic uniform draw") {
  const auto m = load_corpus(corpus("recipeplan.json"));
  const auto a = sample_tasks(m, 3, 42), b = sample_tasks(m, 3, 42);
  CHECK(a == b);
  std::set<std::string> ids;
  for (const auto& g : a) ids.insert(g.id);
  CHECK(ids.size() == 3);
  CHECK(sample_tasks(m, 4, 1).size() == 4);
  CHECK_THROWS_AS(sample_tasks(m, 5, 1), PreconditionError);

  // Different seeds reach different subsets.
  std::set<std::vector<std::string>> subsets;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    std::vector<std::string> s;
    for (const auto& g : sample_tasks(m, 2, seed)) s.push_back(g.id);
    std::sort(s.begin(), s.end());
    subsets.insert(s);
  }
  CHECK(subsets.size() == 6);
}

TEST_CASE("sample_tasks does not depend on file order") {
  pwtest::TempDir dir;
  auto m = load_corpus(corpus("recipeplan.json"));
  auto reversed = m;
  std::reverse(reversed.examples.begin(), reversed.examples.end());
  CHECK(sample_tasks(m, 2, 9) == sample_tasks(reversed, 2, 9));
}

TEST_CASE("balanced sampling alternates categories") {
  auto w = load_corpus(corpus("wikiplan.json"));
  const auto g = sample_tasks(w, 2, 3, true);
  REQUIRE(g.size() == 2);
  CHECK(g[0].category != g[1].category);
}
