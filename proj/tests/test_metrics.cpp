#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "planweave/errors.hpp"
#include "planweave/metrics.hpp"
#include "planweave/mock_backends.hpp"
#include "support.hpp"

using namespace planweave;

namespace {

std::vector<std::string> random_tokens(std::mt19937_64& rng, std::size_t max_len, int vocab) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> word(0, vocab - 1);
  std::vector<std::string> out(len(rng));
  for (auto& t : out) t = "w" + std::to_string(word(rng));
  return out;
}

TokenSequence seq(std::vector<std::string> t) { return TokenSequence{std::move(t)}; }

DistributionMoments gaussian_1d(double mean, double var) { return {{mean}, {{var}}}; }

}  // namespace

TEST_CASE("rouge_l agrees with brute-force LCS") {
  std::mt19937_64 rng(11);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 200; ++i) {
    auto a = random_tokens(rng, 10, 4), b = random_tokens(rng, 10, 4);
    const auto expected = pwtest::brute_lcs(a, b);
    const auto s = rouge_l(seq(a), seq(b));
    REQUIRE(s.lcs == expected);
    const double p = double(expected) / a.size(), r = double(expected) / b.size();
    CHECK(s.f == doctest::Approx(p + r > 0 ? 2 * p * r / (p + r) : 0.0).epsilon(1e-12));
  }
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(5));
}

TEST_CASE("rouge_l edge cases") {
  CHECK(rouge_l(tokenize("the cat sat"), tokenize("the cat sat")).f == doctest::Approx(1.0));
  CHECK(rouge_l(tokenize("a b"), tokenize("c d")).f == 0.0);
  CHECK_THROWS_AS(rouge_l(tokenize(""), tokenize("x")), MetricError);
}

TEST_CASE("meteor agrees with exhaustive alignment enumeration") {
  std::mt19937_64 rng(23);
  int nontrivial = 0;
  for (int i = 0; i < 300; ++i) {
    auto a = random_tokens(rng, 6, 3), b = random_tokens(rng, 6, 3);
    const auto oracle = pwtest::brute_meteor(a, b);
    const auto s = meteor(seq(a), seq(b));
    REQUIRE(s.exact);
    CHECK(s.matches == oracle.matches);
    CHECK(s.chunks == oracle.chunks);
    CHECK(std::abs(s.score - oracle.score) <= 1e-9);
    if (oracle.chunks > 1) ++nontrivial;
  }
  CHECK(nontrivial > 50);
}

TEST_CASE("meteor fixtures") {
  // Identical 6-token sequences: one chunk, penalty 0.5 * (1/6)^3.
  auto s = meteor(tokenize("a b c d e f"), tokenize("a b c d e f"));
  CHECK(s.chunks == 1);
  CHECK(s.score == doctest::Approx(1.0 - 0.5 / 216.0));
  // Reversed order: every match is its own chunk.
  s = meteor(tokenize("c b a"), tokenize("a b c"));
  CHECK(s.chunks == 3);
  CHECK(s.score == doctest::Approx(0.5));
  CHECK(meteor(tokenize("x"), tokenize("y")).score == 0.0);
}

TEST_CASE("wmd agrees with LP vertex enumeration") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    std::map<std::string, std::vector<double>> vectors;
    FixtureEmbedder e;
    for (int w = 0; w < 6; ++w) {
      std::vector<double> v{g(rng), g(rng), g(rng)};
      vectors["w" + std::to_string(w)] = v;
      e.add_text(EmbeddingSpace::word, "w" + std::to_string(w), v);
    }
    // <= 4 unique words per document
    auto pick = [&] {
      std::vector<std::string> doc;
      std::uniform_int_distribution<int> len(1, 7), word(0, 5);
      std::vector<int> allowed;
      for (int k = 0; k < 4; ++k) allowed.push_back(word(rng));
      std::uniform_int_distribution<int> idx(0, 3);
      for (int n = len(rng); n > 0; --n) doc.push_back("w" + std::to_string(allowed[idx(rng)]));
      return doc;
    };
    auto a = pick(), b = pick();
    const double expected = pwtest::wmd_oracle(a, b, vectors);
    CHECK(std::abs(wmd(seq(a), seq(b), e) - expected) <= 1e-6);
  }
}

TEST_CASE("wmd is a metric on random documents") {
  std::mt19937_64 rng(37);
  HashingEmbedder e(16);
  for (int i = 0; i < 100; ++i) {
    auto a = seq(random_tokens(rng, 8, 6)), b = seq(random_tokens(rng, 8, 6));
    const double ab = wmd(a, b, e), ba = wmd(b, a, e);
    CHECK(wmd(a, a, e) <= 1e-9);
    CHECK(ab >= 0.0);
    CHECK(std::abs(ab - ba) <= 1e-9);
  }
}

TEST_CASE("wmd missing-word policy and vocabulary budget") {
  FixtureEmbedder e;
  e.add_text(EmbeddingSpace::word, "tea", {1, 0}).add_text(EmbeddingSpace::word, "cup", {0, 1});
  CHECK_THROWS_WITH_AS(wmd(tokenize("tea pot"), tokenize("cup"), e), doctest::Contains("'pot'"), MetricError);
  WmdOptions skip;
  skip.missing = MissingWordPolicy::skip;
  CHECK(wmd(tokenize("tea pot"), tokenize("cup"), e, skip) == doctest::Approx(std::sqrt(2.0)));
  WmdOptions tiny;
  tiny.vocab_budget = 1;
  CHECK_THROWS_AS(wmd(tokenize("tea"), tokenize("cup"), e, tiny), MetricError);
}

TEST_CASE("frechet distance closed forms") {
  CHECK(std::abs(frechet_distance(gaussian_1d(0, 1), gaussian_1d(1, 1)) - 1.0) <= 1e-4);
  CHECK(std::abs(frechet_distance(gaussian_1d(0, 1), gaussian_1d(0, 4)) - 1.0) <= 1e-4);
  const DistributionMoments a{{1, 2}, {{2, 0.5}, {0.5, 1}}};
  CHECK(frechet_distance(a, a) <= 1e-6);
}

TEST_CASE("frechet distance is rotation invariant") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0.0, 1.0);
  auto random_moments = [&] {
    std::vector<std::vector<double>> feats(12, std::vector<double>(3));
    for (auto& f : feats) for (double& x : f) x = g(rng);
    return moments_from_features(feats);
  };
  // Rotation: product of two Givens rotations.
  const double c1 = std::cos(0.7), s1 = std::sin(0.7), c2 = std::cos(-1.3), s2 = std::sin(-1.3);
  const double r1[3][3] = {{c1, -s1, 0}, {s1, c1, 0}, {0, 0, 1}};
  const double r2[3][3] = {{1, 0, 0}, {0, c2, -s2}, {0, s2, c2}};
  double q[3][3] = {};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) q[i][j] += r1[i][k] * r2[k][j];
  auto rotate = [&](const DistributionMoments& m) {
    DistributionMoments out{std::vector<double>(3, 0.0), std::vector<std::vector<double>>(3, std::vector<double>(3, 0.0))};
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) out.mean[i] += q[i][k] * m.mean[k];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) out.covariance[i][j] += q[i][k] * m.covariance[k][l] * q[j][l];
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) out.covariance[i][j] = out.covariance[j][i] = (out.covariance[i][j] + out.covariance[j][i]) / 2;
    return out;
  };
  for (int t = 0; t < 20; ++t) {
    auto a = random_moments(), b = random_moments();
    CHECK(std::abs(frechet_distance(a, b) - frechet_distance(rotate(a), rotate(b))) <= 1e-6);
  }
}

TEST_CASE("frechet distance rejects bad covariances") {
  const DistributionMoments bad{{0, 0}, {{1, 2}, {0, 1}}};
  CHECK_THROWS_AS(frechet_distance(bad, bad), MetricError);
  const DistributionMoments neg{{0}, {{-1}}};
  CHECK_THROWS_AS(frechet_distance(neg, neg), MetricError);
  CHECK_THROWS_AS(moments_from_features({{1.0}}), MetricError);
}

TEST_CASE("clip_score fixtures") {
  CHECK(clip_score({1, 0}, {1, 0}) == 2.5);
  CHECK(clip_score({4, 3}, {1, 0}) == 2.0);
  CHECK(clip_score({-0.3, std::sqrt(1 - 0.09)}, {1, 0}) == 0.0);
}

TEST_CASE("sbert similarity is symmetric and bounded") {
  HashingEmbedder e;
  const double s = sbert_similarity("boil the water", "pour the water", e);
  CHECK(s == doctest::Approx(sbert_similarity("pour the water", "boil the water", e)));
  CHECK(s <= 1.0);
  CHECK(sbert_similarity("same text", "same text", e) == doctest::Approx(1.0));
  CHECK_THROWS_AS(sbert_similarity(" ", "x", e), MetricError);
}

TEST_CASE("evaluate_plan fills every plan-level metric with mocks") {
  pwtest::TempDir dir;
  auto suite = make_mock_suite(dir.str());
  PipelineConfig cfg;
  auto plan = run_tip(pwtest::tea_goal(), suite, cfg);
  ReferencePlan ref{plan.goal, plan.steps};
  auto r = evaluate_plan(plan, ref, suite);
  CHECK(r.errors.empty());
  REQUIRE(r.wmd_distance);
  CHECK(*r.wmd_distance == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(*r.wmd_similarity == doctest::Approx(1.0));
  CHECK(*r.rouge_l == doctest::Approx(1.0));
  CHECK(*r.sbert == doctest::Approx(1.0));
  CHECK(r.clip.has_value());
  CHECK(*r.all_s == doctest::Approx((*r.cap_s + *r.text_s) / 2));
  CHECK_FALSE(r.fid.has_value());
}

TEST_CASE("evaluate_plan reports failing metrics without aborting") {
  pwtest::TempDir dir;
  auto suite = make_mock_suite(dir.str());
  suite.word_embedder = std::make_shared<FixtureEmbedder>();
  auto plan = pwtest::small_plan("g", Method::tip_procedure);
  ReferencePlan ref{plan.goal, plan.steps};
  MetricToggles t;
  t.clip = t.composite = false;
  auto r = evaluate_plan(plan, ref, suite, t);
  CHECK_FALSE(r.wmd_distance.has_value());
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].rfind("wmd:", 0) == 0);
  CHECK(r.rouge_l.has_value());
}
