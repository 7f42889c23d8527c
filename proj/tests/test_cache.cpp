#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "planweave/errors.hpp"
#include "planweave/mock_backends.hpp"
#include "planweave/replay_cache.hpp"
#include "support.hpp"

using namespace planweave;
using nlohmann::json;

TEST_CASE("canonical request text ignores key order and whitespace") {
  const json a = json::parse(R"({"b": 1, "a": {"y": [1, 2], "x": "s"}})");
  const json b = json::parse(R"({"a":{"x":"s","y":[1,2]},"b":1})");
  CHECK(canonicalize(a) == canonicalize(b));
  CHECK(canonicalize(a) == R"({"a":{"x":"s","y":[1,2]},"b":1})");
  CHECK(make_cache_key("m", a) == make_cache_key("m", b));
  CHECK_FALSE(make_cache_key("m", a) == make_cache_key("n", a));
}

TEST_CASE("cache modes") {
  CHECK(cache_mode_from_string("strict-replay") == CacheMode::strict_replay);
  CHECK(to_string(CacheMode::strict_replay) == "strict-replay");
  CHECK_THROWS(cache_mode_from_string("sometimes"));

  pwtest::TempDir dir;
  int fetches = 0;
  auto fetch = [&] {
    ++fetches;
    return json{{"n", fetches}};
  };
  const json req{{"prompt", "hi"}};

  ReplayCache strict(dir.str(), CacheMode::strict_replay);
  CHECK_THROWS_AS(strict.through("m", req, fetch), CacheMiss);
  CHECK(fetches == 0);

  ReplayCache replay(dir.str(), CacheMode::replay);
  CHECK(replay.through("m", req, fetch) == json{{"n", 1}});
  CHECK(replay.through("m", req, fetch) == json{{"n", 1}});
  CHECK(replay.hits() == 1);
  CHECK(replay.misses() == 1);

  CHECK(strict.through("m", req, fetch) == json{{"n", 1}});

  ReplayCache record(dir.str(), CacheMode::record);
  CHECK(record.through("m", req, fetch) == json{{"n", 2}});
  CHECK(strict.through("m", req, fetch) == json{{"n", 2}});

  ReplayCache off(dir.str(), CacheMode::off);
  CHECK(off.through("m", req, fetch) == json{{"n", 3}});
  CHECK(strict.through("m", req, fetch) == json{{"n", 2}});
}

TEST_CASE("corrupted records are integrity errors, never refetched") {
  pwtest::TempDir dir;
  ReplayCache cache(dir.str(), CacheMode::replay);
  const json req{{"prompt", "x"}};
  cache.through("m", req, [] { return json{{"text", "original"}}; });
  const std::string path = cache.path_for(make_cache_key("m", req));
  auto rec = json::parse(pwtest::slurp(path));
  rec["response"]["text"] = "tampered";
  std::ofstream(path) << rec.dump();
  bool fetched = false;
  CHECK_THROWS_AS(cache.through("m", req, [&] { fetched = true; return json{}; }), CacheIntegrityError);
  CHECK_FALSE(fetched);
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(cache.through("m", req, [] { return json{}; }), CacheIntegrityError);
}

TEST_CASE("wrapped suite replays every service") {
  pwtest::TempDir dir;
  auto raw = make_mock_suite(dir.sub("out"));
  auto recorded = wrap_with_replay(raw, dir.sub("cache"), CacheMode::record);
  const std::string prompt = "Boil water. What do I need to draw in the picture to describe the above text?";
  const auto c1 = text_complete(recorded, prompt, {});
  const auto img = image_generate(recorded, c1.text, 64, 64);
  const auto cap = caption(recorded, img);
  const auto v = embed(*recorded.sentence_embedder, "boil water", EmbeddingSpace::sentence);
  CHECK(forwarded_calls(recorded) == 4);

  auto replayed = wrap_with_replay(make_mock_suite(dir.sub("out")), dir.sub("cache"), CacheMode::strict_replay);
  CHECK(text_complete(replayed, prompt, {}) == c1);
  CHECK(image_generate(replayed, c1.text, 64, 64) == img);
  CHECK(caption(replayed, img) == cap);
  CHECK(embed(*replayed.word_embedder, "boil water", EmbeddingSpace::sentence) == v);
  CHECK(forwarded_calls(replayed) == 0);
  CHECK_THROWS_AS(text_complete(replayed, "something new", {}), CacheMiss);
  // Embedders shared between roles stay one wrapper.
  CHECK(replayed.sentence_embedder == replayed.joint_embedder);
}

TEST_CASE("concurrent identical requests fetch once") {
  pwtest::TempDir dir;
  ReplayCache cache(dir.str(), CacheMode::replay);
  std::atomic<int> fetches{0};
  std::vector<std::jthread> pool;
  for (int t = 0; t < 8; ++t) {
    pool.emplace_back([&] {
      cache.through("m", json{{"q", 1}}, [&] {
        ++fetches;
        return json{{"a", 1}};
      });
    });
  }
  pool.clear();
  CHECK(fetches == 1);
}
