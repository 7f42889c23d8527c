#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "support.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string out;
};

/// Runs the plan binary with `args`, capturing stdout and stderr together.
Result plan(const std::string& args) {
  const std::string cmd = std::string(PW_PLAN_EXE) + " " + args + " 2>&1";
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p);
  std::array<char, 4096> buf{};
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string write_config(const pwtest::TempDir& dir, const std::string& extra = "") {
  const std::string path = dir.sub("config.json");
  std::ofstream(path) << "{\"corpus_path\": \"" << pwtest::fixtures() << "/corpus/wikiplan.json\","
                      << " \"methods\": [\"tip_procedure\"], \"sample_size\": 1, \"image_size\": 96,"
                      << " \"output_dir\": \"run\"" << extra << "}";
  return path;
}

}  // namespace

TEST_CASE("help lists the subcommands") {
  const auto r = plan("--help");
  CHECK(r.status == 0);
  for (const char* sub : {"run", "robustness", "ablate", "gallery", "validate-corpus", "stats", "serve-ratings"}) {
    CHECK_MESSAGE(r.out.find(sub) != std::string::npos, sub);
  }
}

TEST_CASE("validate-corpus writes rejects.txt next to the corpus") {
  pwtest::TempDir dir;
  fs::copy(pwtest::fixtures() + "/corpus/assets", dir.sub("assets"), fs::copy_options::recursive);
  fs::copy_file(pwtest::fixtures() + "/corpus/invalid.json", dir.sub("invalid.json"));
  const auto r = plan("validate-corpus " + dir.sub("invalid.json"));
  CHECK(r.status == 0);
  CHECK(r.out.find("4 rejected") != std::string::npos);
  CHECK(pwtest::slurp(dir.sub("rejects.txt")).find("small-image\tmin_image_dim") != std::string::npos);
  CHECK(plan("validate-corpus --min-steps 2 " + dir.sub("invalid.json")).out.find("3 rejected") != std::string::npos);
}

TEST_CASE("stats") {
  const auto r = plan("stats " + pwtest::fixtures() + "/corpus/wikiplan.json");
  CHECK(r.status == 0);
  CHECK(r.out.find("avg_steps: 5.00") != std::string::npos);
}

TEST_CASE("run, then gallery") {
  pwtest::TempDir dir;
  const auto cfg = write_config(dir);
  auto r = plan("run -c " + cfg + " --seed 3");
  CHECK(r.status == 0);
  CHECK(r.out.find("plans generated: 1") != std::string::npos);
  CHECK(fs::exists(dir.sub("run/report.md")));
  r = plan("run -c " + cfg + " --seed 3");
  CHECK(r.out.find("resumed: 1") != std::string::npos);
  r = plan("gallery -i " + dir.sub("run") + " -o " + dir.sub("site"));
  CHECK(r.status == 0);
  CHECK(fs::exists(dir.sub("site/index.html")));
}

TEST_CASE("config errors exit with status 2") {
  pwtest::TempDir dir;
  const auto r = plan("run -c " + write_config(dir, ", \"colour\": 1"));
  CHECK(r.status == 2);
  CHECK(r.out.find("colour") != std::string::npos);
}

TEST_CASE("bad flags are rejected") {
  CHECK(plan("run -c /nonexistent.json").status != 0);
  CHECK(plan("stats x --cache-mode sometimes").status != 0);
  CHECK(plan("").status != 0);
}
