#pragma once

// Shared helpers for the unit tests and the acceptance binary: scratch
// directories, small plan builders and the independent metric oracles.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "planweave/backends.hpp"
#include "planweave/digest.hpp"
#include "planweave/image_io.hpp"
#include "planweave/mock_backends.hpp"
#include "planweave/plan.hpp"
#include "planweave/prompts.hpp"

namespace pwtest {

namespace fs = std::filesystem;

inline std::string fixtures() { return PW_FIXTURES; }

/// Removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "pw") {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string sub(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline std::string slurp(const std::string& path) {
  auto bytes = planweave::read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

inline planweave::Goal tea_goal() {
  return planweave::Goal{"brew-tea", "How to Brew Loose Leaf Tea", "wikiplan", std::nullopt};
}

inline planweave::MultimodalPlan small_plan(const std::string& goal_id, planweave::Method m, int steps = 3) {
  planweave::MultimodalPlan p;
  p.goal = planweave::Goal{goal_id, "Task " + goal_id, "synthetic", std::nullopt};
  p.method = m;
  for (int i = 1; i <= steps; ++i) {
    planweave::PlanStep s;
    s.index = i;
    s.text = "step " + std::to_string(i) + " of " + goal_id;
    p.steps.push_back(s);
    p.vanilla_text.push_back(s.text);
  }
  p.backend_fingerprint = "text=test";
  return p;
}

// ------------------------------------------------------------ LCS oracle

/// Longest common subsequence by enumerating every subsequence of `a`.
inline std::size_t brute_lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::size_t best = 0;
  const std::size_t n = a.size();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    const auto size = static_cast<std::size_t>(__builtin_popcount(mask));
    if (size <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!(mask & (1u << i))) continue;
      while (j < b.size() && b[j] != a[i]) ++j;
      if (j == b.size()) ok = false;
      else ++j;
    }
    if (ok) best = size;
  }
  return best;
}

// --------------------------------------------------------- METEOR oracle

struct MeteorOracle {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double score = 0;
};

/// Enumerates every partial one-to-one alignment of equal tokens; keeps the
/// largest ones and, among them, the fewest chunks.
inline MeteorOracle brute_meteor(const std::vector<std::string>& cand, const std::vector<std::string>& ref,
                                 double alpha = 0.9, double gamma = 0.5, double theta = 3.0) {
  std::vector<int> align(cand.size(), -1);
  std::vector<bool> used(ref.size(), false);
  std::size_t best_m = 0, best_ch = std::numeric_limits<std::size_t>::max();
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == cand.size()) {
      std::size_t m = 0, ch = 0;
      for (std::size_t k = 0; k < cand.size(); ++k) {
        if (align[k] < 0) continue;
        ++m;
        const bool continues = k > 0 && align[k - 1] >= 0 && align[k] == align[k - 1] + 1;
        if (!continues) ++ch;
      }
      if (m > best_m || (m == best_m && ch < best_ch)) {
        best_m = m;
        best_ch = ch;
      }
      return;
    }
    rec(i + 1);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || ref[j] != cand[i]) continue;
      used[j] = true;
      align[i] = static_cast<int>(j);
      rec(i + 1);
      align[i] = -1;
      used[j] = false;
    }
  };
  rec(0);
  MeteorOracle o;
  o.matches = best_m;
  if (best_m == 0) return o;
  o.chunks = best_ch;
  const double m = static_cast<double>(best_m);
  const double p = m / static_cast<double>(cand.size());
  const double r = m / static_cast<double>(ref.size());
  const double f = p * r / (alpha * p + (1 - alpha) * r);
  o.score = f * (1 - gamma * std::pow(static_cast<double>(best_ch) / m, theta));
  return o;
}

// ------------------------------------------------------------ WMD oracle

/// Minimum of the transportation LP over all basic solutions: every choice of
/// m+n-1 cells whose constraint columns are independent, solved by Gaussian
/// elimination and kept when non-negative.
inline double lp_vertex_transport(const std::vector<double>& supply, const std::vector<double>& demand,
                                  const std::vector<double>& cost) {
  const std::size_t m = supply.size(), n = demand.size(), cells = m * n;
  const std::size_t r = m + n - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(r);
  std::function<void(std::size_t, std::size_t)> choose = [&](std::size_t start, std::size_t depth) {
    if (depth == r) {
      // Rows: m supply equations, then the first n-1 demand equations.
      std::vector<std::vector<double>> a(r, std::vector<double>(r + 1, 0.0));
      for (std::size_t c = 0; c < r; ++c) {
        const std::size_t i = pick[c] / n, j = pick[c] % n;
        a[i][c] = 1.0;
        if (j < n - 1) a[m + j][c] = 1.0;
      }
      for (std::size_t i = 0; i < m; ++i) a[i][r] = supply[i];
      for (std::size_t j = 0; j + 1 < n; ++j) a[m + j][r] = demand[j];
      for (std::size_t col = 0; col < r; ++col) {
        std::size_t piv = col;
        for (std::size_t row = col + 1; row < r; ++row) {
          if (std::abs(a[row][col]) > std::abs(a[piv][col])) piv = row;
        }
        if (std::abs(a[piv][col]) < 1e-12) return;  // dependent columns
        std::swap(a[piv], a[col]);
        for (std::size_t row = 0; row < r; ++row) {
          if (row == col) continue;
          const double f = a[row][col] / a[col][col];
          for (std::size_t k = col; k <= r; ++k) a[row][k] -= f * a[col][k];
        }
      }
      double total = 0;
      for (std::size_t c = 0; c < r; ++c) {
        const double x = a[c][r] / a[c][c];
        if (x < -1e-12) return;
        total += x * cost[pick[c]];
      }
      best = std::min(best, total);
      return;
    }
    for (std::size_t c = start; c + (r - depth) <= cells; ++c) {
      pick[depth] = c;
      choose(c + 1, depth + 1);
    }
  };
  if (r == 0) return 0.0;
  choose(0, 0);
  return best;
}

/// Builds nBOW weights over unique words (first occurrence order) for the oracle.
inline void oracle_nbow(const std::vector<std::string>& doc, std::vector<std::string>& words,
                        std::vector<double>& weights) {
  std::map<std::string, std::size_t> at;
  for (const auto& w : doc) {
    auto [it, fresh] = at.emplace(w, words.size());
    if (fresh) {
      words.push_back(w);
      weights.push_back(0.0);
    }
    weights[it->second] += 1.0;
  }
  for (double& w : weights) w /= static_cast<double>(doc.size());
}

inline double l2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline double wmd_oracle(const std::vector<std::string>& doc_a, const std::vector<std::string>& doc_b,
                         const std::map<std::string, std::vector<double>>& vectors) {
  std::vector<std::string> wa, wb;
  std::vector<double> pa, pb;
  oracle_nbow(doc_a, wa, pa);
  oracle_nbow(doc_b, wb, pb);
  std::vector<double> cost;
  for (const auto& x : wa) {
    for (const auto& y : wb) cost.push_back(l2(vectors.at(x), vectors.at(y)));
  }
  return lp_vertex_transport(pa, pb, cost);
}

// ---------------------------------------------- constructed robustness set

/// Alignment each built-in bridge template should receive from
/// ConstructedEmbedder. The best per role is deliberately not the default.
inline const std::map<std::string, double>& constructed_alignment() {
  static const std::map<std::string, double> a{
      {"t2i-draw", 0.80},      {"t2i-see", 0.60},        {"t2i-describe", 0.70},
      {"t2i-visualize", 0.90}, {"t2i-irrelevant", 0.20}, {"t2i-usual", 0.10},
      {"i2t-rewrite", 0.75},   {"i2t-paired", 0.65},     {"i2t-imagination", 0.55},
      {"i2t-captions", 0.85},  {"i2t-disobey", 0.15},    {"i2t-irrelevant", 0.05},
  };
  return a;
}

inline std::vector<double> at_cosine(double c) { return {c, std::sqrt(1.0 - c * c)}; }

inline const planweave::PromptTemplate* template_ending(const std::string& text, planweave::TemplateRole role) {
  for (const auto& t : planweave::builtin_templates()) {
    if (t.role() == role && text.size() >= t.body().size() &&
        text.compare(text.size() - t.body().size(), t.body().size(), t.body()) == 0) {
      return &t;
    }
  }
  return nullptr;
}

/// LLM stand-in for the robustness sweep: imagination prompts are echoed as
/// the scene; revision prompts answer with steps naming the template used.
inline planweave::Completion robustness_script(const std::string& prompt, const planweave::GenerationParams&) {
  using planweave::TemplateRole;
  if (const auto* t = template_ending(prompt, TemplateRole::i2t_bridge)) {
    std::vector<std::string> steps(32, "revised via " + t->id());
    return {planweave::number_steps(steps), planweave::FinishReason::stop};
  }
  return {prompt, planweave::FinishReason::stop};
}

/// Joint space of dimension 2. Texts embed at (1, 0) except "revised via <id>";
/// images embed by the prompt recorded in them: a scene ending with a t2i
/// template body sits at that template's constructed cosine.
class ConstructedEmbedder : public planweave::Embedder {
 public:
  explicit ConstructedEmbedder(double scale = 1.0) : scale_(scale) {}
  std::string id() const override { return "constructed"; }
  bool supports(planweave::EmbeddingSpace) const override { return true; }

 protected:
  planweave::EmbeddingVector do_embed_text(const std::string& text, planweave::EmbeddingSpace space) override {
    const std::string tag = "revised via ";
    if (text.rfind(tag, 0) == 0) return {scaled(constructed_alignment().at(text.substr(tag.size()))), space};
    return {{scale_, 0.0}, space};
  }
  planweave::EmbeddingVector do_embed_image(std::span<const std::uint8_t> image) override {
    const auto decoded = planweave::decode_png(image);
    auto it = decoded.text.find("prompt");
    if (it != decoded.text.end()) {
      if (const auto* t = template_ending(it->second, planweave::TemplateRole::t2i_bridge)) {
        return {scaled(constructed_alignment().at(t->id())), planweave::EmbeddingSpace::joint_image};
      }
    }
    return {{scale_, 0.0}, planweave::EmbeddingSpace::joint_image};
  }

 private:
  std::vector<double> scaled(double c) const {
    auto v = at_cosine(c);
    for (double& x : v) x *= scale_;
    return v;
  }
  double scale_;
};

/// Mock suite whose text generator follows robustness_script and whose joint
/// embedder is a ConstructedEmbedder.
inline planweave::BackendSuite robustness_suite(const std::string& root) {
  planweave::BackendSuite s = planweave::make_mock_suite(root);
  s.text = std::make_shared<planweave::ScriptedTextGenerator>("robustness-script", robustness_script);
  s.joint_embedder = std::make_shared<ConstructedEmbedder>();
  return s;
}

// --------------------------------------------------------- stepwise script

/// Answers step-based prompts with "Step k: ..." until `stop_after` steps exist,
/// then DONE; every other prompt goes to the mock generator.
inline planweave::ScriptedTextGenerator::Script stepwise_script(int stop_after) {
  auto mock = std::make_shared<planweave::MockTextGenerator>();
  return [mock, stop_after](const std::string& prompt, const planweave::GenerationParams& params) {
    const std::string marker = "What is Step ";
    const auto at = prompt.rfind(marker);
    if (at != std::string::npos) {
      const int k = std::stoi(prompt.substr(at + marker.size()));
      if (stop_after >= 0 && k > stop_after) return planweave::Completion{"DONE", planweave::FinishReason::stop};
      return planweave::Completion{"Step " + std::to_string(k) + ": do part " + std::to_string(k) + ".",
                                   planweave::FinishReason::stop};
    }
    return mock->complete(prompt, params);
  };
}

/// Revision replies that ignore captions: the initial steps verbatim.
inline planweave::Completion caption_blind_script(const std::string& prompt, const planweave::GenerationParams& params) {
  static planweave::MockTextGenerator mock;
  const std::string head = std::string(planweave::kRevisionHeader) + " ";
  const std::string caps = " " + std::string(planweave::kCaptionsHeader) + " ";
  if (prompt.rfind(head, 0) == 0) {
    const auto at = prompt.find(caps);
    auto steps = planweave::parse_step_list(prompt.substr(head.size(), at - head.size()));
    for (auto& s : steps) s = "Revised: " + s;
    return {planweave::number_steps(steps), planweave::FinishReason::stop};
  }
  return mock.complete(prompt, params);
}

}  // namespace pwtest
