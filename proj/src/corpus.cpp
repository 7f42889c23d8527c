#include "planweave/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "planweave/digest.hpp"
#include "planweave/errors.hpp"
#include "planweave/image_io.hpp"
#include "planweave/parallel.hpp"

namespace planweave {

namespace fs = std::filesystem;
using nlohmann::json;

void ValidationRules::check() const {
  if (min_steps < 1 || min_steps > max_steps) throw ConfigError("validation rules need 1 <= min_steps <= max_steps");
  if (min_image_dim < 1) throw ConfigError("min_image_dim must be positive");
}

std::size_t CorpusManifest::rejected_example_count() const {
  std::set<std::string> ids;
  for (const auto& r : rejected) ids.insert(r.id);
  return ids.size();
}

const ReferencePlan* CorpusManifest::find(const std::string& id) const {
  for (const auto& e : examples) {
    if (e.goal.id == id) return &e;
  }
  return nullptr;
}

std::string format_fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

namespace {

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

std::string field_string(const json& obj, const std::string& key, const std::string& where, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw ParseError(where + ": missing field '" + key + "'");
    return {};
  }
  if (!it->is_string()) throw ParseError(where + "." + key + ": expected a string");
  return it->get<std::string>();
}

struct ProbeResult {
  std::optional<ImageInfo> info;
  bool exists = false;
};

}  // namespace

CorpusManifest load_corpus(const std::string& path, const ValidationRules& rules, int workers) {
  rules.check();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read corpus '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ":" + line_col(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
  }
  if (!doc.is_array()) throw ParseError(path + ": corpus must be a top-level array");

  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  CorpusManifest m;
  m.dataset = fs::path(path).stem().string();
  m.provenance = "loaded from " + fs::path(path).filename().string();
  m.input_count = doc.size();

  struct Parsed {
    ReferencePlan plan;
    std::vector<std::string> image_paths;  // "" when the step has no image
  };
  std::vector<Parsed> parsed;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = "[" + std::to_string(i) + "]";
    const json& ex = doc[i];
    if (!ex.is_object()) throw ParseError(path + ": " + where + ": expected an object");
    Parsed p;
    p.plan.goal.id = field_string(ex, "id", where, true);
    p.plan.goal.title = field_string(ex, "title", where, true);
    p.plan.goal.dataset = m.dataset;
    std::string category = field_string(ex, "category", where, false);
    if (!category.empty()) p.plan.goal.category = category;
    auto steps = ex.find("steps");
    if (steps == ex.end()) throw ParseError(path + ": " + where + ": missing field 'steps'");
    if (!steps->is_array()) throw ParseError(path + ": " + where + ".steps: expected an array");
    for (std::size_t k = 0; k < steps->size(); ++k) {
      const std::string sw = where + ".steps[" + std::to_string(k) + "]";
      const json& st = (*steps)[k];
      if (!st.is_object()) throw ParseError(path + ": " + sw + ": expected an object");
      PlanStep s;
      s.index = static_cast<int>(k) + 1;
      s.text = field_string(st, "text", sw, true);
      const std::string image = field_string(st, "image", sw, false);
      p.image_paths.push_back(image.empty() ? "" : fs::weakly_canonical(base / image).string());
      p.plan.steps.push_back(std::move(s));
    }
    parsed.push_back(std::move(p));
  }

  // Probe every referenced image (in parallel) for existence and dimensions.
  std::vector<std::string> all_images;
  for (const auto& p : parsed) {
    for (const auto& img : p.image_paths) {
      if (!img.empty()) all_images.push_back(img);
    }
  }
  std::sort(all_images.begin(), all_images.end());
  all_images.erase(std::unique(all_images.begin(), all_images.end()), all_images.end());
  auto probes = parallel_map(all_images.size(), workers, [&](std::size_t i) {
    ProbeResult r;
    r.exists = fs::is_regular_file(all_images[i]);
    if (r.exists) r.info = probe_image(read_file_bytes(all_images[i]));
    return r;
  });
  std::map<std::string, ProbeResult> probe_of;
  for (std::size_t i = 0; i < all_images.size(); ++i) probe_of[all_images[i]] = probes[i];

  std::set<std::string> seen_ids;
  for (auto& p : parsed) {
    const std::string& id = p.plan.goal.id;
    std::vector<Rejection> reasons;
    auto reject = [&](std::string rule, std::string detail) {
      reasons.push_back({id, std::move(rule), std::move(detail)});
    };
    if (!seen_ids.insert(id).second) reject("duplicate_id", "id '" + id + "' appears more than once");
    if (trim(p.plan.goal.title).empty()) reject("empty_title", "title is empty");
    const int n = static_cast<int>(p.plan.steps.size());
    if (n < rules.min_steps) {
      reject("min_steps", "step count " + std::to_string(n) + " < " + std::to_string(rules.min_steps));
    }
    if (n > rules.max_steps) {
      reject("max_steps", "step count " + std::to_string(n) + " > " + std::to_string(rules.max_steps));
    }
    for (std::size_t k = 0; k < p.plan.steps.size(); ++k) {
      PlanStep& s = p.plan.steps[k];
      const std::string at = " at step " + std::to_string(k + 1);
      if (trim(s.text).empty()) reject("empty_step_text", "empty text" + at);
      const std::string& img = p.image_paths[k];
      if (img.empty()) {
        reject("image_missing", "no image" + at);
        continue;
      }
      const ProbeResult& pr = probe_of.at(img);
      if (!pr.exists) {
        reject("image_missing", "file not found '" + img + "'" + at);
      } else if (!pr.info) {
        reject("image_undecodable", "cannot read image header '" + img + "'" + at);
      } else {
        if (std::min(pr.info->width, pr.info->height) < rules.min_image_dim) {
          reject("min_image_dim", "image dim < " + std::to_string(rules.min_image_dim) + " (" +
                                      std::to_string(pr.info->width) + "x" + std::to_string(pr.info->height) +
                                      at + ")");
        }
        s.image = ImageHandle{img, pr.info->width, pr.info->height, pr.info->format};
      }
    }
    if (reasons.empty()) {
      m.examples.push_back(std::move(p.plan));
    } else {
      m.rejected.insert(m.rejected.end(), reasons.begin(), reasons.end());
    }
  }
  return m;
}

void save_corpus(const CorpusManifest& manifest, const std::string& path) {
  const fs::path base = fs::absolute(fs::path(path)).parent_path();
  json out = json::array();
  for (const auto& ex : manifest.examples) {
    json steps = json::array();
    for (const auto& s : ex.steps) {
      json st{{"text", s.text}};
      if (s.image) st["image"] = fs::relative(fs::path(s.image->locator), base).generic_string();
      steps.push_back(std::move(st));
    }
    json e{{"id", ex.goal.id}, {"title", ex.goal.title}, {"steps", std::move(steps)}};
    if (ex.goal.category) e["category"] = *ex.goal.category;
    out.push_back(std::move(e));
  }
  write_file_atomic(path, out.dump(2) + "\n");
}

std::string write_rejection_report(const CorpusManifest& manifest, const std::string& corpus_path) {
  const fs::path out = fs::absolute(fs::path(corpus_path)).parent_path() / "rejects.txt";
  std::string body;
  for (const auto& r : manifest.rejected) body += r.id + "\t" + r.rule + "\t" + r.detail + "\n";
  write_file_atomic(out.string(), body);
  return out.string();
}

namespace {

// Uniform integer in [0, bound) by rejection sampling; unlike
// std::uniform_int_distribution its output is identical on every platform.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % bound;
  }
}

template <class T>
void shuffle_portable(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_below(rng, i)]);
}

}  // namespace

std::vector<Goal> sample_tasks(const CorpusManifest& manifest, std::size_t n, std::uint64_t seed, bool balanced) {
  if (n > manifest.examples.size()) {
    throw PreconditionError("sample_tasks: requested " + std::to_string(n) + " tasks but only " +
                            std::to_string(manifest.examples.size()) + " accepted");
  }
  std::vector<Goal> goals;
  for (const auto& e : manifest.examples) goals.push_back(e.goal);
  std::sort(goals.begin(), goals.end(), [](const Goal& a, const Goal& b) { return a.id < b.id; });
  std::mt19937_64 rng(seed);
  shuffle_portable(goals, rng);
  if (!balanced) {
    goals.resize(n);
    return goals;
  }
  std::map<std::string, std::vector<Goal>> by_category;
  for (auto& g : goals) by_category[g.category.value_or("")].push_back(std::move(g));
  std::vector<Goal> out;
  for (std::size_t round = 0; out.size() < n; ++round) {
    for (auto& [_, list] : by_category) {
      if (round < list.size() && out.size() < n) out.push_back(list[round]);
    }
  }
  return out;
}

CorpusStats corpus_stats(const CorpusManifest& manifest) {
  if (manifest.examples.empty()) throw PreconditionError("corpus_stats: empty manifest");
  CorpusStats s;
  double total = 0;
  for (const auto& e : manifest.examples) {
    const int n = static_cast<int>(e.steps.size());
    total += n;
    ++s.step_histogram[n];
    ++s.category_counts[e.goal.category.value_or("")];
  }
  s.avg_steps = total / static_cast<double>(manifest.examples.size());
  return s;
}

}  // namespace planweave
