#include "planweave/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

#include "planweave/errors.hpp"
#include "planweave/transport.hpp"

namespace planweave {

using nlohmann::json;

// ---------------------------------------------------------------- ROUGE-L

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(const TokenSequence& candidate, const TokenSequence& reference, double beta) {
  if (candidate.empty() || reference.empty()) throw MetricError("rouge_l: empty sequence");
  RougeScore s;
  s.lcs = lcs_length(candidate.tokens, reference.tokens);
  s.precision = static_cast<double>(s.lcs) / static_cast<double>(candidate.size());
  s.recall = static_cast<double>(s.lcs) / static_cast<double>(reference.size());
  if (s.precision + s.recall > 0) {
    const double b2 = beta * beta;
    s.f = (1 + b2) * s.precision * s.recall / (s.recall + b2 * s.precision);
  }
  return s;
}

// ----------------------------------------------------------------- METEOR

namespace {

// Branch-and-bound over maximum-cardinality exact-match alignments, looking
// for the one with the most adjacent pairs (fewest chunks).
class ChunkSearch {
 public:
  ChunkSearch(const std::vector<std::string>& cand, const std::vector<std::string>& ref, std::size_t budget)
      : cand_(cand), ref_(ref), budget_(budget), used_(ref.size(), 0) {
    std::map<std::string, int> ids;
    std::map<std::string, int> cand_count, ref_count;
    for (const auto& t : ref) ++ref_count[t];
    for (const auto& t : cand) ++cand_count[t];
    cand_word_.assign(cand.size(), -1);
    for (std::size_t i = 0; i < cand.size(); ++i) {
      if (!ref_count.count(cand[i])) continue;
      auto [it, fresh] = ids.emplace(cand[i], static_cast<int>(ids.size()));
      if (fresh) {
        const int cc = cand_count[cand[i]], rc = ref_count[cand[i]];
        skip_budget_.push_back(cc - std::min(cc, rc));
        matches_ += static_cast<std::size_t>(std::min(cc, rc));
      }
      cand_word_[i] = it->second;
    }
    ref_positions_.resize(ids.size());
    for (std::size_t j = 0; j < ref.size(); ++j) {
      auto it = ids.find(ref[j]);
      if (it != ids.end()) ref_positions_[it->second].push_back(j);
    }
    suffix_links_.assign(cand.size() + 1, 0);
    for (std::size_t i = cand.size(); i-- > 0;) {
      const bool can_link = i > 0 && cand_word_[i] >= 0 && cand_word_[i - 1] >= 0;
      suffix_links_[i] = suffix_links_[i + 1] + (can_link ? 1 : 0);
    }
  }

  std::size_t matches() const { return matches_; }

  // Returns the maximum number of adjacent aligned pairs.
  std::size_t run() {
    dfs(0, -1, 0);
    return static_cast<std::size_t>(best_);
  }
  bool exhausted() const { return exhausted_; }

 private:
  void dfs(std::size_t i, long prev, int links) {
    if (i == cand_.size()) {
      best_ = std::max(best_, links);
      return;
    }
    if (best_ >= 0 && links + suffix_links_[i] <= best_) return;
    if (best_ >= 0 && ++nodes_ > budget_) {
      exhausted_ = true;
      return;
    }
    const int w = cand_word_[i];
    if (w < 0) {
      dfs(i + 1, -1, links);
      return;
    }
    // Continuing the current chunk first finds good incumbents early.
    const auto& positions = ref_positions_[w];
    if (prev >= 0) {
      const std::size_t next = static_cast<std::size_t>(prev) + 1;
      if (next < ref_.size() && !used_[next] && ref_[next] == cand_[i]) {
        used_[next] = 1;
        dfs(i + 1, static_cast<long>(next), links + 1);
        used_[next] = 0;
      }
    }
    for (std::size_t j : positions) {
      if (used_[j] || (prev >= 0 && j == static_cast<std::size_t>(prev) + 1)) continue;
      used_[j] = 1;
      dfs(i + 1, static_cast<long>(j), links);
      used_[j] = 0;
    }
    if (skip_budget_[w] > 0) {
      --skip_budget_[w];
      dfs(i + 1, -1, links);
      ++skip_budget_[w];
    }
  }

  const std::vector<std::string>& cand_;
  const std::vector<std::string>& ref_;
  std::size_t budget_;
  std::vector<char> used_;
  std::vector<int> cand_word_;
  std::vector<int> skip_budget_;
  std::vector<std::vector<std::size_t>> ref_positions_;
  std::vector<int> suffix_links_;
  std::size_t matches_ = 0;
  std::size_t nodes_ = 0;
  int best_ = -1;
  bool exhausted_ = false;
};

}  // namespace

MeteorScore meteor(const TokenSequence& candidate, const TokenSequence& reference, const MeteorParams& params) {
  if (candidate.empty() || reference.empty()) throw MetricError("meteor: empty sequence");
  MeteorScore s;
  ChunkSearch search(candidate.tokens, reference.tokens, params.search_budget);
  s.matches = search.matches();
  if (s.matches == 0) return s;
  const std::size_t links = search.run();
  s.exact = !search.exhausted();
  s.chunks = s.matches - links;
  const double m = static_cast<double>(s.matches);
  s.precision = m / static_cast<double>(candidate.size());
  s.recall = m / static_cast<double>(reference.size());
  s.f_mean = s.precision * s.recall / (params.alpha * s.precision + (1 - params.alpha) * s.recall);
  s.penalty = params.gamma * std::pow(static_cast<double>(s.chunks) / m, params.theta);
  s.score = s.f_mean * (1 - s.penalty);
  return s;
}

// -------------------------------------------------------------------- WMD

Nbow nbow(const TokenSequence& doc) {
  Nbow out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& t : doc.tokens) {
    auto [it, fresh] = index.emplace(t, out.words.size());
    if (fresh) {
      out.words.push_back(t);
      out.weights.push_back(0.0);
    }
    out.weights[it->second] += 1.0;
  }
  for (double& w : out.weights) w /= static_cast<double>(doc.size());
  return out;
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw MetricError("embedding dimensions differ");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw MetricError("embedding dimensions differ");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw MetricError("zero-norm embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

namespace {

// Drops words the embedder does not know (skip policy) and renormalizes.
void embed_words(Nbow& doc, Embedder& e, const WmdOptions& opt, std::vector<std::vector<double>>& out) {
  Nbow kept;
  for (std::size_t i = 0; i < doc.words.size(); ++i) {
    try {
      out.push_back(e.embed_text(doc.words[i], EmbeddingSpace::word).values);
      kept.words.push_back(doc.words[i]);
      kept.weights.push_back(doc.weights[i]);
    } catch (const BackendError& err) {
      if (err.kind() != BackendErrorKind::missing_entry) throw;
      if (opt.missing == MissingWordPolicy::error) {
        throw MetricError("wmd: word missing from embedder: '" + doc.words[i] + "'");
      }
    }
  }
  if (kept.words.empty()) throw MetricError("wmd: no embeddable words in document");
  double total = 0;
  for (double w : kept.weights) total += w;
  for (double& w : kept.weights) w /= total;
  doc = std::move(kept);
}

}  // namespace

double wmd(const TokenSequence& doc_a, const TokenSequence& doc_b, Embedder& word_embedder,
           const WmdOptions& options) {
  if (doc_a.empty() || doc_b.empty()) throw MetricError("wmd: empty document");
  Nbow a = nbow(doc_a), b = nbow(doc_b);
  std::vector<std::string> vocab = a.words;
  vocab.insert(vocab.end(), b.words.begin(), b.words.end());
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());
  if (vocab.size() > options.vocab_budget) {
    throw MetricError("wmd: vocabulary of " + std::to_string(vocab.size()) + " words exceeds budget " +
                      std::to_string(options.vocab_budget));
  }
  std::vector<std::vector<double>> ea, eb;
  embed_words(a, word_embedder, options, ea);
  embed_words(b, word_embedder, options, eb);
  std::vector<double> cost(a.words.size() * b.words.size());
  for (std::size_t i = 0; i < a.words.size(); ++i) {
    for (std::size_t j = 0; j < b.words.size(); ++j) {
      cost[i * b.words.size() + j] = a.words[i] == b.words[j] ? 0.0 : euclidean(ea[i], eb[j]);
    }
  }
  return std::max(0.0, solve_transport(a.weights, b.weights, cost).cost);
}

double sbert_similarity(const std::string& text_a, const std::string& text_b, Embedder& sentence_embedder) {
  if (trim(text_a).empty() || trim(text_b).empty()) throw MetricError("sbert: empty text");
  auto va = sentence_embedder.embed_text(text_a, EmbeddingSpace::sentence);
  auto vb = sentence_embedder.embed_text(text_b, EmbeddingSpace::sentence);
  return cosine(va.values, vb.values);
}

// ---------------------------------------------------------------- Fréchet

DistributionMoments moments_from_features(const std::vector<std::vector<double>>& features) {
  if (features.size() < 2) throw MetricError("moments: need at least two feature vectors");
  const std::size_t d = features.front().size();
  if (d == 0) throw MetricError("moments: empty feature vectors");
  DistributionMoments m;
  m.mean.assign(d, 0.0);
  for (const auto& f : features) {
    if (f.size() != d) throw MetricError("moments: feature dimensions differ");
    for (std::size_t i = 0; i < d; ++i) m.mean[i] += f[i];
  }
  const double n = static_cast<double>(features.size());
  for (double& x : m.mean) x /= n;
  m.covariance.assign(d, std::vector<double>(d, 0.0));
  for (const auto& f : features) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) m.covariance[i][j] += (f[i] - m.mean[i]) * (f[j] - m.mean[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      m.covariance[i][j] /= (n - 1);
      m.covariance[j][i] = m.covariance[i][j];
    }
  }
  return m;
}

namespace {

Eigen::MatrixXd to_matrix(const DistributionMoments& m, const char* which) {
  const std::size_t d = m.dim();
  if (m.covariance.size() != d) throw MetricError(std::string("frechet: covariance of ") + which + " has wrong size");
  Eigen::MatrixXd out(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    if (m.covariance[i].size() != d) {
      throw MetricError(std::string("frechet: covariance of ") + which + " has wrong size");
    }
    for (std::size_t j = 0; j < d; ++j) out(i, j) = m.covariance[i][j];
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      if (std::abs(out(i, j) - out(j, i)) > 1e-9) {
        throw MetricError(std::string("frechet: covariance of ") + which + " is not symmetric");
      }
    }
  }
  return out;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

double frechet_distance(const DistributionMoments& a, const DistributionMoments& b) {
  const std::size_t d = a.dim();
  if (d == 0 || b.dim() != d) throw MetricError("frechet: dimension mismatch");
  Eigen::MatrixXd sa = to_matrix(a, "a"), sb = to_matrix(b, "b");

  bool near_singular = false;
  for (const Eigen::MatrixXd* s : {&sa, &sb}) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*s, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    const double scale = std::max(1.0, std::abs(hi));
    if (lo < -1e-8 * scale) throw MetricError("frechet: covariance is not positive semidefinite");
    if (lo <= 1e-10 * scale) near_singular = true;
  }
  if (near_singular) {
    sa += 1e-6 * Eigen::MatrixXd::Identity(d, d);
    sb += 1e-6 * Eigen::MatrixXd::Identity(d, d);
  }

  const Eigen::MatrixXd root_a = psd_sqrt(sa);
  Eigen::MatrixXd inner = root_a * sb * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double tr_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  double mean_term = 0;
  for (std::size_t i = 0; i < d; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  return std::max(0.0, mean_term + sa.trace() + sb.trace() - 2.0 * tr_sqrt);
}

// ------------------------------------------------------------------- CLIP

double clip_score(const std::vector<double>& image_embedding, const std::vector<double>& text_embedding) {
  return kClipWeight * std::max(cosine(image_embedding, text_embedding), 0.0);
}

double clip_score(const ImageHandle& image, const std::string& text, BackendSuite& backends) {
  if (!backends.joint_embedder) throw ConfigError("no joint embedder configured");
  auto vi = embed(*backends.joint_embedder, *backends.store, image);
  auto vt = embed(*backends.joint_embedder, text, EmbeddingSpace::joint_text);
  return clip_score(vi.values, vt.values);
}

// -------------------------------------------------------------- composite

namespace {

std::string joined_text(const std::vector<PlanStep>& steps) {
  std::vector<std::string> lines;
  for (const auto& s : steps) lines.push_back(s.text);
  return join_lines(lines);
}

}  // namespace

CompositeScores composite_scores(const MultimodalPlan& predicted, const ReferencePlan& reference,
                                 BackendSuite& backends) {
  if (reference.steps.empty()) throw MetricError("composite: missing reference");
  if (!backends.sentence_embedder) throw ConfigError("no sentence embedder configured");
  std::vector<std::string> captions;
  for (const auto& s : predicted.steps) {
    if (s.caption) {
      captions.push_back(*s.caption);
    } else if (s.image) {
      captions.push_back(caption(backends, *s.image));
    }
  }
  if (captions.empty()) throw MetricError("composite: predicted plan has no images");
  const std::string ref_text = joined_text(reference.steps);
  CompositeScores c;
  c.cap_s = sbert_similarity(join_lines(captions), ref_text, *backends.sentence_embedder);
  c.text_s = sbert_similarity(joined_text(predicted.steps), ref_text, *backends.sentence_embedder);
  c.all_s = (c.cap_s + c.text_s) / 2.0;
  return c;
}

// -------------------------------------------------------------- alignment

AlignmentResult template_alignment(const PromptTemplate& tmpl, const std::vector<ReferencePlan>& task_sample,
                                   BackendSuite& backends, const PipelineConfig& pipeline) {
  if (task_sample.empty()) throw PreconditionError("template_alignment: empty sample");
  if (!backends.joint_embedder) throw ConfigError("no joint embedder configured");
  Embedder& joint = *backends.joint_embedder;
  double sum = 0;
  std::size_t n = 0;
  if (tmpl.role() == TemplateRole::t2i_bridge) {
    for (const auto& ref : task_sample) {
      for (const auto& step : ref.steps) {
        RenderedPrompt p = render_imagination_prompt(step.text, tmpl);
        const std::string scene = trim(text_complete(backends, p.text, pipeline.params).text);
        ImageHandle img = image_generate(backends, scene, pipeline.image_width, pipeline.image_height);
        sum += cosine(embed(joint, step.text, EmbeddingSpace::joint_text).values,
                      embed(joint, *backends.store, img).values);
        ++n;
      }
    }
  } else if (tmpl.role() == TemplateRole::i2t_bridge) {
    for (const auto& ref : task_sample) {
      std::vector<std::string> texts, captions;
      std::vector<ImageHandle> images;
      for (const auto& step : ref.steps) {
        if (!step.image) throw PreconditionError("template_alignment: reference step without image");
        texts.push_back(step.text);
        images.push_back(*step.image);
        captions.push_back(caption(backends, *step.image, pipeline.caption_question));
      }
      RenderedPrompt p = render_revision_prompt(texts, captions, tmpl);
      auto revised = parse_step_list(text_complete(backends, p.text, pipeline.params).text);
      for (std::size_t i = 0; i < std::min(revised.size(), images.size()); ++i) {
        sum += cosine(embed(joint, *backends.store, images[i]).values,
                      embed(joint, revised[i], EmbeddingSpace::joint_text).values);
        ++n;
      }
    }
  } else {
    throw PreconditionError("template_alignment: template role must be t2i_bridge or i2t_bridge");
  }
  if (n == 0) throw PreconditionError("template_alignment: empty sample");
  return {sum / static_cast<double>(n), n};
}

// ----------------------------------------------------------------- report

MetricReport evaluate_plan(const MultimodalPlan& predicted, const ReferencePlan& reference,
                           BackendSuite& backends, const MetricToggles& toggles) {
  MetricReport r;
  const std::string pred_text = joined_text(predicted.steps);
  const std::string ref_text = joined_text(reference.steps);
  const TokenSequence pred_tokens = tokenize(pred_text), ref_tokens = tokenize(ref_text);
  auto guarded = [&](const char* name, auto&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      r.errors.push_back(std::string(name) + ": " + e.what());
    }
  };
  if (toggles.wmd) {
    guarded("wmd", [&] {
      if (!backends.word_embedder) throw ConfigError("no word embedder configured");
      const double d = wmd(pred_tokens, ref_tokens, *backends.word_embedder, toggles.wmd_options);
      r.wmd_distance = d;
      r.wmd_similarity = 1.0 / (1.0 + d);
    });
  }
  if (toggles.sbert) {
    guarded("sbert", [&] {
      if (!backends.sentence_embedder) throw ConfigError("no sentence embedder configured");
      r.sbert = sbert_similarity(pred_text, ref_text, *backends.sentence_embedder);
    });
  }
  if (toggles.rouge_l) guarded("rouge_l", [&] { r.rouge_l = rouge_l(pred_tokens, ref_tokens).f; });
  if (toggles.meteor) guarded("meteor", [&] { r.meteor = meteor(pred_tokens, ref_tokens).score; });
  if (toggles.clip) {
    guarded("clip", [&] {
      double sum = 0;
      std::size_t n = 0;
      for (const auto& s : predicted.steps) {
        if (!s.image) continue;
        sum += clip_score(*s.image, s.text, backends);
        ++n;
      }
      if (n == 0) throw MetricError("plan has no images");
      r.clip = sum / static_cast<double>(n);
    });
  }
  if (toggles.composite) {
    guarded("composite", [&] {
      auto c = composite_scores(predicted, reference, backends);
      r.cap_s = c.cap_s;
      r.text_s = c.text_s;
      r.all_s = c.all_s;
    });
  }
  return r;
}

json report_to_json(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return json{{"wmd_distance", opt(r.wmd_distance)},
              {"wmd_similarity", opt(r.wmd_similarity)},
              {"sbert", opt(r.sbert)},
              {"rouge_l", opt(r.rouge_l)},
              {"meteor", opt(r.meteor)},
              {"clip", opt(r.clip)},
              {"cap_s", opt(r.cap_s)},
              {"text_s", opt(r.text_s)},
              {"all_s", opt(r.all_s)},
              {"fid", opt(r.fid)},
              {"errors", r.errors}};
}

}  // namespace planweave
