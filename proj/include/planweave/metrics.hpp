#pragma once

// Automatic plan metrics: ROUGE-L, METEOR (exact match), Word Mover's
// Distance, sentence-embedding cosine, Fréchet distance between Gaussians,
// CLIPScore, the caption/text composite scores and template alignment.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "planweave/backends.hpp"
#include "planweave/pipeline.hpp"
#include "planweave/plan.hpp"
#include "planweave/text.hpp"

namespace planweave {

struct RougeScore {
  double precision = 0;
  double recall = 0;
  double f = 0;
  std::size_t lcs = 0;
};

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// F uses beta = 1 unless overridden.
RougeScore rouge_l(const TokenSequence& candidate, const TokenSequence& reference, double beta = 1.0);

struct MeteorParams {
  double alpha = 0.9;
  double gamma = 0.5;
  double theta = 3.0;
  /// Search-node budget for the chunk-minimizing alignment; beyond it the best
  /// alignment found so far is used.
  std::size_t search_budget = 2'000'000;
};

struct MeteorScore {
  double score = 0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0;
  double recall = 0;
  double f_mean = 0;
  double penalty = 0;
  bool exact = true;  // false if the alignment search hit its budget
};

MeteorScore meteor(const TokenSequence& candidate, const TokenSequence& reference,
                   const MeteorParams& params = {});

enum class MissingWordPolicy { error, skip };

struct WmdOptions {
  std::size_t vocab_budget = 200;
  MissingWordPolicy missing = MissingWordPolicy::error;
};

/// Normalized bag-of-words: unique tokens (first-occurrence order) and weights.
struct Nbow {
  std::vector<std::string> words;
  std::vector<double> weights;
};
Nbow nbow(const TokenSequence& doc);

double euclidean(const std::vector<double>& a, const std::vector<double>& b);
double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Earth mover's distance between the nBOW documents under Euclidean word
/// embedding cost, solved exactly.
double wmd(const TokenSequence& doc_a, const TokenSequence& doc_b, Embedder& word_embedder,
           const WmdOptions& options = {});

double sbert_similarity(const std::string& text_a, const std::string& text_b, Embedder& sentence_embedder);

struct DistributionMoments {
  std::vector<double> mean;
  std::vector<std::vector<double>> covariance;  // row-major, symmetric PSD

  std::size_t dim() const noexcept { return mean.size(); }
};

/// Sample mean and unbiased covariance; needs >= 2 equal-length features.
DistributionMoments moments_from_features(const std::vector<std::vector<double>>& features);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2).
double frechet_distance(const DistributionMoments& a, const DistributionMoments& b);

inline constexpr double kClipWeight = 2.5;
double clip_score(const std::vector<double>& image_embedding, const std::vector<double>& text_embedding);
double clip_score(const ImageHandle& image, const std::string& text, BackendSuite& backends);

struct CompositeScores {
  double cap_s = 0;
  double text_s = 0;
  double all_s = 0;
};

/// Captions missing from the plan are generated with the suite's captioner.
CompositeScores composite_scores(const MultimodalPlan& predicted, const ReferencePlan& reference,
                                 BackendSuite& backends);

struct AlignmentResult {
  double mean = 0;
  std::size_t samples = 0;
};

/// t2i templates: mean cos(joint_text(step), joint_image(image generated through the template)).
/// i2t templates: mean cos(joint_image(given image), joint_text(revised step)).
AlignmentResult template_alignment(const PromptTemplate& tmpl, const std::vector<ReferencePlan>& task_sample,
                                   BackendSuite& backends, const PipelineConfig& pipeline);

struct MetricReport {
  std::optional<double> wmd_distance;
  std::optional<double> wmd_similarity;
  std::optional<double> sbert;
  std::optional<double> rouge_l;
  std::optional<double> meteor;
  std::optional<double> clip;
  std::optional<double> cap_s;
  std::optional<double> text_s;
  std::optional<double> all_s;
  std::optional<double> fid;  // corpus level only
  std::vector<std::string> errors;
};

struct MetricToggles {
  bool wmd = true;
  bool sbert = true;
  bool rouge_l = true;
  bool meteor = true;
  bool clip = true;
  bool composite = true;
  bool fid = true;
  WmdOptions wmd_options;
};

/// Plan-level metrics against a reference; steps are joined by newline.
/// Failures of individual metrics leave that field empty and are listed in `errors`.
MetricReport evaluate_plan(const MultimodalPlan& predicted, const ReferencePlan& reference,
                           BackendSuite& backends, const MetricToggles& toggles = {});

nlohmann::json report_to_json(const MetricReport& r);

}  // namespace planweave
