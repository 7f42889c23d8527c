#pragma once

// Multimodal procedure corpora. A corpus file is a JSON array of
//   {id, title, category, topic, steps: [{text, image}]}
// with image paths relative to the corpus file (conventionally under a
// sibling assets/ directory). The dataset tag is the file stem.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "planweave/plan.hpp"

namespace planweave {

struct ValidationRules {
  int min_steps = 3;
  int max_steps = 22;
  int min_image_dim = 400;  // applies to min(width, height)

  void check() const;
};

struct Rejection {
  std::string id;
  std::string rule;
  std::string detail;
};

struct CorpusManifest {
  std::string dataset;
  std::vector<ReferencePlan> examples;  // accepted, in file order
  std::vector<Rejection> rejected;      // one entry per broken rule
  std::size_t input_count = 0;
  std::string provenance;

  std::size_t rejected_example_count() const;
  const ReferencePlan* find(const std::string& id) const;
};

/// Throws ParseError with line:column for malformed JSON and a field path for
/// schema violations; rule violations become rejections instead.
CorpusManifest load_corpus(const std::string& path, const ValidationRules& rules = {}, int workers = 4);

/// Writes accepted examples in the corpus format, image paths relative to `path`.
void save_corpus(const CorpusManifest& manifest, const std::string& path);

/// `{dir of corpus}/rejects.txt`, one "id<TAB>rule<TAB>detail" line per rejection.
std::string write_rejection_report(const CorpusManifest& manifest, const std::string& corpus_path);

/// n distinct goals drawn uniformly without replacement; a pure function of
/// (accepted ids, n, seed). `balanced` round-robins across categories.
std::vector<Goal> sample_tasks(const CorpusManifest& manifest, std::size_t n, std::uint64_t seed,
                               bool balanced = false);

struct CorpusStats {
  double avg_steps = 0;
  std::map<int, int> step_histogram;
  std::map<std::string, int> category_counts;
};

CorpusStats corpus_stats(const CorpusManifest& manifest);

/// Two-decimal rendering used in reports ("5.00").
std::string format_fixed(double value, int decimals);

}  // namespace planweave
