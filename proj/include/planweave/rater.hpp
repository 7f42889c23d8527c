#pragma once

// Pairwise win/tie/lose rating sessions. Each item compares the plan under
// test ("first") against a comparator ("second"); a per-item shuffle bit
// decides which of them raters see as Sequence 1. Ratings are de-shuffled
// before aggregation.
//
// State lives in an append-only event log (fsync'd per event) plus a periodic
// snapshot; a restarted service replays the log past the snapshot.

#include <array>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "planweave/errors.hpp"
#include "planweave/plan.hpp"

namespace planweave {

enum class Aspect { textual_informativeness, visual_informativeness, temporal_coherence, plan_accuracy };
const std::array<Aspect, 4>& all_aspects();
std::string_view to_string(Aspect a);
Aspect aspect_from_string(std::string_view tag);

enum class Choice { seq1_better, tie, seq2_better };
std::string_view to_string(Choice c);
Choice choice_from_string(std::string_view tag);

enum class Outcome { win, tie, lose };

/// Outcome for the "first" plan given what the rater saw.
Outcome deshuffle(Choice c, bool shuffle_bit);

struct ComparisonItem {
  std::string id;
  MultimodalPlan first;   // plan under test
  MultimodalPlan second;  // comparator
  bool shuffle_bit = false;  // true: Sequence 1 shows `second`

  const Goal& goal() const { return first.goal; }
  std::string method_pair() const;
  const MultimodalPlan& sequence(int k) const;  // k = 1 or 2
};

struct Rating {
  std::string item_id;
  std::string rater;
  std::map<Aspect, Choice> choices;
  std::int64_t timestamp_ms = 0;
};

/// Not-found, invalid-input and conflict failures; the HTTP layer maps them to 404/400/409.
class RaterError : public Error {
 public:
  enum class Kind { not_found, invalid, conflict };
  RaterError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Parses {item_id, rater, choices{aspect: choice}}; throws RaterError(invalid)
/// naming the first missing aspect.
Rating rating_from_json(const nlohmann::json& j);
nlohmann::json rating_to_json(const Rating& r);

struct AspectCounts {
  std::size_t win = 0;
  std::size_t tie = 0;
  std::size_t lose = 0;

  std::size_t total() const { return win + tie + lose; }
  double win_pct() const;
  double tie_pct() const;
  double lose_pct() const;
};

struct AggregateTable {
  std::map<std::string, std::map<Aspect, AspectCounts>> cells;  // method pair -> aspect -> counts
  std::size_t ratings = 0;
  bool majority = false;
};

/// Pooled: every rating counts once. Majority: one outcome per item and
/// aspect, the one held by more than half of its ratings, otherwise tie.
AggregateTable aggregate_ratings(const std::vector<ComparisonItem>& items, const std::vector<Rating>& ratings,
                                 bool majority = false);
nlohmann::json aggregate_to_json(const AggregateTable& t);

/// Rater-facing instruction text and the four aspect definitions.
nlohmann::json rater_instructions();

struct SessionStatus {
  std::string id;
  std::size_t items = 0;
  int raters_per_item = 0;
  std::size_t quota = 0;
  std::size_t submitted = 0;
  std::size_t open = 0;
};

class RaterService {
 public:
  using Clock = std::function<std::int64_t()>;  // milliseconds

  struct Options {
    std::chrono::milliseconds lease{30 * 60 * 1000};
    std::size_t snapshot_every = 100;  // events between snapshots
    Clock clock;                       // defaults to the system clock
  };

  RaterService(std::string state_dir, Options options);
  explicit RaterService(std::string state_dir) : RaterService(std::move(state_dir), Options{}) {}
  ~RaterService();
  RaterService(const RaterService&) = delete;
  RaterService& operator=(const RaterService&) = delete;

  /// Assigns fresh shuffle bits (from `shuffle_seed` when given). Throws
  /// RaterError(invalid) on duplicate item ids or raters_per_item < 1.
  std::string create_session(std::vector<ComparisonItem> items, int raters_per_item = 3,
                             std::optional<std::string> session_id = std::nullopt,
                             std::optional<std::uint64_t> shuffle_seed = std::nullopt);

  /// The rater's open assignment if any, else a new one on an item they have
  /// not rated whose quota is not exhausted; nullopt when none is left.
  std::optional<ComparisonItem> next_assignment(const std::string& session_id, const std::string& rater);

  /// Persists the rating before returning. Throws RaterError: not_found for
  /// an unknown session/item, invalid without an open assignment, conflict
  /// for an already-submitted (item, rater).
  void submit_rating(const std::string& session_id, Rating rating);

  AggregateTable aggregate(const std::string& session_id, bool majority = false) const;
  SessionStatus status(const std::string& session_id) const;
  std::vector<Rating> ratings(const std::string& session_id) const;
  std::vector<ComparisonItem> items(const std::string& session_id) const;
  std::vector<std::string> session_ids() const;

  /// Writes a snapshot now.
  void snapshot();

 private:
  struct Session;
  void append_event(const nlohmann::json& event);
  void apply_event(const nlohmann::json& event);
  void load();
  Session& session(const std::string& id);
  const Session& session(const std::string& id) const;
  void expire_leases(Session& s, std::int64_t now);

  std::string dir_;
  Options options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::uint64_t seq_ = 0;
  std::uint64_t snapshot_seq_ = 0;
  int log_fd_ = -1;
  std::uint64_t session_counter_ = 0;
};

}  // namespace planweave
