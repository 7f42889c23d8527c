#include "planweave/rater.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>

#include "planweave/digest.hpp"

namespace planweave {

namespace fs = std::filesystem;
using nlohmann::json;

const std::array<Aspect, 4>& all_aspects() {
  static const std::array<Aspect, 4> a{Aspect::textual_informativeness, Aspect::visual_informativeness,
                                       Aspect::temporal_coherence, Aspect::plan_accuracy};
  return a;
}

std::string_view to_string(Aspect a) {
  switch (a) {
    case Aspect::textual_informativeness: return "textual_informativeness";
    case Aspect::visual_informativeness: return "visual_informativeness";
    case Aspect::temporal_coherence: return "temporal_coherence";
    case Aspect::plan_accuracy: return "plan_accuracy";
  }
  return "?";
}

Aspect aspect_from_string(std::string_view tag) {
  for (Aspect a : all_aspects()) {
    if (to_string(a) == tag) return a;
  }
  throw RaterError(RaterError::Kind::invalid, "unknown aspect '" + std::string(tag) + "'");
}

std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::seq1_better: return "seq1_better";
    case Choice::tie: return "tie";
    case Choice::seq2_better: return "seq2_better";
  }
  return "?";
}

Choice choice_from_string(std::string_view tag) {
  if (tag == "seq1_better" || tag == "1") return Choice::seq1_better;
  if (tag == "tie" || tag == "2") return Choice::tie;
  if (tag == "seq2_better" || tag == "3") return Choice::seq2_better;
  throw RaterError(RaterError::Kind::invalid, "unknown choice '" + std::string(tag) + "'");
}

Outcome deshuffle(Choice c, bool shuffle_bit) {
  if (c == Choice::tie) return Outcome::tie;
  const bool first_shown_as_1 = !shuffle_bit;
  const bool picked_1 = c == Choice::seq1_better;
  return picked_1 == first_shown_as_1 ? Outcome::win : Outcome::lose;
}

std::string ComparisonItem::method_pair() const {
  return std::string(to_string(first.method)) + " vs " + std::string(to_string(second.method));
}

const MultimodalPlan& ComparisonItem::sequence(int k) const {
  if (k != 1 && k != 2) throw PreconditionError("sequence index must be 1 or 2");
  return (k == 1) != shuffle_bit ? first : second;
}

// ----------------------------------------------------------------- ratings

Rating rating_from_json(const json& j) {
  using K = RaterError::Kind;
  if (!j.is_object()) throw RaterError(K::invalid, "rating must be an object");
  Rating r;
  auto str = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
      throw RaterError(K::invalid, std::string("missing field '") + key + "'");
    }
    return it->get<std::string>();
  };
  r.item_id = str("item_id");
  r.rater = str("rater");
  auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_object()) throw RaterError(K::invalid, "missing field 'choices'");
  for (auto it = choices->begin(); it != choices->end(); ++it) aspect_from_string(it.key());
  for (Aspect a : all_aspects()) {
    auto c = choices->find(std::string(to_string(a)));
    if (c == choices->end() || c->is_null()) {
      throw RaterError(K::invalid, "missing aspect '" + std::string(to_string(a)) + "'");
    }
    if (c->is_number_integer()) {
      r.choices[a] = choice_from_string(std::to_string(c->get<int>()));
    } else if (c->is_string()) {
      r.choices[a] = choice_from_string(c->get<std::string>());
    } else {
      throw RaterError(K::invalid, "bad choice for aspect '" + std::string(to_string(a)) + "'");
    }
  }
  if (auto ts = j.find("timestamp_ms"); ts != j.end() && ts->is_number_integer()) {
    r.timestamp_ms = ts->get<std::int64_t>();
  }
  return r;
}

json rating_to_json(const Rating& r) {
  json choices = json::object();
  for (const auto& [a, c] : r.choices) choices[std::string(to_string(a))] = std::string(to_string(c));
  return json{{"item_id", r.item_id}, {"rater", r.rater}, {"choices", choices}, {"timestamp_ms", r.timestamp_ms}};
}

// --------------------------------------------------------------- aggregate

namespace {

double pct(std::size_t part, std::size_t total) {
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(total);
}

void count(AspectCounts& c, Outcome o) {
  switch (o) {
    case Outcome::win: ++c.win; break;
    case Outcome::tie: ++c.tie; break;
    case Outcome::lose: ++c.lose; break;
  }
}

}  // namespace

double AspectCounts::win_pct() const { return pct(win, total()); }
double AspectCounts::tie_pct() const { return pct(tie, total()); }
double AspectCounts::lose_pct() const { return pct(lose, total()); }

AggregateTable aggregate_ratings(const std::vector<ComparisonItem>& items, const std::vector<Rating>& ratings,
                                 bool majority) {
  std::map<std::string, const ComparisonItem*> by_id;
  for (const auto& it : items) by_id[it.id] = &it;
  AggregateTable t;
  t.majority = majority;
  t.ratings = ratings.size();
  if (!majority) {
    for (const auto& r : ratings) {
      auto it = by_id.find(r.item_id);
      if (it == by_id.end()) throw RaterError(RaterError::Kind::not_found, "unknown item '" + r.item_id + "'");
      auto& row = t.cells[it->second->method_pair()];
      for (const auto& [a, c] : r.choices) count(row[a], deshuffle(c, it->second->shuffle_bit));
    }
    return t;
  }
  std::map<std::string, std::vector<const Rating*>> per_item;
  for (const auto& r : ratings) {
    if (!by_id.count(r.item_id)) throw RaterError(RaterError::Kind::not_found, "unknown item '" + r.item_id + "'");
    per_item[r.item_id].push_back(&r);
  }
  for (const auto& [id, rs] : per_item) {
    const ComparisonItem& item = *by_id.at(id);
    auto& row = t.cells[item.method_pair()];
    for (Aspect a : all_aspects()) {
      AspectCounts votes;
      for (const Rating* r : rs) {
        if (auto c = r->choices.find(a); c != r->choices.end()) count(votes, deshuffle(c->second, item.shuffle_bit));
      }
      const std::size_t n = votes.total();
      if (n == 0) continue;
      Outcome o = Outcome::tie;
      if (2 * votes.win > n) o = Outcome::win;
      if (2 * votes.lose > n) o = Outcome::lose;
      count(row[a], o);
    }
  }
  return t;
}

json aggregate_to_json(const AggregateTable& t) {
  json pairs = json::object();
  for (const auto& [pair, aspects] : t.cells) {
    json row = json::object();
    for (const auto& [a, c] : aspects) {
      row[std::string(to_string(a))] = json{{"win", c.win_pct()},   {"tie", c.tie_pct()},   {"lose", c.lose_pct()},
                                            {"win_count", c.win}, {"tie_count", c.tie}, {"lose_count", c.lose}};
    }
    pairs[pair] = row;
  }
  return json{{"pairs", pairs}, {"ratings", t.ratings}, {"aggregation", t.majority ? "majority" : "pooled"}};
}

json rater_instructions() {
  return json{
      {"instruction",
       "Given the Task (e.g, Task: How to muddle), please compare two sequences of steps Sequence 1 and "
       "Sequence 2, and determine which sequence is better in terms of four aspects:"},
      {"aspects",
       json::array({
           json{{"id", "textual_informativeness"},
                {"name", "Textual-Informativeness"},
                {"definition",
                 "whether the textual sequence (the sequence of texts) contains the amount of information "
                 "needed to complete the task."}},
           json{{"id", "visual_informativeness"},
                {"name", "Visual-Informativeness"},
                {"definition",
                 "whether the visual sequence (the sequence of images) contains the amount of information "
                 "needed to complete the task."}},
           json{{"id", "temporal_coherence"},
                {"name", "Temporal Coherence"},
                {"definition",
                 "whether the multimodal sequence (the paired sequence of texts and images) meets the temporal "
                 "commonsense requirements, such as a step occurring before another step instead of after."}},
           json{{"id", "plan_accuracy"},
                {"name", "Plan Accuracy"},
                {"definition",
                 "whether the multimodal sequence (the paired sequence of texts and images) can successfully "
                 "complete the task."}},
       })},
      {"options", json::array({
                      json{{"value", "seq1_better"}, {"label", "1 - Sequence 1 is better"}},
                      json{{"value", "tie"}, {"label", "2 - Tie"}},
                      json{{"value", "seq2_better"}, {"label", "3 - Sequence 2 is better"}},
                  })},
  };
}

// ----------------------------------------------------------------- service

struct RaterService::Session {
  std::string id;
  int raters_per_item = 3;
  std::vector<ComparisonItem> items;
  std::map<std::string, std::size_t> index;
  std::vector<std::set<std::string>> rated;
  std::vector<std::map<std::string, std::int64_t>> open;  // rater -> issued_ms
  std::map<std::string, std::size_t> open_by_rater;
  std::vector<Rating> ratings;

  std::size_t load(std::size_t i) const { return rated[i].size() + open[i].size(); }
};

namespace {

json item_to_json(const ComparisonItem& it) {
  return json{{"id", it.id},
              {"first", plan_to_json(it.first)},
              {"second", plan_to_json(it.second)},
              {"shuffle_bit", it.shuffle_bit}};
}

ComparisonItem item_from_json(const json& j) {
  return ComparisonItem{j.at("id").get<std::string>(), plan_from_json(j.at("first")), plan_from_json(j.at("second")),
                        j.at("shuffle_bit").get<bool>()};
}

std::int64_t system_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

RaterService::RaterService(std::string state_dir, Options options)
    : dir_(std::move(state_dir)), options_(std::move(options)) {
  if (!options_.clock) options_.clock = system_ms;
  if (options_.snapshot_every == 0) options_.snapshot_every = 1;
  fs::create_directories(dir_);
  load();
}

RaterService::~RaterService() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

RaterService::Session& RaterService::session(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw RaterError(RaterError::Kind::not_found, "unknown session '" + id + "'");
  return *it->second;
}

const RaterService::Session& RaterService::session(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw RaterError(RaterError::Kind::not_found, "unknown session '" + id + "'");
  return *it->second;
}

void RaterService::expire_leases(Session& s, std::int64_t now) {
  const std::int64_t lease = options_.lease.count();
  for (std::size_t i = 0; i < s.items.size(); ++i) {
    for (auto it = s.open[i].begin(); it != s.open[i].end();) {
      if (now - it->second > lease) {
        auto r = s.open_by_rater.find(it->first);
        if (r != s.open_by_rater.end() && r->second == i) s.open_by_rater.erase(r);
        it = s.open[i].erase(it);
      } else {
        ++it;
      }
    }
  }
}

void RaterService::apply_event(const json& e) {
  const std::string type = e.at("type").get<std::string>();
  if (type == "session") {
    const json& js = e.at("session");
    auto s = std::make_unique<Session>();
    s->id = js.at("id").get<std::string>();
    s->raters_per_item = js.at("raters_per_item").get<int>();
    for (const auto& it : js.at("items")) {
      s->index[it.at("id").get<std::string>()] = s->items.size();
      s->items.push_back(item_from_json(it));
    }
    s->rated.resize(s->items.size());
    s->open.resize(s->items.size());
    sessions_[s->id] = std::move(s);
  } else if (type == "assign") {
    Session& s = session(e.at("session_id").get<std::string>());
    const std::int64_t issued = e.at("issued_ms").get<std::int64_t>();
    expire_leases(s, issued);
    const std::size_t i = s.index.at(e.at("item_id").get<std::string>());
    const std::string rater = e.at("rater").get<std::string>();
    s.open[i][rater] = issued;
    s.open_by_rater[rater] = i;
  } else if (type == "rating") {
    Session& s = session(e.at("session_id").get<std::string>());
    Rating r = rating_from_json(e.at("rating"));
    const std::size_t i = s.index.at(r.item_id);
    s.rated[i].insert(r.rater);
    s.open[i].erase(r.rater);
    if (auto it = s.open_by_rater.find(r.rater); it != s.open_by_rater.end() && it->second == i) {
      s.open_by_rater.erase(it);
    }
    s.ratings.push_back(std::move(r));
  } else {
    throw Error("rater log: unknown event type '" + type + "'");
  }
}

void RaterService::append_event(const json& event) {
  const std::string line = event.dump() + "\n";
  std::size_t done = 0;
  while (done < line.size()) {
    const ssize_t n = ::write(log_fd_, line.data() + done, line.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("rater log: write failed");
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(log_fd_) != 0) throw Error("rater log: fsync failed");
}

void RaterService::load() {
  const fs::path snap = fs::path(dir_) / "snapshot.json";
  if (fs::exists(snap)) {
    std::ifstream in(snap);
    const json doc = json::parse(in);
    snapshot_seq_ = seq_ = doc.at("seq").get<std::uint64_t>();
    for (const auto& js : doc.at("sessions")) {
      apply_event(json{{"type", "session"}, {"session", js}});
      Session& s = session(js.at("id").get<std::string>());
      for (const auto& o : js.at("open")) {
        const std::size_t i = s.index.at(o.at("item_id").get<std::string>());
        const std::string rater = o.at("rater").get<std::string>();
        s.open[i][rater] = o.at("issued_ms").get<std::int64_t>();
        s.open_by_rater[rater] = i;
      }
      for (const auto& r : js.at("ratings")) {
        Rating rating = rating_from_json(r);
        const std::size_t i = s.index.at(rating.item_id);
        s.rated[i].insert(rating.rater);
        s.ratings.push_back(std::move(rating));
      }
    }
  }

  const fs::path log = fs::path(dir_) / "events.log";
  std::uintmax_t valid_bytes = 0;
  if (fs::exists(log)) {
    std::ifstream in(log, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    while (pos < content.size()) {
      const std::size_t nl = content.find('\n', pos);
      if (nl == std::string::npos) break;  // torn final write; dropped below
      const json e = json::parse(content.substr(pos, nl - pos));
      const std::uint64_t seq = e.at("seq").get<std::uint64_t>();
      if (seq > seq_) {
        apply_event(e);
        seq_ = seq;
      }
      pos = nl + 1;
    }
    valid_bytes = pos;
  }
  log_fd_ = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw Error("rater log: cannot open '" + log.string() + "'");
  if (::ftruncate(log_fd_, static_cast<off_t>(valid_bytes)) != 0) throw Error("rater log: truncate failed");
}

void RaterService::snapshot() {
  std::unique_lock lock(mutex_);
  json sessions = json::array();
  for (const auto& [id, s] : sessions_) {
    json items = json::array(), open = json::array(), ratings = json::array();
    for (const auto& it : s->items) items.push_back(item_to_json(it));
    for (std::size_t i = 0; i < s->items.size(); ++i) {
      for (const auto& [rater, issued] : s->open[i]) {
        open.push_back(json{{"item_id", s->items[i].id}, {"rater", rater}, {"issued_ms", issued}});
      }
    }
    for (const auto& r : s->ratings) ratings.push_back(rating_to_json(r));
    sessions.push_back(json{{"id", id},
                            {"raters_per_item", s->raters_per_item},
                            {"items", items},
                            {"open", open},
                            {"ratings", ratings}});
  }
  write_file_atomic((fs::path(dir_) / "snapshot.json").string(),
                    json{{"seq", seq_}, {"sessions", sessions}}.dump());
  snapshot_seq_ = seq_;
}

std::string RaterService::create_session(std::vector<ComparisonItem> items, int raters_per_item,
                                         std::optional<std::string> session_id,
                                         std::optional<std::uint64_t> shuffle_seed) {
  using K = RaterError::Kind;
  if (items.empty()) throw RaterError(K::invalid, "a session needs at least one item");
  if (raters_per_item < 1) throw RaterError(K::invalid, "raters_per_item must be >= 1");
  std::set<std::string> ids;
  for (const auto& it : items) {
    if (it.id.empty()) throw RaterError(K::invalid, "item id must not be empty");
    if (!ids.insert(it.id).second) throw RaterError(K::invalid, "duplicate item id '" + it.id + "'");
  }
  std::mt19937_64 rng(shuffle_seed ? *shuffle_seed : std::random_device{}());
  for (auto& it : items) it.shuffle_bit = (rng() >> 63) != 0;

  std::string id;
  bool due = false;
  {
    std::unique_lock lock(mutex_);
    if (session_id) {
      if (session_id->empty()) throw RaterError(K::invalid, "session id must not be empty");
      if (sessions_.count(*session_id)) throw RaterError(K::conflict, "session '" + *session_id + "' exists");
      id = *session_id;
    } else {
      for (std::size_t k = sessions_.size() + 1;; ++k) {
        id = "s" + std::to_string(k);
        if (!sessions_.count(id)) break;
      }
    }
    json jitems = json::array();
    for (const auto& it : items) jitems.push_back(item_to_json(it));
    const json event{{"seq", seq_ + 1},
                     {"type", "session"},
                     {"session", {{"id", id}, {"raters_per_item", raters_per_item}, {"items", jitems}}}};
    append_event(event);
    ++seq_;
    apply_event(event);
    due = seq_ - snapshot_seq_ >= options_.snapshot_every;
  }
  if (due) snapshot();
  return id;
}

std::optional<ComparisonItem> RaterService::next_assignment(const std::string& session_id, const std::string& rater) {
  if (rater.empty()) throw RaterError(RaterError::Kind::invalid, "rater id must not be empty");
  std::optional<ComparisonItem> out;
  bool due = false;
  {
    std::unique_lock lock(mutex_);
    Session& s = session(session_id);
    const std::int64_t now = options_.clock();
    expire_leases(s, now);
    if (auto it = s.open_by_rater.find(rater); it != s.open_by_rater.end()) return s.items[it->second];
    std::optional<std::size_t> pick;
    const std::size_t quota = static_cast<std::size_t>(s.raters_per_item);
    for (std::size_t i = 0; i < s.items.size(); ++i) {
      if (s.rated[i].count(rater) || s.load(i) >= quota) continue;
      if (!pick || s.load(i) < s.load(*pick)) pick = i;
    }
    if (!pick) return std::nullopt;
    const json event{{"seq", seq_ + 1},          {"type", "assign"}, {"session_id", session_id},
                     {"item_id", s.items[*pick].id}, {"rater", rater},  {"issued_ms", now}};
    append_event(event);
    ++seq_;
    apply_event(event);
    out = s.items[*pick];
    due = seq_ - snapshot_seq_ >= options_.snapshot_every;
  }
  if (due) snapshot();
  return out;
}

void RaterService::submit_rating(const std::string& session_id, Rating rating) {
  using K = RaterError::Kind;
  for (Aspect a : all_aspects()) {
    if (!rating.choices.count(a)) throw RaterError(K::invalid, "missing aspect '" + std::string(to_string(a)) + "'");
  }
  bool due = false;
  {
    std::unique_lock lock(mutex_);
    Session& s = session(session_id);
    auto idx = s.index.find(rating.item_id);
    if (idx == s.index.end()) throw RaterError(K::not_found, "unknown item '" + rating.item_id + "'");
    const std::size_t i = idx->second;
    if (s.rated[i].count(rating.rater)) {
      throw RaterError(K::conflict, "rating for item '" + rating.item_id + "' by '" + rating.rater +
                                        "' was already submitted");
    }
    if (!s.open[i].count(rating.rater)) {
      throw RaterError(K::invalid, "no open assignment of item '" + rating.item_id + "' for '" + rating.rater + "'");
    }
    if (rating.timestamp_ms == 0) rating.timestamp_ms = options_.clock();
    const json event{{"seq", seq_ + 1}, {"type", "rating"}, {"session_id", session_id}, {"rating", rating_to_json(rating)}};
    append_event(event);
    ++seq_;
    apply_event(event);
    due = seq_ - snapshot_seq_ >= options_.snapshot_every;
  }
  if (due) snapshot();
}

AggregateTable RaterService::aggregate(const std::string& session_id, bool majority) const {
  std::shared_lock lock(mutex_);
  const Session& s = session(session_id);
  return aggregate_ratings(s.items, s.ratings, majority);
}

SessionStatus RaterService::status(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const Session& s = session(session_id);
  SessionStatus st{s.id, s.items.size(), s.raters_per_item, s.items.size() * static_cast<std::size_t>(s.raters_per_item),
                   s.ratings.size(), 0};
  for (const auto& o : s.open) st.open += o.size();
  return st;
}

std::vector<Rating> RaterService::ratings(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return session(session_id).ratings;
}

std::vector<ComparisonItem> RaterService::items(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  return session(session_id).items;
}

std::vector<std::string> RaterService::session_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

}  // namespace planweave
