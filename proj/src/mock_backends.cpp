#include "planweave/mock_backends.hpp"

#include <array>
#include <cmath>

#include "planweave/digest.hpp"
#include "planweave/errors.hpp"
#include "planweave/prompts.hpp"
#include "planweave/text.hpp"

namespace planweave {

namespace {

constexpr std::array<std::string_view, 16> kVerbs{
    "gather", "prepare", "mix",   "cut",   "place", "wash",  "arrange", "heat",
    "fold",   "attach",  "measure", "pour", "trim", "check", "clean",   "secure"};
constexpr std::array<std::string_view, 16> kAdjectives{
    "fresh", "small", "clean", "large", "warm", "dry", "soft", "bright",
    "sturdy", "thin", "round", "sharp", "cool", "smooth", "heavy", "light"};
constexpr std::array<std::string_view, 16> kNouns{
    "bowl",  "paper", "board", "ribbon", "glass", "flour", "fabric", "stand",
    "brush", "water", "tray",  "handle", "wire",  "box",   "cloth",  "table"};
constexpr std::array<std::string_view, 8> kPlaces{
    "on the table", "in the kitchen", "near the window", "on the counter",
    "in a bowl",    "on the floor",   "by the sink",     "outside"};

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& words, std::uint64_t h) {
  return words[h % N];
}

std::string sentence(std::string_view salt) {
  const std::uint64_t h = digest64(salt);
  std::string s(pick(kVerbs, h));
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  s += " the ";
  s += pick(kAdjectives, h >> 8);
  s += ' ';
  s += pick(kNouns, h >> 16);
  s += ' ';
  s += pick(kPlaces, h >> 24);
  s += '.';
  return s;
}

std::string salted(const std::string& prompt, std::int64_t seed, std::string_view extra = {}) {
  return prompt + '\x1f' + std::to_string(seed) + '\x1f' + std::string(extra);
}

// Text between `begin` (exclusive) and `end` (exclusive); end may be npos.
std::string slice(const std::string& s, std::size_t begin, std::size_t end) {
  if (begin > s.size()) return {};
  return s.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

Completion vanilla_plan(const std::string& prompt, std::int64_t seed) {
  const std::uint64_t h = digest64(salted(prompt, seed));
  const int k = 3 + static_cast<int>(h % 4);
  std::vector<std::string> steps;
  for (int i = 1; i <= k; ++i) steps.push_back(sentence(salted(prompt, seed, std::to_string(i))));
  return {number_steps(steps), FinishReason::stop};
}

Completion stepwise_step(const std::string& prompt, std::int64_t seed) {
  // The first line is the vanilla prompt, identical for every k.
  const std::string head = prompt.substr(0, prompt.find('\n'));
  const int target = 3 + static_cast<int>(digest64(salted(head, seed)) % 4);
  const std::string marker = "What is Step ";
  const std::size_t at = prompt.rfind(marker);
  const int k = std::stoi(prompt.substr(at + marker.size()));
  if (k > target) return {std::string(kStopMarker), FinishReason::stop};
  return {"Step " + std::to_string(k) + ": " + sentence(salted(prompt, seed)), FinishReason::stop};
}

// Drops a registered template body of `role` that ends the prompt.
std::string strip_template(const std::string& prompt, TemplateRole role) {
  for (const auto& t : builtin_templates()) {
    const std::string tail = " " + t.body();
    if (t.role() == role && prompt.size() > tail.size() &&
        prompt.compare(prompt.size() - tail.size(), tail.size(), tail) == 0) {
      return prompt.substr(0, prompt.size() - tail.size());
    }
  }
  return prompt;
}

const std::string& revision_header() {
  static const std::string h = std::string(kRevisionHeader) + " ";
  return h;
}

const std::string& captions_marker() {
  static const std::string m = " " + std::string(kCaptionsHeader) + " ";
  return m;
}

Completion revision(const std::string& prompt) {
  const std::string body = strip_template(prompt, TemplateRole::i2t_bridge);
  const std::size_t caps_at = body.find(captions_marker());
  const auto initial = parse_step_list(slice(body, revision_header().size(), caps_at));
  const auto captions = parse_step_list(slice(body, caps_at + captions_marker().size(), std::string::npos));
  std::vector<std::string> revised;
  for (std::size_t i = 0; i < initial.size(); ++i) {
    std::string step = initial[i];
    if (!step.empty() && step.back() == '.') step.pop_back();
    if (i < captions.size()) {
      auto toks = tokenize(captions[i]).tokens;
      std::string detail;
      for (std::size_t t = 0; t < toks.size() && t < 6; ++t) detail += (t ? " " : "") + toks[t];
      step += ", as shown in " + detail;
    }
    revised.push_back(step + ".");
  }
  return {number_steps(revised), FinishReason::stop};
}

Completion scene(const std::string& prompt, std::int64_t seed) {
  const std::string first = trim(strip_template(prompt, TemplateRole::t2i_bridge));
  const std::uint64_t h = digest64(salted(prompt, seed));
  std::string out = "A detailed scene of: " + first + " Shown with " +
                    std::string(pick(kAdjectives, h)) + " light " + std::string(pick(kPlaces, h >> 8)) +
                    ".";
  return {out, FinishReason::stop};
}

std::vector<double> hashed_unit(std::string_view key, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (int block = 0; block * 4 < dim; ++block) {
    const std::string d = sha256_hex(std::string(key) + "#" + std::to_string(block));
    for (int j = 0; j < 4 && block * 4 + j < dim; ++j) {
      // 16 hex digits -> value in [-1, 1)
      const std::uint64_t bits = std::stoull(d.substr(j * 16, 16), nullptr, 16);
      v[block * 4 + j] = static_cast<double>(bits >> 11) / static_cast<double>(1ULL << 52) - 1.0;
    }
  }
  return v;
}

void normalize(std::vector<double>& v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0) {
    for (double& x : v) x /= n;
  }
}

}  // namespace

Completion MockTextGenerator::do_complete(const std::string& prompt, const GenerationParams& params) {
  const std::int64_t seed = params.seed.value_or(seed_);
  if (prompt.find("What is Step ") != std::string::npos &&
      prompt.find(std::string(kStopMarker) + " if the procedure is complete") != std::string::npos) {
    return stepwise_step(prompt, seed);
  }
  if (prompt.rfind(revision_header(), 0) == 0 && prompt.find(captions_marker()) != std::string::npos) {
    return revision(prompt);
  }
  if (prompt.find(" Task: ") != std::string::npos && prompt.back() == '?' &&
      prompt.find('\n') == std::string::npos) {
    return vanilla_plan(prompt, seed);
  }
  return scene(prompt, seed);
}

std::vector<std::uint8_t> MockImageGenerator::do_generate(const std::string& prompt, int width,
                                                          int height) {
  constexpr int kBlock = 64;
  RgbImage img;
  img.width = width;
  img.height = height;
  img.pixels.resize(static_cast<std::size_t>(width) * height * 3);
  const int bw = (width + kBlock - 1) / kBlock;
  const int bh = (height + kBlock - 1) / kBlock;
  std::vector<std::array<std::uint8_t, 3>> colours;
  for (int b = 0; b < bw * bh; ++b) {
    const std::uint64_t h = digest64(prompt + "#block" + std::to_string(b));
    colours.push_back({static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
                       static_cast<std::uint8_t>(h >> 16)});
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto& c = colours[(y / kBlock) * bw + x / kBlock];
      std::uint8_t* p = &img.pixels[(static_cast<std::size_t>(y) * width + x) * 3];
      // A faint diagonal gradient so blocks are not perfectly flat.
      const auto shade = static_cast<std::uint8_t>(((x % kBlock) + (y % kBlock)) / 8);
      p[0] = static_cast<std::uint8_t>(c[0] ^ shade);
      p[1] = static_cast<std::uint8_t>(c[1] ^ shade);
      p[2] = static_cast<std::uint8_t>(c[2] ^ shade);
    }
  }
  return encode_png(img, {{"prompt", prompt}});
}

namespace {

std::optional<std::string> embedded_prompt(std::span<const std::uint8_t> image) {
  try {
    auto decoded = decode_png(image);
    auto it = decoded.text.find("prompt");
    if (it != decoded.text.end()) return it->second;
  } catch (const Error&) {
  }
  return std::nullopt;
}

}  // namespace

std::string MockCaptioner::do_caption(std::span<const std::uint8_t> image, const std::string&) {
  if (auto prompt = embedded_prompt(image)) {
    auto toks = tokenize(*prompt).tokens;
    std::string out = "an image of";
    for (std::size_t i = 0; i < toks.size() && i < 12; ++i) out += " " + toks[i];
    return out;
  }
  const std::uint64_t h = digest64(sha256_hex(image));
  return "an image with a " + std::string(pick(kAdjectives, h)) + " " +
         std::string(pick(kNouns, h >> 8)) + " " + std::string(pick(kPlaces, h >> 16));
}

EmbeddingVector HashingEmbedder::do_embed_text(const std::string& text, EmbeddingSpace space) {
  std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
  auto toks = tokenize(text).tokens;
  if (toks.empty()) toks.push_back(text);
  for (const auto& t : toks) {
    auto w = hashed_unit(t, dim_);
    for (int i = 0; i < dim_; ++i) v[i] += w[i];
  }
  // Word vectors keep their raw scale; sentence-level vectors are unit length.
  if (space != EmbeddingSpace::word) normalize(v);
  return {std::move(v), space};
}

EmbeddingVector HashingEmbedder::do_embed_image(std::span<const std::uint8_t> image) {
  if (auto prompt = embedded_prompt(image)) {
    auto v = do_embed_text(*prompt, EmbeddingSpace::joint_text);
    v.space = EmbeddingSpace::joint_image;
    return v;
  }
  auto v = hashed_unit(sha256_hex(image), dim_);
  normalize(v);
  return {std::move(v), EmbeddingSpace::joint_image};
}

bool FixtureEmbedder::supports(EmbeddingSpace space) const {
  for (const auto& [key, _] : table_) {
    if (key.first == space) return true;
  }
  return false;
}

FixtureEmbedder& FixtureEmbedder::add_text(EmbeddingSpace space, const std::string& text,
                                           std::vector<double> v) {
  table_[{space, text}] = std::move(v);
  return *this;
}

FixtureEmbedder& FixtureEmbedder::add_image(const std::string& image_sha256, std::vector<double> v) {
  table_[{EmbeddingSpace::joint_image, image_sha256}] = std::move(v);
  return *this;
}

EmbeddingVector FixtureEmbedder::do_embed_text(const std::string& text, EmbeddingSpace space) {
  auto it = table_.find({space, text});
  if (it == table_.end()) {
    throw BackendError(BackendErrorKind::missing_entry,
                       id_ + ": no " + std::string(to_string(space)) + " embedding for '" + text + "'");
  }
  return {it->second, space};
}

EmbeddingVector FixtureEmbedder::do_embed_image(std::span<const std::uint8_t> image) {
  const std::string key = sha256_hex(image);
  auto it = table_.find({EmbeddingSpace::joint_image, key});
  if (it == table_.end()) {
    throw BackendError(BackendErrorKind::missing_entry, id_ + ": no image embedding for " + key);
  }
  return {it->second, EmbeddingSpace::joint_image};
}

BackendSuite make_mock_suite(const std::string& image_root, std::int64_t seed) {
  BackendSuite s;
  s.text = std::make_shared<MockTextGenerator>(seed);
  s.image = std::make_shared<MockImageGenerator>();
  s.captioner = std::make_shared<MockCaptioner>();
  auto embedder = std::make_shared<HashingEmbedder>();
  s.sentence_embedder = embedder;
  s.word_embedder = embedder;
  s.joint_embedder = embedder;
  s.store = std::make_shared<ImageStore>(image_root);
  return s;
}

}  // namespace planweave
