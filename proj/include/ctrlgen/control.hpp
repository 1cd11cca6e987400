#pragma once

#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "ctrlgen/util.hpp"

namespace ctrlgen {

// Reserved vocabulary slots, fixed at 0..3.
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kUnkId = 3;

constexpr const char* kPadTok = "<pad>";
constexpr const char* kBosTok = "<bos>";
constexpr const char* kEosTok = "<eos>";
constexpr const char* kUnkTok = "<unk>";

enum class ControlKind { length, edit, sentiment };

inline const char* control_kind_name(ControlKind k) {
  switch (k) {
    case ControlKind::length: return "length";
    case ControlKind::edit: return "edit";
    case ControlKind::sentiment: return "sentiment";
  }
  return "?";
}

inline ControlKind parse_control_kind(const std::string& s) {
  if (s == "length") return ControlKind::length;
  if (s == "edit") return ControlKind::edit;
  if (s == "sentiment") return ControlKind::sentiment;
  throw ConfigError(cat("unknown control kind \"", s, "\""));
}

// Sequence markers carry no content and stay out of lengths and Jaccard sets.
inline bool is_marker(int id) { return id == kPadId || id == kBosId || id == kEosId; }
inline bool is_marker(const std::string& tok) {
  return tok == kPadTok || tok == kBosTok || tok == kEosTok;
}

template <typename Tok>
int length_value(const std::vector<Tok>& tokens) {
  int n = 0;
  for (const auto& t : tokens)
    if (!is_marker(t)) ++n;
  return n;
}

// round(10 * Jaccard distance) between the two token sets, in [0, 10].
template <typename Tok>
int jaccard_edit(const std::vector<Tok>& input_tokens, const std::vector<Tok>& output_tokens) {
  std::unordered_set<Tok> a, b;
  for (const auto& t : input_tokens)
    if (!is_marker(t)) a.insert(t);
  for (const auto& t : output_tokens)
    if (!is_marker(t)) b.insert(t);
  if (a.empty()) throw DataError("jaccard_edit: input token set is empty");
  std::size_t inter = 0;
  for (const auto& t : b)
    if (a.count(t)) ++inter;
  const std::size_t uni = a.size() + b.size() - inter;
  const double d = 1.0 - static_cast<double>(inter) / static_cast<double>(uni);
  return round_half_up(10.0 * d);
}

// Running control value of a partial output during decoding. value() is the
// control of the consumed prefix; step() consumes one token and returns the
// updated value. Sentiment is undefined mid-generation and has no tracker.
template <typename Tok>
class ControlTracker {
 public:
  static ControlTracker length_tracker() {
    ControlTracker t;
    t.kind_ = ControlKind::length;
    return t;
  }

  static ControlTracker edit_tracker(const std::vector<Tok>& reference_input) {
    ControlTracker t;
    t.kind_ = ControlKind::edit;
    for (const auto& tok : reference_input)
      if (!is_marker(tok)) t.ref_.insert(tok);
    if (t.ref_.empty()) throw DataError("edit tracker: reference input token set is empty");
    return t;
  }

  static ControlTracker make(ControlKind kind, const std::vector<Tok>& reference_input = {}) {
    switch (kind) {
      case ControlKind::length: return length_tracker();
      case ControlKind::edit: return edit_tracker(reference_input);
      case ControlKind::sentiment:
        throw DataError("tracker: sentiment has no mid-generation tracker");
    }
    throw DataError("tracker: unreachable");
  }

  ControlKind kind() const { return kind_; }

  int step(const Tok& token) {
    if (!is_marker(token)) {
      if (kind_ == ControlKind::length) {
        ++count_;
      } else if (!out_.count(token)) {
        out_.insert(token);
        if (ref_.count(token))
          ++inter_;
        else
          ++extra_;
      }
    }
    return value();
  }

  int value() const {
    if (kind_ == ControlKind::length) return count_;
    const std::size_t uni = ref_.size() + extra_;
    const double d = 1.0 - static_cast<double>(inter_) / static_cast<double>(uni);
    return round_half_up(10.0 * d);
  }

 private:
  ControlTracker() = default;
  ControlKind kind_ = ControlKind::length;
  int count_ = 0;                   // length state
  std::unordered_set<Tok> ref_;     // edit state: input set and prefix overlap counts
  std::unordered_set<Tok> out_;
  int inter_ = 0;
  int extra_ = 0;
};

// Labels the sentiment of a token sequence on the 1..5 scale.
class SentimentScorer {
 public:
  virtual ~SentimentScorer() = default;
  virtual int score(const std::vector<std::string>& tokens) const = 0;
};

inline int sentiment_value(const std::vector<std::string>& tokens, const SentimentScorer& clf) {
  int content = 0;
  for (const auto& t : tokens)
    if (!is_marker(t)) ++content;
  if (content == 0) throw DataError("sentiment_value: empty token sequence");
  return clf.score(tokens);
}

// Exact oracle over a scored lexicon: rating = round(mean score of scored
// tokens), clamped to 1..5; sequences without scored tokens are neutral (3).
class LexiconScorer : public SentimentScorer {
 public:
  explicit LexiconScorer(std::map<std::string, int> scores) : scores_(std::move(scores)) {}

  int score(const std::vector<std::string>& tokens) const override {
    int total = 0, n = 0;
    for (const auto& t : tokens) {
      auto it = scores_.find(t);
      if (it != scores_.end()) {
        total += it->second;
        ++n;
      }
    }
    if (n == 0) return 3;
    const int r = round_half_up(static_cast<double>(total) / n);
    return std::min(5, std::max(1, r));
  }

  const std::map<std::string, int>& scores() const { return scores_; }

 private:
  std::map<std::string, int> scores_;
};

}  // namespace ctrlgen
