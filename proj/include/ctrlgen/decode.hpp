#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ctrlgen/model.hpp"

namespace ctrlgen {

enum class DecodeMode { greedy, temperature };

inline const char* decode_mode_name(DecodeMode m) {
  return m == DecodeMode::greedy ? "greedy" : "temperature";
}

inline DecodeMode parse_decode_mode(const std::string& s) {
  if (s == "greedy") return DecodeMode::greedy;
  if (s == "temperature" || s == "sample") return DecodeMode::temperature;
  throw ConfigError(cat("unknown decode mode \"", s, "\" (use greedy or temperature)"));
}

struct DecodeConfig {
  DecodeMode mode = DecodeMode::greedy;
  double temperature = 1.0;  // sampling only
  int max_len = 50;          // content tokens before EOS is forced

  void validate() const {
    if (max_len < 1) throw ConfigError(cat("max_len must be positive, got ", max_len));
    if (mode == DecodeMode::temperature && !(temperature > 0.0 && std::isfinite(temperature)))
      throw ConfigError(cat("temperature must be finite and positive, got ", temperature));
  }
};

struct Generation {
  std::vector<int> ids;  // content tokens, no BOS or EOS
  std::vector<std::string> tokens;
  bool forced_eos = false;  // hit the length cap before producing EOS
  int realized = 0;         // control value of the output (0 for sentiment; score separately)
};

// The control value a finished generation actually realized.
inline int realized_control(const std::vector<std::string>& tokens, ControlKind kind,
                            const std::vector<std::string>* source = nullptr,
                            const SentimentScorer* scorer = nullptr) {
  switch (kind) {
    case ControlKind::length: return length_value(tokens);
    case ControlKind::edit:
      if (source == nullptr) throw DataError("realized edit value needs the source sentence");
      return jaccard_edit(*source, tokens);
    case ControlKind::sentiment:
      if (scorer == nullptr) throw DataError("realized sentiment value needs a scorer");
      return sentiment_value(tokens, *scorer);
  }
  throw DataError("unknown control kind");
}

namespace detail {

template <typename S>
int pick_token(const MatrixX<S>& logits, const DecodeConfig& dc, Rng& rng) {
  // PAD and BOS are never legal continuations.
  Eigen::Matrix<S, 1, Eigen::Dynamic> row = logits.row(0);
  row(0, kPadId) = -std::numeric_limits<S>::infinity();
  row(0, kBosId) = -std::numeric_limits<S>::infinity();
  if (dc.mode == DecodeMode::greedy) {
    Eigen::Index best = 0;
    row.maxCoeff(&best);
    return static_cast<int>(best);
  }
  row /= static_cast<S>(dc.temperature);
  const S m = row.maxCoeff();
  Eigen::Array<S, 1, Eigen::Dynamic> probs = (row.array() - m).exp();
  probs /= probs.sum();
  const S u = static_cast<S>(uniform01(rng));
  S acc = S(0);
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs(i);
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);  // numeric tail
}

}  // namespace detail

// Generates one sequence for the desired control value. Decoding is eager
// (no gradient tape); determinism comes entirely from the seed.
template <typename S>
Generation generate(DecoderModel<S>& model, const Vocabulary& vocab, int desired,
                    const std::vector<int>* source_ids, const std::vector<std::string>* source_toks,
                    const DecodeConfig& dc, std::uint64_t seed) {
  dc.validate();
  const ModelConfig& cfg = model.config();
  Rng rng(seed);
  auto st = model.begin(desired, source_ids);

  const bool track = cfg.control != ControlKind::sentiment;
  ControlTracker<std::string> tracker = track
      ? ControlTracker<std::string>::make(cfg.control, source_toks ? *source_toks : std::vector<std::string>{})
      : ControlTracker<std::string>::length_tracker();

  Generation gen;
  int prev = kBosId;
  int tracker_value = track ? tracker.value() : 0;
  for (int t = 0; t < dc.max_len; ++t) {
    MatrixX<S> logits = model.step(st, prev, tracker_value);
    const int picked = detail::pick_token(logits, dc, rng);
    if (picked == kEosId) break;
    gen.ids.push_back(picked);
    gen.tokens.push_back(vocab.token(picked));
    if (track) tracker_value = tracker.step(gen.tokens.back());
    prev = picked;
  }
  gen.forced_eos = static_cast<int>(gen.ids.size()) >= dc.max_len;
  if (track) gen.realized = realized_control(gen.tokens, cfg.control, source_toks);
  return gen;
}

// One generation per request; element i draws from mix_seed(seed, i) so
// results do not depend on batch order or size.
template <typename S>
std::vector<Generation> batch_generate(DecoderModel<S>& model, const Vocabulary& vocab,
                                       const std::vector<int>& desired,
                                       const std::vector<const Example*>* sources,
                                       const DecodeConfig& dc, std::uint64_t seed) {
  if (sources != nullptr && sources->size() != desired.size())
    throw DataError("batch_generate: desired and source counts differ");
  std::vector<Generation> out;
  out.reserve(desired.size());
  for (std::size_t i = 0; i < desired.size(); ++i) {
    const std::vector<std::string>* source_toks = nullptr;
    std::vector<int> source_ids;
    if (sources != nullptr) {
      const Example* ex = (*sources)[i];
      source_toks = &ex->source;
      source_ids = vocab.encode(ex->source);
      source_ids.push_back(kEosId);
    }
    out.push_back(generate(model, vocab, desired[i], sources ? &source_ids : nullptr, source_toks, dc,
                           mix_seed(seed, i)));
  }
  return out;
}

}  // namespace ctrlgen
