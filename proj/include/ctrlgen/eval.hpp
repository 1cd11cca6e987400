#pragma once

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "ctrlgen/decode.hpp"
#include "ctrlgen/metrics.hpp"
#include "ctrlgen/train.hpp"

namespace ctrlgen {

struct IntervalMetrics {
  std::string name;  // "lo..hi"
  long n = 0;
  double ppl = 0.0;
  double acc = 0.0;  // exact-match percentage
  double mse = 0.0;
  double bleu = 0.0;
};

struct EvalReport {
  std::vector<IntervalMetrics> intervals;
  // Perplexity of an uncontrolled baseline checkpoint over the whole test
  // set, when the caller supplies one. NaN = not provided.
  double baseline_ppl = std::numeric_limits<double>::quiet_NaN();

  std::string to_json() const;
  std::string to_text() const;  // aligned table
};

// Teacher-forced perplexity plus generation metrics for each evaluation
// interval. Generations reuse each example's own control value as the desired
// value; element seeds derive from (seed, interval, example).
template <typename S>
EvalReport range_report(DecoderModel<S>& model, const Vocabulary& vocab,
                        const std::vector<std::pair<std::string, std::vector<Example>>>& intervals,
                        const DecodeConfig& dc, std::uint64_t seed,
                        const SentimentScorer* scorer = nullptr, int batch_size = 32) {
  const ModelConfig& cfg = model.config();
  EvalReport report;
  for (std::size_t k = 0; k < intervals.size(); ++k) {
    const auto& [name, examples] = intervals[k];
    IntervalMetrics m;
    m.name = name;
    m.n = static_cast<long>(examples.size());
    if (examples.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      m.ppl = m.acc = m.mse = m.bleu = nan;
      report.intervals.push_back(std::move(m));
      continue;
    }

    auto encoded = encode_examples(examples, vocab, cfg);
    auto [nll, tokens] = dataset_nll(model, encoded, batch_size);
    m.ppl = perplexity(nll, tokens);

    std::vector<int> desired;
    std::vector<const Example*> sources;
    for (const auto& ex : examples) {
      desired.push_back(ex.c);
      sources.push_back(&ex);
    }
    auto gens = batch_generate(model, vocab, desired, cfg.seq2seq ? &sources : nullptr, dc,
                               mix_seed(seed, k));

    std::vector<int> realized;
    std::vector<bool> miss;
    std::vector<std::vector<std::string>> hyps, refs;
    for (std::size_t i = 0; i < gens.size(); ++i) {
      int r = gens[i].realized;
      if (cfg.control == ControlKind::sentiment)
        r = gens[i].tokens.empty() ? 3 : realized_control(gens[i].tokens, cfg.control, nullptr, scorer);
      realized.push_back(r);
      miss.push_back(gens[i].forced_eos);
      hyps.push_back(gens[i].tokens);
      refs.push_back(examples[i].target);
    }
    m.acc = exact_match_pct(desired, realized, miss);
    m.mse = control_mse(desired, realized);
    m.bleu = corpus_bleu(hyps, refs);
    report.intervals.push_back(std::move(m));
  }
  return report;
}

struct CurvePoint {
  int desired = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
  long n = 0;
};

struct CurveResult {
  std::vector<CurvePoint> points;
  std::vector<double> desired_flat;  // one entry per generation, for correlation
  std::vector<double> realized_flat;

  std::string to_csv() const;  // desired,mean_realized,stddev,n
};

// Sweeps the desired control value and measures what the generations realize.
// Language-model tasks only; an uncontrolled model still sweeps (its desired
// input is simply absent) so the curve shows whether any correlation remains.
template <typename S>
CurveResult emit_curve(DecoderModel<S>& model, const Vocabulary& vocab, const IntRange& desired_range,
                       int per_value, const DecodeConfig& dc, std::uint64_t seed,
                       const SentimentScorer* scorer = nullptr) {
  if (model.config().seq2seq) throw DataError("control curve needs a language model, not sequence-to-sequence");
  if (per_value < 1) throw ConfigError(cat("curve samples per value must be positive, got ", per_value));
  CurveResult result;
  std::size_t index = 0;
  for (int c = desired_range.lo; c <= desired_range.hi; ++c) {
    double sum = 0.0, sumsq = 0.0;
    for (int k = 0; k < per_value; ++k, ++index) {
      Generation gen = generate(model, vocab, c, nullptr, nullptr, dc, mix_seed(seed, index));
      int r = gen.realized;
      if (model.config().control == ControlKind::sentiment)
        r = gen.tokens.empty() ? 3 : realized_control(gen.tokens, ControlKind::sentiment, nullptr, scorer);
      sum += r;
      sumsq += static_cast<double>(r) * r;
      result.desired_flat.push_back(c);
      result.realized_flat.push_back(r);
    }
    CurvePoint point;
    point.desired = c;
    point.n = per_value;
    point.mean = sum / per_value;
    const double var = sumsq / per_value - point.mean * point.mean;
    point.stddev = var > 0 ? std::sqrt(var) : 0.0;
    result.points.push_back(point);
  }
  return result;
}

}  // namespace ctrlgen
