#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ctrlgen/util.hpp"

namespace ctrlgen {

inline double perplexity(double nll_sum, long tokens) {
  if (tokens <= 0) throw DataError("perplexity over zero tokens");
  return std::exp(nll_sum / static_cast<double>(tokens));
}

// Mean squared error between desired and realized control values.
inline double control_mse(const std::vector<int>& desired, const std::vector<int>& realized) {
  if (desired.size() != realized.size() || desired.empty())
    throw DataError(cat("control_mse: bad sizes ", desired.size(), " vs ", realized.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < desired.size(); ++i) {
    const double d = static_cast<double>(desired[i] - realized[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(desired.size());
}

// Percentage of outputs that realized the desired value exactly. Entries
// flagged as misses (length cap hit) never count, whatever their value.
inline double exact_match_pct(const std::vector<int>& desired, const std::vector<int>& realized,
                              const std::vector<bool>& miss = {}) {
  if (desired.size() != realized.size() || desired.empty())
    throw DataError(cat("exact_match_pct: bad sizes ", desired.size(), " vs ", realized.size()));
  if (!miss.empty() && miss.size() != desired.size())
    throw DataError("exact_match_pct: miss flag count mismatch");
  long hits = 0;
  for (std::size_t i = 0; i < desired.size(); ++i)
    if ((miss.empty() || !miss[i]) && desired[i] == realized[i]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(desired.size());
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DataError(cat("pearson: bad sizes ", x.size(), " vs ", y.size()));
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;  // a constant column has no correlation
  return sxy / std::sqrt(sxx * syy);
}

namespace detail {
inline std::map<std::string, long> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<std::string, long> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
    std::string key;
    for (int k = 0; k < n; ++k) {
      if (k > 0) key += '\x1f';  // unit separator, cannot appear in tokens
      key += tokens[i + static_cast<std::size_t>(k)];
    }
    ++counts[key];
  }
  return counts;
}
}  // namespace detail

// Corpus BLEU with up to 4-gram precision, brevity penalty, and add-one
// smoothing on any n>1 precision whose match count is zero.
inline double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                          const std::vector<std::vector<std::string>>& references, int max_order = 4) {
  if (hypotheses.size() != references.size() || hypotheses.empty())
    throw DataError(cat("corpus_bleu: bad sizes ", hypotheses.size(), " vs ", references.size()));
  long hyp_len = 0, ref_len = 0;
  std::vector<long> matches(static_cast<std::size_t>(max_order), 0);
  std::vector<long> totals(static_cast<std::size_t>(max_order), 0);
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<long>(hypotheses[i].size());
    ref_len += static_cast<long>(references[i].size());
    for (int n = 1; n <= max_order; ++n) {
      auto hyp_counts = detail::ngram_counts(hypotheses[i], n);
      auto ref_counts = detail::ngram_counts(references[i], n);
      for (const auto& [gram, count] : hyp_counts) {
        totals[static_cast<std::size_t>(n - 1)] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end())
          matches[static_cast<std::size_t>(n - 1)] += std::min(count, it->second);
      }
    }
  }
  if (totals[0] == 0) return 0.0;  // no unigrams at all: every hypothesis empty
  double log_precision = 0.0;
  for (int n = 1; n <= max_order; ++n) {
    long m = matches[static_cast<std::size_t>(n - 1)];
    long t = totals[static_cast<std::size_t>(n - 1)];
    if (n > 1 && m == 0) {
      ++m;
      ++t;
    }
    if (m == 0) return 0.0;  // unsmoothed unigram miss
    log_precision += std::log(static_cast<double>(m) / static_cast<double>(t)) / max_order;
  }
  const double bp =
      hyp_len >= ref_len ? 1.0
                         : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_precision);
}

}  // namespace ctrlgen
