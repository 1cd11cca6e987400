#include <doctest.h>

#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "ctrlgen/eval.hpp"

using namespace ctrlgen;

TEST_CASE("perplexity from summed nll") {
  CHECK(perplexity(4.0 * std::log(8.0), 4) == doctest::Approx(8.0));
  CHECK(perplexity(0.0, 10) == doctest::Approx(1.0));
  CHECK_THROWS_AS(perplexity(1.0, 0), DataError);
}

TEST_CASE("control mse by hand") {
  CHECK(control_mse({5, 3}, {5, 7}) == doctest::Approx(8.0));
  CHECK(control_mse({1, 2, 3}, {1, 2, 3}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(control_mse({1}, {1, 2}), DataError);
  CHECK_THROWS_AS(control_mse({}, {}), DataError);
}

TEST_CASE("exact match percentage and miss flags") {
  CHECK(exact_match_pct({1, 2, 3, 4}, {1, 2, 0, 4}) == doctest::Approx(75.0));
  // A forced stop never counts, even when the value happens to match.
  CHECK(exact_match_pct({1, 2}, {1, 2}, {true, false}) == doctest::Approx(50.0));
  CHECK_THROWS_AS(exact_match_pct({1}, {1}, {true, false}), DataError);
}

TEST_CASE("pearson correlation") {
  CHECK(pearson({1, 2, 3, 4}, {2, 4, 6, 8}) == doctest::Approx(1.0));
  CHECK(pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(pearson({1, 2, 3, 4}, {5, 5, 5, 5}) == 0.0);
  // Hand-worked: x={1,2,3}, y={1,3,2} has r = 1/2.
  CHECK(pearson({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(pearson({1}, {1}), DataError);
}

TEST_CASE("bleu identities and hand cases") {
  std::vector<std::vector<std::string>> ref = {{"the", "cat", "sat", "down", "."}};
  CHECK(corpus_bleu(ref, ref) == doctest::Approx(1.0));

  // Shortened hypothesis: clean n-gram precisions, pure brevity penalty.
  CHECK(corpus_bleu({{"the", "cat", "sat"}}, {{"the", "cat", "sat", "down"}}) ==
        doctest::Approx(std::exp(1.0 - 4.0 / 3.0)));

  // p1=3/4, p2=2/3, p3 and p4 smoothed to 1/3 and 1/2; equal lengths, no bp.
  CHECK(corpus_bleu({{"a", "b", "b", "c"}}, {{"a", "b", "c", "d"}}) ==
        doctest::Approx(std::pow(1.0 / 12.0, 0.25)));

  // Corpus pooling: counts merge across pairs before the ratio is taken.
  CHECK(corpus_bleu({{"x"}, {"x"}}, {{"y"}, {"x"}}) == doctest::Approx(std::pow(0.5, 0.25)));

  CHECK(corpus_bleu({{}, {}}, {{"a"}, {"b"}}) == 0.0);
  CHECK(corpus_bleu({{"q"}}, {{"z"}}) == 0.0);  // unigram miss is not smoothed
  CHECK_THROWS_AS(corpus_bleu({}, {}), DataError);
}

namespace {

// Deliberately naive re-implementations used as cross-checks. They mirror the
// definitions, not the library code.
double oracle_mse(const std::vector<int>& d, const std::vector<int>& r) {
  double s = 0;
  for (std::size_t i = 0; i < d.size(); ++i) s += (d[i] - r[i]) * (d[i] - r[i]);
  return s / d.size();
}

double oracle_acc(const std::vector<int>& d, const std::vector<int>& r, const std::vector<bool>& miss) {
  int hit = 0;
  for (std::size_t i = 0; i < d.size(); ++i) hit += (!miss[i] && d[i] == r[i]) ? 1 : 0;
  return 100.0 * hit / d.size();
}

double oracle_bleu(const std::vector<std::vector<std::string>>& hyp,
                   const std::vector<std::vector<std::string>>& ref) {
  auto grams = [](const std::vector<std::string>& t, int n) {
    std::map<std::vector<std::string>, long> c;
    for (int i = 0; i + n <= static_cast<int>(t.size()); ++i)
      ++c[std::vector<std::string>(t.begin() + i, t.begin() + i + n)];
    return c;
  };
  double lp = 0;
  long hl = 0, rl = 0;
  for (const auto& h : hyp) hl += static_cast<long>(h.size());
  for (const auto& r : ref) rl += static_cast<long>(r.size());
  for (int n = 1; n <= 4; ++n) {
    long m = 0, t = 0;
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      auto hc = grams(hyp[i], n);
      auto rc = grams(ref[i], n);
      for (const auto& [g, k] : hc) {
        t += k;
        auto it = rc.find(g);
        if (it != rc.end()) m += std::min(k, it->second);
      }
    }
    if (n == 1 && t == 0) return 0.0;
    if (n > 1 && m == 0) {
      ++m;
      ++t;
    }
    if (m == 0) return 0.0;
    lp += std::log(static_cast<double>(m) / t) / 4.0;
  }
  return (hl >= rl ? 1.0 : std::exp(1.0 - static_cast<double>(rl) / hl)) * std::exp(lp);
}

}  // namespace

TEST_CASE("metrics agree with naive oracles on random data") {
  Rng rng(20240);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 100; ++trial) {
    const int n = uniform_int(rng, 2, 12);
    std::vector<int> desired, realized;
    std::vector<bool> miss;
    std::vector<std::vector<std::string>> hyp, ref;
    for (int i = 0; i < n; ++i) {
      desired.push_back(uniform_int(rng, 0, 10));
      realized.push_back(uniform_int(rng, 0, 10));
      miss.push_back(uniform_int(rng, 0, 3) == 0);
      std::vector<std::string> h, r;
      for (int k = uniform_int(rng, 0, 7); k > 0; --k) h.push_back(words[uniform_int(rng, 0, 4)]);
      for (int k = uniform_int(rng, 1, 7); k > 0; --k) r.push_back(words[uniform_int(rng, 0, 4)]);
      hyp.push_back(h);
      ref.push_back(r);
    }
    CHECK(control_mse(desired, realized) == oracle_mse(desired, realized));
    CHECK(exact_match_pct(desired, realized, miss) == oracle_acc(desired, realized, miss));
    const double got = corpus_bleu(hyp, ref);
    const double want = oracle_bleu(hyp, ref);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("report renders empty intervals as dashes and nulls") {
  EvalReport report;
  IntervalMetrics filled;
  filled.name = "3..10";
  filled.n = 4;
  filled.ppl = 12.5;
  filled.acc = 75.0;
  filled.mse = 1.25;
  filled.bleu = 0.5;
  IntervalMetrics hollow;
  hollow.name = "11..14";
  hollow.ppl = hollow.acc = hollow.mse = hollow.bleu = std::numeric_limits<double>::quiet_NaN();
  report.intervals = {filled, hollow};

  const std::string text = report.to_text();
  CHECK(text.find("interval") != std::string::npos);
  CHECK(text.find("12.50") != std::string::npos);
  CHECK(text.find('-') != std::string::npos);
  CHECK(text.find("baseline") == std::string::npos);

  auto j = nlohmann::json::parse(report.to_json());
  REQUIRE(j.at("intervals").size() == 2);
  CHECK(j.at("intervals")[0].at("ppl").get<double>() == doctest::Approx(12.5));
  CHECK(j.at("intervals")[1].at("ppl").is_null());
  CHECK(!j.contains("baseline_ppl"));

  report.baseline_ppl = 9.0;
  CHECK(report.to_text().find("baseline ppl (uncontrolled): 9.00") != std::string::npos);
  CHECK(nlohmann::json::parse(report.to_json()).at("baseline_ppl").get<double>() == doctest::Approx(9.0));
}

TEST_CASE("curve csv layout and flat columns") {
  CurveResult curve;
  curve.points = {{3, 3.5, 0.5, 2}, {4, 4.0, 0.0, 2}};
  curve.desired_flat = {3, 3, 4, 4};
  curve.realized_flat = {3, 4, 4, 4};
  const std::string csv = curve.to_csv();
  CHECK(csv.rfind("desired,mean_realized,stddev,n\n", 0) == 0);
  CHECK(csv.find("3,3.5,0.5,2\n") != std::string::npos);
  CHECK(csv.find("4,4,0,2\n") != std::string::npos);
  CHECK(pearson(curve.desired_flat, curve.realized_flat) > 0.0);
}

TEST_CASE("range report over a toy model keeps its shape") {
  Vocabulary vocab = Vocabulary::build({{"u", "v", "w", "z"}});
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.token_dim = 8;
  cfg.hidden = 10;
  cfg.control = ControlKind::length;
  cfg.desired = EmbeddingStrategy{EmbeddingKind::scalar, 1, {0, 20}, 1.0};
  cfg.tracker = EmbeddingStrategy{EmbeddingKind::scalar, 1, {0, 60}, 1.0};
  DecoderModel<double> model(cfg, 77);

  std::vector<Example> batch;
  for (int i = 0; i < 3; ++i) {
    Example ex;
    ex.target = {"u", "v", "w"};
    ex.c = 3;
    ex.has_c = true;
    batch.push_back(ex);
  }
  std::vector<std::pair<std::string, std::vector<Example>>> intervals = {{"3..3", batch},
                                                                         {"9..9", {}}};
  DecodeConfig dc;
  dc.max_len = 8;
  EvalReport report = range_report(model, vocab, intervals, dc, 5);
  REQUIRE(report.intervals.size() == 2);
  CHECK(report.intervals[0].n == 3);
  CHECK(std::isfinite(report.intervals[0].ppl));
  CHECK(report.intervals[0].ppl > 1.0);
  CHECK(std::isfinite(report.intervals[0].mse));
  CHECK(report.intervals[1].n == 0);
  CHECK(std::isnan(report.intervals[1].ppl));

  // Same seed, same report; the generations underneath are deterministic.
  EvalReport again = range_report(model, vocab, intervals, dc, 5);
  CHECK(again.to_json() == report.to_json());
}

TEST_CASE("curve sweep covers the range and rejects seq2seq") {
  Vocabulary vocab = Vocabulary::build({{"u", "v", "w", "z"}});
  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.token_dim = 8;
  cfg.hidden = 10;
  cfg.control = ControlKind::length;
  cfg.desired = EmbeddingStrategy{EmbeddingKind::scalar, 1, {0, 20}, 1.0};
  cfg.tracker = EmbeddingStrategy{EmbeddingKind::scalar, 1, {0, 60}, 1.0};
  DecoderModel<double> model(cfg, 78);

  DecodeConfig dc;
  dc.mode = DecodeMode::temperature;
  dc.max_len = 10;
  CurveResult curve = emit_curve(model, vocab, {2, 5}, 3, dc, 9);
  REQUIRE(curve.points.size() == 4);
  CHECK(curve.points.front().desired == 2);
  CHECK(curve.points.back().desired == 5);
  CHECK(curve.desired_flat.size() == 12);
  for (const auto& p : curve.points) {
    CHECK(p.n == 3);
    CHECK(p.stddev >= 0.0);
  }

  ModelConfig s2s = cfg;
  s2s.seq2seq = true;
  s2s.control = ControlKind::edit;
  s2s.tracker.value_range = {0, 10};
  DecoderModel<double> seq_model(s2s, 79);
  CHECK_THROWS_AS(emit_curve(seq_model, vocab, {0, 3}, 2, dc, 9), DataError);
  CHECK_THROWS_AS(emit_curve(model, vocab, {2, 5}, 0, dc, 9), ConfigError);
}
