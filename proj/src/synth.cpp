#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ctrlgen/data.hpp"

// Synthetic corpora for the three control tasks. Each generator is seeded and
// emits examples whose annotated control value is recomputed with the same
// functions used everywhere else, so labels can never drift from the text.

namespace ctrlgen {
namespace {

// Template grammar: [det] adj* noun verb adv* '.'
// All slots draw without replacement inside one sentence, keeping the token
// set size equal to the sentence length (the edit task relies on that).
const std::vector<std::string> kDets = {"the", "a", "one", "some", "every", "that"};
const std::vector<std::string> kAdjs = {"red", "blue", "small", "big", "old", "young", "happy", "quiet",
                                        "bright", "dark", "soft", "wild", "calm", "tiny", "grand"};
const std::vector<std::string> kNouns = {"dog", "cat", "bird", "fox", "horse", "fish", "tree", "river",
                                         "house", "cloud", "stone", "garden", "child", "wolf", "boat"};
const std::vector<std::string> kVerbs = {"runs", "jumps", "sleeps", "sings", "waits", "moves", "falls", "turns",
                                         "plays", "rests", "walks", "drifts", "climbs", "hides", "stands"};
const std::vector<std::string> kAdvs = {"quickly", "slowly", "quietly", "loudly", "gently", "bravely", "calmly",
                                        "widely", "softly", "lightly", "early", "late", "often", "rarely", "far"};

// One synonym per grammar word, all partners outside every pool above, no two
// words sharing a partner. Substituting through this table changes the token
// set by exactly the number of substituted words.
const std::map<std::string, std::string>& synonym_table() {
  static const std::map<std::string, std::string> table = [] {
    std::map<std::string, std::string> t = {
        {"the", "each"},      {"a", "any"},         {"one", "another"},   {"some", "few"},
        {"every", "either"},  {"that", "those"},    {"red", "crimson"},   {"blue", "azure"},
        {"small", "little"},  {"big", "large"},     {"old", "ancient"},   {"young", "fresh"},
        {"happy", "glad"},    {"quiet", "silent"},  {"bright", "shiny"},  {"dark", "dim"},
        {"soft", "tender"},   {"wild", "feral"},    {"calm", "serene"},   {"tiny", "slight"},
        {"grand", "noble"},   {"dog", "hound"},     {"cat", "kitten"},    {"bird", "sparrow"},
        {"fox", "vixen"},     {"horse", "pony"},    {"fish", "trout"},    {"tree", "oak"},
        {"river", "stream"},  {"house", "cabin"},   {"cloud", "mist"},    {"stone", "rock"},
        {"garden", "meadow"}, {"child", "kid"},     {"wolf", "beast"},    {"boat", "canoe"},
        {"runs", "dashes"},   {"jumps", "leaps"},   {"sleeps", "dozes"},  {"sings", "hums"},
        {"waits", "lingers"}, {"moves", "shifts"},  {"falls", "drops"},   {"turns", "spins"},
        {"plays", "frolics"}, {"rests", "pauses"},  {"walks", "strolls"}, {"drifts", "floats"},
        {"climbs", "scales"}, {"hides", "lurks"},   {"stands", "stays"},  {"quickly", "swiftly"},
        {"slowly", "lazily"}, {"quietly", "mutely"}, {"loudly", "noisily"}, {"gently", "mildly"},
        {"bravely", "boldly"}, {"calmly", "coolly"}, {"widely", "broadly"}, {"softly", "faintly"},
        {"lightly", "airily"}, {"early", "soon"},   {"late", "tardily"},  {"often", "frequently"},
        {"rarely", "seldom"}, {"far", "away"}};
    std::set<std::string> base, partners;
    for (const auto* pool : {&kDets, &kAdjs, &kNouns, &kVerbs, &kAdvs})
      base.insert(pool->begin(), pool->end());
    for (const auto& [word, syn] : t) {
      if (!base.count(word)) throw std::logic_error("synonym for unknown word " + word);
      if (base.count(syn) || !partners.insert(syn).second)
        throw std::logic_error("synonym table not injective at " + syn);
    }
    if (t.size() != base.size()) throw std::logic_error("synonym table incomplete");
    return t;
  }();
  return table;
}

// Insertion vocabulary for the edit task, disjoint from the grammar and from
// every synonym, so an inserted word always grows the union.
const std::vector<std::string> kNovel = {"amber", "breeze", "crystal", "ember",  "frost", "glimmer",
                                         "harbor", "ivory",  "jade",    "lantern", "marble", "nectar",
                                         "opal",   "pearl",  "quartz",  "raven",   "topaz",  "velvet"};

const std::array<std::vector<std::string>, 5> kSentimentPools = {{
    {"awful", "terrible", "horrible", "dreadful", "disgusting", "miserable", "worthless", "appalling",
     "atrocious", "abysmal", "unbearable", "wretched"},
    {"bad", "poor", "weak", "dull", "boring", "disappointing", "mediocre", "flawed", "tedious", "bland",
     "lacking", "inferior"},
    {"okay", "average", "ordinary", "passable", "fair", "tolerable", "moderate", "plain", "typical",
     "standard", "middling", "acceptable"},
    {"good", "nice", "solid", "pleasant", "enjoyable", "worthwhile", "likable", "engaging", "satisfying",
     "charming", "smooth", "capable"},
    {"excellent", "amazing", "wonderful", "fantastic", "superb", "brilliant", "outstanding", "perfect",
     "delightful", "magnificent", "stunning", "flawless"},
}};
const std::vector<std::string> kFillers = {"it", "was", "very", "and", "so", "this", "felt", "seemed",
                                           "quite", "really", "rather", "just", "still", "then", "also"};

std::vector<std::string> sample_distinct(const std::vector<std::string>& pool, std::size_t k, Rng& rng) {
  std::vector<std::string> bag = pool;
  for (std::size_t i = bag.size(); i > 1; --i)
    std::swap(bag[i - 1], bag[uniform_int(rng, std::size_t{0}, i - 1)]);
  bag.resize(std::min(k, bag.size()));
  return bag;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  return pool[uniform_int(rng, std::size_t{0}, pool.size() - 1)];
}

// Grammar sentence with exactly `len` tokens, period included when asked.
std::vector<std::string> grammar_sentence(int len, bool with_period, Rng& rng) {
  const int body = with_period ? len - 1 : len;  // tokens before the period
  std::vector<std::string> toks;
  if (body == 2) {
    toks = {pick(kNouns, rng), pick(kVerbs, rng)};
  } else {
    const int mods = body - 3;
    const int max_run = static_cast<int>(kAdjs.size());
    const int a_lo = std::max(0, mods - max_run);
    const int a_hi = std::min(max_run, mods);
    const int a = uniform_int(rng, a_lo, a_hi);
    const int b = mods - a;
    toks.push_back(pick(kDets, rng));
    for (const auto& w : sample_distinct(kAdjs, static_cast<std::size_t>(a), rng)) toks.push_back(w);
    toks.push_back(pick(kNouns, rng));
    toks.push_back(pick(kVerbs, rng));
    for (const auto& w : sample_distinct(kAdvs, static_cast<std::size_t>(b), rng)) toks.push_back(w);
  }
  if (with_period) toks.push_back(".");
  return toks;
}

std::vector<Example> synth_length(const SynthParams& params, Rng& rng) {
  if (params.lengths.lo < 3)
    throw DataError(cat("grammar cannot produce sentences shorter than 3 tokens, asked for ", params.lengths.lo));
  if (params.lengths.hi > grammar_max_length())
    throw DataError(cat("grammar tops out at ", grammar_max_length(), " tokens, asked for ", params.lengths.hi));
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(params.count));
  for (int i = 0; i < params.count; ++i) {
    // Round-robin over the range so every length is equally represented.
    const int len = params.lengths.lo + i % params.lengths.width();
    Example ex;
    ex.target = grammar_sentence(len, true, rng);
    ex.c = length_value(ex.target);
    ex.has_c = true;
    out.push_back(std::move(ex));
  }
  return out;
}

// Builds a target for the edit task: keep m source tokens, bring in j new
// ones. The resulting distance is 1 - m/(n+j); (m, j) is chosen to land as
// close as possible to the requested bucket.
std::vector<std::string> edited_target(const std::vector<std::string>& source, int want, Rng& rng,
                                       int* achieved) {
  const int n = static_cast<int>(source.size());
  int best_m = n, best_j = 0;
  double best_err = 1e9;
  for (int m = 0; m <= n; ++m) {
    for (int j = 0; j <= n; ++j) {
      if (m + j < 2) continue;  // no empty or single-token paraphrases
      const double d = 1.0 - static_cast<double>(m) / static_cast<double>(n + j);
      const double err = std::abs(10.0 * d - want);
      // Prefer balanced substitutions over lopsided insert/delete mixes.
      const double tie = std::abs((n - m) - j) * 1e-3 + j * 1e-5;
      if (err + tie < best_err) {
        best_err = err + tie;
        best_m = m;
        best_j = j;
      }
    }
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[uniform_int(rng, std::size_t{0}, i - 1)]);
  std::vector<char> keep(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < best_m; ++i) keep[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;

  auto novel = sample_distinct(kNovel, static_cast<std::size_t>(best_j), rng);
  std::size_t novel_used = 0;
  int fresh_left = best_j;
  std::vector<std::string> target;
  for (int i = 0; i < n; ++i) {
    const auto& tok = source[static_cast<std::size_t>(i)];
    if (keep[static_cast<std::size_t>(i)]) {
      target.push_back(tok);
    } else if (fresh_left > 0) {
      // Dropped slots are refilled with the word's synonym when possible, so
      // substitution-style examples read like paraphrases.
      auto it = synonym_table().find(tok);
      if (it != synonym_table().end()) {
        target.push_back(it->second);
      } else {
        target.push_back(novel[novel_used++]);
      }
      --fresh_left;
    }
  }
  while (fresh_left-- > 0) target.push_back(novel[novel_used++]);

  *achieved = jaccard_edit(source, target);
  return target;
}

std::vector<Example> synth_edit(const SynthParams& params, Rng& rng) {
  if (params.source_lengths.lo < 3)
    throw DataError(cat("edit sources need at least 3 tokens, asked for ", params.source_lengths.lo));
  if (params.source_lengths.hi > grammar_max_length() - 1)
    throw DataError(cat("edit sources top out at ", grammar_max_length() - 1, " tokens"));
  if (params.edits.lo < 0 || params.edits.hi > 10)
    throw DataError(cat("edit range ", params.edits.str(), " outside 0..10"));
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(params.count));
  for (int i = 0; i < params.count; ++i) {
    const int want = params.edits.lo + i % params.edits.width();
    Example ex;
    // A handful of redraws keeps every requested bucket populated even where
    // short sources cannot realize it exactly.
    for (int attempt = 0; attempt < 10; ++attempt) {
      int len_lo = params.source_lengths.lo;
      if (want == 1) len_lo = std::max(len_lo, 7);  // 1/10 needs a large enough set
      const int len = uniform_int(rng, len_lo, std::max(len_lo, params.source_lengths.hi));
      ex.source = grammar_sentence(len, false, rng);
      ex.target = edited_target(ex.source, want, rng, &ex.c);
      ex.has_c = true;
      if (ex.c == want) break;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Example> synth_sentiment(const SynthParams& params, Rng& rng) {
  if (params.lengths.lo < 2) throw DataError("sentiment sentences need at least 2 tokens");
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(params.count));
  for (int i = 0; i < params.count; ++i) {
    const int rating = 1 + i % 5;
    const auto& pool = kSentimentPools[static_cast<std::size_t>(rating - 1)];
    const int len = uniform_int(rng, params.lengths.lo, params.lengths.hi);
    const int body = len - 1;
    // Every scored word carries the sentence rating, so the lexicon oracle
    // recovers the label exactly regardless of how many are sampled.
    int scored = uniform_int(rng, 1, std::max(1, body / 2));
    auto scored_words = sample_distinct(pool, static_cast<std::size_t>(scored), rng);
    scored = static_cast<int>(scored_words.size());
    std::vector<char> slot(static_cast<std::size_t>(body), 0);
    for (int k = 0; k < scored;) {
      const auto s = uniform_int(rng, std::size_t{0}, slot.size() - 1);
      if (!slot[s]) {
        slot[s] = 1;
        ++k;
      }
    }
    Example ex;
    std::size_t next_scored = 0;
    for (int t = 0; t < body; ++t)
      ex.target.push_back(slot[static_cast<std::size_t>(t)] ? scored_words[next_scored++] : pick(kFillers, rng));
    ex.target.push_back(".");
    ex.c = rating;
    ex.has_c = true;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

int grammar_max_length() {
  // det + 15 adjectives + noun + verb + 15 adverbs + period
  return 4 + static_cast<int>(kAdjs.size()) + static_cast<int>(kAdvs.size());
}

std::vector<Example> synth_corpus(ControlKind kind, const SynthParams& params, std::uint64_t seed,
                                  SynthMeta* meta) {
  if (params.count <= 0) throw DataError(cat("corpus size must be positive, got ", params.count));
  Rng rng(seed);
  if (meta) {
    meta->kind = kind;
    meta->lexicon.clear();
    meta->synonyms.clear();
    if (kind == ControlKind::sentiment) {
      for (int r = 1; r <= 5; ++r)
        for (const auto& w : kSentimentPools[static_cast<std::size_t>(r - 1)]) meta->lexicon[w] = r;
    } else if (kind == ControlKind::edit) {
      meta->synonyms = synonym_table();
    }
  }
  switch (kind) {
    case ControlKind::length: return synth_length(params, rng);
    case ControlKind::edit: return synth_edit(params, rng);
    case ControlKind::sentiment: return synth_sentiment(params, rng);
  }
  throw DataError("unknown control kind");
}

std::string SynthMeta::to_json() const {
  nlohmann::json j;
  j["kind"] = control_kind_name(kind);
  j["lexicon"] = lexicon;
  j["synonyms"] = synonyms;
  return j.dump(2);
}

SynthMeta SynthMeta::from_json(const std::string& text) {
  SynthMeta meta;
  nlohmann::json j = nlohmann::json::parse(text);
  meta.kind = parse_control_kind(j.at("kind").get<std::string>());
  if (j.contains("lexicon")) meta.lexicon = j["lexicon"].get<std::map<std::string, int>>();
  if (j.contains("synonyms")) meta.synonyms = j["synonyms"].get<std::map<std::string, std::string>>();
  return meta;
}

void SynthMeta::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError(cat("cannot write ", path));
  out << to_json() << '\n';
}

SynthMeta SynthMeta::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(cat("cannot read ", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace ctrlgen
