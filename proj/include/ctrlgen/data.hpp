#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctrlgen/control.hpp"
#include "ctrlgen/range.hpp"
#include "ctrlgen/util.hpp"

namespace ctrlgen {

// Lowercases and splits on whitespace; every punctuation character becomes a
// standalone token. Idempotent over its own output.
std::vector<std::string> tokenize(const std::string& text);

// Token <-> id bijection with reserved ids 0..3 (PAD, BOS, EOS, UNK).
class Vocabulary {
 public:
  Vocabulary();

  static Vocabulary build(const std::vector<std::vector<std::string>>& sequences, int min_count = 1);

  int id(const std::string& token) const;  // UNK fallback
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  void add(const std::string& token);
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

struct Example {
  std::vector<std::string> source;  // empty for language-model tasks
  std::vector<std::string> target;
  int c = 0;
  bool has_c = false;

  bool has_source() const { return !source.empty(); }
};

// TSV exchange format: `c \t source \t target`, both leading fields optional.
// A two-field line whose first field parses as an integer is (c, target).
std::vector<Example> read_tsv(const std::string& path);
void write_tsv(const std::string& path, const std::vector<Example>& examples);

// Fills in the gold control value per kind. Length and edit are recomputed
// from the text; sentiment requires the rating column.
void annotate_controls(std::vector<Example>& examples, ControlKind kind);

struct RangeSplit {
  IntRange observed;
  std::vector<IntRange> evaluated;
};

struct SplitOptions {
  double train_frac = 0.8;
  double valid_frac = 0.1;  // the remainder is test
  bool group_by_source = false;  // keep identical sources in one split
  std::uint64_t seed = 1;
};

struct DataSplits {
  std::vector<Example> train;  // c in observed only
  std::vector<Example> valid;  // c in observed only
  std::vector<Example> test;
  std::vector<std::pair<std::string, std::vector<Example>>> eval_intervals;  // name -> test subset
  std::string manifest;  // JSON lines: {"id":..,"split":..,"c":..}
};

DataSplits split_by_range(const std::vector<Example>& examples, const RangeSplit& split,
                          const SplitOptions& options = {});

// ---- synthetic corpora (desk-scale stand-ins for the real datasets) ----

struct SynthParams {
  int count = 5000;
  IntRange lengths{3, 18};        // target lengths: length and sentiment tasks
  IntRange source_lengths{4, 9};  // edit task
  IntRange edits{0, 10};          // edit task target support
};

// Oracle sidecar emitted with a synthetic corpus: the scored sentiment lexicon
// and the edit-task synonym table.
struct SynthMeta {
  ControlKind kind = ControlKind::length;
  std::map<std::string, int> lexicon;
  std::map<std::string, std::string> synonyms;

  std::string to_json() const;
  static SynthMeta from_json(const std::string& text);
  void save(const std::string& path) const;
  static SynthMeta load(const std::string& path);
};

std::vector<Example> synth_corpus(ControlKind kind, const SynthParams& params, std::uint64_t seed,
                                  SynthMeta* meta = nullptr);

// Longest sentence the template grammar can produce.
int grammar_max_length();

}  // namespace ctrlgen
