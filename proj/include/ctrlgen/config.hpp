#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctrlgen/data.hpp"
#include "ctrlgen/decode.hpp"
#include "ctrlgen/model.hpp"
#include "ctrlgen/train.hpp"

namespace ctrlgen {

// Line-oriented `key = value` settings with `[section]` headers; keys flatten
// to "section.key". Reads are tracked so unknown keys can be reported instead
// of silently ignored.
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& fallback);
  int get_int(const std::string& key, int fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  IntRange get_range(const std::string& key, const IntRange& fallback);
  std::vector<IntRange> get_ranges(const std::string& key, const std::vector<IntRange>& fallback);

  // Keys present in the file but never read by the consumer.
  std::vector<std::string> unread_keys() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  std::set<std::string> read_;
};

// One experiment cell: task, architecture, strategy, data ranges, and the
// training/decoding settings. This is the whole CLI surface; flags override
// file keys one to one.
struct ExperimentConfig {
  ControlKind task = ControlKind::length;
  ModelArch arch = ModelArch::lstm;
  EmbeddingKind strategy = EmbeddingKind::scalar;  // none = uncontrolled baseline
  std::uint64_t seed = 1;
  std::string workdir = "work";

  // data
  std::string corpus;  // TSV path; empty = synthetic corpus
  int synth_count = 5000;
  RangeSplit split;
  int min_count = 1;
  int max_target_len = 0;  // 0 = task default (30, or 100 for sentiment)
  double train_frac = 0.8;
  double valid_frac = 0.1;
  IntRange source_lengths{4, 9};  // edit synthesis
  IntRange edits{0, 10};

  // model
  int token_dim = 32;
  int hidden = 64;
  int layers = 1;
  int n_heads = 4;
  int ffn_mult = 4;
  int max_seq_len = 128;
  int control_dim = 8;
  double scalar_scale = 1.0;
  double dropout = 0.0;
  bool tracker = true;  // ignored (off) for sentiment and uncontrolled runs

  TrainConfig train;
  DecodeConfig decode;
  bool decode_mode_set = false;     // task default applies when false
  bool decode_max_len_set = false;  // 1.5x top length, or 50, when false
  int curve_samples = 50;

  static ExperimentConfig from_map(ConfigMap& map);

  void validate() const;
  bool seq2seq() const { return task == ControlKind::edit; }
  int effective_max_target_len() const {
    return max_target_len > 0 ? max_target_len : (task == ControlKind::sentiment ? 100 : 30);
  }
  DecodeConfig effective_decode() const;

  // Model skeleton for a given vocabulary; value ranges derive from the data
  // ranges so every evaluated desired value is embeddable.
  ModelConfig model_config(int vocab_size) const;

  // Stable key=value rendering; the grid derives cell directories from its
  // hash, so equal configs always land in the same place.
  std::string canonical() const;
  std::string cell_name() const;  // e.g. "length-lstm-scalar"
  std::uint64_t config_hash() const { return fnv1a(canonical()); }
};

}  // namespace ctrlgen
