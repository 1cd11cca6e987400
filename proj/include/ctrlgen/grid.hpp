#pragma once

#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "ctrlgen/classifier.hpp"
#include "ctrlgen/config.hpp"
#include "ctrlgen/eval.hpp"

namespace ctrlgen {

// Corpus, split, and vocabulary for one experiment, all derived
// deterministically from the config (strategy and architecture do not touch
// the data, so cells that differ only there see identical examples).
struct CellData {
  std::vector<Example> corpus;
  SynthMeta meta;  // synthetic-corpus sidecar; empty for TSV corpora
  DataSplits splits;
  Vocabulary vocab;
};

// Synthesis knobs for a config: lengths cover the full observed plus
// evaluated hull so extrapolation targets exist in the corpus.
SynthParams synth_params_for(const ExperimentConfig& cfg);

CellData prepare_data(const ExperimentConfig& cfg);

// Trains the decoder for a config. When dir is non-empty the checkpoint,
// vocabulary, manifest, and per-epoch CSV land there.
std::pair<DecoderModel<double>, TrainResult> train_decoder(const ExperimentConfig& cfg,
                                                           const CellData& data, const std::string& dir,
                                                           std::ostream* log);

// Sentiment realized values come from a classifier, so evaluation measures
// what a reader of the text would see rather than reusing the gold label.
// Returns nullptr for the other tasks.
std::unique_ptr<SentimentScorer> make_scorer(const ExperimentConfig& cfg, const CellData& data,
                                             std::ostream* log);

struct EvalOutcome {
  EvalReport report;
  double test_ppl = 0.0;  // teacher-forced perplexity over the whole test set
};

EvalOutcome evaluate_decoder(const ExperimentConfig& cfg, const CellData& data,
                             DecoderModel<double>& model, const SentimentScorer* scorer);

// One row group of the merged grid report.
struct CellResult {
  std::string name;    // e.g. "length-lstm-scalar"
  std::string hash;    // hex of the canonical-config hash; names the cell dir
  std::string dir;     // artifact directory, empty when the cell was skipped
  std::string status;  // "ok", "SKIPPED(reason)", or "FAILED(reason)"
  EvalReport report;
  double test_ppl = std::numeric_limits<double>::quiet_NaN();

  bool ok() const { return status == "ok"; }
};

struct GridResult {
  std::vector<CellResult> cells;
  std::string merged_text;
  std::string merged_json;
};

// Artifact directory for a config: workdir/cells/<name>-<hash>. Equal configs
// always map to the same directory, which makes grid reruns idempotent.
std::string cell_dir(const ExperimentConfig& cfg);

// Expands a base config over strategies and architectures. Every architecture
// gets an uncontrolled baseline cell even when the caller did not list one,
// so each table has its reference row.
std::vector<ExperimentConfig> grid_cells(const ExperimentConfig& base,
                                         const std::vector<EmbeddingKind>& strategies,
                                         const std::vector<ModelArch>& archs);

// Runs one cell end to end: validate, synthesize or load data, train,
// evaluate, write artifacts. Construction failures (for example a transformer
// width that no head count divides) come back as SKIPPED; runtime failures as
// FAILED. Neither throws.
CellResult run_cell(const ExperimentConfig& cfg, std::ostream* log = nullptr);

// Runs every cell, weaves the uncontrolled baseline perplexity into the
// controlled cells' reports, and writes the merged report (text and JSON)
// into the workdir. Output bytes depend only on the configs.
GridResult run_grid(const std::vector<ExperimentConfig>& cells, std::ostream* log = nullptr);

}  // namespace ctrlgen
