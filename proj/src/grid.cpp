#include "ctrlgen/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ctrlgen/train.hpp"

namespace fs = std::filesystem;

namespace ctrlgen {

namespace {

// Independent seed streams per stage so changing, say, the classifier seed
// cannot shift the corpus. The data streams ignore strategy and architecture.
constexpr std::uint64_t kSeedSplit = 0x5e11a;
constexpr std::uint64_t kSeedModel = 0x30de1;
constexpr std::uint64_t kSeedTrain = 0x7ea1a;
constexpr std::uint64_t kSeedEval = 0xe7a1;
constexpr std::uint64_t kSeedScorer = 0x5c07e;

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(cat("cannot write ", path));
  out << content;
}

}  // namespace

SynthParams synth_params_for(const ExperimentConfig& cfg) {
  SynthParams params;
  params.count = cfg.synth_count;
  IntRange hull = cfg.split.observed;
  for (const auto& r : cfg.split.evaluated) {
    hull.lo = std::min(hull.lo, r.lo);
    hull.hi = std::max(hull.hi, r.hi);
  }
  if (cfg.task == ControlKind::length) params.lengths = hull;
  params.source_lengths = cfg.source_lengths;
  params.edits = cfg.edits;
  return params;
}

CellData prepare_data(const ExperimentConfig& cfg) {
  CellData data;
  if (cfg.corpus.empty()) {
    data.corpus = synth_corpus(cfg.task, synth_params_for(cfg), cfg.seed, &data.meta);
  } else {
    data.corpus = read_tsv(cfg.corpus);
    const std::size_t cap = static_cast<std::size_t>(cfg.effective_max_target_len());
    std::erase_if(data.corpus, [cap](const Example& ex) { return ex.target.size() > cap; });
    annotate_controls(data.corpus, cfg.task);
  }

  SplitOptions opts;
  opts.train_frac = cfg.train_frac;
  opts.valid_frac = cfg.valid_frac;
  opts.group_by_source = cfg.seq2seq();
  opts.seed = mix_seed(cfg.seed, kSeedSplit);
  data.splits = split_by_range(data.corpus, cfg.split, opts);

  std::vector<std::vector<std::string>> sequences;
  sequences.reserve(2 * data.splits.train.size());
  for (const auto& ex : data.splits.train) {
    sequences.push_back(ex.target);
    if (ex.has_source()) sequences.push_back(ex.source);
  }
  data.vocab = Vocabulary::build(sequences, cfg.min_count);
  return data;
}

std::pair<DecoderModel<double>, TrainResult> train_decoder(const ExperimentConfig& cfg,
                                                           const CellData& data, const std::string& dir,
                                                           std::ostream* log) {
  const ModelConfig mc = cfg.model_config(data.vocab.size());
  DecoderModel<double> model(mc, mix_seed(cfg.seed, kSeedModel));

  const auto train_set = encode_examples(data.splits.train, data.vocab, mc);
  const auto valid_set = encode_examples(data.splits.valid, data.vocab, mc);

  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(cfg.seed, kSeedTrain);
  tc.verbose = log != nullptr;
  if (!dir.empty()) tc.metrics_csv = dir + "/train.csv";
  TrainResult result = train_model(model, train_set, valid_set, tc);

  if (!dir.empty()) {
    model.save(dir + "/model.bin");
    data.vocab.save(dir + "/vocab.txt");
    write_file(dir + "/manifest.jsonl", data.splits.manifest);
    if (cfg.corpus.empty()) data.meta.save(dir + "/meta.json");
  }
  return {std::move(model), std::move(result)};
}

std::unique_ptr<SentimentScorer> make_scorer(const ExperimentConfig& cfg, const CellData& data,
                                             std::ostream* log) {
  if (cfg.task != ControlKind::sentiment) return nullptr;
  std::vector<std::pair<std::vector<int>, int>> labeled;
  labeled.reserve(data.splits.train.size());
  for (const auto& ex : data.splits.train) labeled.emplace_back(data.vocab.encode(ex.target), ex.c);
  BowClassifier<double>::Config cc;
  cc.vocab_size = data.vocab.size();
  BowClassifier<double> clf(cc, mix_seed(cfg.seed, kSeedScorer));
  const auto stats = clf.fit(labeled, 8, 1e-3, 32, mix_seed(cfg.seed, kSeedScorer + 1));
  if (log) *log << "sentiment classifier train accuracy " << stats.accuracy << "%\n";
  return std::make_unique<ClassifierScorer>(std::move(clf), data.vocab);
}

EvalOutcome evaluate_decoder(const ExperimentConfig& cfg, const CellData& data,
                             DecoderModel<double>& model, const SentimentScorer* scorer) {
  EvalOutcome out;
  out.report = range_report(model, data.vocab, data.splits.eval_intervals, cfg.effective_decode(),
                            mix_seed(cfg.seed, kSeedEval), scorer, cfg.train.batch_size);
  const auto test_set = encode_examples(data.splits.test, data.vocab, model.config());
  out.test_ppl = test_set.empty() ? std::numeric_limits<double>::quiet_NaN()
                                  : dataset_perplexity(model, test_set, cfg.train.batch_size);
  return out;
}

std::string cell_dir(const ExperimentConfig& cfg) {
  return cat(cfg.workdir, "/cells/", cfg.cell_name(), "-", fnv1a_hex(cfg.canonical()));
}

std::vector<ExperimentConfig> grid_cells(const ExperimentConfig& base,
                                         const std::vector<EmbeddingKind>& strategies,
                                         const std::vector<ModelArch>& archs) {
  std::vector<ExperimentConfig> cells;
  for (ModelArch arch : archs) {
    bool have_baseline = false;
    for (EmbeddingKind strategy : strategies) {
      ExperimentConfig cfg = base;
      cfg.arch = arch;
      cfg.strategy = strategy;
      cells.push_back(std::move(cfg));
      have_baseline = have_baseline || strategy == EmbeddingKind::none;
    }
    if (!have_baseline) {
      ExperimentConfig cfg = base;
      cfg.arch = arch;
      cfg.strategy = EmbeddingKind::none;
      cells.push_back(std::move(cfg));
    }
  }
  return cells;
}

CellResult run_cell(const ExperimentConfig& cfg, std::ostream* log) {
  CellResult res;
  res.name = cfg.cell_name();
  res.hash = fnv1a_hex(cfg.canonical());
  if (log) *log << "[grid] cell " << res.name << " (" << res.hash << ")\n";
  try {
    cfg.validate();
    res.dir = cell_dir(cfg);
    fs::create_directories(res.dir);
    write_file(res.dir + "/config.txt", cfg.canonical());

    const CellData data = prepare_data(cfg);
    auto [model, train] = train_decoder(cfg, data, res.dir, log);
    const auto scorer = make_scorer(cfg, data, log);
    EvalOutcome eval = evaluate_decoder(cfg, data, model, scorer.get());
    res.report = std::move(eval.report);
    res.test_ppl = eval.test_ppl;
    res.status = "ok";
    if (log) *log << "[grid] cell " << res.name << " done, test ppl " << res.test_ppl << "\n";
  } catch (const ConfigError& e) {
    res.status = cat("SKIPPED(", e.what(), ")");
    if (log) *log << "[grid] cell " << res.name << " " << res.status << "\n";
  } catch (const ShapeError& e) {
    res.status = cat("SKIPPED(", e.what(), ")");
    if (log) *log << "[grid] cell " << res.name << " " << res.status << "\n";
  } catch (const std::exception& e) {
    res.status = cat("FAILED(", e.what(), ")");
    if (log) *log << "[grid] cell " << res.name << " " << res.status << "\n";
  }
  return res;
}

namespace {

std::string render_merged_text(const std::vector<CellResult>& cells) {
  std::size_t cell_w = 4, int_w = 8;
  for (const auto& c : cells) {
    cell_w = std::max(cell_w, c.name.size());
    for (const auto& m : c.report.intervals) int_w = std::max(int_w, m.name.size());
  }
  std::ostringstream out;
  char line[512];
  std::snprintf(line, sizeof line, "%-*s %-*s %8s %10s %8s %8s %8s\n", static_cast<int>(cell_w), "cell",
                static_cast<int>(int_w), "interval", "n", "ppl", "acc", "mse", "bleu");
  out << line;
  for (const auto& c : cells) {
    if (!c.ok()) {
      std::snprintf(line, sizeof line, "%-*s %s\n", static_cast<int>(cell_w), c.name.c_str(),
                    c.status.c_str());
      out << line;
      continue;
    }
    for (const auto& m : c.report.intervals) {
      if (m.n == 0) {
        std::snprintf(line, sizeof line, "%-*s %-*s %8ld %10s %8s %8s %8s\n", static_cast<int>(cell_w),
                      c.name.c_str(), static_cast<int>(int_w), m.name.c_str(), m.n, "-", "-", "-", "-");
      } else {
        std::snprintf(line, sizeof line, "%-*s %-*s %8ld %10.2f %8.1f %8.2f %8.3f\n",
                      static_cast<int>(cell_w), c.name.c_str(), static_cast<int>(int_w), m.name.c_str(),
                      m.n, m.ppl, m.acc, m.mse, m.bleu);
      }
      out << line;
    }
    std::snprintf(line, sizeof line, "%-*s %-*s %8s %10.2f %8s %8s %8s\n", static_cast<int>(cell_w),
                  c.name.c_str(), static_cast<int>(int_w), "all", "-", c.test_ppl, "-", "-", "-");
    out << line;
  }
  return out.str();
}

nlohmann::json metric_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

std::string render_merged_json(const std::vector<CellResult>& cells) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json jc{{"cell", c.name}, {"hash", c.hash}, {"status", c.status}};
    if (c.ok()) {
      jc["test_ppl"] = metric_or_null(c.test_ppl);
      if (!std::isnan(c.report.baseline_ppl)) jc["baseline_ppl"] = c.report.baseline_ppl;
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& m : c.report.intervals) {
        rows.push_back({{"interval", m.name},
                        {"n", m.n},
                        {"ppl", metric_or_null(m.ppl)},
                        {"acc", metric_or_null(m.acc)},
                        {"mse", metric_or_null(m.mse)},
                        {"bleu", metric_or_null(m.bleu)}});
      }
      jc["intervals"] = rows;
    }
    arr.push_back(std::move(jc));
  }
  return nlohmann::json{{"cells", arr}}.dump(2) + "\n";
}

}  // namespace

GridResult run_grid(const std::vector<ExperimentConfig>& cells, std::ostream* log) {
  if (cells.empty()) throw ConfigError("grid: no cells to run");
  GridResult grid;
  grid.cells.reserve(cells.size());
  for (const auto& cfg : cells) grid.cells.push_back(run_cell(cfg, log));

  // The uncontrolled cell of the same task and architecture provides the
  // reference perplexity for each controlled cell.
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    if (!grid.cells[i].ok() || cells[i].strategy == EmbeddingKind::none) continue;
    for (std::size_t j = 0; j < grid.cells.size(); ++j) {
      if (!grid.cells[j].ok() || cells[j].strategy != EmbeddingKind::none) continue;
      if (cells[j].task == cells[i].task && cells[j].arch == cells[i].arch) {
        grid.cells[i].report.baseline_ppl = grid.cells[j].test_ppl;
        break;
      }
    }
  }

  for (const auto& c : grid.cells) {
    if (!c.ok()) continue;
    write_file(c.dir + "/report.txt", c.report.to_text());
    write_file(c.dir + "/report.json", c.report.to_json() + "\n");
  }

  grid.merged_text = render_merged_text(grid.cells);
  grid.merged_json = render_merged_json(grid.cells);
  const std::string workdir = cells.front().workdir;
  fs::create_directories(workdir);
  write_file(workdir + "/report.txt", grid.merged_text);
  write_file(workdir + "/report.json", grid.merged_json);
  return grid;
}

}  // namespace ctrlgen
