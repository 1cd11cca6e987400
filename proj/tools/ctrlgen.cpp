// ctrlgen: train and probe length/edit/sentiment-controlled text generators.
//
// A config file (key = value under [section] headers) drives everything;
// flags override file keys, and CTRLGEN_SEED overrides the seed last so a
// sweep script can reseed without editing configs.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctrlgen/config.hpp"
#include "ctrlgen/decode.hpp"
#include "ctrlgen/grid.hpp"
#include "ctrlgen/train.hpp"

namespace fs = std::filesystem;
using namespace ctrlgen;

namespace {

struct CliState {
  std::string config_path;
  std::vector<std::string> overrides;  // key=value, applied in order
  bool verbose = false;

  // subcommand-specific
  std::string out_path;
  std::string model_path;
  std::string vocab_path;
  std::string source_text;
  std::string range_text;
  std::string strategies_text = "learnable,sinusoidal,scalar,scalar_repeat";
  std::string archs_text;
  int desired = 0;
  bool desired_set = false;
  int n_generations = 5;
};

void add_common(CLI::App* sub, CliState& st) {
  sub->add_option("-c,--config", st.config_path, "config file (key = value with [section] headers)");
  sub->add_option("-s,--set", st.overrides, "override a config key, e.g. --set train.lr=0.01");
  sub->add_flag("-v,--verbose", st.verbose, "progress to stderr");
  // Shorthands for the keys every run touches; each is identical to --set.
  static const std::vector<std::pair<std::string, std::string>> mirrors = {
      {"--task", "experiment.task"},       {"--arch", "experiment.arch"},
      {"--strategy", "experiment.strategy"}, {"--seed", "experiment.seed"},
      {"--workdir", "experiment.workdir"}, {"--corpus", "data.corpus"},
      {"--count", "data.count"},           {"--epochs", "train.epochs"},
      {"--lr", "train.lr"},
  };
  for (const auto& [flag, key] : mirrors) {
    const std::string k = key;
    sub->add_option_function<std::string>(
        flag, [&st, k](const std::string& v) { st.overrides.push_back(k + "=" + v); }, "sets " + k);
  }
}

ExperimentConfig load_config(const CliState& st) {
  ConfigMap map = st.config_path.empty() ? ConfigMap{} : ConfigMap::parse_file(st.config_path);
  for (const auto& kv : st.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(cat("override '", kv, "' is not key=value"));
    map.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  ExperimentConfig cfg = ExperimentConfig::from_map(map);
  if (const char* env = std::getenv("CTRLGEN_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(cat("CTRLGEN_SEED '", env, "' is not an unsigned integer"));
    }
  }
  return cfg;
}

std::ostream* log_stream(const CliState& st) { return st.verbose ? &std::cerr : nullptr; }

void write_file_or_die(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(cat("cannot write ", path));
  out << content;
}

// Loads the decoder and its vocabulary, defaulting to the config's cell
// directory so evaluate/generate pick up what train left behind.
std::pair<DecoderModel<double>, Vocabulary> load_model(const ExperimentConfig& cfg, const CliState& st) {
  const std::string dir = cell_dir(cfg);
  const std::string model_path = st.model_path.empty() ? dir + "/model.bin" : st.model_path;
  const std::string vocab_path = st.vocab_path.empty() ? dir + "/vocab.txt" : st.vocab_path;
  if (!fs::exists(model_path))
    throw DataError(cat("no checkpoint at ", model_path, "; run `ctrlgen train` first or pass --model"));
  return {DecoderModel<double>::load(model_path), Vocabulary::load(vocab_path)};
}

int cmd_ingest(const CliState& st) {
  ExperimentConfig cfg = load_config(st);
  if (cfg.corpus.empty()) throw ConfigError("ingest needs data.corpus (or --corpus) pointing at a TSV");
  auto corpus = read_tsv(cfg.corpus);
  annotate_controls(corpus, cfg.task);
  std::map<int, long> histogram;
  for (const auto& ex : corpus) ++histogram[ex.c];
  const std::string out = st.out_path.empty() ? cfg.workdir + "/corpus.tsv" : st.out_path;
  fs::create_directories(fs::path(out).parent_path().empty() ? "." : fs::path(out).parent_path().string());
  write_tsv(out, corpus);
  std::printf("wrote %zu examples to %s\n", corpus.size(), out.c_str());
  for (const auto& [c, n] : histogram) std::printf("  c=%d: %ld\n", c, n);
  return 0;
}

int cmd_synth(const CliState& st) {
  ExperimentConfig cfg = load_config(st);
  SynthParams params = synth_params_for(cfg);
  SynthMeta meta;
  const auto corpus = synth_corpus(cfg.task, params, cfg.seed, &meta);
  const std::string out =
      st.out_path.empty() ? cat(cfg.workdir, "/synth-", control_kind_name(cfg.task), ".tsv") : st.out_path;
  const auto parent = fs::path(out).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_tsv(out, corpus);
  if (!meta.lexicon.empty() || !meta.synonyms.empty()) meta.save(out + ".meta.json");
  std::printf("wrote %zu examples to %s\n", corpus.size(), out.c_str());
  return 0;
}

int cmd_train(const CliState& st) {
  ExperimentConfig cfg = load_config(st);
  cfg.validate();
  const std::string dir = cell_dir(cfg);
  fs::create_directories(dir);
  write_file_or_die(dir + "/config.txt", cfg.canonical());
  const CellData data = prepare_data(cfg);
  if (st.verbose)
    std::cerr << "train/valid/test " << data.splits.train.size() << "/" << data.splits.valid.size() << "/"
              << data.splits.test.size() << ", vocab " << data.vocab.size() << "\n";
  auto [model, result] = train_decoder(cfg, data, dir, log_stream(st));
  std::printf("best valid ppl %.3f at epoch %d (%d epochs run); artifacts in %s\n", result.best_valid_ppl,
              result.best_epoch, result.epochs_run, dir.c_str());
  return 0;
}

int cmd_evaluate(const CliState& st) {
  ExperimentConfig cfg = load_config(st);
  cfg.validate();
  auto [model, vocab] = load_model(cfg, st);
  CellData data = prepare_data(cfg);
  data.vocab = vocab;  // the checkpoint's vocabulary, not a rebuilt one
  const auto scorer = make_scorer(cfg, data, log_stream(st));
  EvalOutcome out = evaluate_decoder(cfg, data, model, scorer.get());
  std::fputs(out.report.to_text().c_str(), stdout);
  std::printf("test ppl (all intervals): %.3f\n", out.test_ppl);
  const std::string dir = cell_dir(cfg);
  if (fs::exists(dir)) {
    write_file_or_die(dir + "/report.txt", out.report.to_text());
    write_file_or_die(dir + "/report.json", out.report.to_json() + "\n");
  }
  return 0;
}

int cmd_generate(const CliState& st) {
  ExperimentConfig cfg = load_config(st);
  cfg.validate();
  if (!st.desired_set && cfg.strategy != EmbeddingKind::none)
    throw ConfigError("generate needs --desired for a controlled model");
  auto [model, vocab] = load_model(cfg, st);

  std::vector<int> source_ids;
  std::vector<std::string> source_toks;
  if (model.config().seq2seq) {
    if (st.source_text.empty()) throw ConfigError("generate needs --source for a sequence-to-sequence model");
    source_toks = tokenize(st.source_text);
    source_ids = vocab.encode(source_toks);
    source_ids.push_back(kEosId);
  }

  const DecodeConfig dc = cfg.effective_decode();
  for (int i = 0; i < st.n_generations; ++i) {
    Generation gen = generate(model, vocab, st.desired, model.config().seq2seq ? &source_ids : nullptr,
                              model.config().seq2seq ? &source_toks : nullptr, dc, mix_seed(cfg.seed, i));
    std::printf("c=%d\t%s\n", st.desired, join(gen.tokens).c_str());
  }
  return 0;
}

int cmd_curve(const CliState& st) {
  ExperimentConfig cfg = load_config(st);
  cfg.validate();
  auto [model, vocab] = load_model(cfg, st);
  IntRange range = cfg.split.observed;
  for (const auto& r : cfg.split.evaluated) {
    range.lo = std::min(range.lo, r.lo);
    range.hi = std::max(range.hi, r.hi);
  }
  if (!st.range_text.empty()) range = IntRange::parse(st.range_text);

  std::unique_ptr<SentimentScorer> scorer;
  if (cfg.task == ControlKind::sentiment) {
    CellData data = prepare_data(cfg);
    data.vocab = vocab;
    scorer = make_scorer(cfg, data, log_stream(st));
  }
  CurveResult curve =
      emit_curve(model, vocab, range, cfg.curve_samples, cfg.effective_decode(), cfg.seed, scorer.get());
  if (st.out_path.empty()) {
    std::fputs(curve.to_csv().c_str(), stdout);
  } else {
    write_file_or_die(st.out_path, curve.to_csv());
    std::printf("wrote curve to %s\n", st.out_path.c_str());
  }
  return 0;
}

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_grid(const CliState& st) {
  ExperimentConfig base = load_config(st);
  std::vector<EmbeddingKind> strategies;
  for (const auto& s : split_csv(st.strategies_text)) strategies.push_back(parse_embedding_kind(s));
  if (strategies.empty()) throw ConfigError("grid needs at least one strategy");
  std::vector<ModelArch> archs;
  for (const auto& s : split_csv(st.archs_text.empty() ? model_arch_name(base.arch) : st.archs_text))
    archs.push_back(parse_model_arch(s));

  GridResult grid = run_grid(grid_cells(base, strategies, archs), log_stream(st));
  std::fputs(grid.merged_text.c_str(), stdout);
  std::printf("merged report in %s/report.txt\n", base.workdir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"controlled text generation: scalar and embedded control strategies"};
  app.require_subcommand(1);

  CliState st;
  int rc = 0;

  auto* ingest = app.add_subcommand("ingest", "normalize a TSV corpus and annotate control values");
  add_common(ingest, st);
  ingest->add_option("-o,--out", st.out_path, "output TSV path");
  ingest->callback([&] { rc = cmd_ingest(st); });

  auto* synth = app.add_subcommand("synth", "write a synthetic corpus for the configured task");
  add_common(synth, st);
  synth->add_option("-o,--out", st.out_path, "output TSV path");
  synth->callback([&] { rc = cmd_synth(st); });

  auto* train = app.add_subcommand("train", "train one model; artifacts go to the config's cell dir");
  add_common(train, st);
  train->callback([&] { rc = cmd_train(st); });

  auto* evaluate = app.add_subcommand("evaluate", "report ppl/acc/mse/bleu per evaluation interval");
  add_common(evaluate, st);
  evaluate->add_option("--model", st.model_path, "checkpoint path (default: cell dir)");
  evaluate->add_option("--vocab", st.vocab_path, "vocabulary path (default: cell dir)");
  evaluate->callback([&] { rc = cmd_evaluate(st); });

  auto* generate = app.add_subcommand("generate", "decode from a trained model");
  add_common(generate, st);
  generate->add_option("--model", st.model_path, "checkpoint path (default: cell dir)");
  generate->add_option("--vocab", st.vocab_path, "vocabulary path (default: cell dir)");
  generate->add_option("-d,--desired", st.desired, "desired control value")
      ->each([&](const std::string&) { st.desired_set = true; });
  generate->add_option("-n", st.n_generations, "number of generations");
  generate->add_option("--source", st.source_text, "source sentence (sequence-to-sequence tasks)");
  generate->callback([&] { rc = cmd_generate(st); });

  auto* curve = app.add_subcommand("curve", "sweep desired values and record realized control values");
  add_common(curve, st);
  curve->add_option("--model", st.model_path, "checkpoint path (default: cell dir)");
  curve->add_option("--vocab", st.vocab_path, "vocabulary path (default: cell dir)");
  curve->add_option("--range", st.range_text, "desired range lo..hi (default: observed+evaluated hull)");
  curve->add_option("-o,--out", st.out_path, "CSV output path (default: stdout)");
  curve->callback([&] { rc = cmd_curve(st); });

  auto* grid = app.add_subcommand("grid", "train and evaluate a strategy x architecture grid");
  add_common(grid, st);
  grid->add_option("--strategies", st.strategies_text, "comma-separated strategies");
  grid->add_option("--archs", st.archs_text, "comma-separated architectures (default: config arch)");
  grid->callback([&] { rc = cmd_grid(st); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const TrainError& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
