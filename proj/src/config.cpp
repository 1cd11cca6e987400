#include "ctrlgen/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ctrlgen {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string strip_quotes(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

}  // namespace

ConfigMap ConfigMap::parse_string(const std::string& text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line, section;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ConfigError(cat("config line ", lineno, ": malformed section header '", t, "'"));
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(cat("config line ", lineno, ": expected key = value, got '", t, "'"));
    const std::string key = trim(t.substr(0, eq));
    const std::string value = strip_quotes(trim(t.substr(eq + 1)));
    if (key.empty()) throw ConfigError(cat("config line ", lineno, ": empty key"));
    map.set(section.empty() ? key : section + "." + key, value);
  }
  return map;
}

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(cat("cannot open config file ", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

void ConfigMap::set(const std::string& key, const std::string& value) { entries_[key] = value; }

std::string ConfigMap::get_str(const std::string& key, const std::string& fallback) {
  read_.insert(key);
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

int ConfigMap::get_int(const std::string& key, int fallback) {
  const std::string s = get_str(key, "");
  if (s.empty()) return fallback;
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(cat(key, ": '", s, "' is not an integer"));
  }
}

double ConfigMap::get_double(const std::string& key, double fallback) {
  const std::string s = get_str(key, "");
  if (s.empty()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(cat(key, ": '", s, "' is not a number"));
  }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
  const std::string s = get_str(key, "");
  if (s.empty()) return fallback;
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(cat(key, ": '", s, "' is not a boolean"));
}

std::uint64_t ConfigMap::get_u64(const std::string& key, std::uint64_t fallback) {
  const std::string s = get_str(key, "");
  if (s.empty()) return fallback;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(cat(key, ": '", s, "' is not an unsigned integer"));
  }
}

IntRange ConfigMap::get_range(const std::string& key, const IntRange& fallback) {
  const std::string s = get_str(key, "");
  if (s.empty()) return fallback;
  try {
    return IntRange::parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError(cat(key, ": ", e.what()));
  }
}

std::vector<IntRange> ConfigMap::get_ranges(const std::string& key, const std::vector<IntRange>& fallback) {
  std::string s = get_str(key, "");
  if (s.empty()) return fallback;
  if (s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<IntRange> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = strip_quotes(trim(item));
    if (item.empty()) continue;
    try {
      out.push_back(IntRange::parse(item));
    } catch (const ConfigError& e) {
      throw ConfigError(cat(key, ": ", e.what()));
    }
  }
  if (out.empty()) throw ConfigError(cat(key, ": no ranges in '", s, "'"));
  return out;
}

std::vector<std::string> ConfigMap::unread_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : entries_)
    if (!read_.count(key)) out.push_back(key);
  return out;
}

ExperimentConfig ExperimentConfig::from_map(ConfigMap& map) {
  ExperimentConfig cfg;
  cfg.task = parse_control_kind(map.get_str("experiment.task", control_kind_name(cfg.task)));
  cfg.arch = parse_model_arch(map.get_str("experiment.arch", model_arch_name(cfg.arch)));
  cfg.strategy = parse_embedding_kind(map.get_str("experiment.strategy", "scalar"));
  cfg.seed = map.get_u64("experiment.seed", cfg.seed);
  cfg.workdir = map.get_str("experiment.workdir", cfg.workdir);

  cfg.corpus = map.get_str("data.corpus", cfg.corpus);
  cfg.synth_count = map.get_int("data.count", cfg.synth_count);
  const IntRange default_observed = cfg.task == ControlKind::edit      ? IntRange{0, 7}
                                    : cfg.task == ControlKind::sentiment ? IntRange{1, 5}
                                                                         : IntRange{3, 12};
  cfg.split.observed = map.get_range("data.observed", default_observed);
  std::vector<IntRange> default_eval{cfg.split.observed};
  if (cfg.task == ControlKind::length) default_eval.push_back({13, 18});
  if (cfg.task == ControlKind::edit) default_eval.push_back({8, 10});
  cfg.split.evaluated = map.get_ranges("data.evaluated", default_eval);
  cfg.min_count = map.get_int("data.min_count", cfg.min_count);
  cfg.max_target_len = map.get_int("data.max_target_len", cfg.max_target_len);
  cfg.train_frac = map.get_double("data.train_frac", cfg.train_frac);
  cfg.valid_frac = map.get_double("data.valid_frac", cfg.valid_frac);
  cfg.source_lengths = map.get_range("data.source_lengths", cfg.source_lengths);
  cfg.edits = map.get_range("data.edits", cfg.edits);

  cfg.token_dim = map.get_int("model.token_dim", cfg.token_dim);
  cfg.hidden = map.get_int("model.hidden", cfg.hidden);
  cfg.layers = map.get_int("model.layers", cfg.layers);
  cfg.n_heads = map.get_int("model.n_heads", cfg.n_heads);
  cfg.ffn_mult = map.get_int("model.ffn_mult", cfg.ffn_mult);
  cfg.max_seq_len = map.get_int("model.max_seq_len", cfg.max_seq_len);
  cfg.control_dim = map.get_int("model.control_dim", cfg.control_dim);
  cfg.scalar_scale = map.get_double("model.scalar_scale", cfg.scalar_scale);
  cfg.dropout = map.get_double("model.dropout", cfg.dropout);
  cfg.tracker = map.get_bool("model.tracker", cfg.tracker);

  cfg.train.epochs = map.get_int("train.epochs", cfg.train.epochs);
  cfg.train.batch_size = map.get_int("train.batch_size", cfg.train.batch_size);
  cfg.train.lr = map.get_double("train.lr", cfg.train.lr);
  cfg.train.optimizer = parse_optimizer(map.get_str("train.optimizer", optimizer_name(cfg.train.optimizer)));
  cfg.train.beta1 = map.get_double("train.beta1", cfg.train.beta1);
  cfg.train.beta2 = map.get_double("train.beta2", cfg.train.beta2);
  cfg.train.adam_eps = map.get_double("train.eps", cfg.train.adam_eps);
  cfg.train.clip_norm = map.get_double("train.clip_norm", cfg.train.clip_norm);
  cfg.train.patience = map.get_int("train.patience", cfg.train.patience);

  if (map.has("decode.mode")) {
    cfg.decode.mode = parse_decode_mode(map.get_str("decode.mode", ""));
    cfg.decode_mode_set = true;
  }
  cfg.decode.temperature = map.get_double("decode.temperature", cfg.decode.temperature);
  if (map.has("decode.max_len")) {
    cfg.decode.max_len = map.get_int("decode.max_len", 0);
    cfg.decode_max_len_set = true;
  }
  cfg.curve_samples = map.get_int("curve.samples", cfg.curve_samples);

  const auto unread = map.unread_keys();
  if (!unread.empty()) throw ConfigError(cat("unknown config keys: ", join(unread, ", ")));
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (split.observed.lo > split.observed.hi)
    throw ConfigError(cat("observed range ", split.observed.str(), " is inverted"));
  for (const auto& r : split.evaluated)
    if (r.lo > r.hi) throw ConfigError(cat("evaluated range ", r.str(), " is inverted"));
  if (split.evaluated.empty()) throw ConfigError("at least one evaluated range is required");
  if (train_frac <= 0 || valid_frac <= 0 || train_frac + valid_frac >= 1.0)
    throw ConfigError(cat("split fractions train=", train_frac, " valid=", valid_frac,
                          " must be positive and leave room for test"));
  if (synth_count < 10) throw ConfigError(cat("data.count must be at least 10, got ", synth_count));
  if (curve_samples < 1) throw ConfigError(cat("curve.samples must be positive, got ", curve_samples));
  if (task == ControlKind::sentiment && (split.observed.lo < 1 || split.observed.hi > 5))
    throw ConfigError(cat("sentiment ratings live in 1..5, observed is ", split.observed.str()));
  train.validate();
  effective_decode().validate();
  // Surface model shape problems (head divisibility above all) at parse time.
  model_config(kUnkId + 2).validate();
}

DecodeConfig ExperimentConfig::effective_decode() const {
  DecodeConfig dc = decode;
  if (!decode_mode_set) dc.mode = seq2seq() ? DecodeMode::greedy : DecodeMode::temperature;
  if (!decode_max_len_set) {
    if (task == ControlKind::length) {
      int top = split.observed.hi;
      for (const auto& r : split.evaluated) top = std::max(top, r.hi);
      dc.max_len = (3 * top + 1) / 2;  // 1.5x the top evaluated length
    } else {
      dc.max_len = 50;
    }
  }
  return dc;
}

ModelConfig ExperimentConfig::model_config(int vocab_size) const {
  ModelConfig m;
  m.arch = arch;
  m.vocab_size = vocab_size;
  m.token_dim = token_dim;
  m.hidden = hidden;
  m.layers = layers;
  m.n_heads = n_heads;
  m.ffn_mult = ffn_mult;
  m.max_seq_len = max_seq_len;
  m.seq2seq = seq2seq();
  m.dropout = dropout;
  m.control = task;
  if (strategy != EmbeddingKind::none) {
    IntRange hull = split.observed;
    for (const auto& r : split.evaluated) {
      hull.lo = std::min(hull.lo, r.lo);
      hull.hi = std::max(hull.hi, r.hi);
    }
    m.desired = EmbeddingStrategy{strategy, control_dim, hull, scalar_scale};
    if (tracker && task != ControlKind::sentiment) {
      // The running value can pass the desired range: lengths grow to the
      // decode cap, edit values span the whole scale.
      IntRange tracker_range =
          task == ControlKind::edit
              ? IntRange{0, 10}
              : IntRange{0, std::max({hull.hi, effective_decode().max_len, effective_max_target_len()})};
      m.tracker = EmbeddingStrategy{strategy, control_dim, tracker_range, scalar_scale};
    }
  }
  return m;
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream out;
  out << "task = " << control_kind_name(task) << '\n';
  out << "arch = " << model_arch_name(arch) << '\n';
  out << "strategy = " << (strategy == EmbeddingKind::none ? "no_control" : embedding_kind_name(strategy))
      << '\n';
  out << "seed = " << seed << '\n';
  out << "corpus = " << corpus << '\n';
  out << "count = " << synth_count << '\n';
  out << "observed = " << split.observed.str() << '\n';
  std::vector<std::string> ranges;
  for (const auto& r : split.evaluated) ranges.push_back(r.str());
  out << "evaluated = " << join(ranges, ", ") << '\n';
  out << "min_count = " << min_count << '\n';
  out << "max_target_len = " << effective_max_target_len() << '\n';
  out << "train_frac = " << train_frac << '\n';
  out << "valid_frac = " << valid_frac << '\n';
  out << "source_lengths = " << source_lengths.str() << '\n';
  out << "edits = " << edits.str() << '\n';
  out << "token_dim = " << token_dim << '\n';
  out << "hidden = " << hidden << '\n';
  out << "layers = " << layers << '\n';
  out << "n_heads = " << n_heads << '\n';
  out << "ffn_mult = " << ffn_mult << '\n';
  out << "max_seq_len = " << max_seq_len << '\n';
  out << "control_dim = " << control_dim << '\n';
  out << "scalar_scale = " << scalar_scale << '\n';
  out << "dropout = " << dropout << '\n';
  out << "tracker = " << (tracker ? "true" : "false") << '\n';
  out << "epochs = " << train.epochs << '\n';
  out << "batch_size = " << train.batch_size << '\n';
  out << "lr = " << train.lr << '\n';
  out << "optimizer = " << optimizer_name(train.optimizer) << '\n';
  out << "beta1 = " << train.beta1 << '\n';
  out << "beta2 = " << train.beta2 << '\n';
  out << "eps = " << train.adam_eps << '\n';
  out << "clip_norm = " << train.clip_norm << '\n';
  out << "patience = " << train.patience << '\n';
  // Decode mode, temperature, and curve sample count stay out on purpose:
  // they only shape evaluation, so changing them must not orphan a trained
  // checkpoint. max_len stays in because the tracker embedding's value range
  // (and with it the learnable table size) depends on it.
  out << "max_len = " << effective_decode().max_len << '\n';
  return out.str();
}

std::string ExperimentConfig::cell_name() const {
  return cat(control_kind_name(task), "-", model_arch_name(arch), "-",
             strategy == EmbeddingKind::none ? "no_control" : embedding_kind_name(strategy));
}

}  // namespace ctrlgen
