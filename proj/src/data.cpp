#include "ctrlgen/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ctrlgen {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      flush();
    } else if (std::ispunct(ch)) {
      flush();
      out.emplace_back(1, static_cast<char>(ch));
    } else {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  flush();
  return out;
}

Vocabulary::Vocabulary() {
  add(kPadTok);
  add(kBosTok);
  add(kEosTok);
  add(kUnkTok);
}

void Vocabulary::add(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sequences, int min_count) {
  std::unordered_map<std::string, long> counts;
  for (const auto& seq : sequences)
    for (const auto& tok : seq) counts[tok]++;

  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  // Frequency order, ties alphabetical, so ids are reproducible across runs.
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  for (const auto& [tok, n] : ranked) {
    if (n < min_count) continue;
    if (is_marker(tok)) continue;  // never let reserved strings in twice
    v.add(tok);
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw DataError(cat("token id ", id, " outside vocabulary of ", size()));
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int i : ids) tokens.push_back(token(i));
  return tokens;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError(cat("cannot write vocabulary to ", path));
  // Reserved entries are implicit; persist only the learned tail.
  for (int i = kUnkId + 1; i < size(); ++i) out << id_to_token_[static_cast<std::size_t>(i)] << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(cat("cannot read vocabulary from ", path));
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (v.token_to_id_.count(line)) throw DataError(cat("duplicate vocabulary entry '", line, "' in ", path));
    v.add(line);
  }
  return v;
}

namespace {

bool parses_as_int(const std::string& s, int& value) {
  if (s.empty()) return false;
  std::size_t i = s[0] == '-' ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  value = std::stoi(s);
  return true;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::vector<Example> read_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(cat("cannot open ", path));
  std::vector<Example> examples;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_fields(line);
    Example ex;
    std::string source_text, target_text;
    int c = 0;
    if (fields.size() == 1) {
      target_text = fields[0];
    } else if (fields.size() == 2) {
      if (parses_as_int(fields[0], c)) {
        ex.c = c;
        ex.has_c = true;
      } else {
        source_text = fields[0];
      }
      target_text = fields[1];
    } else if (fields.size() == 3) {
      if (!fields[0].empty()) {
        if (!parses_as_int(fields[0], c)) throw DataError(cat(path, ":", lineno, ": control column '", fields[0], "' is not an integer"));
        ex.c = c;
        ex.has_c = true;
      }
      source_text = fields[1];
      target_text = fields[2];
    } else {
      throw DataError(cat(path, ":", lineno, ": expected 1-3 tab-separated fields, got ", fields.size()));
    }
    ex.source = tokenize(source_text);
    ex.target = tokenize(target_text);
    if (ex.target.empty()) throw DataError(cat(path, ":", lineno, ": empty target"));
    examples.push_back(std::move(ex));
  }
  return examples;
}

void write_tsv(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw DataError(cat("cannot write ", path));
  for (const auto& ex : examples) {
    if (ex.has_c) out << ex.c;
    out << '\t' << join(ex.source, " ") << '\t' << join(ex.target, " ") << '\n';
  }
}

void annotate_controls(std::vector<Example>& examples, ControlKind kind) {
  long lineno = 0;
  for (auto& ex : examples) {
    ++lineno;
    switch (kind) {
      case ControlKind::length:
        ex.c = length_value(ex.target);
        ex.has_c = true;
        break;
      case ControlKind::edit:
        if (!ex.has_source()) throw DataError(cat("example ", lineno, ": edit control needs a source sentence"));
        ex.c = jaccard_edit(ex.source, ex.target);
        ex.has_c = true;
        break;
      case ControlKind::sentiment:
        // Ratings come from the dataset, not from the text.
        if (!ex.has_c) throw DataError(cat("example ", lineno, ": sentiment control needs a rating column"));
        break;
    }
  }
}

DataSplits split_by_range(const std::vector<Example>& examples, const RangeSplit& split,
                          const SplitOptions& options) {
  if (examples.empty()) throw DataError("no examples to split");
  for (const auto& ex : examples)
    if (!ex.has_c) throw DataError("split_by_range needs annotated control values");
  if (options.train_frac <= 0 || options.valid_frac < 0 || options.train_frac + options.valid_frac >= 1.0)
    throw DataError(cat("bad split fractions train=", options.train_frac, " valid=", options.valid_frac));

  const std::size_t n = examples.size();

  // Assignment happens per group: singleton groups normally, shared-source
  // groups when requested so near-duplicate pairs never straddle splits.
  std::vector<std::vector<std::size_t>> groups;
  if (options.group_by_source) {
    std::map<std::string, std::vector<std::size_t>> by_source;
    for (std::size_t i = 0; i < n; ++i) by_source[join(examples[i].source, " ")].push_back(i);
    for (auto& [key, ids] : by_source) groups.push_back(std::move(ids));
  } else {
    groups.resize(n);
    for (std::size_t i = 0; i < n; ++i) groups[i] = {i};
  }

  std::vector<std::size_t> order(groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(options.seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[uniform_int(rng, std::size_t{0}, i - 1)]);

  const std::size_t n_train_groups = static_cast<std::size_t>(options.train_frac * static_cast<double>(groups.size()));
  const std::size_t n_valid_groups = static_cast<std::size_t>(options.valid_frac * static_cast<double>(groups.size()));

  std::vector<std::string> assigned(n);
  for (std::size_t gi = 0; gi < order.size(); ++gi) {
    const char* name = gi < n_train_groups ? "train" : gi < n_train_groups + n_valid_groups ? "valid" : "test";
    for (std::size_t i : groups[order[gi]]) assigned[i] = name;
  }

  DataSplits out;
  std::ostringstream manifest;
  for (std::size_t i = 0; i < n; ++i) {
    const Example& ex = examples[i];
    std::string name = assigned[i];
    // Train and valid stay inside the observed interval; everything the model
    // must not see during training is diverted to test.
    if (name != "test" && !split.observed.contains(ex.c)) name = "test";
    if (name == "train")
      out.train.push_back(ex);
    else if (name == "valid")
      out.valid.push_back(ex);
    else
      out.test.push_back(ex);
    nlohmann::json line = {{"id", i}, {"split", name}, {"c", ex.c}};
    manifest << line.dump() << '\n';
  }
  out.manifest = manifest.str();

  if (out.train.empty()) throw DataError(cat("no training examples with control in ", split.observed.str()));

  for (const auto& range : split.evaluated) {
    std::vector<Example> subset;
    for (const auto& ex : out.test)
      if (range.contains(ex.c)) subset.push_back(ex);
    out.eval_intervals.emplace_back(range.str(), std::move(subset));
  }
  return out;
}

}  // namespace ctrlgen
