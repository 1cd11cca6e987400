#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrlgen/checkpoint.hpp"
#include "ctrlgen/control.hpp"
#include "ctrlgen/data.hpp"
#include "ctrlgen/layers.hpp"
#include "ctrlgen/optim.hpp"

namespace ctrlgen {

// Rating classifier: mean of token embeddings through a one-hidden-layer MLP
// to five rating logits. Small on purpose; it only has to label sentences for
// the sentiment control value.
template <typename S>
class BowClassifier {
 public:
  struct Config {
    int vocab_size = 0;
    int dim = 32;
    int hidden = 64;

    void validate() const {
      if (vocab_size <= kUnkId + 1)
        throw ConfigError(cat("classifier vocab_size must exceed ", kUnkId + 1, ", got ", vocab_size));
      if (dim < 1 || hidden < 1) throw ConfigError("classifier dim and hidden must be positive");
    }

    std::string to_json() const {
      return nlohmann::json{{"vocab_size", vocab_size}, {"dim", dim}, {"hidden", hidden}}.dump();
    }

    static Config from_json(const std::string& text) {
      nlohmann::json j = nlohmann::json::parse(text);
      Config cfg;
      cfg.vocab_size = j.at("vocab_size").get<int>();
      cfg.dim = j.at("dim").get<int>();
      cfg.hidden = j.at("hidden").get<int>();
      return cfg;
    }
  };

  BowClassifier() = default;

  BowClassifier(Config cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    table_ = Tensor<S>::param(Tensor<S>::uniform({cfg_.vocab_size, cfg_.dim}, S(-0.1), S(0.1), rng).value());
    hidden_ = Linear<S>::init(cfg_.dim, cfg_.hidden, rng);
    out_ = Linear<S>::init(cfg_.hidden, 5, rng);
  }

  const Config& config() const { return cfg_; }

  // [1,5] rating logits. Marker tokens do not contribute to the pool.
  Tensor<S> logits(const std::vector<int>& ids) const {
    std::vector<int> content;
    for (int id : ids)
      if (!is_marker(id)) content.push_back(id);
    if (content.empty()) throw DataError("classifier: no content tokens");
    Tensor<S> rows = embedding_lookup(table_, content);
    Tensor<S> pool = Tensor<S>::full({1, static_cast<Eigen::Index>(content.size())},
                                     S(1) / static_cast<S>(content.size()));
    return out_(relu(hidden_(matmul(pool, rows))));
  }

  int score_ids(const std::vector<int>& ids) const {
    Eigen::Index best = 0;
    logits(ids).value().row(0).maxCoeff(&best);
    return static_cast<int>(best) + 1;
  }

  struct TrainStats {
    std::vector<double> epoch_loss;
    double accuracy = 0.0;  // on the training labels
  };

  // labels are ratings 1..5.
  TrainStats fit(const std::vector<std::pair<std::vector<int>, int>>& labeled, int epochs, double lr,
                 int batch_size, std::uint64_t seed) {
    if (labeled.empty()) throw TrainError("classifier: no labeled examples");
    for (const auto& [ids, rating] : labeled)
      if (rating < 1 || rating > 5) throw DataError(cat("classifier: rating ", rating, " outside 1..5"));
    Rng rng(seed);
    Adam<S> opt({table_, hidden_.w, hidden_.b, out_.w, out_.b}, static_cast<S>(lr));
    std::vector<std::size_t> order(labeled.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainStats stats;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[uniform_int(rng, std::size_t{0}, i - 1)]);
      double epoch_loss = 0.0;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        GradGraph<S> graph;
        Tensor<S> loss;
        {
          auto active = graph.activate();
          for (std::size_t k = start; k < end; ++k) {
            const auto& [ids, rating] = labeled[order[k]];
            Tensor<S> one = cross_entropy(logits(ids), {rating - 1}, -1, Reduction::Sum);
            loss = loss.defined() ? add(loss, one) : one;
          }
          loss = scale(loss, S(1) / static_cast<S>(end - start));
        }
        if (!std::isfinite(static_cast<double>(loss.item())))
          throw TrainError(cat("classifier training diverged at epoch ", epoch + 1));
        epoch_loss += static_cast<double>(loss.item()) * static_cast<double>(end - start);
        opt.zero_grad();
        graph.backward(loss);
        opt.step();
      }
      stats.epoch_loss.push_back(epoch_loss / static_cast<double>(labeled.size()));
    }
    long hits = 0;
    for (const auto& [ids, rating] : labeled)
      if (score_ids(ids) == rating) ++hits;
    stats.accuracy = 100.0 * static_cast<double>(hits) / static_cast<double>(labeled.size());
    return stats;
  }

  NamedParams<S> named_params() const {
    NamedParams<S> out;
    out.emplace_back("table", table_);
    hidden_.collect("hidden", out);
    out_.collect("out", out);
    return out;
  }

  void save(const std::string& path) const { save_checkpoint(path, cfg_.to_json(), named_params()); }

  static BowClassifier load(const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path);
    BowClassifier clf(Config::from_json(raw.arch_json), 0);
    NamedParams<S> params = clf.named_params();
    load_checkpoint_into(path, params);
    return clf;
  }

 private:
  Config cfg_;
  Tensor<S> table_;
  Linear<S> hidden_;
  Linear<S> out_;
};

// Adapts a trained classifier to the scorer interface used by evaluation.
class ClassifierScorer : public SentimentScorer {
 public:
  ClassifierScorer(BowClassifier<double> model, Vocabulary vocab)
      : model_(std::move(model)), vocab_(std::move(vocab)) {}

  int score(const std::vector<std::string>& tokens) const override {
    return model_.score_ids(vocab_.encode(tokens));
  }

 private:
  BowClassifier<double> model_;
  Vocabulary vocab_;
};

}  // namespace ctrlgen
