#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ctrlgen/model.hpp"
#include "ctrlgen/optim.hpp"

namespace ctrlgen {

struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  int patience = 3;  // epochs without validation improvement before stopping
  std::uint64_t seed = 1;
  std::string metrics_csv;      // per-epoch log, empty = no file
  std::string checkpoint_path;  // best model on validation, empty = no file
  bool verbose = false;

  void validate() const {
    if (epochs < 1) throw ConfigError(cat("epochs must be positive, got ", epochs));
    if (batch_size < 1) throw ConfigError(cat("batch_size must be positive, got ", batch_size));
    if (lr <= 0) throw ConfigError(cat("learning rate must be positive, got ", lr));
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError(cat("adam betas must be in [0,1), got ", beta1, " and ", beta2));
    if (adam_eps <= 0) throw ConfigError(cat("adam eps must be positive, got ", adam_eps));
    if (clip_norm <= 0) throw ConfigError(cat("clip_norm must be positive, got ", clip_norm));
    if (patience < 1) throw ConfigError(cat("patience must be positive, got ", patience));
  }
};

struct TrainResult {
  std::vector<double> train_loss;  // mean token NLL per epoch
  std::vector<double> valid_ppl;
  double best_valid_ppl = 0.0;
  int best_epoch = 0;  // 1-based
  int epochs_run = 0;
};

// Splits examples into batches. LSTM sequence-to-sequence batches may not mix
// source lengths, so they group by exact source length; the LSTM language
// model groups similar target lengths to limit padding waste. Shuffling
// happens before the stable length sort, so grouping stays deterministic
// given the seed.
template <typename S>
std::vector<std::vector<const EncodedExample*>> make_batches(const DecoderModel<S>& model,
                                                             const std::vector<EncodedExample>& examples,
                                                             int batch_size, Rng* shuffle_rng) {
  std::vector<const EncodedExample*> order;
  order.reserve(examples.size());
  for (const auto& ex : examples) order.push_back(&ex);
  if (shuffle_rng != nullptr)
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[uniform_int(*shuffle_rng, std::size_t{0}, i - 1)]);

  const bool is_lstm = model.config().arch == ModelArch::lstm;
  if (is_lstm && model.config().seq2seq) {
    std::stable_sort(order.begin(), order.end(), [](const EncodedExample* a, const EncodedExample* b) {
      return a->source_ids.size() < b->source_ids.size();
    });
  } else if (is_lstm) {
    std::stable_sort(order.begin(), order.end(), [](const EncodedExample* a, const EncodedExample* b) {
      return a->input_ids.size() < b->input_ids.size();
    });
  }

  std::vector<std::vector<const EncodedExample*>> batches;
  std::vector<const EncodedExample*> cur;
  for (const auto* ex : order) {
    // Never mix source lengths within one sequence-to-sequence LSTM batch.
    if (!cur.empty() && model.config().seq2seq && is_lstm &&
        cur.back()->source_ids.size() != ex->source_ids.size()) {
      batches.push_back(std::move(cur));
      cur.clear();
    }
    cur.push_back(ex);
    if (static_cast<int>(cur.size()) == batch_size) {
      batches.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) batches.push_back(std::move(cur));

  if (shuffle_rng != nullptr)
    for (std::size_t i = batches.size(); i > 1; --i)
      std::swap(batches[i - 1], batches[uniform_int(*shuffle_rng, std::size_t{0}, i - 1)]);
  return batches;
}

// Summed token NLL over a dataset, teacher forced, no gradients.
template <typename S>
std::pair<double, long> dataset_nll(DecoderModel<S>& model, const std::vector<EncodedExample>& examples,
                                    int batch_size = 32) {
  double nll = 0.0;
  long tokens = 0;
  for (const auto& batch : make_batches(model, examples, batch_size, nullptr)) {
    auto bl = model.batch_loss(batch, nullptr);
    nll += static_cast<double>(bl.loss.item());
    tokens += bl.tokens;
  }
  return {nll, tokens};
}

template <typename S>
double dataset_perplexity(DecoderModel<S>& model, const std::vector<EncodedExample>& examples,
                          int batch_size = 32) {
  auto [nll, tokens] = dataset_nll(model, examples, batch_size);
  if (tokens == 0) throw DataError("perplexity over zero tokens");
  return std::exp(nll / static_cast<double>(tokens));
}

// Teacher-forced training with gradient clipping and early stopping on
// validation perplexity. The model ends up holding the best-validation
// parameters, not the last epoch's.
template <typename S>
TrainResult train_model(DecoderModel<S>& model, const std::vector<EncodedExample>& train_set,
                        const std::vector<EncodedExample>& valid_set, const TrainConfig& tc) {
  tc.validate();
  if (train_set.empty()) throw TrainError("training split is empty");
  if (valid_set.empty()) throw TrainError("validation split is empty");

  Rng shuffle_rng(tc.seed);
  Rng dropout_rng(mix_seed(tc.seed, 0x5eed));
  auto optimizer =
      make_optimizer<S>(tc.optimizer, model.trainable(), static_cast<S>(tc.lr), static_cast<S>(tc.beta1),
                        static_cast<S>(tc.beta2), static_cast<S>(tc.adam_eps));
  const bool uses_dropout = model.config().dropout > 0.0;

  std::ofstream csv;
  if (!tc.metrics_csv.empty()) {
    csv.open(tc.metrics_csv);
    if (!csv) throw DataError(cat("cannot write metrics to ", tc.metrics_csv));
    csv << "epoch,train_loss,valid_ppl\n";
  }

  TrainResult result;
  std::vector<MatrixX<S>> best_params;
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    double epoch_nll = 0.0;
    long epoch_tokens = 0;
    long batch_index = 0;
    for (const auto& batch : make_batches(model, train_set, tc.batch_size, &shuffle_rng)) {
      ++batch_index;
      GradGraph<S> graph;
      Tensor<S> loss;
      long tokens = 0;
      {
        auto active = graph.activate();
        auto bl = model.batch_loss(batch, uses_dropout ? &dropout_rng : nullptr);
        tokens = bl.tokens;
        loss = scale(bl.loss, S(1) / static_cast<S>(bl.tokens));
      }
      const double loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value))
        throw TrainError(cat("training diverged: loss ", loss_value, " at epoch ", epoch, " batch ",
                             batch_index));
      epoch_nll += loss_value * static_cast<double>(tokens);
      epoch_tokens += tokens;
      optimizer->zero_grad();
      graph.backward(loss);
      clip_global_norm(optimizer->params(), static_cast<S>(tc.clip_norm));
      optimizer->step();
    }

    const double train_loss = epoch_nll / static_cast<double>(epoch_tokens);
    const double valid_ppl = dataset_perplexity(model, valid_set, tc.batch_size);
    if (!std::isfinite(valid_ppl))
      throw TrainError(cat("training diverged: validation perplexity ", valid_ppl, " at epoch ", epoch));
    result.train_loss.push_back(train_loss);
    result.valid_ppl.push_back(valid_ppl);
    result.epochs_run = epoch;
    if (csv.is_open()) csv << epoch << ',' << train_loss << ',' << valid_ppl << '\n' << std::flush;
    if (tc.verbose)
      std::fprintf(stderr, "epoch %d  train_loss %.4f  valid_ppl %.4f\n", epoch, train_loss, valid_ppl);

    if (result.best_epoch == 0 || valid_ppl < result.best_valid_ppl) {
      result.best_valid_ppl = valid_ppl;
      result.best_epoch = epoch;
      stale_epochs = 0;
      best_params.clear();
      for (const auto& p : optimizer->params()) best_params.push_back(p.value());
      if (!tc.checkpoint_path.empty()) model.save(tc.checkpoint_path);
    } else if (++stale_epochs >= tc.patience) {
      break;
    }
  }

  // Hand back the best-validation weights.
  auto params = optimizer->params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value() = best_params[i];
  return result;
}

}  // namespace ctrlgen
