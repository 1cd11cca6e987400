#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrlgen/control.hpp"
#include "ctrlgen/data.hpp"
#include "ctrlgen/embeddings.hpp"
#include "ctrlgen/layers.hpp"

namespace ctrlgen {

enum class ModelArch { lstm, transformer };

inline const char* model_arch_name(ModelArch a) { return a == ModelArch::lstm ? "lstm" : "transformer"; }

inline ModelArch parse_model_arch(const std::string& s) {
  if (s == "lstm") return ModelArch::lstm;
  if (s == "transformer") return ModelArch::transformer;
  throw ConfigError(cat("unknown architecture \"", s, "\""));
}

struct ModelConfig {
  ModelArch arch = ModelArch::lstm;
  int vocab_size = 0;
  int token_dim = 64;
  int hidden = 128;  // LSTM state width per direction
  int layers = 1;
  int n_heads = 4;
  int ffn_mult = 4;
  int max_seq_len = 128;  // longest decoder input the transformer accepts
  bool seq2seq = false;
  double dropout = 0.0;
  ControlKind control = ControlKind::length;
  EmbeddingStrategy desired;  // kind none = uncontrolled model
  EmbeddingStrategy tracker;  // kind none = no running-value input

  bool controlled() const { return desired.kind != EmbeddingKind::none; }
  bool has_tracker() const { return tracker.kind != EmbeddingKind::none; }

  // Width of one decoder step input: token embedding plus both control parts.
  int step_width() const { return token_dim + desired.width() + tracker.width(); }

  void validate() const {
    if (vocab_size <= kUnkId + 1)
      throw ConfigError(cat("vocab_size must exceed ", kUnkId + 1, ", got ", vocab_size));
    if (token_dim < 1 || hidden < 1 || layers < 1)
      throw ConfigError("token_dim, hidden and layers must be positive");
    if (max_seq_len < 1) throw ConfigError(cat("max_seq_len must be positive, got ", max_seq_len));
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError(cat("dropout must be in [0,1), got ", dropout));
    desired.validate();
    tracker.validate();
    if (control == ControlKind::sentiment && has_tracker())
      throw ConfigError("sentiment has no mid-generation value; disable the tracker input");
    if (!controlled() && has_tracker()) throw ConfigError("tracker input requires a desired control");
    if (arch == ModelArch::transformer) {
      if (n_heads < 1) throw ConfigError(cat("n_heads must be positive, got ", n_heads));
      if (step_width() % n_heads != 0)
        throw ConfigError(cat("transformer step width ", step_width(), " (token ", token_dim,
                              " + desired ", desired.width(), " + tracker ", tracker.width(),
                              ") is not divisible by n_heads ", n_heads));
      if (seq2seq && token_dim % n_heads != 0)
        throw ConfigError(cat("encoder width ", token_dim, " is not divisible by n_heads ", n_heads));
      if (ffn_mult < 1) throw ConfigError(cat("ffn_mult must be positive, got ", ffn_mult));
    }
  }

  std::string to_json() const {
    auto strategy = [](const EmbeddingStrategy& e) {
      return nlohmann::json{{"kind", embedding_kind_name(e.kind)},
                            {"dim", e.dim},
                            {"lo", e.value_range.lo},
                            {"hi", e.value_range.hi},
                            {"scale", e.scalar_scale}};
    };
    nlohmann::json j{{"arch", model_arch_name(arch)},
                     {"vocab_size", vocab_size},
                     {"token_dim", token_dim},
                     {"hidden", hidden},
                     {"layers", layers},
                     {"n_heads", n_heads},
                     {"ffn_mult", ffn_mult},
                     {"max_seq_len", max_seq_len},
                     {"seq2seq", seq2seq},
                     {"dropout", dropout},
                     {"control", control_kind_name(control)},
                     {"desired", strategy(desired)},
                     {"tracker", strategy(tracker)}};
    return j.dump();
  }

  static ModelConfig from_json(const std::string& text) {
    auto strategy = [](const nlohmann::json& j) {
      EmbeddingStrategy e;
      e.kind = parse_embedding_kind(j.at("kind").get<std::string>());
      e.dim = j.at("dim").get<int>();
      e.value_range = {j.at("lo").get<int>(), j.at("hi").get<int>()};
      e.scalar_scale = j.at("scale").get<double>();
      return e;
    };
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.arch = parse_model_arch(j.at("arch").get<std::string>());
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.token_dim = j.at("token_dim").get<int>();
    cfg.hidden = j.at("hidden").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.n_heads = j.at("n_heads").get<int>();
    cfg.ffn_mult = j.at("ffn_mult").get<int>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.seq2seq = j.at("seq2seq").get<bool>();
    cfg.dropout = j.at("dropout").get<double>();
    cfg.control = parse_control_kind(j.at("control").get<std::string>());
    cfg.desired = strategy(j.at("desired"));
    cfg.tracker = strategy(j.at("tracker"));
    return cfg;
  }
};

// One training sequence after tokenization: decoder step t consumes
// input_ids[t] plus the desired value and tracker_values[t], and predicts
// gold_ids[t]. tracker_values[t] is the control value of the gold prefix
// already emitted before step t; index 0 holds the empty-prefix value.
struct EncodedExample {
  std::vector<int> source_ids;  // with EOS appended; empty for language-model tasks
  std::vector<std::string> source_toks;
  std::vector<int> input_ids;  // BOS + target
  std::vector<int> gold_ids;   // target + EOS
  std::vector<int> tracker_values;
  int desired = 0;
};

inline EncodedExample encode_example(const Example& ex, const Vocabulary& vocab, const ModelConfig& cfg) {
  EncodedExample enc;
  enc.desired = ex.c;
  if (cfg.seq2seq) {
    if (!ex.has_source()) throw DataError("sequence-to-sequence model needs a source sentence");
    enc.source_ids = vocab.encode(ex.source);
    enc.source_ids.push_back(kEosId);
    enc.source_toks = ex.source;
  }
  enc.input_ids.push_back(kBosId);
  for (int id : vocab.encode(ex.target)) {
    enc.input_ids.push_back(id);
    enc.gold_ids.push_back(id);
  }
  enc.gold_ids.push_back(kEosId);
  if (cfg.has_tracker()) {
    auto tracker = ControlTracker<std::string>::make(cfg.control, ex.source);
    enc.tracker_values.push_back(tracker.value());
    for (std::size_t t = 1; t < enc.input_ids.size(); ++t)
      enc.tracker_values.push_back(tracker.step(ex.target[t - 1]));
  }
  return enc;
}

inline std::vector<EncodedExample> encode_examples(const std::vector<Example>& examples,
                                                   const Vocabulary& vocab, const ModelConfig& cfg) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode_example(ex, vocab, cfg));
  return out;
}

// Autoregressive decoder (language model or sequence-to-sequence) over token
// ids, with the desired control value and the running tracker value joined to
// every step input.
template <typename S>
class DecoderModel {
 public:
  DecoderModel() = default;

  DecoderModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    token_table_ = Tensor<S>::param(
        Tensor<S>::uniform({cfg_.vocab_size, cfg_.token_dim}, S(-0.1), S(0.1), rng).value());
    if (cfg_.controlled()) desired_emb_ = ControlEmbedder<S>(cfg_.desired, rng);
    if (cfg_.has_tracker()) tracker_emb_ = ControlEmbedder<S>(cfg_.tracker, rng);

    if (cfg_.arch == ModelArch::lstm) {
      for (int l = 0; l < cfg_.layers; ++l)
        dec_cells_.push_back(LstmCell<S>::init(l == 0 ? cfg_.step_width() : cfg_.hidden, cfg_.hidden, rng));
      if (cfg_.seq2seq) {
        for (int l = 0; l < cfg_.layers; ++l) {
          const int in = l == 0 ? cfg_.token_dim : 2 * cfg_.hidden;
          enc_fwd_.push_back(LstmCell<S>::init(in, cfg_.hidden, rng));
          enc_bwd_.push_back(LstmCell<S>::init(in, cfg_.hidden, rng));
        }
        for (int l = 0; l < cfg_.layers; ++l) {
          bridge_h_.push_back(Linear<S>::init(2 * cfg_.hidden, cfg_.hidden, rng));
          bridge_c_.push_back(Linear<S>::init(2 * cfg_.hidden, cfg_.hidden, rng));
        }
      }
      proj_ = Linear<S>::init(cfg_.hidden, cfg_.vocab_size, rng);
    } else {
      const int d = cfg_.step_width();
      for (int l = 0; l < cfg_.layers; ++l) {
        TransLayer layer;
        layer.ln1 = LayerNormParams<S>::init(d);
        layer.self = AttentionBlock<S>::init(d, d, cfg_.n_heads, rng);
        if (cfg_.seq2seq) {
          layer.ln_cross = LayerNormParams<S>::init(d);
          layer.cross = AttentionBlock<S>::init(d, cfg_.token_dim, cfg_.n_heads, rng);
        }
        layer.ln2 = LayerNormParams<S>::init(d);
        layer.ffn = FeedForward<S>::init(d, cfg_.ffn_mult, rng);
        trans_layers_.push_back(std::move(layer));
      }
      final_ln_ = LayerNormParams<S>::init(d);
      if (cfg_.seq2seq) {
        for (int l = 0; l < cfg_.layers; ++l) {
          EncLayer layer;
          layer.ln1 = LayerNormParams<S>::init(cfg_.token_dim);
          layer.self = AttentionBlock<S>::init(cfg_.token_dim, cfg_.token_dim, cfg_.n_heads, rng);
          layer.ln2 = LayerNormParams<S>::init(cfg_.token_dim);
          layer.ffn = FeedForward<S>::init(cfg_.token_dim, cfg_.ffn_mult, rng);
          enc_layers_.push_back(std::move(layer));
        }
        enc_final_ln_ = LayerNormParams<S>::init(cfg_.token_dim);
      }
      proj_ = Linear<S>::init(d, cfg_.vocab_size, rng);
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const Tensor<S>& token_table() const { return token_table_; }
  ControlEmbedder<S>& desired_embedder() { return desired_emb_; }
  const ControlEmbedder<S>& desired_embedder() const { return desired_emb_; }

  struct BatchLoss {
    Tensor<S> loss;  // summed token NLL over the batch
    long tokens = 0;
  };

  // Teacher-forced loss. The LSTM path runs the whole batch one timestep at a
  // time; the transformer path runs one sequence at a time. LSTM
  // sequence-to-sequence batches must share one source length.
  BatchLoss batch_loss(const std::vector<const EncodedExample*>& batch, Rng* dropout_rng = nullptr) {
    if (batch.empty()) throw TrainError("batch_loss: empty batch");
    return cfg_.arch == ModelArch::lstm ? lstm_batch_loss(batch, dropout_rng)
                                        : transformer_batch_loss(batch, dropout_rng);
  }

  // ---- incremental decoding ----

  struct DecodeState {
    // lstm
    std::vector<Tensor<S>> h, c;
    // transformer: one growing key/value pair per layer, plus the encoder
    // output for cross attention
    std::vector<MatrixX<S>> k_cache, v_cache;
    Tensor<S> enc;
    long pos = 0;
    Tensor<S> desired_row;
  };

  DecodeState begin(int desired, const std::vector<int>* source_ids = nullptr) {
    DecodeState st;
    if (cfg_.seq2seq && (source_ids == nullptr || source_ids->empty()))
      throw DataError("decode: sequence-to-sequence model needs source ids");
    if (cfg_.controlled()) {
      // Every strategy declares its value range; rejecting out-of-range values
      // here keeps strategies comparable instead of only the table-backed one
      // failing.
      if (!cfg_.desired.value_range.contains(desired))
        throw DataError(cat("desired control value ", desired, " outside declared range ",
                            cfg_.desired.value_range.str()));
      st.desired_row = desired_emb_.embed(desired);
    }
    if (cfg_.arch == ModelArch::lstm) {
      if (cfg_.seq2seq) {
        auto [h0, c0] = encode_lstm({source_ids});
        st.h = std::move(h0);
        st.c = std::move(c0);
      } else {
        for (int l = 0; l < cfg_.layers; ++l) {
          st.h.push_back(Tensor<S>::zeros({1, cfg_.hidden}));
          st.c.push_back(Tensor<S>::zeros({1, cfg_.hidden}));
        }
      }
    } else {
      st.k_cache.resize(static_cast<std::size_t>(cfg_.layers));
      st.v_cache.resize(static_cast<std::size_t>(cfg_.layers));
      if (cfg_.seq2seq) st.enc = encode_transformer(*source_ids, nullptr);
    }
    return st;
  }

  // Feeds one token (with its tracker value) and returns the next-token
  // logits row. The transformer path reproduces the full forward pass through
  // the self-attention key/value cache.
  MatrixX<S> step(DecodeState& st, int token, int tracker_value = 0) {
    Tensor<S> x = assemble_step(token, tracker_value, st);
    if (cfg_.arch == ModelArch::lstm) {
      Tensor<S> cur = x;
      for (std::size_t l = 0; l < dec_cells_.size(); ++l) {
        auto [hn, cn] = dec_cells_[l].step(cur, st.h[l], st.c[l]);
        st.h[l] = hn;
        st.c[l] = cn;
        cur = hn;
      }
      ++st.pos;
      return proj_(cur).value();
    }
    Tensor<S> cur = x;
    for (std::size_t l = 0; l < trans_layers_.size(); ++l) {
      const TransLayer& layer = trans_layers_[l];
      Tensor<S> normed = layer.ln1(cur);
      append_row(st.k_cache[l], layer.self.wk(normed).value());
      append_row(st.v_cache[l], layer.self.wv(normed).value());
      Tensor<S> attended = scaled_dot_product_attention(
          layer.self.wq(normed), Tensor<S>::from_matrix(st.k_cache[l]),
          Tensor<S>::from_matrix(st.v_cache[l]), AttentionOpts{cfg_.n_heads, true});
      cur = add(cur, layer.self.wo(attended));
      if (cfg_.seq2seq) cur = add(cur, layer.cross(layer.ln_cross(cur), st.enc, false));
      cur = add(cur, layer.ffn(layer.ln2(cur)));
    }
    ++st.pos;
    return proj_(final_ln_(cur)).value();
  }

  // Full-sequence logits for one example, [T, vocab].
  Tensor<S> sequence_logits(const EncodedExample& ex) {
    if (cfg_.arch == ModelArch::transformer) {
      Tensor<S> enc;
      if (cfg_.seq2seq) enc = encode_transformer(ex.source_ids, nullptr);
      return transformer_logits(assemble_inputs(ex), enc, nullptr);
    }
    DecodeState st = begin(ex.desired, cfg_.seq2seq ? &ex.source_ids : nullptr);
    MatrixX<S> logits(static_cast<Eigen::Index>(ex.input_ids.size()), cfg_.vocab_size);
    for (std::size_t t = 0; t < ex.input_ids.size(); ++t)
      logits.row(static_cast<Eigen::Index>(t)) =
          step(st, ex.input_ids[t], cfg_.has_tracker() ? ex.tracker_values[t] : 0);
    return Tensor<S>::from_matrix(std::move(logits));
  }

  NamedParams<S> named_params() const {
    NamedParams<S> out;
    out.emplace_back("token.table", token_table_);
    for (auto& p : desired_emb_.params("desired")) out.push_back(p);
    for (auto& p : tracker_emb_.params("tracker")) out.push_back(p);
    if (cfg_.arch == ModelArch::lstm) {
      for (std::size_t l = 0; l < enc_fwd_.size(); ++l) {
        enc_fwd_[l].collect(cat("enc.fwd.l", l), out);
        enc_bwd_[l].collect(cat("enc.bwd.l", l), out);
      }
      for (std::size_t l = 0; l < bridge_h_.size(); ++l) {
        bridge_h_[l].collect(cat("bridge.h.l", l), out);
        bridge_c_[l].collect(cat("bridge.c.l", l), out);
      }
      for (std::size_t l = 0; l < dec_cells_.size(); ++l) dec_cells_[l].collect(cat("dec.l", l), out);
    } else {
      for (std::size_t l = 0; l < enc_layers_.size(); ++l) {
        const EncLayer& e = enc_layers_[l];
        e.ln1.collect(cat("enc.l", l, ".ln1"), out);
        e.self.collect(cat("enc.l", l, ".self"), out);
        e.ln2.collect(cat("enc.l", l, ".ln2"), out);
        e.ffn.collect(cat("enc.l", l, ".ffn"), out);
      }
      if (cfg_.seq2seq) enc_final_ln_.collect("enc.ln", out);
      for (std::size_t l = 0; l < trans_layers_.size(); ++l) {
        const TransLayer& t = trans_layers_[l];
        t.ln1.collect(cat("dec.l", l, ".ln1"), out);
        t.self.collect(cat("dec.l", l, ".self"), out);
        if (cfg_.seq2seq) {
          t.ln_cross.collect(cat("dec.l", l, ".lnc"), out);
          t.cross.collect(cat("dec.l", l, ".cross"), out);
        }
        t.ln2.collect(cat("dec.l", l, ".ln2"), out);
        t.ffn.collect(cat("dec.l", l, ".ffn"), out);
      }
      final_ln_.collect("dec.ln", out);
    }
    proj_.collect("proj", out);
    return out;
  }

  std::vector<Tensor<S>> trainable() const {
    std::vector<Tensor<S>> out;
    for (auto& [name, t] : named_params()) out.push_back(t);
    return out;
  }

  void save(const std::string& path) const { save_checkpoint(path, cfg_.to_json(), named_params()); }

  static DecoderModel load(const std::string& path) {
    RawCheckpoint raw = read_checkpoint(path);
    DecoderModel model(ModelConfig::from_json(raw.arch_json), 0);
    NamedParams<S> params = model.named_params();
    load_checkpoint_into(path, params);
    return model;
  }

 private:
  struct TransLayer {
    LayerNormParams<S> ln1;
    AttentionBlock<S> self;
    LayerNormParams<S> ln_cross;
    AttentionBlock<S> cross;
    LayerNormParams<S> ln2;
    FeedForward<S> ffn;
  };
  struct EncLayer {
    LayerNormParams<S> ln1;
    AttentionBlock<S> self;
    LayerNormParams<S> ln2;
    FeedForward<S> ffn;
  };

  static void append_row(MatrixX<S>& m, const MatrixX<S>& row) {
    m.conservativeResize(m.rows() + 1, row.cols());
    m.row(m.rows() - 1) = row.row(0);
  }

  // Token embedding rows; the transformer adds the positional wave to the
  // token columns before any control columns are attached.
  Tensor<S> embed_tokens(const std::vector<int>& ids, long pos_offset) {
    Tensor<S> e = embedding_lookup(token_table_, ids);
    if (cfg_.arch == ModelArch::transformer) {
      if (pos_offset + static_cast<long>(ids.size()) > cfg_.max_seq_len)
        throw ShapeError(cat("sequence position ", pos_offset + static_cast<long>(ids.size()),
                             " exceeds max_seq_len ", cfg_.max_seq_len));
      MatrixX<S> pos(static_cast<Eigen::Index>(ids.size()), cfg_.token_dim);
      for (Eigen::Index t = 0; t < pos.rows(); ++t)
        detail::fill_sinusoid(pos.data() + t * cfg_.token_dim, static_cast<double>(pos_offset + t),
                              cfg_.token_dim);
      e = add(e, Tensor<S>::from_matrix(std::move(pos)));
    }
    return e;
  }

  Tensor<S> assemble_step(int token, int tracker_value, const DecodeState& st) {
    std::vector<Tensor<S>> parts{embed_tokens({token}, st.pos)};
    if (cfg_.controlled()) parts.push_back(st.desired_row);
    if (cfg_.has_tracker()) parts.push_back(tracker_emb_.embed(tracker_value));
    return parts.size() == 1 ? parts[0] : concat_cols(parts);
  }

  Tensor<S> assemble_inputs(const EncodedExample& ex) {
    const auto T = static_cast<Eigen::Index>(ex.input_ids.size());
    std::vector<Tensor<S>> parts{embed_tokens(ex.input_ids, 0)};
    if (cfg_.controlled()) parts.push_back(tile_rows(desired_emb_.embed(ex.desired), T));
    if (cfg_.has_tracker()) parts.push_back(tracker_emb_.embed_batch(ex.tracker_values));
    return parts.size() == 1 ? parts[0] : concat_cols(parts);
  }

  Tensor<S> maybe_dropout(Tensor<S> x, Rng* rng) {
    if (rng != nullptr && cfg_.dropout > 0.0) return dropout(x, cfg_.dropout, *rng);
    return x;
  }

  // ---- transformer paths ----

  Tensor<S> encode_transformer(const std::vector<int>& source_ids, Rng* rng) {
    Tensor<S> x = embed_tokens(source_ids, 0);
    for (const EncLayer& layer : enc_layers_) {
      Tensor<S> normed = layer.ln1(x);
      x = add(x, maybe_dropout(layer.self(normed, normed, false), rng));
      x = add(x, maybe_dropout(layer.ffn(layer.ln2(x)), rng));
    }
    return enc_final_ln_(x);
  }

  Tensor<S> transformer_logits(Tensor<S> x, const Tensor<S>& enc, Rng* rng) {
    for (const TransLayer& layer : trans_layers_) {
      Tensor<S> normed = layer.ln1(x);
      x = add(x, maybe_dropout(layer.self(normed, normed, true), rng));
      if (cfg_.seq2seq) x = add(x, maybe_dropout(layer.cross(layer.ln_cross(x), enc, false), rng));
      x = add(x, maybe_dropout(layer.ffn(layer.ln2(x)), rng));
    }
    return proj_(final_ln_(x));
  }

  BatchLoss transformer_batch_loss(const std::vector<const EncodedExample*>& batch, Rng* rng) {
    BatchLoss total;
    for (const EncodedExample* ex : batch) {
      Tensor<S> enc;
      if (cfg_.seq2seq) enc = encode_transformer(ex->source_ids, rng);
      Tensor<S> logits = transformer_logits(assemble_inputs(*ex), enc, rng);
      Tensor<S> loss = cross_entropy(logits, ex->gold_ids, -1, Reduction::Sum);
      total.loss = total.loss.defined() ? add(total.loss, loss) : loss;
      total.tokens += static_cast<long>(ex->gold_ids.size());
    }
    return total;
  }

  // ---- lstm paths ----

  // Bidirectional encoder over equal-length sources; the concatenated final
  // states map through per-layer bridges to the decoder start states.
  std::pair<std::vector<Tensor<S>>, std::vector<Tensor<S>>> encode_lstm(
      const std::vector<const std::vector<int>*>& sources) {
    const std::size_t batch = sources.size();
    const std::size_t src_len = sources[0]->size();
    for (const auto* s : sources)
      if (s->size() != src_len)
        throw TrainError(cat("encoder batch mixes source lengths ", src_len, " and ", s->size()));

    std::vector<Tensor<S>> inputs;  // per source position, [B, width]
    for (std::size_t t = 0; t < src_len; ++t) {
      std::vector<int> ids(batch);
      for (std::size_t b = 0; b < batch; ++b) ids[b] = (*sources[b])[t];
      inputs.push_back(embed_tokens(ids, static_cast<long>(t)));
    }

    Tensor<S> h_fwd, c_fwd, h_bwd, c_bwd;
    for (std::size_t l = 0; l < enc_fwd_.size(); ++l) {
      h_fwd = Tensor<S>::zeros({static_cast<Eigen::Index>(batch), cfg_.hidden});
      c_fwd = Tensor<S>::zeros({static_cast<Eigen::Index>(batch), cfg_.hidden});
      h_bwd = Tensor<S>::zeros({static_cast<Eigen::Index>(batch), cfg_.hidden});
      c_bwd = Tensor<S>::zeros({static_cast<Eigen::Index>(batch), cfg_.hidden});
      std::vector<Tensor<S>> out_fwd(src_len), out_bwd(src_len);
      for (std::size_t t = 0; t < src_len; ++t) {
        std::tie(h_fwd, c_fwd) = enc_fwd_[l].step(inputs[t], h_fwd, c_fwd);
        out_fwd[t] = h_fwd;
        const std::size_t r = src_len - 1 - t;
        std::tie(h_bwd, c_bwd) = enc_bwd_[l].step(inputs[r], h_bwd, c_bwd);
        out_bwd[r] = h_bwd;
      }
      for (std::size_t t = 0; t < src_len; ++t) inputs[t] = concat_cols<S>({out_fwd[t], out_bwd[t]});
    }

    std::vector<Tensor<S>> h0, c0;
    Tensor<S> h_cat = concat_cols<S>({h_fwd, h_bwd});
    Tensor<S> c_cat = concat_cols<S>({c_fwd, c_bwd});
    for (std::size_t l = 0; l < bridge_h_.size(); ++l) {
      h0.push_back(ctrlgen::tanh(bridge_h_[l](h_cat)));
      c0.push_back(ctrlgen::tanh(bridge_c_[l](c_cat)));
    }
    return {std::move(h0), std::move(c0)};
  }

  BatchLoss lstm_batch_loss(const std::vector<const EncodedExample*>& batch, Rng* rng) {
    const std::size_t B = batch.size();
    std::size_t t_max = 0;
    for (const auto* ex : batch) t_max = std::max(t_max, ex->input_ids.size());

    std::vector<Tensor<S>> h, c;
    if (cfg_.seq2seq) {
      std::vector<const std::vector<int>*> sources;
      for (const auto* ex : batch) sources.push_back(&ex->source_ids);
      std::tie(h, c) = encode_lstm(sources);
    } else {
      for (int l = 0; l < cfg_.layers; ++l) {
        h.push_back(Tensor<S>::zeros({static_cast<Eigen::Index>(B), cfg_.hidden}));
        c.push_back(Tensor<S>::zeros({static_cast<Eigen::Index>(B), cfg_.hidden}));
      }
    }

    Tensor<S> desired_rows;
    if (cfg_.controlled()) {
      std::vector<int> values(B);
      for (std::size_t b = 0; b < B; ++b) values[b] = batch[b]->desired;
      desired_rows = desired_emb_.embed_batch(values);
    }

    BatchLoss total;
    for (std::size_t t = 0; t < t_max; ++t) {
      std::vector<int> ids(B), targets(B), tracker(cfg_.has_tracker() ? B : 0);
      for (std::size_t b = 0; b < B; ++b) {
        const EncodedExample* ex = batch[b];
        const bool live = t < ex->input_ids.size();
        ids[b] = live ? ex->input_ids[t] : kPadId;
        targets[b] = live ? ex->gold_ids[t] : kPadId;  // pad rows drop out of the loss
        if (cfg_.has_tracker()) tracker[b] = live ? ex->tracker_values[t] : ex->tracker_values.back();
        if (targets[b] != kPadId) ++total.tokens;
      }
      std::vector<Tensor<S>> parts{embed_tokens(ids, static_cast<long>(t))};
      if (cfg_.controlled()) parts.push_back(desired_rows);
      if (cfg_.has_tracker()) parts.push_back(tracker_emb_.embed_batch(tracker));
      Tensor<S> x = parts.size() == 1 ? parts[0] : concat_cols(parts);
      Tensor<S> cur = x;
      for (std::size_t l = 0; l < dec_cells_.size(); ++l) {
        if (l > 0) cur = maybe_dropout(cur, rng);
        auto [hn, cn] = dec_cells_[l].step(cur, h[l], c[l]);
        h[l] = hn;
        c[l] = cn;
        cur = hn;
      }
      Tensor<S> loss = cross_entropy(proj_(maybe_dropout(cur, rng)), targets, kPadId, Reduction::Sum);
      total.loss = total.loss.defined() ? add(total.loss, loss) : loss;
    }
    return total;
  }

  ModelConfig cfg_;
  Tensor<S> token_table_;
  ControlEmbedder<S> desired_emb_;
  ControlEmbedder<S> tracker_emb_;
  // lstm
  std::vector<LstmCell<S>> dec_cells_, enc_fwd_, enc_bwd_;
  std::vector<Linear<S>> bridge_h_, bridge_c_;
  // transformer
  std::vector<TransLayer> trans_layers_;
  std::vector<EncLayer> enc_layers_;
  LayerNormParams<S> final_ln_, enc_final_ln_;
  Linear<S> proj_;
};

}  // namespace ctrlgen
