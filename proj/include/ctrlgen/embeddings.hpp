#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ctrlgen/ops.hpp"
#include "ctrlgen/range.hpp"
#include "ctrlgen/tensor.hpp"

namespace ctrlgen {

enum class EmbeddingKind { none, learnable, sinusoidal, scalar, scalar_repeat };

inline const char* embedding_kind_name(EmbeddingKind k) {
  switch (k) {
    case EmbeddingKind::none: return "none";
    case EmbeddingKind::learnable: return "learnable";
    case EmbeddingKind::sinusoidal: return "sinusoidal";
    case EmbeddingKind::scalar: return "scalar";
    case EmbeddingKind::scalar_repeat: return "scalar_repeat";
  }
  return "?";
}

inline EmbeddingKind parse_embedding_kind(const std::string& s) {
  if (s == "none" || s == "no_control") return EmbeddingKind::none;
  if (s == "learnable") return EmbeddingKind::learnable;
  if (s == "sinusoidal") return EmbeddingKind::sinusoidal;
  if (s == "scalar") return EmbeddingKind::scalar;
  if (s == "scalar_repeat") return EmbeddingKind::scalar_repeat;
  throw ConfigError(cat("unknown embedding strategy \"", s, "\""));
}

// How an integer control value c turns into the vector concatenated into the
// decoder input. value_range must cover every value seen at inference,
// observed or not.
struct EmbeddingStrategy {
  EmbeddingKind kind = EmbeddingKind::none;
  int dim = 8;
  IntRange value_range;
  double scalar_scale = 1.0;  // raw value is the default; scale is off (1.0)

  int width() const {
    switch (kind) {
      case EmbeddingKind::none: return 0;
      case EmbeddingKind::scalar: return 1;
      default: return dim;
    }
  }

  void validate() const {
    if (kind == EmbeddingKind::none) return;
    if (kind == EmbeddingKind::scalar) return;  // dim forced to 1
    if (dim < 1) throw ConfigError(cat("embedding dim must be >= 1, got ", dim));
    if (kind == EmbeddingKind::sinusoidal && dim % 2 != 0)
      throw ConfigError(cat("sinusoidal embedding dim must be even, got ", dim));
  }
};

// Trainable per-value rows; values outside the observed range keep their
// initialization because no gradient ever reaches them.
template <typename S>
struct LearnableTable {
  Tensor<S> rows;  // (c_max - c_min + 1) x d
  int offset = 0;  // c_min

  static LearnableTable init(const IntRange& range, int d, Rng& rng) {
    LearnableTable t;
    t.offset = range.lo;
    t.rows = Tensor<S>::param(
        Tensor<S>::uniform({range.width(), d}, S(-0.1), S(0.1), rng).value());
    return t;
  }

  IntRange range() const { return {offset, offset + static_cast<int>(rows.rows()) - 1}; }
};

template <typename S>
Tensor<S> embed_learnable(int c, const LearnableTable<S>& table) {
  const IntRange r = table.range();
  if (!r.contains(c))
    throw DataError(cat("learnable embedding: control value ", c, " outside range ", r.str()));
  return slice_rows(table.rows, c - table.offset, 1);
}

namespace detail {
// sin/cos pairs with base 10000; if d is odd the last slot takes the unpaired sin.
template <typename S>
void fill_sinusoid(S* out, double pos, int d) {
  for (int i = 0; 2 * i < d; ++i) {
    const double denom = std::pow(10000.0, (2.0 * i) / d);
    out[2 * i] = static_cast<S>(std::sin(pos / denom));
    if (2 * i + 1 < d) out[2 * i + 1] = static_cast<S>(std::cos(pos / denom));
  }
}
}  // namespace detail

template <typename S>
Tensor<S> embed_sinusoidal(int c, int d) {
  if (d < 2 || d % 2 != 0)
    throw DataError(cat("sinusoidal embedding: dim must be even and >= 2, got ", d));
  MatrixX<S> m(1, d);
  detail::fill_sinusoid(m.data(), static_cast<double>(c), d);
  return Tensor<S>::from_matrix(std::move(m));
}

template <typename S>
Tensor<S> embed_scalar(int c, double scalar_scale = 1.0) {
  return Tensor<S>::from_matrix(MatrixX<S>::Constant(1, 1, static_cast<S>(c * scalar_scale)));
}

template <typename S>
Tensor<S> embed_scalar_repeat(int c, int d, double scalar_scale = 1.0) {
  if (d < 1) throw DataError(cat("scalar_repeat embedding: dim must be >= 1, got ", d));
  return Tensor<S>::from_matrix(MatrixX<S>::Constant(1, d, static_cast<S>(c * scalar_scale)));
}

// Binds a strategy to its state (the table, for learnable) and produces the
// per-value or per-batch embedding rows.
template <typename S>
class ControlEmbedder {
 public:
  ControlEmbedder() = default;

  ControlEmbedder(const EmbeddingStrategy& strategy, Rng& rng) : strategy_(strategy) {
    strategy_.validate();
    if (strategy_.kind == EmbeddingKind::scalar) strategy_.dim = 1;
    if (strategy_.kind == EmbeddingKind::learnable)
      table_ = LearnableTable<S>::init(strategy_.value_range, strategy_.dim, rng);
  }

  const EmbeddingStrategy& strategy() const { return strategy_; }
  int width() const { return strategy_.width(); }

  Tensor<S> embed(int c) const {
    switch (strategy_.kind) {
      case EmbeddingKind::none:
        throw DataError("control embedder: no strategy configured");
      case EmbeddingKind::learnable:
        return embed_learnable(c, table_);
      case EmbeddingKind::sinusoidal:
        return embed_sinusoidal<S>(c, strategy_.dim);
      case EmbeddingKind::scalar:
        return embed_scalar<S>(c, strategy_.scalar_scale);
      case EmbeddingKind::scalar_repeat:
        return embed_scalar_repeat<S>(c, strategy_.dim, strategy_.scalar_scale);
    }
    throw DataError("control embedder: unreachable");
  }

  // One row per control value.
  Tensor<S> embed_batch(const std::vector<int>& values) const {
    if (strategy_.kind == EmbeddingKind::learnable) {
      const IntRange r = table_.range();
      std::vector<int> idx;
      idx.reserve(values.size());
      for (int c : values) {
        if (!r.contains(c))
          throw DataError(cat("learnable embedding: control value ", c, " outside range ", r.str()));
        idx.push_back(c - table_.offset);
      }
      return embedding_lookup(table_.rows, std::move(idx));
    }
    MatrixX<S> m(static_cast<Eigen::Index>(values.size()), width());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const int c = values[i];
      switch (strategy_.kind) {
        case EmbeddingKind::sinusoidal:
          detail::fill_sinusoid(m.data() + static_cast<std::ptrdiff_t>(i) * width(),
                                static_cast<double>(c), strategy_.dim);
          break;
        case EmbeddingKind::scalar:
        case EmbeddingKind::scalar_repeat:
          m.row(static_cast<Eigen::Index>(i)).setConstant(static_cast<S>(c * strategy_.scalar_scale));
          break;
        default:
          throw DataError("control embedder: no strategy configured");
      }
    }
    return Tensor<S>::from_matrix(std::move(m));
  }

  bool has_params() const { return strategy_.kind == EmbeddingKind::learnable; }

  std::vector<std::pair<std::string, Tensor<S>>> params(const std::string& prefix) const {
    if (!has_params()) return {};
    return {{prefix + ".table", table_.rows}};
  }

  const LearnableTable<S>& table() const { return table_; }
  LearnableTable<S>& table() { return table_; }

 private:
  EmbeddingStrategy strategy_;
  LearnableTable<S> table_;
};

}  // namespace ctrlgen
