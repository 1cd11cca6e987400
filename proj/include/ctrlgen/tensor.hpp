#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "ctrlgen/util.hpp"

namespace ctrlgen {

template <typename S>
using MatrixX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dimension sizes; rank 1 ([n]) or rank 2 ([rows, cols]).
using Shape = std::vector<Eigen::Index>;

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {
inline std::uint64_t next_tensor_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline std::pair<Eigen::Index, Eigen::Index> storage_dims(const Shape& shape) {
  if (shape.size() == 1) return {1, shape[0]};
  if (shape.size() == 2) return {shape[0], shape[1]};
  throw ShapeError(cat("tensor: rank must be 1 or 2, got shape ", shape_str(shape)));
}
}  // namespace detail

template <typename S>
struct TensorData {
  Shape shape;
  MatrixX<S> value;
  MatrixX<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t id = detail::next_tensor_id();
};

template <typename S>
class GradGraph;

// Shared handle to a dense value participating in reverse-mode differentiation.
// Rank-1 tensors are stored as a single row.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto [r, c] = detail::storage_dims(shape);
    return make(std::move(shape), MatrixX<S>::Zero(r, c), requires_grad);
  }

  static Tensor full(Shape shape, S v) {
    auto [r, c] = detail::storage_dims(shape);
    return make(std::move(shape), MatrixX<S>::Constant(r, c, v), false);
  }

  static Tensor scalar(S v) { return full({1}, v); }

  // Rank-1 tensor from a flat list.
  static Tensor of(std::vector<S> v, bool requires_grad = false) {
    MatrixX<S> m(1, static_cast<Eigen::Index>(v.size()));
    for (Eigen::Index i = 0; i < m.cols(); ++i) m(0, i) = v[static_cast<std::size_t>(i)];
    return make({m.cols()}, std::move(m), requires_grad);
  }

  static Tensor from_matrix(MatrixX<S> m, bool requires_grad = false) {
    Shape shape{m.rows(), m.cols()};
    return make(std::move(shape), std::move(m), requires_grad);
  }

  // Trainable leaf.
  static Tensor param(MatrixX<S> m) {
    Tensor t = from_matrix(std::move(m), true);
    t.d_->grad = MatrixX<S>::Zero(t.rows(), t.cols());
    return t;
  }

  static Tensor uniform(Shape shape, S lo, S hi, Rng& rng, bool requires_grad = false) {
    auto [r, c] = detail::storage_dims(shape);
    MatrixX<S> m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j)
        m(i, j) = static_cast<S>(ctrlgen::uniform(rng, static_cast<double>(lo), static_cast<double>(hi)));
    return make(std::move(shape), std::move(m), requires_grad);
  }

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  Eigen::Index rows() const { return d_->value.rows(); }
  Eigen::Index cols() const { return d_->value.cols(); }
  Eigen::Index size() const { return d_->value.size(); }
  std::uint64_t id() const { return d_->id; }

  const MatrixX<S>& value() const { return d_->value; }
  MatrixX<S>& value() { return d_->value; }

  S item() const {
    if (size() != 1) throw ShapeError(cat("item: tensor is not scalar, shape ", shape_str(shape())));
    return d_->value(0, 0);
  }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) {
    d_->requires_grad = b;
    if (b && d_->grad.size() == 0) d_->grad = MatrixX<S>::Zero(rows(), cols());
  }

  // Marks the tensor as tracked without allocating a grad buffer; backward
  // skips recorded outputs whose grad was never touched.
  void mark_tracked() { d_->requires_grad = true; }

  bool has_grad() const { return d_->grad.size() != 0; }

  const MatrixX<S>& grad() const {
    if (!has_grad()) throw ShapeError(cat("grad: tensor ", d_->id, " has no gradient"));
    return d_->grad;
  }

  // Gradient mutators are const: a Tensor is a handle, and backward closures
  // hold input handles by copy while still accumulating into shared storage.
  MatrixX<S>& mutable_grad() const {
    if (!has_grad()) d_->grad = MatrixX<S>::Zero(rows(), cols());
    return d_->grad;
  }

  template <typename Expr>
  void accum_grad(const Expr& g) const {
    mutable_grad() += g;
  }

  void zero_grad() const {
    if (has_grad()) d_->grad.setZero();
  }

  // Value copy detached from any graph.
  Tensor clone_values() const { return from_matrix(d_->value, false); }

  bool same_data(const Tensor& other) const { return d_ == other.d_; }

 private:
  static Tensor make(Shape shape, MatrixX<S> value, bool requires_grad) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<S>>();
    t.d_->shape = std::move(shape);
    t.d_->value = std::move(value);
    t.d_->requires_grad = requires_grad;
    return t;
  }

  std::shared_ptr<TensorData<S>> d_;
};

// Tape of operation records for one forward pass. Construction and backward are
// single-threaded; the active tape is per-thread.
template <typename S>
class GradGraph {
 public:
  struct Record {
    const char* kind;
    std::vector<std::uint64_t> input_ids;
    std::uint64_t output_id;
    std::vector<Tensor<S>> inputs;
    Tensor<S> output;
    std::function<void()> forward;   // recomputes output value from input values
    std::function<void()> backward;  // accumulates input grads from output grad
  };

  class Activation {
   public:
    explicit Activation(GradGraph* g) : prev_(active_), mine_(g) { active_ = g; }
    ~Activation() { active_ = prev_; }
    Activation(const Activation&) = delete;
    Activation& operator=(const Activation&) = delete;

   private:
    GradGraph* prev_;
    GradGraph* mine_;
  };

  [[nodiscard]] Activation activate() { return Activation(this); }
  static GradGraph* active() { return active_; }

  void record(const char* kind, std::vector<Tensor<S>> inputs, Tensor<S> output,
              std::function<void()> forward, std::function<void()> backward) {
    Record rec;
    rec.kind = kind;
    for (const auto& t : inputs) rec.input_ids.push_back(t.id());
    rec.output_id = output.id();
    rec.inputs = std::move(inputs);
    rec.output = std::move(output);
    rec.forward = std::move(forward);
    rec.backward = std::move(backward);
    records_.push_back(std::move(rec));
  }

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

  bool contains_output(std::uint64_t id) const {
    for (const auto& r : records_)
      if (r.output_id == id) return true;
    return false;
  }

  // Re-runs every forward record in order; bit-identical under identical inputs.
  void replay() {
    for (auto& r : records_) r.forward();
  }

  // Accumulates d(loss)/d(p) into every requires_grad ancestor. Grads sum over
  // multiple uses. The tape is freed afterwards unless free_graph is false.
  void backward(Tensor<S>& loss, bool free_graph = true) {
    if (loss.size() != 1)
      throw ShapeError(cat("backward: loss must be scalar shape [1], got ", shape_str(loss.shape())));
    if (!loss.requires_grad() || !contains_output(loss.id()))
      throw ShapeError("backward: tensor is detached from this graph");
    loss.mutable_grad()(0, 0) += S(1);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (!it->output.has_grad()) continue;  // branch that never reached the loss
      it->backward();
    }
    if (free_graph) clear();
  }

  void clear() { records_.clear(); }

 private:
  std::vector<Record> records_;
  inline static thread_local GradGraph* active_ = nullptr;
};

}  // namespace ctrlgen
