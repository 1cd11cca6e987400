#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "ctrlgen/tensor.hpp"
#include "ctrlgen/util.hpp"

namespace ctrlgen {

// Rescales all gradients in place when their joint L2 norm exceeds max_norm.
// Returns the norm before clipping.
template <typename S>
S clip_global_norm(std::vector<Tensor<S>>& params, S max_norm) {
  if (max_norm <= S(0)) throw TrainError(cat("clip norm must be positive, got ", max_norm));
  S sq = S(0);
  for (auto& p : params)
    if (p.has_grad()) sq += p.grad().squaredNorm();
  const S norm = std::sqrt(sq);
  if (norm > max_norm) {
    const S scale = max_norm / norm;
    for (auto& p : params)
      if (p.has_grad()) p.mutable_grad() *= scale;
  }
  return norm;
}

template <typename S>
class Optimizer {
 public:
  explicit Optimizer(std::vector<Tensor<S>> params) : params_(std::move(params)) {}
  virtual ~Optimizer() = default;

  virtual void step() = 0;

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  std::vector<Tensor<S>>& params() { return params_; }

 protected:
  std::vector<Tensor<S>> params_;
};

template <typename S>
class Sgd final : public Optimizer<S> {
 public:
  Sgd(std::vector<Tensor<S>> params, S lr) : Optimizer<S>(std::move(params)), lr_(lr) {}

  void step() override {
    for (auto& p : this->params_)
      if (p.has_grad()) p.value() -= lr_ * p.grad();
  }

 private:
  S lr_;
};

// Adam with bias correction. Parameters whose gradient stays exactly zero
// (e.g. never-indexed embedding rows) accumulate zero moments and keep their
// values bit for bit.
template <typename S>
class Adam final : public Optimizer<S> {
 public:
  Adam(std::vector<Tensor<S>> params, S lr = S(1e-3), S beta1 = S(0.9), S beta2 = S(0.999),
       S eps = S(1e-8))
      : Optimizer<S>(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(this->params_.size());
    v_.reserve(this->params_.size());
    for (const auto& p : this->params_) {
      m_.push_back(MatrixX<S>::Zero(p.rows(), p.cols()));
      v_.push_back(MatrixX<S>::Zero(p.rows(), p.cols()));
    }
  }

  void step() override {
    ++t_;
    const S bc1 = S(1) - std::pow(beta1_, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(beta2_, static_cast<S>(t_));
    for (std::size_t i = 0; i < this->params_.size(); ++i) {
      auto& p = this->params_[i];
      if (!p.has_grad()) continue;
      const MatrixX<S>& g = p.grad();
      m_[i] = beta1_ * m_[i] + (S(1) - beta1_) * g;
      v_[i] = beta2_ * v_[i] + (S(1) - beta2_) * g.cwiseProduct(g);
      p.value() -= (lr_ / bc1) * (m_[i].array() / ((v_[i].array() / bc2).sqrt() + eps_)).matrix();
    }
  }

  long steps_taken() const { return t_; }

 private:
  S lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<MatrixX<S>> m_;
  std::vector<MatrixX<S>> v_;
};

enum class OptimizerKind { adam, sgd };

inline const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError(cat("unknown optimizer '", name, "' (use adam or sgd)"));
}

template <typename S>
std::unique_ptr<Optimizer<S>> make_optimizer(OptimizerKind kind, std::vector<Tensor<S>> params, S lr,
                                             S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8)) {
  if (kind == OptimizerKind::adam)
    return std::make_unique<Adam<S>>(std::move(params), lr, beta1, beta2, eps);
  return std::make_unique<Sgd<S>>(std::move(params), lr);
}

}  // namespace ctrlgen
