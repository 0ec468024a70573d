#pragma once

#include <cmath>
#include <vector>

#include "dsco/common.hpp"

// Small dense-network building blocks shared by the toy denoiser and the
// evaluation classifier. Batches are row-major in the sample index:
// an (N x D) matrix holds N samples.

namespace dsco::nn {

/// Fully connected layer: y = x W^T + b.
struct Dense {
  Matrix weight;  // out x in
  Matrix bias;    // 1 x out

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, Rng& rng) : weight(out, in), bias(Matrix::Zero(1, out)) {
    std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / static_cast<double>(in)));
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) weight(r, c) = normal(rng);
  }

  Matrix forward(const Eigen::Ref<const Matrix>& x) const {
    Matrix y = x * weight.transpose();
    y.rowwise() += bias.row(0);
    return y;
  }
};

struct DenseGrad {
  Matrix weight;
  Matrix bias;
};

/// Accumulates parameter gradients and returns the input gradient.
inline Matrix dense_backward(const Dense& layer, const Eigen::Ref<const Matrix>& x,
                             const Eigen::Ref<const Matrix>& dy, DenseGrad& grad) {
  grad.weight = dy.transpose() * x;
  grad.bias = dy.colwise().sum();
  return dy * layer.weight;
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

inline Matrix apply_silu(const Matrix& pre) { return pre.unaryExpr([](double v) { return silu(v); }); }
inline Matrix silu_backward(const Matrix& pre, const Matrix& dy) {
  return dy.cwiseProduct(pre.unaryExpr([](double v) { return silu_grad(v); }));
}

/// Row-wise numerically stable softmax.
inline Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

/// Adam with PyTorch-style bias correction.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Matrix*>& params, const std::vector<const Matrix*>& grads) {
    if (first_.empty()) {
      for (auto* p : params) {
        first_.push_back(Matrix::Zero(p->rows(), p->cols()));
        second_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Matrix& g = *grads[i];
      first_[i] = beta1_ * first_[i] + (1.0 - beta1_) * g;
      second_[i] = beta2_ * second_[i] + (1.0 - beta2_) * g.cwiseAbs2();
      params[i]->array() -=
          lr_ * (first_[i].array() / c1) / ((second_[i].array() / c2).sqrt() + eps_);
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> first_, second_;
};

/// Draws a minibatch of row indices without replacement (partial shuffle).
inline std::vector<Eigen::Index> sample_batch(Rng& rng, Eigen::Index n, Eigen::Index batch) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  const Eigen::Index k = std::min(n, batch);
  for (Eigen::Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

inline Matrix gather_rows(const Eigen::Ref<const Matrix>& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace dsco::nn
