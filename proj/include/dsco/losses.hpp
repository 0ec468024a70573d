#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dsco/common.hpp"

// Noise-optimization objectives. Every loss returns its value together with
// the gradient w.r.t. its input set; sets are (samples x features) matrices.

namespace dsco {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct LossResult {
  Scalar value = Scalar(0);
  MatrixX<Scalar> grad;
  /// Rows whose gradient was replaced by a zero subgradient.
  std::size_t degenerate_rows = 0;
};

/// |x| + x^2
template <typename Scalar>
Scalar absn2(Scalar x) {
  return std::abs(x) + x * x;
}

/// sign(x) (1 + 2|x|), defined as 0 at x == 0.
template <typename Scalar>
Scalar absn2_grad(Scalar x) {
  if (x == Scalar(0)) return Scalar(0);
  return (x > Scalar(0) ? Scalar(1) : Scalar(-1)) + Scalar(2) * x;
}

/// sum_s absn2(||eps_s|| - sqrt(d)) over the rows of `noise`; d = cols.
/// All-zero rows contribute their value but get a zero subgradient.
template <typename Scalar>
LossResult<Scalar> loss_reality(const Eigen::Ref<const MatrixX<Scalar>>& noise) {
  if (noise.rows() < 1) throw std::invalid_argument("loss_reality: empty noise batch");
  const Scalar target = std::sqrt(static_cast<Scalar>(noise.cols()));
  LossResult<Scalar> out;
  out.grad = MatrixX<Scalar>::Zero(noise.rows(), noise.cols());
  for (Eigen::Index s = 0; s < noise.rows(); ++s) {
    const Scalar norm = noise.row(s).norm();
    out.value += absn2(norm - target);
    if (norm == Scalar(0)) {
      ++out.degenerate_rows;
      continue;
    }
    out.grad.row(s) = (absn2_grad(norm - target) / norm) * noise.row(s);
  }
  return out;
}

/// Stable ascending argsort; ties keep the original index order.
template <typename Derived>
std::vector<Eigen::Index> stable_argsort(const Eigen::DenseBase<Derived>& values) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return values(a) < values(b); });
  return order;
}

/// Smallest r >= 1 with (r * n_targets) % n_surrogate == 0 and
/// r * n_targets / n_surrogate >= min_ratio.
inline std::size_t replication_factor(std::size_t n_targets, std::size_t n_surrogate, std::size_t min_ratio) {
  if (n_targets == 0 || n_surrogate == 0) throw std::invalid_argument("replication_factor: empty set");
  for (std::size_t r = 1;; ++r) {
    const std::size_t total = r * n_targets;
    if (total % n_surrogate == 0 && total / n_surrogate >= min_ratio) return r;
  }
}

/// Normalized, pooled features of the diffused targets at one step together
/// with the statistics used to normalize them and the per-channel chunk
/// means each surrogate rank is pulled toward.
template <typename Scalar>
struct DiffusedReference {
  MatrixX<Scalar> features;     // N_diff x J, normalized
  VectorX<Scalar> mean;         // J
  VectorX<Scalar> std;          // J, floored
  MatrixX<Scalar> chunk_means;  // N_S x J; row s = mean of the s-th sorted chunk
  std::size_t n_surrogate = 0;
  std::size_t n_chunk = 0;

  std::size_t n_diff() const { return static_cast<std::size_t>(features.rows()); }
};

/// Builds the reference from raw pooled features (N_diff x J). N_diff must
/// be a multiple of n_surrogate.
template <typename Scalar>
DiffusedReference<Scalar> make_reference(const Eigen::Ref<const MatrixX<Scalar>>& raw, std::size_t n_surrogate,
                                         Scalar std_floor = Scalar(1e-6)) {
  if (raw.rows() == 0 || n_surrogate == 0) throw std::invalid_argument("make_reference: empty input");
  if (static_cast<std::size_t>(raw.rows()) % n_surrogate != 0)
    throw std::invalid_argument("make_reference: N_diff must be a multiple of N_S");
  DiffusedReference<Scalar> ref;
  ref.n_surrogate = n_surrogate;
  ref.n_chunk = static_cast<std::size_t>(raw.rows()) / n_surrogate;
  ref.mean = raw.colwise().mean().transpose();
  const MatrixX<Scalar> centered = raw.rowwise() - ref.mean.transpose();
  ref.std = (centered.cwiseAbs2().colwise().sum().transpose() / static_cast<Scalar>(raw.rows()))
                .cwiseSqrt()
                .cwiseMax(std_floor);
  ref.features = centered.array().rowwise() / ref.std.transpose().array();
  set_chunk_means(ref);
  return ref;
}

/// Recomputes chunk_means from `features` (sorted per channel, chunked into
/// n_surrogate groups of n_chunk).
template <typename Scalar>
void set_chunk_means(DiffusedReference<Scalar>& ref) {
  const auto ns = static_cast<Eigen::Index>(ref.n_surrogate);
  const auto nc = static_cast<Eigen::Index>(ref.n_chunk);
  if (ns * nc != ref.features.rows()) throw std::invalid_argument("reference: N_diff != N_S * N_chunk");
  ref.chunk_means.resize(ns, ref.features.cols());
  for (Eigen::Index j = 0; j < ref.features.cols(); ++j) {
    VectorX<Scalar> col = ref.features.col(j);
    std::sort(col.data(), col.data() + col.size());
    for (Eigen::Index s = 0; s < ns; ++s) ref.chunk_means(s, j) = col.segment(s * nc, nc).mean();
  }
}

/// Channel-wise 1-D optimal-transport alignment: per channel the s-th
/// smallest surrogate value is paired with the s-th chunk mean, and the
/// loss is N_S * sum_s absn2(difference), summed over channels. Gradients
/// are routed back through the sort permutation.
template <typename Scalar>
LossResult<Scalar> loss_channel_align(const Eigen::Ref<const MatrixX<Scalar>>& normalized,
                                      const DiffusedReference<Scalar>& ref) {
  require_shape(normalized.cols() == ref.chunk_means.cols(), "loss_channel_align: channel count mismatch");
  require_shape(static_cast<std::size_t>(normalized.rows()) == ref.n_surrogate,
                "loss_channel_align: surrogate count differs from the reference's N_S");
  const auto ns = static_cast<Scalar>(ref.n_surrogate);
  LossResult<Scalar> out;
  out.grad = MatrixX<Scalar>::Zero(normalized.rows(), normalized.cols());
  for (Eigen::Index j = 0; j < normalized.cols(); ++j) {
    const auto order = stable_argsort(normalized.col(j));
    for (std::size_t s = 0; s < order.size(); ++s) {
      const Scalar diff = normalized(order[s], j) - ref.chunk_means(static_cast<Eigen::Index>(s), j);
      out.value += ns * absn2(diff);
      out.grad(order[s], j) = ns * absn2_grad(diff);
    }
  }
  return out;
}

/// lambda_align * loss_channel_align of the raw pooled surrogate features
/// normalized by the reference statistics; gradient w.r.t. the raw features.
template <typename Scalar>
LossResult<Scalar> loss_align_da(const Eigen::Ref<const MatrixX<Scalar>>& raw, const DiffusedReference<Scalar>& ref,
                                 Scalar lambda_align) {
  require_shape(raw.cols() == ref.mean.size(), "loss_align_da: channel count mismatch");
  const MatrixX<Scalar> normalized = (raw.rowwise() - ref.mean.transpose()).array().rowwise() / ref.std.transpose().array();
  LossResult<Scalar> inner = loss_channel_align<Scalar>(normalized, ref);
  LossResult<Scalar> out;
  out.value = lambda_align * inner.value;
  out.grad = lambda_align * (inner.grad.array().rowwise() / ref.std.transpose().array()).matrix();
  return out;
}

/// Maximal occupation: sum_s cos(f_s, nn(f_s)) where nn is the most
/// cosine-similar other sample (i.e. minus the summed cosine distances).
/// The neighbour assignment is held fixed when differentiating; both the
/// sample and its neighbour receive gradient.
template <typename Scalar>
LossResult<Scalar> loss_maxoc(const Eigen::Ref<const MatrixX<Scalar>>& features) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw std::invalid_argument("loss_maxoc: need at least 2 samples");
  const VectorX<Scalar> norms = features.rowwise().norm();
  for (Eigen::Index s = 0; s < n; ++s)
    if (!(norms(s) > Scalar(0))) throw NumericalError("loss_maxoc: zero-norm feature at row " + std::to_string(s));
  const MatrixX<Scalar> unit = features.array().colwise() / norms.array();
  const MatrixX<Scalar> cos = unit * unit.transpose();

  LossResult<Scalar> out;
  out.grad = MatrixX<Scalar>::Zero(n, features.cols());
  for (Eigen::Index s = 0; s < n; ++s) {
    Eigen::Index nn = -1;
    for (Eigen::Index o = 0; o < n; ++o) {
      if (o == s) continue;
      if (nn < 0 || cos(s, o) > cos(s, nn)) nn = o;
    }
    const Scalar c = cos(s, nn);
    out.value += c;
    out.grad.row(s) += (unit.row(nn) - c * unit.row(s)) / norms(s);
    out.grad.row(nn) += (unit.row(s) - c * unit.row(nn)) / norms(nn);
  }
  return out;
}

/// sum_j absn2(mean_j) + absn2(std_j - 1) over the channels of a
/// cross-normalized set (population std).
template <typename Scalar>
LossResult<Scalar> loss_stats(const Eigen::Ref<const MatrixX<Scalar>>& features) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw std::invalid_argument("loss_stats: need at least 2 samples");
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  const VectorX<Scalar> mean = features.colwise().mean().transpose();
  const MatrixX<Scalar> centered = features.rowwise() - mean.transpose();
  const VectorX<Scalar> sd = (centered.cwiseAbs2().colwise().sum().transpose() * inv_n).cwiseSqrt();

  LossResult<Scalar> out;
  out.grad.resize(n, features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    out.value += absn2(mean(j)) + absn2(sd(j) - Scalar(1));
    const Scalar g_mean = absn2_grad(mean(j)) * inv_n;
    const Scalar g_sd = sd(j) > Scalar(0) ? absn2_grad(sd(j) - Scalar(1)) * inv_n / sd(j) : Scalar(0);
    out.grad.col(j) = VectorX<Scalar>::Constant(n, g_mean) + g_sd * centered.col(j);
  }
  return out;
}

/// Breakdown of the data-free alignment loss.
template <typename Scalar>
struct DataFreeLoss {
  LossResult<Scalar> total;  // gradient w.r.t. the raw pooled features
  Scalar stats = Scalar(0);
  Scalar maxoc = Scalar(0);
};

/// lambda_stats * L_stats + lambda_maxoc * L_maxoc on the raw pooled
/// surrogate features cross-normalized by the template statistics.
template <typename Scalar>
DataFreeLoss<Scalar> loss_align_df(const Eigen::Ref<const MatrixX<Scalar>>& raw,
                                   const Eigen::Ref<const VectorX<Scalar>>& template_mean,
                                   const Eigen::Ref<const VectorX<Scalar>>& template_std, Scalar lambda_stats,
                                   Scalar lambda_maxoc) {
  require_shape(raw.cols() == template_mean.size() && template_std.size() == template_mean.size(),
                "loss_align_df: channel count mismatch");
  const MatrixX<Scalar> bar = (raw.rowwise() - template_mean.transpose()).array().rowwise() / template_std.transpose().array();
  DataFreeLoss<Scalar> out;
  MatrixX<Scalar> g = MatrixX<Scalar>::Zero(raw.rows(), raw.cols());
  if (lambda_stats != Scalar(0)) {
    const auto st = loss_stats<Scalar>(bar);
    out.stats = st.value;
    g += lambda_stats * st.grad;
  }
  if (lambda_maxoc != Scalar(0)) {
    const auto mo = loss_maxoc<Scalar>(bar);
    out.maxoc = mo.value;
    g += lambda_maxoc * mo.grad;
  }
  out.total.value = lambda_stats * out.stats + lambda_maxoc * out.maxoc;
  out.total.grad = (g.array().rowwise() / template_std.transpose().array()).matrix();
  return out;
}

}  // namespace dsco
