#pragma once

#include <span>
#include <vector>

#include "dsco/common.hpp"

namespace dsco {

/// Architecture of the random feature projector. All layers use 3x3
/// kernels with padding 1; the first layer has stride 1, later layers
/// stride 2. The first layer is a full convolution (the latent channel
/// count is generally not divisible by the group count); every later layer
/// is grouped. Leaky-ReLU (slope 0.2) follows each layer; there is no
/// normalization and no final linear layer.
struct ProjectorConfig {
  Shape3 input;
  /// Desk-scale default: the full-size encoder widths (256, 512, 1024, 2048) divided by 8.
  std::vector<std::size_t> widths{32, 64, 128, 256};
  std::size_t groups = 16;
  double slope = 0.2;
  /// Std of the random biases; 0 keeps project(0) == 0.
  double bias_scale = 0.0;
};

struct ConvLayer {
  Shape3 in_shape;
  Shape3 out_shape;
  std::size_t groups = 1;
  std::size_t stride = 1;
  Matrix weight;  // out_channels x (in_channels / groups * 9); row block g belongs to group g
  Vector bias;    // out_channels
};

/// Activations of one batched forward pass, kept for the backward pass.
struct ProjectionTape {
  std::size_t batch = 0;
  std::vector<Matrix> pre;  // per layer: (out_channels, batch * out_spatial)
  Matrix output;            // (J, batch * K * L)
};

/// Immutable random grouped-convolution projector (C,H,W) -> (J,K,L).
class RandomProjector {
 public:
  /// Throws ConfigError when a width is not divisible by the group count,
  /// the layer count is outside 3..4, or the input shape is empty.
  RandomProjector(std::uint64_t seed, const ProjectorConfig& cfg);

  const ProjectorConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }
  const Shape3& input_shape() const { return cfg_.input; }
  const Shape3& output_shape() const { return layers_.back().out_shape; }
  std::size_t channels() const { return output_shape().channels; }

  /// Batched forward pass over an (N x C*H*W) sample matrix.
  ProjectionTape forward(const Eigen::Ref<const Matrix>& z) const;
  /// Gradient w.r.t. the inputs of the batch recorded in `tape`, given the
  /// upstream gradient on the (J, N*K*L) output.
  Matrix backward(const ProjectionTape& tape, const Eigen::Ref<const Matrix>& upstream) const;

 private:
  std::uint64_t seed_;
  ProjectorConfig cfg_;
  std::vector<ConvLayer> layers_;
};

/// Single-latent projection; z has C*H*W entries, result is J x (K*L).
Matrix project(const RandomProjector& p, const Eigen::Ref<const Vector>& z);
/// d<upstream, project(p, z)>/dz, returned as a C*H*W vector.
Vector project_backward(const RandomProjector& p, const Eigen::Ref<const Vector>& z,
                        const Eigen::Ref<const Matrix>& upstream);

/// Per-channel spatial mean of a J x (K*L) feature.
Vector gap_pool(const Eigen::Ref<const Matrix>& feature);

/// (N x J) pooled features of a batch of latents.
Matrix project_pooled(const RandomProjector& p, const Eigen::Ref<const Matrix>& z,
                      ProjectionTape* tape = nullptr);
/// Input gradient (N x C*H*W) for an upstream gradient on the pooled features.
Matrix project_pooled_backward(const RandomProjector& p, const ProjectionTape& tape,
                               const Eigen::Ref<const Matrix>& d_pooled);

/// Channel-wise population mean / std, std floored at kStdFloor.
struct ChannelStats {
  static constexpr double kStdFloor = 1e-6;
  Vector mean;
  Vector std;
};

/// Stats over all samples and spatial positions of J x (K*L) feature maps.
ChannelStats channel_stats(std::span<const Matrix> features);
/// Stats of a pooled (N x J) feature set.
ChannelStats channel_stats(const Eigen::Ref<const Matrix>& pooled);

/// (f - mean_j) / std_j for a J x (K*L) feature.
Matrix cross_normalize(const Eigen::Ref<const Matrix>& feature, const ChannelStats& ref);
/// Row-wise cross-normalization of a pooled (N x J) set.
Matrix cross_normalize_rows(const Eigen::Ref<const Matrix>& pooled, const ChannelStats& ref);

struct ChannelCorrelation {
  Matrix corr;                      // J x J, symmetric, unit diagonal on live channels
  std::vector<bool> zero_variance;  // channels whose row/column were zeroed
  bool any_zero_variance() const;
  /// Mean |corr| over off-diagonal pairs of live channels.
  double mean_abs_off_diagonal() const;
};

/// Pearson correlation of pooled channels over >= 2 samples.
ChannelCorrelation channel_correlation(const Eigen::Ref<const Matrix>& pooled);

}  // namespace dsco
