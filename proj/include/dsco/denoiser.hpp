#pragma once

#include <filesystem>
#include <vector>

#include "dsco/diffusion.hpp"
#include "dsco/nn.hpp"
#include "dsco/tensor_block.hpp"

namespace dsco {

struct DenoiserConfig {
  std::size_t hidden = 128;
  std::size_t time_dim = 16;
  std::size_t iterations = 3000;   // optimizer steps per training round
  std::size_t batch = 128;
  double lr = 2e-3;
  std::uint64_t seed = 0;
  double mse_threshold = 0.3;      // held-out epsilon MSE that counts as converged
  std::size_t max_rounds = 3;      // rounds of `iterations` before giving up
  std::size_t eval_draws = 4096;
};

/// Class-conditional feedforward epsilon-predictor:
///   h1 = silu(W_in z + W_time phi(t) + embed[c] + b)
///   h2 = silu(W_mid h1 + b)
///   eps = W_out h2 + b
/// where phi(t) is a fixed sinusoidal embedding of the integer step.
class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(const Shape3& shape, std::size_t n_classes, std::size_t hidden, std::size_t time_dim,
                std::uint64_t seed);

  Matrix predict_eps(const Matrix& z, std::size_t t, int class_id) const;

  struct Tape {
    Matrix input, time_features, pre1, act1, pre2, act2;
    std::vector<int> classes;
  };
  /// Batched forward with per-row steps and classes.
  Matrix forward(const Matrix& z, const std::vector<std::size_t>& steps, const std::vector<int>& classes,
                 Tape* tape = nullptr) const;
  /// Returns parameter gradients in the order of parameters().
  std::vector<Matrix> backward(const Tape& tape, const Matrix& d_out) const;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  const Shape3& shape() const { return shape_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t time_dim() const { return time_dim_; }
  std::size_t dim() const { return shape_.size(); }

  Matrix time_embedding(const std::vector<std::size_t>& steps) const;

 private:
  Shape3 shape_;
  std::size_t n_classes_ = 0;
  std::size_t hidden_ = 0;
  std::size_t time_dim_ = 0;
  nn::Dense in_, time_, mid_, out_;
  Matrix class_embed_;  // n_classes x hidden
};

static_assert(EpsilonPredictor<DenoiserModel>);

struct DenoiserTrainingReport {
  std::vector<double> loss_curve;  // running training loss per 100 steps
  double heldout_mse = 0.0;
};

/// Standard epsilon-MSE training with Adam. Deterministic given cfg.seed.
/// Throws TrainingFailure (carrying the loss curve) if the held-out MSE is
/// still above cfg.mse_threshold after cfg.max_rounds rounds.
DenoiserModel train_denoiser(const Eigen::Ref<const Matrix>& data, const std::vector<int>& labels,
                             const Shape3& shape, std::size_t n_classes, const NoiseSchedule& schedule,
                             const DenoiserConfig& cfg, DenoiserTrainingReport* report = nullptr);

/// Mean squared epsilon-prediction error over `draws` random (sample, t, eps)
/// triples with t drawn uniformly from [t_min, t_max].
double epsilon_mse(const DenoiserModel& model, const Eigen::Ref<const Matrix>& data,
                   const std::vector<int>& labels, const NoiseSchedule& schedule, std::size_t t_min,
                   std::size_t t_max, std::size_t draws, std::uint64_t seed);

/// Checkpoint: rank-1 block of all parameters with a JSON manifest recording
/// the schedule, seed and layer shapes.
TensorBlock to_checkpoint(const DenoiserModel& model, const NoiseSchedule& schedule, std::uint64_t seed);
DenoiserModel from_checkpoint(const TensorBlock& block, NoiseSchedule* schedule = nullptr);

}  // namespace dsco
