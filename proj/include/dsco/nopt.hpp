#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsco/denoiser.hpp"
#include "dsco/diffusion.hpp"
#include "dsco/losses.hpp"
#include "dsco/projector.hpp"

namespace dsco {

enum class AlignMode { data_accessible, data_free };

std::string to_string(AlignMode mode);
AlignMode parse_align_mode(const std::string& text);

struct NOptConfig {
  double lambda_align = 5e-4;
  double lambda_stats = 1e-3;
  double lambda_maxoc = 10.0;
  std::size_t inner_steps = 200;
  double inner_lr = 0.1;
  double inner_momentum = 0.9;
  std::size_t min_diff_ratio = 5;
  std::size_t n_temp = 200;
  std::size_t step_stride = 1;
  AlignMode mode = AlignMode::data_accessible;

  /// Throws ConfigError on negative weights, min_diff_ratio < 5,
  /// step_stride == 0 or n_temp < 2.
  void validate() const;
};

using Reference = DiffusedReference<double>;

/// Diffuses every target r times (r = replication_factor) at step t with
/// noise from `rng`, projects, pools and self-normalizes the result.
Reference build_diffused_reference(const Eigen::Ref<const Matrix>& targets, std::size_t t, std::size_t n_surrogate,
                                   const NoiseSchedule& schedule, const RandomProjector& projector,
                                   std::size_t min_ratio, Rng& rng);

/// What the surrogate features are aligned to at one step: the diffused
/// reference (data-accessible) or the template channel statistics (data-free).
struct AlignmentTarget {
  AlignMode mode = AlignMode::data_accessible;
  const Reference* reference = nullptr;
  const ChannelStats* templates = nullptr;
};

struct LossBreakdown {
  double real = 0.0;
  double align = 0.0;
  double total() const { return real + align; }
};

/// L_real + L_align for noise E at fixed (mu, sigma); fills `grad` (d/dE)
/// when non-null.
LossBreakdown nopt_loss(const Eigen::Ref<const Matrix>& noise, const StepStats& stats, const AlignmentTarget& target,
                        const RandomProjector& projector, const NOptConfig& cfg, Matrix* grad = nullptr);

struct TraceRow {
  int class_id = 0;
  std::size_t t = 0;
  std::size_t inner_iter = 0;
  LossBreakdown loss;
};

/// Per-step noise diagnostics.
struct StepSummary {
  int class_id = 0;
  std::size_t t = 0;
  bool optimized = false;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double norm_min = 0.0, norm_mean = 0.0, norm_max = 0.0;  // of the final noise rows
};

struct NOptTrace {
  std::vector<TraceRow> rows;
  std::vector<StepSummary> steps;
};

/// Momentum SGD (PyTorch convention: v = m v + g; E -= lr v) on the noise
/// rows for cfg.inner_steps iterations with (mu, sigma) frozen. Records one
/// trace row per iteration plus a final row. Throws NumericalError on a
/// non-finite loss.
Matrix optimize_noise_step(const Eigen::Ref<const Matrix>& noise, const StepStats& stats,
                           const AlignmentTarget& target, const RandomProjector& projector, const NOptConfig& cfg,
                           std::vector<TraceRow>* trace = nullptr, int class_id = 0, std::size_t t = 0);

/// Optional per-step hook for instrumentation: called after each optimized
/// step with (t, stats, noise before, noise after, target).
using NOptStepHook = std::function<void(std::size_t, const StepStats&, const Matrix&, const Matrix&,
                                        const AlignmentTarget&)>;

/// Full noise-optimized denoising for one class. The main noise stream is
/// seeded exactly like sample_ddpm(seed), so with inner_steps == 0 the
/// output is bit-identical to vanilla sampling. Data-accessible mode
/// requires `targets`; data-free mode rejects them and instead caches the
/// template statistics of one n_temp-sample DDPM rollout.
Matrix nopt_synthesize(const DenoiserModel& model, const NoiseSchedule& schedule, const RandomProjector& projector,
                       int class_id, std::size_t n_surrogate, const NOptConfig& cfg,
                       std::optional<Eigen::Ref<const Matrix>> targets, std::uint64_t seed,
                       NOptTrace* trace = nullptr, const NOptStepHook& hook = {});

/// Per-step channel statistics of a template rollout (index t = 0..T).
std::vector<ChannelStats> template_statistics(const DenoiserModel& model, const NoiseSchedule& schedule,
                                              const RandomProjector& projector, int class_id, std::size_t n_temp,
                                              std::uint64_t seed);

}  // namespace dsco
