#pragma once

#include <concepts>
#include <functional>
#include <string>

#include "dsco/common.hpp"

namespace dsco {

enum class ScheduleKind { linear, cosine };

std::string to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& text);

/// Cumulative DDPM coefficients alpha_bar_t for t = 0..T with the derived
/// per-step posterior standard deviations. alpha_bar(0) == 1.
class NoiseSchedule {
 public:
  NoiseSchedule(ScheduleKind kind, Vector alpha_bar);

  ScheduleKind kind() const { return kind_; }
  std::size_t steps() const { return static_cast<std::size_t>(alpha_bar_.size() - 1); }
  double alpha_bar(std::size_t t) const { return alpha_bar_(static_cast<Eigen::Index>(t)); }
  const Vector& alpha_bar() const { return alpha_bar_; }

  /// beta of the transition (t-1) -> t; requires t >= 1.
  double beta(std::size_t t) const;
  /// Posterior std of z_t given (z_{t+1}, z_0); sigma(0) == 0, sigma(T) == 1
  /// (the terminal draw is a plain standard normal).
  double sigma(std::size_t t) const { return sigma_(static_cast<Eigen::Index>(t)); }

 private:
  ScheduleKind kind_;
  Vector alpha_bar_;
  Vector sigma_;
};

/// Linear betas follow the usual 1e-4..0.02 range rescaled by 1000/T;
/// cosine uses the squared-cosine cumulative profile with offset 0.008.
/// Betas are clipped at 0.999. Throws ScheduleError when T == 0 or the
/// terminal alpha_bar is not below 0.01.
NoiseSchedule make_schedule(std::size_t steps, ScheduleKind kind);

/// sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps, element-wise.
Matrix diffuse(const Eigen::Ref<const Matrix>& z0, std::size_t t, const Eigen::Ref<const Matrix>& eps,
               const NoiseSchedule& schedule);

/// Mean and (schedule-determined) std of one denoising transition.
struct StepStats {
  Matrix mu;
  double sigma = 0.0;
};

/// z = mu + sigma * eps.
Matrix denoise_step(const StepStats& stats, const Eigen::Ref<const Matrix>& eps);

/// Anything that predicts the noise component of a batch of noisy latents
/// at noise level t for a class.
template <typename M>
concept EpsilonPredictor = requires(const M& m, const Matrix& z, std::size_t t, int c) {
  { m.predict_eps(z, t, c) } -> std::convertible_to<Matrix>;
};

/// Posterior-mean transform of an epsilon prediction for the transition
/// z_{t+1} -> z_t (requires t < T).
StepStats posterior_stats(const Eigen::Ref<const Matrix>& z_next, const Eigen::Ref<const Matrix>& eps_hat,
                          std::size_t t, const NoiseSchedule& schedule);

template <EpsilonPredictor Model>
StepStats predict_stats(const Model& model, const Eigen::Ref<const Matrix>& z_next, std::size_t t,
                        int class_id, const NoiseSchedule& schedule) {
  if (t >= schedule.steps()) throw std::invalid_argument("predict_stats: t must be < T");
  const Matrix z = z_next;
  const Matrix eps_hat = model.predict_eps(z, t + 1, class_id);
  if (!eps_hat.allFinite())
    throw NumericalError("predict_stats: non-finite model output at step " + std::to_string(t),
                         static_cast<long>(t));
  require_shape(eps_hat.rows() == z.rows() && eps_hat.cols() == z.cols(),
                "predict_stats: model output shape does not match input");
  return posterior_stats(z, eps_hat, t, schedule);
}

/// Called with (t, z_t) for t = T..0 during a rollout.
using StepObserver = std::function<void(std::size_t, const Matrix&)>;

/// Plain DDPM ancestral sampling: z_T ~ N(0, I), then z_t = mu_t + sigma_t eps
/// for t = T-1..0 with a fresh eps per step. All draws come from one stream
/// seeded by `seed`, in row-major order.
template <EpsilonPredictor Model>
Matrix sample_ddpm(const Model& model, std::size_t n, std::size_t dim, int class_id,
                   const NoiseSchedule& schedule, std::uint64_t seed, const StepObserver& observe = {}) {
  if (n == 0) throw std::invalid_argument("sample_ddpm: n must be >= 1");
  Rng rng(seed);
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(dim);
  const std::size_t T = schedule.steps();
  Matrix z = denoise_step(StepStats{Matrix::Zero(rows, cols), schedule.sigma(T)},
                          gaussian_matrix(rng, rows, cols));
  if (observe) observe(T, z);
  for (std::size_t t = T; t-- > 0;) {
    const StepStats stats = predict_stats(model, z, t, class_id, schedule);
    const Matrix eps = gaussian_matrix(rng, rows, cols);
    z = denoise_step(stats, eps);
    if (observe) observe(t, z);
  }
  return z;
}

}  // namespace dsco
