#include "dsco/diffusion.hpp"

#include <cmath>
#include <numbers>

namespace dsco {

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::linear ? "linear" : "cosine"; }

ScheduleKind parse_schedule_kind(const std::string& text) {
  if (text == "linear") return ScheduleKind::linear;
  if (text == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind: " + text);
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, Vector alpha_bar)
    : kind_(kind), alpha_bar_(std::move(alpha_bar)) {
  const Eigen::Index n = alpha_bar_.size();
  if (n < 2) throw ScheduleError("schedule needs T >= 1");
  if (alpha_bar_(0) != 1.0) throw ScheduleError("alpha_bar(0) must be exactly 1");
  for (Eigen::Index t = 1; t < n; ++t) {
    if (!(alpha_bar_(t) > 0.0) || !(alpha_bar_(t) < alpha_bar_(t - 1)))
      throw ScheduleError("alpha_bar must be positive and strictly decreasing (t=" + std::to_string(t) + ")");
  }
  if (!(alpha_bar_(n - 1) < 0.01))
    throw ScheduleError("terminal alpha_bar must be < 0.01, got " + std::to_string(alpha_bar_(n - 1)));

  sigma_.resize(n);
  sigma_(0) = 0.0;
  for (Eigen::Index t = 1; t < n - 1; ++t) {
    const double b = 1.0 - alpha_bar_(t + 1) / alpha_bar_(t);
    sigma_(t) = std::sqrt((1.0 - alpha_bar_(t)) / (1.0 - alpha_bar_(t + 1)) * b);
  }
  sigma_(n - 1) = 1.0;
}

double NoiseSchedule::beta(std::size_t t) const {
  if (t == 0 || t > steps()) throw std::out_of_range("beta: t out of range");
  return 1.0 - alpha_bar(t) / alpha_bar(t - 1);
}

NoiseSchedule make_schedule(std::size_t steps, ScheduleKind kind) {
  if (steps == 0) throw ScheduleError("make_schedule: T must be >= 1");
  constexpr double kMaxBeta = 0.999;
  const double T = static_cast<double>(steps);
  Vector alpha_bar(static_cast<Eigen::Index>(steps + 1));
  alpha_bar(0) = 1.0;

  if (kind == ScheduleKind::linear) {
    const double scale = 1000.0 / T;
    const double lo = 1e-4 * scale;
    const double hi = 0.02 * scale;
    for (std::size_t t = 1; t <= steps; ++t) {
      const double frac = steps == 1 ? 1.0 : static_cast<double>(t - 1) / (T - 1.0);
      const double beta = std::min(lo + (hi - lo) * frac, kMaxBeta);
      alpha_bar(static_cast<Eigen::Index>(t)) = alpha_bar(static_cast<Eigen::Index>(t - 1)) * (1.0 - beta);
    }
  } else {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
      return c * c;
    };
    for (std::size_t t = 1; t <= steps; ++t) {
      const double beta =
          std::min(1.0 - f(static_cast<double>(t)) / f(static_cast<double>(t - 1)), kMaxBeta);
      alpha_bar(static_cast<Eigen::Index>(t)) = alpha_bar(static_cast<Eigen::Index>(t - 1)) * (1.0 - beta);
    }
  }
  return NoiseSchedule(kind, std::move(alpha_bar));
}

Matrix diffuse(const Eigen::Ref<const Matrix>& z0, std::size_t t, const Eigen::Ref<const Matrix>& eps,
               const NoiseSchedule& schedule) {
  require_shape(z0.rows() == eps.rows() && z0.cols() == eps.cols(), "diffuse: eps shape differs from z0");
  if (t > schedule.steps()) throw std::out_of_range("diffuse: t > T");
  const double a = schedule.alpha_bar(t);
  return std::sqrt(a) * z0 + std::sqrt(1.0 - a) * eps;
}

Matrix denoise_step(const StepStats& stats, const Eigen::Ref<const Matrix>& eps) {
  require_shape(stats.mu.rows() == eps.rows() && stats.mu.cols() == eps.cols(),
                "denoise_step: eps shape differs from mu");
  return stats.mu + stats.sigma * eps;
}

StepStats posterior_stats(const Eigen::Ref<const Matrix>& z_next, const Eigen::Ref<const Matrix>& eps_hat,
                          std::size_t t, const NoiseSchedule& schedule) {
  const double ab_next = schedule.alpha_bar(t + 1);
  const double beta = schedule.beta(t + 1);
  const double alpha = 1.0 - beta;
  StepStats out;
  out.mu = (z_next - (beta / std::sqrt(1.0 - ab_next)) * eps_hat) / std::sqrt(alpha);
  out.sigma = schedule.sigma(t);
  return out;
}

}  // namespace dsco
