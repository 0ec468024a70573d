#include "dsco/nopt.hpp"

#include <cmath>

namespace dsco {

std::string to_string(AlignMode mode) {
  return mode == AlignMode::data_accessible ? "data_accessible" : "data_free";
}

AlignMode parse_align_mode(const std::string& text) {
  if (text == "data_accessible") return AlignMode::data_accessible;
  if (text == "data_free") return AlignMode::data_free;
  throw ConfigError("unknown mode: " + text);
}

void NOptConfig::validate() const {
  if (lambda_align < 0 || lambda_stats < 0 || lambda_maxoc < 0) throw ConfigError("nopt: loss weights must be >= 0");
  if (min_diff_ratio < 5) throw ConfigError("nopt: min_diff_ratio must be >= 5");
  if (step_stride == 0) throw ConfigError("nopt: step_stride must be >= 1");
  if (n_temp < 2) throw ConfigError("nopt: n_temp must be >= 2");
  if (inner_lr < 0 || inner_momentum < 0 || inner_momentum >= 1) throw ConfigError("nopt: invalid SGD settings");
}

Reference build_diffused_reference(const Eigen::Ref<const Matrix>& targets, std::size_t t, std::size_t n_surrogate,
                                   const NoiseSchedule& schedule, const RandomProjector& projector,
                                   std::size_t min_ratio, Rng& rng) {
  if (targets.rows() == 0) throw std::invalid_argument("build_diffused_reference: empty target set");
  const std::size_t r = replication_factor(static_cast<std::size_t>(targets.rows()), n_surrogate, min_ratio);
  const Matrix repeated = targets.replicate(static_cast<Eigen::Index>(r), 1);
  const Matrix eps = gaussian_matrix(rng, repeated.rows(), repeated.cols());
  const Matrix diffused = diffuse(repeated, t, eps, schedule);
  return make_reference<double>(project_pooled(projector, diffused), n_surrogate);
}

LossBreakdown nopt_loss(const Eigen::Ref<const Matrix>& noise, const StepStats& stats, const AlignmentTarget& target,
                        const RandomProjector& projector, const NOptConfig& cfg, Matrix* grad) {
  LossBreakdown out;
  const auto real = loss_reality<double>(noise);
  out.real = real.value;

  const Matrix z = denoise_step(stats, noise);
  ProjectionTape tape;
  const Matrix pooled = project_pooled(projector, z, &tape);
  Matrix d_pooled;
  if (target.mode == AlignMode::data_accessible) {
    if (!target.reference) throw std::invalid_argument("nopt_loss: data-accessible target without reference");
    auto a = loss_align_da<double>(pooled, *target.reference, cfg.lambda_align);
    out.align = a.value;
    d_pooled = std::move(a.grad);
  } else {
    if (!target.templates) throw std::invalid_argument("nopt_loss: data-free target without template stats");
    auto a = loss_align_df<double>(pooled, target.templates->mean, target.templates->std, cfg.lambda_stats,
                                   cfg.lambda_maxoc);
    out.align = a.total.value;
    d_pooled = std::move(a.total.grad);
  }
  if (grad) *grad = real.grad + stats.sigma * project_pooled_backward(projector, tape, d_pooled);
  return out;
}

Matrix optimize_noise_step(const Eigen::Ref<const Matrix>& noise, const StepStats& stats,
                           const AlignmentTarget& target, const RandomProjector& projector, const NOptConfig& cfg,
                           std::vector<TraceRow>* trace, int class_id, std::size_t t) {
  require_shape(noise.rows() == stats.mu.rows() && noise.cols() == stats.mu.cols(),
                "optimize_noise_step: noise shape differs from mu");
  Matrix e = noise;
  if (cfg.inner_steps == 0) return e;
  Matrix velocity = Matrix::Zero(e.rows(), e.cols());
  Matrix grad;
  for (std::size_t it = 0; it <= cfg.inner_steps; ++it) {
    const bool last = it == cfg.inner_steps;
    const LossBreakdown loss = nopt_loss(e, stats, target, projector, cfg, last ? nullptr : &grad);
    if (!std::isfinite(loss.total()))
      throw NumericalError("optimize_noise_step: non-finite loss at step " + std::to_string(t) + ", iteration " +
                               std::to_string(it) + " (L_real=" + std::to_string(loss.real) +
                               ", L_align=" + std::to_string(loss.align) + ")",
                           static_cast<long>(t), static_cast<long>(it));
    if (trace) trace->push_back(TraceRow{class_id, t, it, loss});
    if (last) break;
    velocity = cfg.inner_momentum * velocity + grad;
    e -= cfg.inner_lr * velocity;
  }
  return e;
}

std::vector<ChannelStats> template_statistics(const DenoiserModel& model, const NoiseSchedule& schedule,
                                              const RandomProjector& projector, int class_id, std::size_t n_temp,
                                              std::uint64_t seed) {
  std::vector<ChannelStats> stats(schedule.steps() + 1);
  sample_ddpm(model, n_temp, model.dim(), class_id, schedule, seed,
              [&](std::size_t t, const Matrix& z) { stats[t] = channel_stats(project_pooled(projector, z)); });
  return stats;
}

namespace {

void summarize(StepSummary& s, const Matrix& noise) {
  const Vector norms = noise.rowwise().norm();
  s.norm_min = norms.minCoeff();
  s.norm_max = norms.maxCoeff();
  s.norm_mean = norms.mean();
}

}  // namespace

Matrix nopt_synthesize(const DenoiserModel& model, const NoiseSchedule& schedule, const RandomProjector& projector,
                       int class_id, std::size_t n_surrogate, const NOptConfig& cfg,
                       std::optional<Eigen::Ref<const Matrix>> targets, std::uint64_t seed, NOptTrace* trace,
                       const NOptStepHook& hook) {
  cfg.validate();
  if (n_surrogate == 0) throw std::invalid_argument("nopt_synthesize: N_S must be >= 1");
  require_shape(projector.input_shape().size() == model.dim(), "nopt_synthesize: projector/model shape mismatch");
  const bool optimizing = cfg.inner_steps > 0;
  if (cfg.mode == AlignMode::data_accessible) {
    if (!targets) throw std::invalid_argument("nopt_synthesize: data-accessible mode requires targets");
    require_shape(static_cast<std::size_t>(targets->cols()) == model.dim(), "nopt_synthesize: target dim mismatch");
  } else {
    if (targets) throw std::invalid_argument("nopt_synthesize: data-free mode must not receive targets");
    if (optimizing && n_surrogate < 2) throw std::invalid_argument("nopt_synthesize: data-free mode needs N_S >= 2");
  }

  std::vector<ChannelStats> templates;
  if (optimizing && cfg.mode == AlignMode::data_free)
    templates = template_statistics(model, schedule, projector, class_id, cfg.n_temp, derive_seed(seed, 0x7E3));
  Rng ref_rng(derive_seed(seed, 0xDF));

  Rng rng(seed);
  const auto rows = static_cast<Eigen::Index>(n_surrogate);
  const auto cols = static_cast<Eigen::Index>(model.dim());
  const std::size_t T = schedule.steps();

  auto run_step = [&](std::size_t t, const StepStats& stats) -> Matrix {
    Matrix noise = gaussian_matrix(rng, rows, cols);
    const bool active = optimizing && stats.sigma > 0.0 && (T - t) % cfg.step_stride == 0;
    if (!active) return denoise_step(stats, noise);

    Reference reference;
    AlignmentTarget target{cfg.mode, nullptr, nullptr};
    if (cfg.mode == AlignMode::data_accessible) {
      reference = build_diffused_reference(*targets, t, n_surrogate, schedule, projector, cfg.min_diff_ratio, ref_rng);
      target.reference = &reference;
    } else {
      target.templates = &templates[t];
    }
    std::vector<TraceRow>* rows_out = trace ? &trace->rows : nullptr;
    const std::size_t before = rows_out ? rows_out->size() : 0;
    Matrix optimized = optimize_noise_step(noise, stats, target, projector, cfg, rows_out, class_id, t);
    if (trace) {
      StepSummary s{class_id, t, true, 0.0, 0.0};
      s.initial_loss = trace->rows[before].loss.total();
      s.final_loss = trace->rows.back().loss.total();
      summarize(s, optimized);
      trace->steps.push_back(s);
    }
    if (hook) hook(t, stats, noise, optimized, target);
    return denoise_step(stats, optimized);
  };

  Matrix z = run_step(T, StepStats{Matrix::Zero(rows, cols), schedule.sigma(T)});
  for (std::size_t t = T; t-- > 0;) z = run_step(t, predict_stats(model, z, t, class_id, schedule));
  return z;
}

}  // namespace dsco
