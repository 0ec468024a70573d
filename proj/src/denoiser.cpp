#include "dsco/denoiser.hpp"

#include <cmath>

#include "json.hpp"

namespace dsco {

DenoiserModel::DenoiserModel(const Shape3& shape, std::size_t n_classes, std::size_t hidden,
                             std::size_t time_dim, std::uint64_t seed)
    : shape_(shape), n_classes_(n_classes), hidden_(hidden), time_dim_(time_dim) {
  if (n_classes == 0 || hidden == 0 || time_dim < 2 || time_dim % 2 != 0)
    throw std::invalid_argument("DenoiserModel: invalid dimensions");
  Rng rng(derive_seed(seed, 0xD0));
  const auto d = static_cast<Eigen::Index>(shape.size());
  const auto h = static_cast<Eigen::Index>(hidden);
  in_ = nn::Dense(d, h, rng);
  time_ = nn::Dense(static_cast<Eigen::Index>(time_dim), h, rng);
  mid_ = nn::Dense(h, h, rng);
  out_ = nn::Dense(h, d, rng);
  out_.weight *= 0.1;
  class_embed_ = 0.1 * gaussian_matrix(rng, static_cast<Eigen::Index>(n_classes), h);
}

Matrix DenoiserModel::time_embedding(const std::vector<std::size_t>& steps) const {
  const auto half = static_cast<Eigen::Index>(time_dim_ / 2);
  Matrix emb(static_cast<Eigen::Index>(steps.size()), 2 * half);
  for (std::size_t i = 0; i < steps.size(); ++i) {
    for (Eigen::Index k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
      const double arg = static_cast<double>(steps[i]) * freq;
      emb(static_cast<Eigen::Index>(i), k) = std::sin(arg);
      emb(static_cast<Eigen::Index>(i), half + k) = std::cos(arg);
    }
  }
  return emb;
}

Matrix DenoiserModel::forward(const Matrix& z, const std::vector<std::size_t>& steps,
                              const std::vector<int>& classes, Tape* tape) const {
  require_shape(static_cast<std::size_t>(z.cols()) == dim(), "denoiser: input dimensionality mismatch");
  require_shape(steps.size() == static_cast<std::size_t>(z.rows()) && classes.size() == steps.size(),
                "denoiser: steps/classes must have one entry per row");
  Matrix tf = time_embedding(steps);
  Matrix pre1 = in_.forward(z) + time_.forward(tf);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || static_cast<std::size_t>(classes[i]) >= n_classes_)
      throw std::invalid_argument("denoiser: class id out of range");
    pre1.row(static_cast<Eigen::Index>(i)) += class_embed_.row(classes[i]);
  }
  Matrix act1 = nn::apply_silu(pre1);
  Matrix pre2 = mid_.forward(act1);
  Matrix act2 = nn::apply_silu(pre2);
  Matrix out = out_.forward(act2);
  if (tape) {
    tape->input = z;
    tape->time_features = std::move(tf);
    tape->pre1 = std::move(pre1);
    tape->act1 = std::move(act1);
    tape->pre2 = std::move(pre2);
    tape->act2 = std::move(act2);
    tape->classes = classes;
  }
  return out;
}

std::vector<Matrix> DenoiserModel::backward(const Tape& tape, const Matrix& d_out) const {
  nn::DenseGrad g_out, g_mid, g_in, g_time;
  Matrix d_act2 = nn::dense_backward(out_, tape.act2, d_out, g_out);
  Matrix d_pre2 = nn::silu_backward(tape.pre2, d_act2);
  Matrix d_act1 = nn::dense_backward(mid_, tape.act1, d_pre2, g_mid);
  Matrix d_pre1 = nn::silu_backward(tape.pre1, d_act1);
  nn::dense_backward(in_, tape.input, d_pre1, g_in);
  nn::dense_backward(time_, tape.time_features, d_pre1, g_time);
  Matrix g_embed = Matrix::Zero(class_embed_.rows(), class_embed_.cols());
  for (std::size_t i = 0; i < tape.classes.size(); ++i)
    g_embed.row(tape.classes[i]) += d_pre1.row(static_cast<Eigen::Index>(i));
  return {g_in.weight, g_in.bias, g_time.weight, g_time.bias, g_embed,
          g_mid.weight, g_mid.bias, g_out.weight, g_out.bias};
}

std::vector<Matrix*> DenoiserModel::parameters() {
  return {&in_.weight, &in_.bias, &time_.weight, &time_.bias, &class_embed_,
          &mid_.weight, &mid_.bias, &out_.weight, &out_.bias};
}

std::vector<const Matrix*> DenoiserModel::parameters() const {
  return {&in_.weight, &in_.bias, &time_.weight, &time_.bias, &class_embed_,
          &mid_.weight, &mid_.bias, &out_.weight, &out_.bias};
}

Matrix DenoiserModel::predict_eps(const Matrix& z, std::size_t t, int class_id) const {
  const auto n = static_cast<std::size_t>(z.rows());
  return forward(z, std::vector<std::size_t>(n, t), std::vector<int>(n, class_id));
}

double epsilon_mse(const DenoiserModel& model, const Eigen::Ref<const Matrix>& data,
                   const std::vector<int>& labels, const NoiseSchedule& schedule, std::size_t t_min,
                   std::size_t t_max, std::size_t draws, std::uint64_t seed) {
  if (t_min < 1 || t_max > schedule.steps() || t_min > t_max)
    throw std::invalid_argument("epsilon_mse: invalid step range");
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick_row(0, data.rows() - 1);
  std::uniform_int_distribution<std::size_t> pick_t(t_min, t_max);
  const auto n = static_cast<Eigen::Index>(draws);
  Matrix z(n, data.cols());
  std::vector<std::size_t> steps(draws);
  std::vector<int> classes(draws);
  Matrix eps = gaussian_matrix(rng, n, data.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = pick_row(rng);
    const std::size_t t = pick_t(rng);
    const double a = schedule.alpha_bar(t);
    z.row(i) = std::sqrt(a) * data.row(r) + std::sqrt(1.0 - a) * eps.row(i);
    steps[static_cast<std::size_t>(i)] = t;
    classes[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(r)];
  }
  const Matrix pred = model.forward(z, steps, classes);
  return (pred - eps).squaredNorm() / static_cast<double>(pred.size());
}

DenoiserModel train_denoiser(const Eigen::Ref<const Matrix>& data, const std::vector<int>& labels,
                             const Shape3& shape, std::size_t n_classes, const NoiseSchedule& schedule,
                             const DenoiserConfig& cfg, DenoiserTrainingReport* report) {
  if (data.rows() == 0) throw std::invalid_argument("train_denoiser: empty dataset");
  require_shape(static_cast<std::size_t>(data.cols()) == shape.size(),
                "train_denoiser: samples do not match shape " + to_string(shape));
  if (labels.size() != static_cast<std::size_t>(data.rows()))
    throw std::invalid_argument("train_denoiser: one label per sample required");

  DenoiserModel model(shape, n_classes, cfg.hidden, cfg.time_dim, cfg.seed);
  Rng rng(derive_seed(cfg.seed, 0x7A));
  nn::Adam adam(cfg.lr);
  std::uniform_int_distribution<std::size_t> pick_t(1, schedule.steps());
  const auto batch = static_cast<Eigen::Index>(cfg.batch);
  const auto d = data.cols();

  std::vector<double> curve;
  double running = 0.0;
  std::size_t seen = 0;
  double heldout = 0.0;
  const std::size_t total = cfg.iterations * cfg.max_rounds;

  for (std::size_t round = 0; round < cfg.max_rounds; ++round) {
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
      // cosine decay within each round, floor at 5% of the base rate
      const double progress = static_cast<double>(it) / static_cast<double>(cfg.iterations);
      adam.set_lr(cfg.lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(progress * 3.141592653589793))));

      const auto rows = nn::sample_batch(rng, data.rows(), batch);
      const auto b = static_cast<Eigen::Index>(rows.size());
      Matrix eps = gaussian_matrix(rng, b, d);
      Matrix z(b, d);
      std::vector<std::size_t> steps(rows.size());
      std::vector<int> classes(rows.size());
      for (Eigen::Index i = 0; i < b; ++i) {
        const std::size_t t = pick_t(rng);
        const double a = schedule.alpha_bar(t);
        z.row(i) = std::sqrt(a) * data.row(rows[static_cast<std::size_t>(i)]) + std::sqrt(1.0 - a) * eps.row(i);
        steps[static_cast<std::size_t>(i)] = t;
        classes[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])];
      }
      DenoiserModel::Tape tape;
      const Matrix pred = model.forward(z, steps, classes, &tape);
      const Matrix diff = pred - eps;
      const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
      if (!std::isfinite(loss)) {
        curve.push_back(loss);
        throw TrainingFailure("train_denoiser: loss diverged", curve);
      }
      running += loss;
      if (++seen % 100 == 0) {
        curve.push_back(running / 100.0);
        running = 0.0;
      }
      const std::vector<Matrix> grads = model.backward(tape, (2.0 / static_cast<double>(diff.size())) * diff);
      std::vector<const Matrix*> gptr;
      for (const auto& g : grads) gptr.push_back(&g);
      adam.step(model.parameters(), gptr);
    }
    heldout = epsilon_mse(model, data, labels, schedule, 1, schedule.steps(), cfg.eval_draws,
                          derive_seed(cfg.seed, 0xE7, round));
    if (heldout <= cfg.mse_threshold) break;
    if (round + 1 == cfg.max_rounds)
      throw TrainingFailure("train_denoiser: held-out epsilon MSE " + std::to_string(heldout) +
                                " above threshold after " + std::to_string(total) + " steps",
                            curve);
  }
  if (report) {
    report->loss_curve = std::move(curve);
    report->heldout_mse = heldout;
  }
  return model;
}

TensorBlock to_checkpoint(const DenoiserModel& model, const NoiseSchedule& schedule, std::uint64_t seed) {
  nlohmann::json manifest;
  manifest["kind"] = "denoiser";
  manifest["shape"] = {model.shape().channels, model.shape().height, model.shape().width};
  manifest["n_classes"] = model.n_classes();
  manifest["hidden"] = model.hidden();
  manifest["time_dim"] = model.time_dim();
  manifest["schedule"] = {{"kind", to_string(schedule.kind())}, {"T", schedule.steps()}};
  manifest["seed"] = seed;
  static const char* kNames[] = {"in.weight", "in.bias", "time.weight", "time.bias", "class_embed",
                                 "mid.weight", "mid.bias", "out.weight", "out.bias"};
  TensorBlock block;
  std::size_t i = 0;
  for (const Matrix* p : model.parameters()) {
    manifest["layers"].push_back({{"name", kNames[i++]}, {"shape", {p->rows(), p->cols()}}});
    for (Eigen::Index r = 0; r < p->rows(); ++r)
      for (Eigen::Index c = 0; c < p->cols(); ++c) block.data.push_back(static_cast<float>((*p)(r, c)));
  }
  block.dims = {static_cast<std::uint32_t>(block.data.size())};
  block.manifest = manifest.dump();
  return block;
}

DenoiserModel from_checkpoint(const TensorBlock& block, NoiseSchedule* schedule) {
  const auto manifest = nlohmann::json::parse(block.manifest);
  if (manifest.value("kind", "") != "denoiser") throw std::runtime_error("checkpoint: not a denoiser");
  const auto s = manifest.at("shape");
  DenoiserModel model(Shape3{s[0], s[1], s[2]}, manifest.at("n_classes"), manifest.at("hidden"),
                      manifest.at("time_dim"), 0);
  std::size_t offset = 0;
  const auto& layers = manifest.at("layers");
  auto params = model.parameters();
  if (layers.size() != params.size()) throw std::runtime_error("checkpoint: layer count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    if (layers[i].at("shape")[0] != p.rows() || layers[i].at("shape")[1] != p.cols())
      throw std::runtime_error("checkpoint: layer shape mismatch");
    if (offset + static_cast<std::size_t>(p.size()) > block.data.size())
      throw std::runtime_error("checkpoint: truncated payload");
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = block.data[offset++];
  }
  if (schedule)
    *schedule = make_schedule(manifest.at("schedule").at("T"),
                              parse_schedule_kind(manifest.at("schedule").at("kind")));
  return model;
}

}  // namespace dsco
