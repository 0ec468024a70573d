#include "dsco/projector.hpp"

#include <cmath>

namespace dsco {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kTaps = kKernel * kKernel;

std::size_t conv_out(std::size_t in, std::size_t stride) { return (in + 2 - kKernel) / stride + 1; }

// Activations are stored as (channels, batch * spatial) with column
// index n * spatial + y * width + x.
Matrix im2col(const Matrix& act, const Shape3& in, const Shape3& out, std::size_t batch, std::size_t stride) {
  const auto in_sp = static_cast<Eigen::Index>(in.spatial());
  const auto out_sp = static_cast<Eigen::Index>(out.spatial());
  Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(in.channels * kTaps),
                             static_cast<Eigen::Index>(batch) * out_sp);
  for (std::size_t ci = 0; ci < in.channels; ++ci)
    for (std::size_t ky = 0; ky < kKernel; ++ky)
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        const auto row = static_cast<Eigen::Index>(ci * kTaps + ky * kKernel + kx);
        for (std::size_t oy = 0; oy < out.height; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(in.height)) continue;
          for (std::size_t ox = 0; ox < out.width; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(in.width)) continue;
            const auto src = static_cast<Eigen::Index>(iy) * static_cast<Eigen::Index>(in.width) + ix;
            const auto dst = static_cast<Eigen::Index>(oy * out.width + ox);
            for (Eigen::Index n = 0; n < static_cast<Eigen::Index>(batch); ++n)
              cols(row, n * out_sp + dst) = act(static_cast<Eigen::Index>(ci), n * in_sp + src);
          }
        }
      }
  return cols;
}

Matrix col2im(const Matrix& cols, const Shape3& in, const Shape3& out, std::size_t batch, std::size_t stride) {
  const auto in_sp = static_cast<Eigen::Index>(in.spatial());
  const auto out_sp = static_cast<Eigen::Index>(out.spatial());
  Matrix act = Matrix::Zero(static_cast<Eigen::Index>(in.channels), static_cast<Eigen::Index>(batch) * in_sp);
  for (std::size_t ci = 0; ci < in.channels; ++ci)
    for (std::size_t ky = 0; ky < kKernel; ++ky)
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        const auto row = static_cast<Eigen::Index>(ci * kTaps + ky * kKernel + kx);
        for (std::size_t oy = 0; oy < out.height; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(in.height)) continue;
          for (std::size_t ox = 0; ox < out.width; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(in.width)) continue;
            const auto src = static_cast<Eigen::Index>(iy) * static_cast<Eigen::Index>(in.width) + ix;
            const auto dst = static_cast<Eigen::Index>(oy * out.width + ox);
            for (Eigen::Index n = 0; n < static_cast<Eigen::Index>(batch); ++n)
              act(static_cast<Eigen::Index>(ci), n * in_sp + src) += cols(row, n * out_sp + dst);
          }
        }
      }
  return act;
}

}  // namespace

RandomProjector::RandomProjector(std::uint64_t seed, const ProjectorConfig& cfg) : seed_(seed), cfg_(cfg) {
  if (cfg.input.size() == 0) throw ConfigError("projector: empty input shape");
  if (cfg.widths.size() < 3 || cfg.widths.size() > 4)
    throw ConfigError("projector: expected 3 or 4 layers, got " + std::to_string(cfg.widths.size()));
  if (cfg.groups == 0) throw ConfigError("projector: groups must be >= 1");
  for (std::size_t w : cfg.widths)
    if (w == 0 || w % cfg.groups != 0)
      throw ConfigError("projector: width " + std::to_string(w) + " not divisible by groups " +
                        std::to_string(cfg.groups));

  Shape3 shape = cfg.input;
  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    ConvLayer layer;
    layer.in_shape = shape;
    layer.stride = l == 0 ? 1 : 2;
    layer.groups = l == 0 ? 1 : cfg.groups;
    layer.out_shape = Shape3{cfg.widths[l], conv_out(shape.height, layer.stride), conv_out(shape.width, layer.stride)};
    const std::size_t fan_in = shape.channels / layer.groups * kTaps;
    const double std = std::sqrt(2.0 / ((1.0 + cfg.slope * cfg.slope) * static_cast<double>(fan_in)));
    Rng rng(derive_seed(seed, 0x9E0, l));
    layer.weight = std * gaussian_matrix(rng, static_cast<Eigen::Index>(cfg.widths[l]),
                                         static_cast<Eigen::Index>(fan_in));
    layer.bias = Vector::Zero(static_cast<Eigen::Index>(cfg.widths[l]));
    if (cfg.bias_scale > 0.0) layer.bias = cfg.bias_scale * gaussian_matrix(rng, layer.bias.size(), 1).col(0);
    layers_.push_back(std::move(layer));
    shape = layers_.back().out_shape;
  }
}

ProjectionTape RandomProjector::forward(const Eigen::Ref<const Matrix>& z) const {
  require_shape(static_cast<std::size_t>(z.cols()) == cfg_.input.size(),
                "project: latent size does not match projector input " + to_string(cfg_.input));
  ProjectionTape tape;
  tape.batch = static_cast<std::size_t>(z.rows());
  const auto sp = static_cast<Eigen::Index>(cfg_.input.spatial());
  Matrix act(static_cast<Eigen::Index>(cfg_.input.channels), z.rows() * sp);
  for (Eigen::Index n = 0; n < z.rows(); ++n)
    for (Eigen::Index c = 0; c < act.rows(); ++c) act.block(c, n * sp, 1, sp) = z.block(n, c * sp, 1, sp);

  for (const ConvLayer& layer : layers_) {
    const Matrix cols = im2col(act, layer.in_shape, layer.out_shape, tape.batch, layer.stride);
    const auto cout_g = static_cast<Eigen::Index>(layer.out_shape.channels / layer.groups);
    const auto rows_g = static_cast<Eigen::Index>(layer.in_shape.channels / layer.groups * kTaps);
    Matrix pre(static_cast<Eigen::Index>(layer.out_shape.channels), cols.cols());
    for (Eigen::Index g = 0; g < static_cast<Eigen::Index>(layer.groups); ++g)
      pre.middleRows(g * cout_g, cout_g).noalias() =
          layer.weight.middleRows(g * cout_g, cout_g) * cols.middleRows(g * rows_g, rows_g);
    pre.colwise() += layer.bias;
    const double slope = cfg_.slope;
    act = pre.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    tape.pre.push_back(std::move(pre));
  }
  tape.output = std::move(act);
  return tape;
}

Matrix RandomProjector::backward(const ProjectionTape& tape, const Eigen::Ref<const Matrix>& upstream) const {
  require_shape(upstream.rows() == tape.output.rows() && upstream.cols() == tape.output.cols(),
                "project_backward: upstream shape does not match projector output");
  Matrix grad = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const ConvLayer& layer = layers_[l];
    const double slope = cfg_.slope;
    const Matrix d_pre = grad.cwiseProduct(tape.pre[l].unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
    const auto cout_g = static_cast<Eigen::Index>(layer.out_shape.channels / layer.groups);
    const auto rows_g = static_cast<Eigen::Index>(layer.in_shape.channels / layer.groups * kTaps);
    Matrix d_cols(rows_g * static_cast<Eigen::Index>(layer.groups), d_pre.cols());
    for (Eigen::Index g = 0; g < static_cast<Eigen::Index>(layer.groups); ++g)
      d_cols.middleRows(g * rows_g, rows_g).noalias() =
          layer.weight.middleRows(g * cout_g, cout_g).transpose() * d_pre.middleRows(g * cout_g, cout_g);
    grad = col2im(d_cols, layer.in_shape, layer.out_shape, tape.batch, layer.stride);
  }
  const auto sp = static_cast<Eigen::Index>(cfg_.input.spatial());
  Matrix dz(static_cast<Eigen::Index>(tape.batch), static_cast<Eigen::Index>(cfg_.input.size()));
  for (Eigen::Index n = 0; n < dz.rows(); ++n)
    for (Eigen::Index c = 0; c < grad.rows(); ++c) dz.block(n, c * sp, 1, sp) = grad.block(c, n * sp, 1, sp);
  return dz;
}

Matrix project(const RandomProjector& p, const Eigen::Ref<const Vector>& z) {
  return p.forward(z.transpose()).output;
}

Vector project_backward(const RandomProjector& p, const Eigen::Ref<const Vector>& z,
                        const Eigen::Ref<const Matrix>& upstream) {
  const ProjectionTape tape = p.forward(z.transpose());
  return p.backward(tape, upstream).row(0).transpose();
}

Vector gap_pool(const Eigen::Ref<const Matrix>& feature) { return feature.rowwise().mean(); }

Matrix project_pooled(const RandomProjector& p, const Eigen::Ref<const Matrix>& z, ProjectionTape* tape) {
  ProjectionTape local = p.forward(z);
  const auto kl = static_cast<Eigen::Index>(p.output_shape().spatial());
  const auto j = static_cast<Eigen::Index>(p.channels());
  Matrix pooled(z.rows(), j);
  for (Eigen::Index n = 0; n < z.rows(); ++n)
    pooled.row(n) = local.output.middleCols(n * kl, kl).rowwise().mean().transpose();
  if (tape) *tape = std::move(local);
  return pooled;
}

Matrix project_pooled_backward(const RandomProjector& p, const ProjectionTape& tape,
                               const Eigen::Ref<const Matrix>& d_pooled) {
  const auto kl = static_cast<Eigen::Index>(p.output_shape().spatial());
  require_shape(d_pooled.rows() == static_cast<Eigen::Index>(tape.batch) &&
                    d_pooled.cols() == static_cast<Eigen::Index>(p.channels()),
                "project_pooled_backward: gradient shape mismatch");
  Matrix upstream(d_pooled.cols(), d_pooled.rows() * kl);
  const double inv = 1.0 / static_cast<double>(kl);
  for (Eigen::Index n = 0; n < d_pooled.rows(); ++n)
    upstream.middleCols(n * kl, kl) = (inv * d_pooled.row(n).transpose()).replicate(1, kl);
  return p.backward(tape, upstream);
}

ChannelStats channel_stats(std::span<const Matrix> features) {
  if (features.empty()) throw std::invalid_argument("channel_stats: empty feature set");
  const Eigen::Index j = features.front().rows();
  Vector sum = Vector::Zero(j);
  double count = 0.0;
  for (const Matrix& f : features) {
    require_shape(f.rows() == j && f.cols() == features.front().cols(), "channel_stats: ragged feature set");
    sum += f.rowwise().sum();
    count += static_cast<double>(f.cols());
  }
  ChannelStats stats;
  stats.mean = sum / count;
  Vector sq = Vector::Zero(j);
  for (const Matrix& f : features) sq += (f.colwise() - stats.mean).cwiseAbs2().rowwise().sum();
  stats.std = (sq / count).cwiseSqrt().cwiseMax(ChannelStats::kStdFloor);
  return stats;
}

ChannelStats channel_stats(const Eigen::Ref<const Matrix>& pooled) {
  if (pooled.rows() == 0) throw std::invalid_argument("channel_stats: empty feature set");
  ChannelStats stats;
  stats.mean = pooled.colwise().mean().transpose();
  const Matrix centered = pooled.rowwise() - stats.mean.transpose();
  stats.std = (centered.cwiseAbs2().colwise().sum().transpose() / static_cast<double>(pooled.rows()))
                  .cwiseSqrt()
                  .cwiseMax(ChannelStats::kStdFloor);
  return stats;
}

Matrix cross_normalize(const Eigen::Ref<const Matrix>& feature, const ChannelStats& ref) {
  require_shape(feature.rows() == ref.mean.size(), "cross_normalize: channel count mismatch");
  return (feature.colwise() - ref.mean).array().colwise() / ref.std.array();
}

Matrix cross_normalize_rows(const Eigen::Ref<const Matrix>& pooled, const ChannelStats& ref) {
  require_shape(pooled.cols() == ref.mean.size(), "cross_normalize: channel count mismatch");
  return (pooled.rowwise() - ref.mean.transpose()).array().rowwise() / ref.std.transpose().array();
}

bool ChannelCorrelation::any_zero_variance() const {
  for (bool z : zero_variance)
    if (z) return true;
  return false;
}

double ChannelCorrelation::mean_abs_off_diagonal() const {
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index a = 0; a < corr.rows(); ++a)
    for (Eigen::Index b = 0; b < corr.cols(); ++b)
      if (a != b && !zero_variance[static_cast<std::size_t>(a)] && !zero_variance[static_cast<std::size_t>(b)]) {
        sum += std::abs(corr(a, b));
        ++count;
      }
  return count ? sum / static_cast<double>(count) : 0.0;
}

ChannelCorrelation channel_correlation(const Eigen::Ref<const Matrix>& pooled) {
  if (pooled.rows() < 2) throw std::invalid_argument("channel_correlation: need >= 2 samples");
  const Matrix centered = pooled.rowwise() - pooled.colwise().mean();
  const Matrix cov = centered.transpose() * centered;
  const Vector var = cov.diagonal();
  ChannelCorrelation out;
  out.corr = Matrix::Zero(cov.rows(), cov.cols());
  out.zero_variance.assign(static_cast<std::size_t>(cov.rows()), false);
  const double scale = var.maxCoeff();
  for (Eigen::Index a = 0; a < var.size(); ++a)
    out.zero_variance[static_cast<std::size_t>(a)] = !(var(a) > 1e-24 * std::max(scale, 1.0));
  for (Eigen::Index a = 0; a < cov.rows(); ++a)
    for (Eigen::Index b = 0; b < cov.cols(); ++b) {
      if (out.zero_variance[static_cast<std::size_t>(a)] || out.zero_variance[static_cast<std::size_t>(b)]) continue;
      out.corr(a, b) = a == b ? 1.0 : cov(a, b) / std::sqrt(var(a) * var(b));
    }
  return out;
}

}  // namespace dsco
