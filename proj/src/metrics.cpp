#include "dsco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dsco {

namespace {

Matrix squared_distances(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Matrix d = (-2.0 * a * b.transpose()).colwise() + na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

}  // namespace

double median_bandwidth(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y) {
  require_shape(x.cols() == y.cols(), "median_bandwidth: dimension mismatch");
  Matrix pooled(x.rows() + y.rows(), x.cols());
  pooled << x, y;
  const Matrix d2 = squared_distances(pooled, pooled);
  std::vector<double> d;
  for (Eigen::Index i = 0; i < pooled.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j) d.push_back(std::sqrt(d2(i, j)));
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

double mmd2_unbiased(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y, double bandwidth) {
  require_shape(x.cols() == y.cols(), "mmd: dimension mismatch");
  if (x.rows() < 2 || y.rows() < 2) throw std::invalid_argument("mmd: each set needs >= 2 samples");
  const double h = bandwidth > 0.0 ? bandwidth : median_bandwidth(x, y);
  const double g = 1.0 / (2.0 * h * h);
  const Matrix kxx = (-g * squared_distances(x, x)).array().exp();
  const Matrix kyy = (-g * squared_distances(y, y)).array().exp();
  const Matrix kxy = (-g * squared_distances(x, y)).array().exp();
  const double m = static_cast<double>(x.rows()), n = static_cast<double>(y.rows());
  const double sxx = (kxx.sum() - kxx.trace()) / (m * (m - 1.0));
  const double syy = (kyy.sum() - kyy.trace()) / (n * (n - 1.0));
  return sxx + syy - 2.0 * kxy.mean();
}

double mmd(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y, double bandwidth) {
  return std::max(0.0, mmd2_unbiased(x, y, bandwidth));
}

double wasserstein1d(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || y.empty()) throw std::invalid_argument("wasserstein1d: empty input");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  // Walk the merged quantile grid: on each interval both quantile
  // functions are constant.
  std::size_t i = 0, j = 0;
  double q = 0.0, total = 0.0;
  while (i < x.size() && j < y.size()) {
    const double qx = static_cast<double>(i + 1) / nx, qy = static_cast<double>(j + 1) / ny;
    const double next = std::min(qx, qy);
    total += (next - q) * std::abs(x[i] - y[j]);
    q = next;
    // Compare via cross-multiplication to advance exactly on ties.
    const auto lx = (i + 1) * y.size(), ly = (j + 1) * x.size();
    if (lx <= ly) ++i;
    if (ly <= lx) ++j;
  }
  return total;
}

double mean_channel_wasserstein(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  require_shape(a.cols() == b.cols() && a.cols() > 0, "mean_channel_wasserstein: channel mismatch");
  double sum = 0.0;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    std::vector<double> x(static_cast<std::size_t>(a.rows())), y(static_cast<std::size_t>(b.rows()));
    for (Eigen::Index r = 0; r < a.rows(); ++r) x[static_cast<std::size_t>(r)] = a(r, j);
    for (Eigen::Index r = 0; r < b.rows(); ++r) y[static_cast<std::size_t>(r)] = b(r, j);
    sum += wasserstein1d(std::move(x), std::move(y));
  }
  return sum / static_cast<double>(a.cols());
}

Matrix mutual_l2_by_group(const Eigen::Ref<const Matrix>& latents, const std::vector<ConfusionRecord>& records,
                          std::size_t n_groups) {
  if (n_groups == 0) throw std::invalid_argument("mutual_l2_by_group: n_groups must be >= 1");
  for (const auto& r : records)
    if (r.sample_index >= static_cast<std::size_t>(latents.rows()))
      throw std::invalid_argument("mutual_l2_by_group: record index outside the latent set");
  std::vector<ConfusionRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(), [](const ConfusionRecord& a, const ConfusionRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sample_index < b.sample_index;
  });
  const std::size_t n = sorted.size();
  if (n / n_groups < 2) throw std::invalid_argument("mutual_l2_by_group: group size < 2");
  std::vector<std::vector<ConfusionRecord>> groups(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g)
    groups[g].assign(sorted.begin() + static_cast<std::ptrdiff_t>(g * n / n_groups),
                     sorted.begin() + static_cast<std::ptrdiff_t>((g + 1) * n / n_groups));

  // Mean over samples of `from` of the distance to their nearest same-class
  // sample in `to`; also returns how many samples had a partner.
  auto directed = [&](const std::vector<ConfusionRecord>& from, const std::vector<ConfusionRecord>& to) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& a : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : to) {
        if (b.sample_index == a.sample_index || b.teacher_class != a.teacher_class) continue;
        best = std::min(best, (latents.row(static_cast<Eigen::Index>(a.sample_index)) -
                               latents.row(static_cast<Eigen::Index>(b.sample_index)))
                                  .norm());
      }
      if (std::isfinite(best)) {
        sum += best;
        ++count;
      }
    }
    return std::pair{sum, count};
  };

  const auto g = static_cast<Eigen::Index>(n_groups);
  Matrix out(g, g);
  for (Eigen::Index a = 0; a < g; ++a)
    for (Eigen::Index b = a; b < g; ++b) {
      const auto [s1, c1] = directed(groups[static_cast<std::size_t>(a)], groups[static_cast<std::size_t>(b)]);
      const auto [s2, c2] = directed(groups[static_cast<std::size_t>(b)], groups[static_cast<std::size_t>(a)]);
      const double v = c1 + c2 == 0 ? std::numeric_limits<double>::quiet_NaN()
                                    : (s1 + s2) / static_cast<double>(c1 + c2);
      out(a, b) = out(b, a) = v;
    }
  return out;
}

}  // namespace dsco
