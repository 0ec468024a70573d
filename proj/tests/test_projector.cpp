#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cmath>

#include "dsco/projector.hpp"
#include "test_support.hpp"

using namespace dsco;

namespace {

ProjectorConfig cfg_for(Shape3 input, std::vector<std::size_t> widths, std::size_t groups = 16) {
  ProjectorConfig cfg;
  cfg.input = input;
  cfg.widths = std::move(widths);
  cfg.groups = groups;
  return cfg;
}

// Shifts a (1,H,W) image right and down by s pixels, zero-filling.
Vector shift_image(const Vector& z, std::size_t h, std::size_t w, std::size_t s) {
  Vector out = Vector::Zero(z.size());
  for (std::size_t y = s; y < h; ++y)
    for (std::size_t x = s; x < w; ++x)
      out(static_cast<Eigen::Index>(y * w + x)) = z(static_cast<Eigen::Index>((y - s) * w + x - s));
  return out;
}

}  // namespace

TEST_CASE("init_projector architecture") {
  const RandomProjector p(1, cfg_for(Shape3{1, 8, 8}, {32, 64, 128}));
  REQUIRE(p.layers().size() == 3);
  CHECK(p.layers()[0].stride == 1);
  CHECK(p.layers()[0].groups == 1);
  CHECK(p.layers()[1].stride == 2);
  CHECK(p.layers()[1].groups == 16);
  CHECK(p.layers()[2].stride == 2);
  CHECK(p.output_shape() == Shape3{128, 2, 2});
  CHECK(p.channels() == 128);

  const RandomProjector toy(1, cfg_for(Shape3{1, 1, 2}, {32, 64, 128}));
  CHECK(toy.output_shape().channels == 128);
  CHECK(toy.output_shape().height <= 1);
  CHECK(toy.output_shape().width <= 2);

  const ProjectorConfig def;
  CHECK(def.groups == 16);
  CHECK(def.widths == std::vector<std::size_t>{32, 64, 128, 256});
  CHECK(def.slope == 0.2);
}

TEST_CASE("init_projector config errors") {
  CHECK_THROWS_AS(RandomProjector(1, cfg_for(Shape3{1, 4, 4}, {32, 60, 128})), ConfigError);
  CHECK_THROWS_AS(RandomProjector(1, cfg_for(Shape3{1, 4, 4}, {32, 64})), ConfigError);
  CHECK_THROWS_AS(RandomProjector(1, cfg_for(Shape3{1, 4, 4}, {16, 16, 16, 16, 16})), ConfigError);
  CHECK_THROWS_AS(RandomProjector(1, cfg_for(Shape3{0, 4, 4}, {32, 64, 128})), ConfigError);
}

TEST_CASE("init_projector is seed-determined") {
  const auto cfg = cfg_for(Shape3{2, 4, 4}, {32, 64, 128});
  const RandomProjector a(7, cfg), b(7, cfg), c(8, cfg);
  std::size_t total = 0, differ = 0;
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    CHECK(a.layers()[l].weight == b.layers()[l].weight);
    const Matrix& wa = a.layers()[l].weight;
    const Matrix& wc = c.layers()[l].weight;
    total += static_cast<std::size_t>(wa.size());
    differ += static_cast<std::size_t>((wa.array() != wc.array()).count());
  }
  CHECK(static_cast<double>(differ) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("project: zero, determinism, shape errors") {
  const RandomProjector p(3, cfg_for(Shape3{1, 8, 8}, {32, 64, 128}));
  const Matrix f0 = project(p, Vector::Zero(64));
  CHECK(f0.rows() == 128);
  CHECK(f0.cols() == 4);
  CHECK(f0.cwiseAbs().maxCoeff() == 0.0);
  Rng rng(1);
  const Vector z = gaussian_matrix(rng, 64, 1);
  CHECK(project(p, z) == project(p, z));
  CHECK(project(p, z).allFinite());
  CHECK_THROWS_AS(project(p, Vector::Zero(63)), ShapeError);
  CHECK_THROWS_AS(project_backward(p, z, Matrix::Zero(128, 3)), ShapeError);
}

TEST_CASE("project: pooled feature tolerates a stride-aligned shift") {
  // Strides 1,2,2: a 4-pixel shift moves the final grid by one cell. The
  // latent is a smooth bump placed away from the border.
  const std::size_t h = 32, w = 32;
  const RandomProjector p(5, cfg_for(Shape3{1, h, w}, {32, 64, 128}));
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(derive_seed(11, trial));
    std::uniform_real_distribution<double> pos(8.0, 14.0);
    const double cy = pos(rng), cx = pos(rng);
    Vector z(static_cast<Eigen::Index>(h * w));
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        z(static_cast<Eigen::Index>(y * w + x)) =
            std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (2.0 * 9.0));
    const Vector a = gap_pool(project(p, z));
    const Vector b = gap_pool(project(p, shift_image(z, h, w, 4)));
    worst = std::max(worst, (a - b).norm() / a.norm());
  }
  MESSAGE("worst relative pooled change under a 4-pixel shift: " << worst);
  CHECK(worst < 0.10);
}

TEST_CASE("project_backward matches finite differences") {
  struct Case {
    Shape3 input;
    std::vector<std::size_t> widths;
    std::size_t groups;
  };
  const std::array<Case, 4> cases{{{Shape3{1, 1, 2}, {32, 64, 128}, 16},
                                   {Shape3{1, 5, 4}, {16, 32, 32, 64}, 16},
                                   {Shape3{3, 4, 4}, {8, 8, 16}, 4},
                                   {Shape3{2, 3, 3}, {4, 8, 8}, 1}}};
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    CAPTURE(ci);
    const RandomProjector p(derive_seed(2, ci), cfg_for(cases[ci].input, cases[ci].widths, cases[ci].groups));
    Rng rng(derive_seed(4, ci));
    const Vector z = testing::kink_free_batch(p, rng, 1, 1e-3).transpose();
    const Matrix up = gaussian_matrix(rng, static_cast<Eigen::Index>(p.channels()),
                                      static_cast<Eigen::Index>(p.output_shape().spatial()));
    const Vector g = project_backward(p, z, up);
    const Vector fd = testing::fd_gradient([&](const Vector& x) { return project(p, x).cwiseProduct(up).sum(); }, z, 1e-3);
    CHECK(testing::rel_error(g, fd) < 1e-4);

    // Linearity in the upstream gradient and the zero case.
    const Matrix up2 = gaussian_matrix(rng, up.rows(), up.cols());
    CHECK((project_backward(p, z, up + up2) - g - project_backward(p, z, up2)).norm() < 1e-10 * (1.0 + g.norm()));
    CHECK(project_backward(p, z, Matrix::Zero(up.rows(), up.cols())).cwiseAbs().maxCoeff() == 0.0);

    // Batched pooled path agrees with finite differences too.
    const Matrix zb = testing::kink_free_batch(p, rng, 3, 1e-3);
    const Matrix w = gaussian_matrix(rng, 3, static_cast<Eigen::Index>(p.channels()));
    ProjectionTape tape;
    project_pooled(p, zb, &tape);
    const Matrix gb = project_pooled_backward(p, tape, w);
    const Vector flat = Eigen::Map<const Vector>(zb.data(), zb.size());
    const Vector fdb = testing::fd_gradient(
        [&](const Vector& x) {
          const Matrix zz = Eigen::Map<const Matrix>(x.data(), zb.rows(), zb.cols());
          return project_pooled(p, zz).cwiseProduct(w).sum();
        },
        flat, 1e-3);
    CHECK(testing::rel_error(Eigen::Map<const Vector>(gb.data(), gb.size()), fdb) < 1e-4);
  }
}

TEST_CASE("gap_pool examples") {
  Matrix f(2, 4);
  f << 1, 3, 5, 7, 2, 2, 2, 2;
  const Vector g = gap_pool(f);
  CHECK(g(0) == doctest::Approx(4.0));
  CHECK(g(1) == doctest::Approx(2.0));
  CHECK(gap_pool(3.5 * f).isApprox(3.5 * g));
}

TEST_CASE("channel_stats examples") {
  const std::vector<Matrix> constant{Matrix::Constant(1, 4, 2.5)};
  const ChannelStats c = channel_stats(std::span<const Matrix>(constant));
  CHECK(c.mean(0) == doctest::Approx(2.5));
  CHECK(c.std(0) == ChannelStats::kStdFloor);

  Matrix a(1, 1), b(1, 1);
  a << -1.0;
  b << 1.0;
  const std::vector<Matrix> pm{a, b};
  const ChannelStats s = channel_stats(std::span<const Matrix>(pm));
  CHECK(s.mean(0) == doctest::Approx(0.0));
  CHECK(s.std(0) == doctest::Approx(1.0));

  Rng rng(2);
  const Matrix pooled = gaussian_matrix(rng, 9, 5);
  Matrix perm = pooled;
  perm.row(0).swap(perm.row(8));
  perm.row(2).swap(perm.row(5));
  const ChannelStats s1 = channel_stats(pooled), s2 = channel_stats(perm);
  CHECK(s1.mean.isApprox(s2.mean));
  CHECK(s1.std.isApprox(s2.std));
  CHECK_THROWS_AS(channel_stats(Matrix(0, 5)), std::invalid_argument);
  CHECK_THROWS_AS(channel_stats(std::span<const Matrix>()), std::invalid_argument);
}

TEST_CASE("cross_normalize examples") {
  ChannelStats ref{Vector::Constant(1, 1.0), Vector::Constant(1, 2.0)};
  CHECK(cross_normalize(Matrix::Constant(1, 1, 5.0), ref)(0, 0) == doctest::Approx(2.0));
  CHECK(cross_normalize(Matrix::Constant(1, 3, 1.0), ref).cwiseAbs().maxCoeff() == 0.0);

  Rng rng(6);
  const Matrix pooled = (gaussian_matrix(rng, 50, 4) * 3.0).array() + 1.5;
  const Matrix n = cross_normalize_rows(pooled, channel_stats(pooled));
  const ChannelStats ns = channel_stats(n);
  CHECK(ns.mean.cwiseAbs().maxCoeff() < 1e-12);
  CHECK((ns.std.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(cross_normalize(Matrix::Zero(2, 3), ref), ShapeError);
  CHECK_THROWS_AS(cross_normalize_rows(Matrix::Zero(2, 3), ref), ShapeError);
}

TEST_CASE("channel_correlation basic properties") {
  Rng rng(8);
  Matrix f = gaussian_matrix(rng, 40, 4);
  f.col(3) = 2.0 * f.col(1);
  const ChannelCorrelation c = channel_correlation(f);
  CHECK(c.corr(1, 3) == doctest::Approx(1.0));
  CHECK((c.corr - c.corr.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (int j = 0; j < 4; ++j) CHECK(c.corr(j, j) == doctest::Approx(1.0));
  CHECK(!c.any_zero_variance());

  f.col(2).setConstant(0.7);
  const ChannelCorrelation z = channel_correlation(f);
  CHECK(z.any_zero_variance());
  CHECK(z.zero_variance[2]);
  CHECK(z.corr.row(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(z.corr.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(channel_correlation(Matrix::Zero(1, 3)), std::invalid_argument);
}

TEST_CASE("channel correlation shrinks with projector width") {
  // Widths (w/4, w/2, w) for w in {32, 128, 512} at the default 16 groups;
  // the first layer is floored at one channel per group.
  const Shape3 input{1, 1, 2};
  int monotone = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(derive_seed(21, seed));
    const Matrix z = gaussian_matrix(rng, 1000, 2);
    std::vector<double> curve;
    for (std::size_t w : {32u, 128u, 512u}) {
      const RandomProjector p(derive_seed(seed, w), cfg_for(input, {std::max<std::size_t>(16, w / 4), w / 2, w}));
      curve.push_back(channel_correlation(project_pooled(p, z)).mean_abs_off_diagonal());
    }
    MESSAGE("seed " << seed << ": " << curve[0] << " " << curve[1] << " " << curve[2]);
    monotone += curve[1] <= curve[0] && curve[2] <= curve[1];
  }
  CHECK(monotone >= 4);
}
