#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "dsco/losses.hpp"
#include "test_support.hpp"

using namespace dsco;

namespace {

// Reference built directly from already-normalized features.
DiffusedReference<double> reference_from(const Matrix& features, std::size_t ns) {
  DiffusedReference<double> ref;
  ref.features = features;
  ref.mean = Vector::Zero(features.cols());
  ref.std = Vector::Ones(features.cols());
  ref.n_surrogate = ns;
  ref.n_chunk = static_cast<std::size_t>(features.rows()) / ns;
  set_chunk_means(ref);
  return ref;
}

Matrix permute_rows(const Matrix& m, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.row(r) = m.row(idx[static_cast<std::size_t>(r)]);
  return out;
}

constexpr double kFdStep = 1e-6;
constexpr double kFdTol = 1e-4;
constexpr int kFdPoints = 20;

}  // namespace

TEST_CASE("absn2 examples") {
  CHECK(absn2(0.0) == 0.0);
  CHECK(absn2_grad(0.0) == 0.0);
  CHECK(absn2(2.0) == 6.0);
  CHECK(absn2(-1.0) == 2.0);
  CHECK(absn2_grad(-1.0) == -3.0);
  CHECK(absn2_grad(2.0) == 5.0);
  CHECK(absn2(2.0f) == 6.0f);
}

TEST_CASE("loss_reality examples") {
  Matrix e(1, 4);
  e << 1, 1, 1, 1;
  CHECK(loss_reality<double>(e).value == doctest::Approx(0.0));
  e << 3, 0, 0, 0;
  CHECK(loss_reality<double>(e).value == doctest::Approx(2.0));
  const auto zero = loss_reality<double>(Matrix::Zero(2, 4));
  CHECK(zero.value == doctest::Approx(2.0 * absn2(-2.0)));
  CHECK(zero.degenerate_rows == 2);
  CHECK(zero.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(loss_reality<double>(Matrix(0, 4)), std::invalid_argument);
}

TEST_CASE("loss_reality gradient matches finite differences") {
  for (int k = 0; k < kFdPoints; ++k) {
    Rng rng(derive_seed(1, k));
    const Matrix e = gaussian_matrix(rng, 3, 4);
    const auto res = loss_reality<double>(e);
    const Matrix fd = testing::fd_gradient([](const Matrix& x) { return loss_reality<double>(x).value; }, e, kFdStep);
    CHECK(testing::rel_error(res.grad, fd) < kFdTol);
  }
}

TEST_CASE("replication factor and reference construction") {
  CHECK(replication_factor(10, 10, 5) == 5);
  CHECK(replication_factor(3, 2, 5) == 4);
  CHECK(replication_factor(1, 1, 5) == 5);
  CHECK(replication_factor(200, 32, 5) == 4);
  CHECK_THROWS_AS(replication_factor(0, 2, 5), std::invalid_argument);

  Rng rng(4);
  const Matrix raw = (gaussian_matrix(rng, 50, 6) * 2.0).array() + 3.0;
  const auto ref = make_reference<double>(raw, 10);
  CHECK(ref.n_chunk == 5);
  CHECK(ref.n_diff() == 50);
  CHECK(ref.features.colwise().mean().cwiseAbs().maxCoeff() < 1e-12);
  const Vector sd = (ref.features.cwiseAbs2().colwise().sum() / 50.0).cwiseSqrt().transpose();
  CHECK((sd.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(ref.chunk_means.rows() == 10);
  CHECK_THROWS_AS(make_reference<double>(raw, 7), std::invalid_argument);
}

TEST_CASE("loss_channel_align examples") {
  Matrix feats(3, 1);
  feats << 0.6, 0.2, 0.4;
  const auto ref = reference_from(feats, 1);
  CHECK(ref.chunk_means(0, 0) == doctest::Approx(0.4));
  Matrix s(1, 1);
  s << 0.5;
  CHECK(loss_channel_align<double>(s, ref).value == doctest::Approx(0.11));

  Rng rng(2);
  const auto r2 = reference_from(gaussian_matrix(rng, 12, 3), 4);
  CHECK(loss_channel_align<double>(r2.chunk_means, r2).value == 0.0);
  // Any ordering of the exact chunk means is still a perfect match.
  CHECK(loss_channel_align<double>(permute_rows(r2.chunk_means, rng), r2).value == 0.0);
  CHECK_THROWS_AS(loss_channel_align<double>(Matrix::Zero(4, 2), r2), ShapeError);
  CHECK_THROWS_AS(loss_channel_align<double>(Matrix::Zero(3, 3), r2), ShapeError);
}

TEST_CASE("loss_channel_align is permutation invariant and non-negative") {
  for (int k = 0; k < 10; ++k) {
    Rng rng(derive_seed(3, k));
    const Matrix feats = gaussian_matrix(rng, 20, 4);
    const Matrix surrogate = gaussian_matrix(rng, 4, 4);
    const auto ref = reference_from(feats, 4);
    const double v = loss_channel_align<double>(surrogate, ref).value;
    CHECK(v > 0.0);
    CHECK(loss_channel_align<double>(permute_rows(surrogate, rng), ref).value == doctest::Approx(v).epsilon(1e-12));
    const auto shuffled = reference_from(permute_rows(feats, rng), 4);
    CHECK(loss_channel_align<double>(surrogate, shuffled).value == doctest::Approx(v).epsilon(1e-12));
  }
}

TEST_CASE("loss_channel_align with one-sample chunks is the optimal assignment") {
  for (std::size_t ns = 1; ns <= 6; ++ns) {
    for (int k = 0; k < 5; ++k) {
      Rng rng(derive_seed(5, ns, k));
      const Matrix feats = gaussian_matrix(rng, static_cast<Eigen::Index>(ns), 2);
      const Matrix surrogate = gaussian_matrix(rng, static_cast<Eigen::Index>(ns), 2);
      const auto ref = reference_from(feats, ns);
      double brute = 0.0;
      for (Eigen::Index j = 0; j < 2; ++j) {
        std::vector<double> x(surrogate.col(j).data(), surrogate.col(j).data() + ns);
        std::vector<double> y(feats.col(j).data(), feats.col(j).data() + ns);
        brute += static_cast<double>(ns) * testing::brute_force_assignment(x, y, [](double d) { return absn2(d); });
      }
      CAPTURE(ns);
      CHECK(loss_channel_align<double>(surrogate, ref).value == doctest::Approx(brute).epsilon(1e-12));
    }
  }
}

TEST_CASE("loss_align_da gradient, linearity and zero weight") {
  for (int k = 0; k < kFdPoints; ++k) {
    Rng rng(derive_seed(6, k));
    const Matrix raw_ref = (gaussian_matrix(rng, 15, 4) * 1.7).array() + 0.5;
    const auto ref = make_reference<double>(raw_ref, 3);
    const Matrix raw = gaussian_matrix(rng, 3, 4);
    const auto res = loss_align_da<double>(raw, ref, 0.3);
    const Matrix fd =
        testing::fd_gradient([&](const Matrix& x) { return loss_align_da<double>(x, ref, 0.3).value; }, raw, kFdStep);
    CHECK(testing::rel_error(res.grad, fd) < kFdTol);

    const auto twice = loss_align_da<double>(raw, ref, 0.6);
    CHECK(twice.value == doctest::Approx(2.0 * res.value).epsilon(1e-12));
    CHECK((twice.grad - 2.0 * res.grad).cwiseAbs().maxCoeff() < 1e-12);
    const auto none = loss_align_da<double>(raw, ref, 0.0);
    CHECK(none.value == 0.0);
    CHECK(none.grad.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("loss_maxoc examples") {
  Matrix same(2, 3);
  same << 1, 2, 3, 1, 2, 3;
  CHECK(loss_maxoc<double>(same).value == doctest::Approx(2.0));
  Matrix orth(2, 2);
  orth << 1, 0, 0, 2;
  CHECK(loss_maxoc<double>(orth).value == doctest::Approx(0.0));
  Matrix anti(2, 2);
  anti << 1, 1, -2, -2;
  CHECK(loss_maxoc<double>(anti).value == doctest::Approx(-2.0));
  CHECK_THROWS_AS(loss_maxoc<double>(Matrix::Ones(1, 3)), std::invalid_argument);
  Matrix zero_row = Matrix::Ones(3, 2);
  zero_row.row(1).setZero();
  CHECK_THROWS_AS(loss_maxoc<double>(zero_row), NumericalError);
}

TEST_CASE("loss_maxoc gradient and scale invariance") {
  for (int k = 0; k < kFdPoints; ++k) {
    Rng rng(derive_seed(7, k));
    const Matrix f = gaussian_matrix(rng, 5, 4);
    const auto res = loss_maxoc<double>(f);
    const Matrix fd = testing::fd_gradient([](const Matrix& x) { return loss_maxoc<double>(x).value; }, f, kFdStep);
    CHECK(testing::rel_error(res.grad, fd) < kFdTol);

    std::uniform_real_distribution<double> scale(0.1, 10.0);
    Matrix scaled = f;
    for (Eigen::Index r = 0; r < f.rows(); ++r) scaled.row(r) *= scale(rng);
    CHECK(std::abs(loss_maxoc<double>(scaled).value - res.value) < 1e-6);
  }
}

TEST_CASE("loss_stats examples and gradient") {
  Matrix standard(2, 1);
  standard << -1, 1;
  CHECK(loss_stats<double>(standard).value == doctest::Approx(0.0));
  Matrix shifted(2, 1);
  shifted << 0, 2;
  CHECK(loss_stats<double>(shifted).value == doctest::Approx(2.0));
  CHECK_THROWS_AS(loss_stats<double>(Matrix::Ones(1, 2)), std::invalid_argument);

  for (int k = 0; k < kFdPoints; ++k) {
    Rng rng(derive_seed(8, k));
    const Matrix f = gaussian_matrix(rng, 6, 3);
    const Matrix fd = testing::fd_gradient([](const Matrix& x) { return loss_stats<double>(x).value; }, f, kFdStep);
    CHECK(testing::rel_error(loss_stats<double>(f).grad, fd) < kFdTol);
  }
}

TEST_CASE("loss_align_df") {
  Rng rng(9);
  const Matrix raw = (gaussian_matrix(rng, 6, 3) * 2.0).array() + 1.0;
  const Vector mean = raw.colwise().mean().transpose();
  const Vector sd = ((raw.rowwise() - mean.transpose()).cwiseAbs2().colwise().sum() / 6.0).cwiseSqrt().transpose();

  const auto none = loss_align_df<double>(raw, mean, sd, 0.0, 0.0);
  CHECK(none.total.value == 0.0);
  CHECK(none.total.grad.cwiseAbs().maxCoeff() == 0.0);
  // Normalizing a set by its own statistics leaves nothing for L_stats.
  CHECK(loss_align_df<double>(raw, mean, sd, 1e-3, 0.0).stats < 1e-12);

  for (int k = 0; k < kFdPoints; ++k) {
    Rng r(derive_seed(10, k));
    const Matrix x = gaussian_matrix(r, 5, 3);
    const Vector tm = gaussian_matrix(r, 3, 1);
    const Vector ts = (gaussian_matrix(r, 3, 1).array().abs() + 0.5).matrix();
    const auto res = loss_align_df<double>(x, tm, ts, 0.7, 2.0);
    CHECK(res.total.value == doctest::Approx(0.7 * res.stats + 2.0 * res.maxoc));
    const Matrix fd = testing::fd_gradient(
        [&](const Matrix& y) { return loss_align_df<double>(y, tm, ts, 0.7, 2.0).total.value; }, x, kFdStep);
    CHECK(testing::rel_error(res.total.grad, fd) < kFdTol);
  }
}

TEST_CASE("losses instantiate in single precision") {
  Rng rng(11);
  const Eigen::MatrixXf e = gaussian_matrix(rng, 3, 4).cast<float>();
  const Matrix ed = e.cast<double>();
  CHECK(loss_reality<float>(e).value == doctest::Approx(loss_reality<double>(ed).value).epsilon(1e-5));
  CHECK(loss_maxoc<float>(e).value == doctest::Approx(loss_maxoc<double>(ed).value).epsilon(1e-5));
  CHECK(loss_stats<float>(e).value == doctest::Approx(loss_stats<double>(ed).value).epsilon(1e-4));
}
