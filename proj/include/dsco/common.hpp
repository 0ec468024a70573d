#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dsco {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexVector = std::vector<std::size_t>;

/// Spatial layout (channels, height, width) of a single latent or feature.
struct Shape3 {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  std::size_t spatial() const { return height * width; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& s);

// Error taxonomy. Argument errors use std::invalid_argument directly.

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ScheduleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CompositionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a mode constraint forbids the requested action
/// (for example doping without access to real data).
class RefusalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long step = -1, long iteration = -1)
      : std::runtime_error(what), step_(step), iteration_(iteration) {}
  long step() const { return step_; }
  long iteration() const { return iteration_; }

 private:
  long step_;
  long iteration_;
};

/// Training did not reach its target; carries the recorded loss curve.
class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(const std::string& what, std::vector<double> curve)
      : std::runtime_error(what), curve_(std::move(curve)) {}
  const std::vector<double>& loss_curve() const { return curve_; }

 private:
  std::vector<double> curve_;
};

inline void require_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

// ---------------------------------------------------------------------------
// Random streams

using Rng = std::mt19937_64;

/// splitmix64 finalizer; mixes a base seed with stream tags so that
/// per-class / per-experiment streams are independent and reproducible.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t base, Tags... tags) {
  std::uint64_t s = mix_seed(base);
  ((s = mix_seed(s ^ static_cast<std::uint64_t>(tags))), ...);
  return s;
}

/// Fills an (rows x cols) matrix with N(0,1) draws in row-major order
/// (sample by sample), the order every sampler in this library relies on.
inline Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = normal(rng);
  return out;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace dsco
