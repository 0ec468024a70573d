#include "dsco/bias_lab.hpp"

#include <cmath>
#include <stdexcept>

#include "dsco/common.hpp"

namespace dsco {

OccupancyResult mc_occupancy(std::size_t n_exp, std::size_t n_smps, std::uint64_t seed) {
  if (n_exp == 0 || n_smps == 0) throw std::invalid_argument("mc_occupancy: n_exp and n_smps must be >= 1");
  OccupancyResult out{n_exp, n_smps, 0.0, 0.0};
  std::vector<char> hit(n_smps);
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t e = 0; e < n_exp; ++e) {
    Rng rng(derive_seed(seed, e));
    std::uniform_int_distribution<std::size_t> bin(0, n_smps - 1);
    std::fill(hit.begin(), hit.end(), 0);
    std::size_t occupied = 0;
    for (std::size_t i = 0; i < n_smps; ++i) {
      char& h = hit[bin(rng)];
      occupied += h == 0;
      h = 1;
    }
    sum += static_cast<double>(occupied);
    sum_sq += static_cast<double>(occupied) * static_cast<double>(occupied);
  }
  const double n = static_cast<double>(n_exp);
  out.mean = sum / n;
  out.std = std::sqrt(std::max(0.0, sum_sq / n - out.mean * out.mean));
  return out;
}

double analytic_occupancy(std::size_t n) {
  if (n == 0) throw std::invalid_argument("analytic_occupancy: N must be >= 1");
  const double N = static_cast<double>(n);
  return N * (1.0 - std::pow(1.0 - 1.0 / N, N));
}

double analytic_occupancy_variance(std::size_t n) {
  if (n == 0) throw std::invalid_argument("analytic_occupancy_variance: N must be >= 1");
  const double N = static_cast<double>(n);
  const double q1 = std::pow(1.0 - 1.0 / N, N);
  const double q2 = std::pow(1.0 - 2.0 / N, N);
  return std::max(0.0, N * (N - 1.0) * q2 + N * q1 - N * N * q1 * q1);
}

double ideal_probability(std::size_t n) {
  if (n == 0) throw std::invalid_argument("ideal_probability: N must be >= 1");
  const double N = static_cast<double>(n);
  if (n <= 20) {
    double p = 1.0;
    for (std::size_t k = 1; k <= n; ++k) p *= static_cast<double>(k) / N;
    return p;
  }
  return std::exp(std::lgamma(N + 1.0) - N * std::log(N));
}

std::vector<BiasRow> bias_table(std::size_t n_exp, const std::vector<std::size_t>& sizes, std::uint64_t seed) {
  std::vector<BiasRow> rows;
  for (std::size_t n : sizes)
    rows.push_back(BiasRow{n, mc_occupancy(n_exp, n, derive_seed(seed, n)), analytic_occupancy(n), ideal_probability(n)});
  return rows;
}

}  // namespace dsco
