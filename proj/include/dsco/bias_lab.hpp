#pragma once

#include <cstdint>
#include <vector>

namespace dsco {

/// Monte-Carlo statistics of how many of N equal regions are hit when N
/// samples fall uniformly at random.
struct OccupancyResult {
  std::size_t n_exp = 0;
  std::size_t n_smps = 0;
  double mean = 0.0;
  double std = 0.0;  // population std over experiments
};

/// Each experiment draws n_smps uniform integers in [0, n_smps) from its own
/// stream (derived from `seed` and the experiment index) and counts the
/// distinct values.
OccupancyResult mc_occupancy(std::size_t n_exp, std::size_t n_smps, std::uint64_t seed);

/// Exact expectation N (1 - (1 - 1/N)^N).
double analytic_occupancy(std::size_t n);

/// Exact variance of the distinct count for N draws over N bins.
double analytic_occupancy_variance(std::size_t n);

/// Probability N!/N^N that every region is occupied (log-space for N > 20).
double ideal_probability(std::size_t n);

struct BiasRow {
  std::size_t n = 0;
  OccupancyResult mc;
  double analytic = 0.0;
  double ideal = 0.0;
};

std::vector<BiasRow> bias_table(std::size_t n_exp, const std::vector<std::size_t>& sizes, std::uint64_t seed);

}  // namespace dsco
