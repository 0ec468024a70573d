#pragma once

#include <vector>

#include "dsco/common.hpp"
#include "dsco/doping.hpp"

namespace dsco {

/// Median pairwise Euclidean distance over the pooled rows of X and Y.
double median_bandwidth(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y);

/// Unbiased MMD^2 with k(a, b) = exp(-|a - b|^2 / (2 h^2)). May be negative;
/// use mmd() for the clamped reporting value. bandwidth <= 0 selects the
/// median heuristic.
double mmd2_unbiased(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y, double bandwidth = 0.0);
double mmd(const Eigen::Ref<const Matrix>& x, const Eigen::Ref<const Matrix>& y, double bandwidth = 0.0);

/// Exact 1-D W1 between two empirical measures (sizes may differ), computed
/// by integrating |F^-1 - G^-1| over the merged quantile breakpoints.
double wasserstein1d(std::vector<double> x, std::vector<double> y);

/// Mean over columns of wasserstein1d between matching columns of a and b.
double mean_channel_wasserstein(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

/// Samples are ranked by descending confusion score and split into n_groups
/// contiguous groups. Entry (a, b) is the mean distance from a sample to its
/// nearest same-class sample in the other group, symmetrized over a->b and
/// b->a (the diagonal excludes the sample itself). NaN when a group pair
/// has no same-class partners.
Matrix mutual_l2_by_group(const Eigen::Ref<const Matrix>& latents, const std::vector<ConfusionRecord>& records,
                          std::size_t n_groups);

}  // namespace dsco
