#pragma once

#include <vector>

#include "dsco/common.hpp"

namespace dsco {

/// Generator parameters of a labeled Gaussian mixture living in C*H*W dims.
struct MixtureSpec {
  std::size_t n_classes = 2;
  std::size_t modes_per_class = 2;
  std::size_t n_per_class = 200;
  Shape3 shape{1, 1, 2};
  std::uint64_t seed = 0;
  double outlier_frac = 0.0;
  double center_scale = 3.0;   // mode centers uniform in [-scale, scale]^D
  double mode_std = 0.5;
  double min_separation = 0.0; // minimum distance between mode centers

  std::size_t dim() const { return shape.size(); }
  std::size_t outliers_per_class() const;
};

/// Fixed geometry of a mixture: mode centers and planted-outlier sites.
struct MixtureStructure {
  MixtureSpec spec;
  Matrix centers;               // (n_classes * modes_per_class) x D
  std::vector<int> center_labels;
  Matrix sites;                 // outlier sites, n_classes * outliers_per_class rows
  std::vector<int> site_labels;
  double r_planted = 0.0;
};

struct ToyDataset {
  Matrix samples;               // N x D
  std::vector<int> labels;
  Shape3 shape;
  std::size_t n_classes = 0;
  IndexVector planted;          // indices of planted outliers
  double r_planted = 0.0;
  MixtureSpec spec;

  std::size_t size() const { return labels.size(); }
  /// Rows of one class, in index order.
  Matrix class_samples(int c) const;
  IndexVector class_indices(int c) const;
};

/// Draws mode centers and outlier sites. A site keeps 2 r_planted + 3
/// mode_std from its own class's centers and sits just outside a mode of
/// another class (2.5 to 4 mode_std from the nearest center, which belongs
/// to another class). The layout is redrawn up to 50 times; throws
/// GenerationError when none admits every site.
MixtureStructure make_mixture_structure(const MixtureSpec& spec);

/// Samples n_per_class points per class from a fixed structure. The number
/// of planted outliers per class is round(outlier_frac * n_per_class); each
/// is a small jitter around one of that class's sites. Non-outliers that
/// land within 2 r_planted of a same-class site are redrawn.
ToyDataset sample_mixture(const MixtureStructure& structure, std::size_t n_per_class, std::uint64_t seed);

/// Structure plus training split from spec.seed.
ToyDataset make_gaussian_mixture(const MixtureSpec& spec);

/// Planted outliers are at least 2 r_planted from every same-class non-outlier.
bool planted_invariant_holds(const ToyDataset& ds);

}  // namespace dsco
