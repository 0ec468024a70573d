#include "dsco/toy_data.hpp"

#include <cmath>

namespace dsco {

std::size_t MixtureSpec::outliers_per_class() const {
  return static_cast<std::size_t>(std::lround(outlier_frac * static_cast<double>(n_per_class)));
}

Matrix ToyDataset::class_samples(int c) const {
  const IndexVector idx = class_indices(c);
  Matrix out(static_cast<Eigen::Index>(idx.size()), samples.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = samples.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

IndexVector ToyDataset::class_indices(int c) const {
  IndexVector idx;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == c) idx.push_back(i);
  return idx;
}

namespace {

void place_centers(MixtureStructure& st, Rng& rng) {
  const MixtureSpec& spec = st.spec;
  const auto d = static_cast<Eigen::Index>(spec.dim());
  std::uniform_real_distribution<double> box(-spec.center_scale, spec.center_scale);
  const std::size_t n_modes = spec.n_classes * spec.modes_per_class;
  st.centers.resize(static_cast<Eigen::Index>(n_modes), d);
  st.center_labels.clear();
  for (std::size_t m = 0; m < n_modes; ++m) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw GenerationError("mixture: cannot place mode centers with the requested separation");
      for (Eigen::Index k = 0; k < d; ++k) st.centers(static_cast<Eigen::Index>(m), k) = box(rng);
      bool ok = true;
      for (std::size_t o = 0; o < m && ok; ++o)
        ok = (st.centers.row(static_cast<Eigen::Index>(m)) - st.centers.row(static_cast<Eigen::Index>(o))).norm() >=
             spec.min_separation;
      if (ok) break;
    }
    st.center_labels.push_back(static_cast<int>(m % spec.n_classes));
  }
}

// Sites: clear of their own class (so the same-class bulk stays beyond
// 2 r_planted), just outside the bulk of a mode of another class, and nearer
// to that mode than to any of their own. Returns false if the current
// centers leave no room.
bool place_sites(MixtureStructure& st, Rng& rng) {
  const MixtureSpec& spec = st.spec;
  const auto d = static_cast<Eigen::Index>(spec.dim());
  const std::size_t per_class = spec.outliers_per_class();
  std::uniform_real_distribution<double> wide(-1.6 * spec.center_scale, 1.6 * spec.center_scale);
  const double own_clearance = 2.0 * st.r_planted + 3.0 * spec.mode_std;
  const double other_min = 2.5 * spec.mode_std;
  const double other_max = 4.0 * spec.mode_std;
  st.sites.resize(static_cast<Eigen::Index>(per_class * spec.n_classes), d);
  st.site_labels.clear();
  Eigen::Index placed = 0;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      Vector cand(d);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 20000) return false;
        for (Eigen::Index q = 0; q < d; ++q) cand(q) = wide(rng);
        double best = INFINITY;
        int best_label = -1;
        bool ok = true;
        for (Eigen::Index m = 0; m < st.centers.rows() && ok; ++m) {
          const double dist = (st.centers.row(m).transpose() - cand).norm();
          const int label = st.center_labels[static_cast<std::size_t>(m)];
          ok = dist >= (label == static_cast<int>(c) ? own_clearance : other_min);
          if (dist < best) {
            best = dist;
            best_label = label;
          }
        }
        if (!ok || best_label == static_cast<int>(c) || best > other_max) continue;
        for (Eigen::Index s = 0; s < placed && ok; ++s) ok = (st.sites.row(s).transpose() - cand).norm() >= spec.mode_std;
        if (ok) break;
      }
      st.sites.row(placed++) = cand.transpose();
      st.site_labels.push_back(static_cast<int>(c));
    }
  }
  return true;
}

}  // namespace

MixtureStructure make_mixture_structure(const MixtureSpec& spec) {
  if (spec.dim() < 2) throw std::invalid_argument("mixture: dim must be >= 2");
  if (spec.n_classes < 1 || spec.modes_per_class < 1 || spec.n_per_class < 1)
    throw std::invalid_argument("mixture: counts must be >= 1");
  if (spec.outlier_frac < 0.0 || spec.outlier_frac >= 0.5) throw std::invalid_argument("mixture: outlier_frac in [0, 0.5)");

  MixtureStructure st;
  st.spec = spec;
  st.r_planted = 2.0 * spec.mode_std;
  Rng rng(derive_seed(spec.seed, 0xC3));
  // Redraw the whole layout when the centers leave no room for the sites.
  for (int layout = 0; layout < 50; ++layout) {
    place_centers(st, rng);
    if (place_sites(st, rng)) return st;
  }
  throw GenerationError("mixture: cannot plant outliers (space too dense)");
}

ToyDataset sample_mixture(const MixtureStructure& st, std::size_t n_per_class, std::uint64_t seed) {
  const MixtureSpec& spec = st.spec;
  const auto d = static_cast<Eigen::Index>(spec.dim());
  const std::size_t n_sites = spec.outliers_per_class();
  const std::size_t n_out =
      n_sites == 0 ? 0 : static_cast<std::size_t>(std::lround(spec.outlier_frac * static_cast<double>(n_per_class)));
  if (n_out >= n_per_class) throw std::invalid_argument("mixture: too many outliers per class");

  ToyDataset ds;
  ds.shape = spec.shape;
  ds.n_classes = spec.n_classes;
  ds.r_planted = st.r_planted;
  ds.spec = spec;
  ds.spec.n_per_class = n_per_class;
  ds.samples.resize(static_cast<Eigen::Index>(n_per_class * spec.n_classes), d);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    for (std::size_t i = 0; i < n_per_class - n_out; ++i) {
      const Eigen::Index mode = static_cast<Eigen::Index>((i % spec.modes_per_class) * spec.n_classes + c);
      Vector x(d);
      for (int attempt = 0;; ++attempt) {
        if (attempt > 1000) throw GenerationError("mixture: cannot keep samples clear of outlier sites");
        for (Eigen::Index q = 0; q < d; ++q) x(q) = st.centers(mode, q) + spec.mode_std * normal(rng);
        bool ok = true;
        for (Eigen::Index s = 0; s < st.sites.rows() && ok; ++s)
          if (st.site_labels[static_cast<std::size_t>(s)] == static_cast<int>(c))
            ok = (st.sites.row(s).transpose() - x).norm() >= 2.0 * st.r_planted + 0.5 * spec.mode_std;
        if (ok) break;
      }
      ds.samples.row(row++) = x.transpose();
      ds.labels.push_back(static_cast<int>(c));
    }
    for (std::size_t k = 0; k < n_out; ++k) {
      const Eigen::Index site = static_cast<Eigen::Index>(c * n_sites + k % n_sites);
      for (Eigen::Index q = 0; q < d; ++q) ds.samples(row, q) = st.sites(site, q) + 0.1 * spec.mode_std * normal(rng);
      ds.planted.push_back(static_cast<std::size_t>(row));
      ++row;
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

ToyDataset make_gaussian_mixture(const MixtureSpec& spec) {
  return sample_mixture(make_mixture_structure(spec), spec.n_per_class, derive_seed(spec.seed, 0x5A));
}

bool planted_invariant_holds(const ToyDataset& ds) {
  std::vector<char> is_planted(ds.size(), 0);
  for (auto i : ds.planted) is_planted[i] = 1;
  for (auto i : ds.planted)
    for (std::size_t j = 0; j < ds.size(); ++j) {
      if (is_planted[j] || ds.labels[j] != ds.labels[i]) continue;
      if ((ds.samples.row(static_cast<Eigen::Index>(i)) - ds.samples.row(static_cast<Eigen::Index>(j))).norm() <
          2.0 * ds.r_planted)
        return false;
    }
  return true;
}

}  // namespace dsco
