#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsco/classifier.hpp"
#include "dsco/common.hpp"

namespace dsco {

struct ConfusionRecord {
  std::size_t sample_index = 0;
  int teacher_class = 0;
  double score = 0.0;
};

/// max_{c != c_T} p_S^c - p_S^{c_T} with c_T = argmax p_T. Positive exactly
/// when the student's hard prediction disagrees with the teacher's (ties in
/// the student resolve as disagreement only if strictly greater elsewhere).
/// Throws std::invalid_argument unless both vectors have the same length
/// C >= 2 and sum to 1 within 1e-6.
double confusion_score(const Eigen::Ref<const Vector>& p_teacher, const Eigen::Ref<const Vector>& p_student);

/// One record per row of the two probability matrices.
std::vector<ConfusionRecord> confusion_scores(const Matrix& p_teacher, const Matrix& p_student);

/// Number of targets whose student hard prediction equals the teacher label.
std::size_t recognized_count(std::span<const int> student_predictions, std::span<const int> teacher_labels);
std::size_t recognized_count(const Classifier& student, const Eigen::Ref<const Matrix>& targets,
                             std::span<const int> teacher_labels);

/// (N2 - N1) / (M2 - M1); throws std::invalid_argument unless M2 > M1.
double marginal_gain(double n1, double n2, double m1, double m2);

struct MarginalGainCurve {
  std::vector<double> sizes;       // M_i, strictly increasing
  std::vector<double> recognized;  // N_i
  std::vector<double> gains;       // gains[i] between points i and i+1
};

MarginalGainCurve make_gain_curve(std::vector<double> sizes, std::vector<double> recognized);

struct TriggerPoint {
  std::size_t interval = 0;  // gains[interval] <= 1
  double size = 0.0;         // sizes[interval]; synthesis stops here
};

/// First interval whose marginal gain is <= 1, if any.
std::optional<TriggerPoint> dope_trigger(const MarginalGainCurve& curve);

/// Top-k indices by descending score (ties: ascending sample index). With
/// per_class set, k is taken from every teacher class. Throws
/// std::invalid_argument when k exceeds what is available.
IndexVector select_far_apart(std::vector<ConfusionRecord> records, std::size_t k, bool per_class);

/// Mixed surrogate set: synthetic samples followed by doped real samples.
struct ConcentratedDataset {
  Matrix samples;
  std::vector<int> labels;
  Shape3 shape;
  std::size_t n_classes = 0;
  std::size_t n_synthetic = 0;
  IndexVector doped_indices;  // indices into the real dataset
  std::string provenance;     // JSON object text

  std::size_t size() const { return labels.size(); }
};

/// Throws CompositionError on duplicate/out-of-range doped indices or when
/// `ipc` is given and the total differs from ipc * n_classes.
ConcentratedDataset compose_concentrated(const Eigen::Ref<const Matrix>& synthetic, const std::vector<int>& synthetic_labels,
                                         const IndexVector& doped, const Eigen::Ref<const Matrix>& real,
                                         const std::vector<int>& real_labels, const Shape3& shape, std::size_t n_classes,
                                         std::optional<std::size_t> ipc = std::nullopt, std::string provenance = "{}");

struct TensorBlock;
TensorBlock to_tensor_block(const ConcentratedDataset& ds);
ConcentratedDataset concentrated_from_tensor_block(const TensorBlock& block);

}  // namespace dsco
