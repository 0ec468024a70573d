#include "dsco/doping.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "dsco/tensor_block.hpp"
#include "json.hpp"

namespace dsco {

double confusion_score(const Eigen::Ref<const Vector>& p_teacher, const Eigen::Ref<const Vector>& p_student) {
  if (p_teacher.size() != p_student.size() || p_teacher.size() < 2)
    throw std::invalid_argument("confusion_score: vectors must share a length >= 2");
  if (std::abs(p_teacher.sum() - 1.0) > 1e-6 || std::abs(p_student.sum() - 1.0) > 1e-6)
    throw std::invalid_argument("confusion_score: inputs must be probability vectors");
  Eigen::Index c_t;
  p_teacher.maxCoeff(&c_t);
  double best_other = -1.0;
  for (Eigen::Index c = 0; c < p_student.size(); ++c)
    if (c != c_t) best_other = std::max(best_other, p_student(c));
  return best_other - p_student(c_t);
}

std::vector<ConfusionRecord> confusion_scores(const Matrix& p_teacher, const Matrix& p_student) {
  require_shape(p_teacher.rows() == p_student.rows() && p_teacher.cols() == p_student.cols(),
                "confusion_scores: shape mismatch");
  std::vector<ConfusionRecord> out;
  out.reserve(static_cast<std::size_t>(p_teacher.rows()));
  for (Eigen::Index r = 0; r < p_teacher.rows(); ++r) {
    Eigen::Index c_t;
    p_teacher.row(r).maxCoeff(&c_t);
    out.push_back({static_cast<std::size_t>(r), static_cast<int>(c_t),
                   confusion_score(p_teacher.row(r).transpose(), p_student.row(r).transpose())});
  }
  return out;
}

std::size_t recognized_count(std::span<const int> student_predictions, std::span<const int> teacher_labels) {
  if (student_predictions.size() != teacher_labels.size())
    throw std::invalid_argument("recognized_count: prediction/label count mismatch");
  std::size_t n = 0;
  for (std::size_t i = 0; i < teacher_labels.size(); ++i) n += student_predictions[i] == teacher_labels[i];
  return n;
}

std::size_t recognized_count(const Classifier& student, const Eigen::Ref<const Matrix>& targets,
                             std::span<const int> teacher_labels) {
  const auto pred = student.predict(targets);
  return recognized_count(std::span<const int>(pred), teacher_labels);
}

double marginal_gain(double n1, double n2, double m1, double m2) {
  if (!(m2 > m1)) throw std::invalid_argument("marginal_gain: requires M2 > M1");
  return (n2 - n1) / (m2 - m1);
}

MarginalGainCurve make_gain_curve(std::vector<double> sizes, std::vector<double> recognized) {
  if (sizes.size() != recognized.size() || sizes.size() < 2)
    throw std::invalid_argument("make_gain_curve: need >= 2 matched schedule points");
  MarginalGainCurve curve{std::move(sizes), std::move(recognized), {}};
  for (std::size_t i = 0; i + 1 < curve.sizes.size(); ++i)
    curve.gains.push_back(marginal_gain(curve.recognized[i], curve.recognized[i + 1], curve.sizes[i], curve.sizes[i + 1]));
  return curve;
}

std::optional<TriggerPoint> dope_trigger(const MarginalGainCurve& curve) {
  for (std::size_t i = 0; i < curve.gains.size(); ++i)
    if (curve.gains[i] <= 1.0) return TriggerPoint{i, curve.sizes[i]};
  return std::nullopt;
}

IndexVector select_far_apart(std::vector<ConfusionRecord> records, std::size_t k, bool per_class) {
  std::sort(records.begin(), records.end(), [](const ConfusionRecord& a, const ConfusionRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.sample_index < b.sample_index;
  });
  IndexVector out;
  if (!per_class) {
    if (k > records.size()) throw std::invalid_argument("select_far_apart: k exceeds available samples");
    for (std::size_t i = 0; i < k; ++i) out.push_back(records[i].sample_index);
    return out;
  }
  std::map<int, std::size_t> available, taken;
  for (const auto& r : records) ++available[r.teacher_class];
  for (const auto& [cls, n] : available)
    if (k > n) throw std::invalid_argument("select_far_apart: k exceeds samples of class " + std::to_string(cls));
  for (const auto& r : records)
    if (taken[r.teacher_class] < k) {
      ++taken[r.teacher_class];
      out.push_back(r.sample_index);
    }
  return out;
}

ConcentratedDataset compose_concentrated(const Eigen::Ref<const Matrix>& synthetic, const std::vector<int>& synthetic_labels,
                                         const IndexVector& doped, const Eigen::Ref<const Matrix>& real,
                                         const std::vector<int>& real_labels, const Shape3& shape, std::size_t n_classes,
                                         std::optional<std::size_t> ipc, std::string provenance) {
  if (static_cast<std::size_t>(synthetic.rows()) != synthetic_labels.size() ||
      static_cast<std::size_t>(real.rows()) != real_labels.size())
    throw CompositionError("compose_concentrated: label counts do not match sample counts");
  if (synthetic.rows() > 0) require_shape(static_cast<std::size_t>(synthetic.cols()) == shape.size(), "compose: synthetic dim");
  if (!doped.empty()) require_shape(static_cast<std::size_t>(real.cols()) == shape.size(), "compose: real dim");
  std::set<std::size_t> seen;
  for (auto i : doped) {
    if (!seen.insert(i).second) throw CompositionError("compose_concentrated: duplicate doped index " + std::to_string(i));
    if (i >= real_labels.size()) throw CompositionError("compose_concentrated: doped index out of range");
  }
  const std::size_t total = synthetic_labels.size() + doped.size();
  if (ipc && total != *ipc * n_classes)
    throw CompositionError("compose_concentrated: size " + std::to_string(total) + " != ipc * classes");

  ConcentratedDataset ds;
  ds.shape = shape;
  ds.n_classes = n_classes;
  ds.n_synthetic = synthetic_labels.size();
  ds.doped_indices = doped;
  ds.provenance = std::move(provenance);
  ds.samples.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(shape.size()));
  if (synthetic.rows() > 0) ds.samples.topRows(synthetic.rows()) = synthetic;
  ds.labels = synthetic_labels;
  for (std::size_t k = 0; k < doped.size(); ++k) {
    ds.samples.row(synthetic.rows() + static_cast<Eigen::Index>(k)) = real.row(static_cast<Eigen::Index>(doped[k]));
    ds.labels.push_back(real_labels[doped[k]]);
  }
  return ds;
}

TensorBlock to_tensor_block(const ConcentratedDataset& ds) {
  nlohmann::json m;
  m["kind"] = "concentrated";
  m["labels"] = ds.labels;
  m["n_classes"] = ds.n_classes;
  m["n_synthetic"] = ds.n_synthetic;
  m["doped_indices"] = ds.doped_indices;
  m["provenance"] = nlohmann::json::parse(ds.provenance.empty() ? "{}" : ds.provenance);
  return pack_samples(ds.samples, ds.shape, m.dump());
}

ConcentratedDataset concentrated_from_tensor_block(const TensorBlock& block) {
  const auto m = nlohmann::json::parse(block.manifest);
  if (m.value("kind", "") != "concentrated") throw std::runtime_error("tensor block is not a concentrated dataset");
  ConcentratedDataset ds;
  ds.samples = unpack_samples(block, &ds.shape);
  ds.labels = m.at("labels").get<std::vector<int>>();
  ds.n_classes = m.at("n_classes");
  ds.n_synthetic = m.at("n_synthetic");
  ds.doped_indices = m.at("doped_indices").get<IndexVector>();
  ds.provenance = m.at("provenance").dump();
  if (ds.labels.size() != static_cast<std::size_t>(ds.samples.rows()))
    throw std::runtime_error("concentrated dataset: label count mismatch");
  return ds;
}

}  // namespace dsco
