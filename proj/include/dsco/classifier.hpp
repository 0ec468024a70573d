#pragma once

#include <string>
#include <vector>

#include "dsco/nn.hpp"

namespace dsco {

struct ClassifierConfig {
  std::size_t hidden = 64;
  std::size_t epochs = 600;
  std::size_t batch = 64;
  double lr = 5e-3;
  std::uint64_t seed = 0;

  std::string fingerprint() const;
};

/// Two-hidden-layer SiLU MLP with a softmax head.
class Classifier {
 public:
  Classifier() = default;
  Classifier(std::size_t dim, std::size_t n_classes, const ClassifierConfig& cfg);

  Matrix logits(const Eigen::Ref<const Matrix>& x) const;
  /// Row-wise softmax(logits / temperature).
  Matrix predict_proba(const Eigen::Ref<const Matrix>& x, double temperature = 1.0) const;
  std::vector<int> predict(const Eigen::Ref<const Matrix>& x) const;

  std::size_t n_classes() const { return n_classes_; }
  std::size_t dim() const { return dim_; }
  const std::string& fingerprint() const { return fingerprint_; }

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  struct Tape {
    Matrix input, pre1, act1, pre2, act2;
  };
  Matrix forward(const Eigen::Ref<const Matrix>& x, Tape* tape) const;
  std::vector<Matrix> backward(const Tape& tape, const Matrix& d_logits) const;

 private:
  std::size_t dim_ = 0;
  std::size_t n_classes_ = 0;
  std::string fingerprint_;
  nn::Dense l1_, l2_, l3_;
};

struct ClassifierTrainingReport {
  std::vector<double> loss_curve;      // mean training loss per epoch
  std::vector<double> accuracy_curve;  // training accuracy (vs argmax target) per epoch
};

/// Mean cross-entropy of softmax(logits) against target distributions.
double cross_entropy(const Matrix& logits, const Matrix& targets);

Matrix one_hot(const std::vector<int>& labels, std::size_t n_classes);

/// Minimizes cross-entropy against soft targets (rows are distributions).
/// Deterministic given cfg.seed; throws TrainingFailure on divergence.
Classifier train_classifier(const Eigen::Ref<const Matrix>& x, const Matrix& soft_targets, const ClassifierConfig& cfg,
                            ClassifierTrainingReport* report = nullptr);
/// Hard-label convenience overload.
Classifier train_classifier(const Eigen::Ref<const Matrix>& x, const std::vector<int>& labels, std::size_t n_classes,
                            const ClassifierConfig& cfg, ClassifierTrainingReport* report = nullptr);

/// Top-1 accuracy in [0, 1].
double evaluate(const Classifier& c, const Eigen::Ref<const Matrix>& x, const std::vector<int>& labels);

/// Teacher soft labels softmax(logits / temperature); rows sum to 1.
Matrix relabel(const Classifier& teacher, const Eigen::Ref<const Matrix>& samples, double temperature = 1.0);

}  // namespace dsco
