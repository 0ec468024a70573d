#include "dsco/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dsco {

std::string ClassifierConfig::fingerprint() const {
  std::ostringstream os;
  os << "mlp2-silu h=" << hidden << " epochs=" << epochs << " batch=" << batch << " lr=" << lr << " seed=" << seed;
  return os.str();
}

Classifier::Classifier(std::size_t dim, std::size_t n_classes, const ClassifierConfig& cfg)
    : dim_(dim), n_classes_(n_classes), fingerprint_(cfg.fingerprint()) {
  if (dim == 0 || n_classes < 2) throw std::invalid_argument("Classifier: need dim >= 1 and >= 2 classes");
  Rng rng(derive_seed(cfg.seed, 0xC1A5));
  const auto h = static_cast<Eigen::Index>(cfg.hidden);
  l1_ = nn::Dense(static_cast<Eigen::Index>(dim), h, rng);
  l2_ = nn::Dense(h, h, rng);
  l3_ = nn::Dense(h, static_cast<Eigen::Index>(n_classes), rng);
}

Matrix Classifier::forward(const Eigen::Ref<const Matrix>& x, Tape* tape) const {
  require_shape(static_cast<std::size_t>(x.cols()) == dim_, "classifier: input dimensionality mismatch");
  Matrix pre1 = l1_.forward(x);
  Matrix act1 = nn::apply_silu(pre1);
  Matrix pre2 = l2_.forward(act1);
  Matrix act2 = nn::apply_silu(pre2);
  Matrix out = l3_.forward(act2);
  if (tape) *tape = Tape{x, std::move(pre1), std::move(act1), std::move(pre2), std::move(act2)};
  return out;
}

std::vector<Matrix> Classifier::backward(const Tape& tape, const Matrix& d_logits) const {
  nn::DenseGrad g1, g2, g3;
  const Matrix d_act2 = nn::dense_backward(l3_, tape.act2, d_logits, g3);
  const Matrix d_act1 = nn::dense_backward(l2_, tape.act1, nn::silu_backward(tape.pre2, d_act2), g2);
  nn::dense_backward(l1_, tape.input, nn::silu_backward(tape.pre1, d_act1), g1);
  return {g1.weight, g1.bias, g2.weight, g2.bias, g3.weight, g3.bias};
}

std::vector<Matrix*> Classifier::parameters() {
  return {&l1_.weight, &l1_.bias, &l2_.weight, &l2_.bias, &l3_.weight, &l3_.bias};
}
std::vector<const Matrix*> Classifier::parameters() const {
  return {&l1_.weight, &l1_.bias, &l2_.weight, &l2_.bias, &l3_.weight, &l3_.bias};
}

Matrix Classifier::logits(const Eigen::Ref<const Matrix>& x) const { return forward(x, nullptr); }

Matrix Classifier::predict_proba(const Eigen::Ref<const Matrix>& x, double temperature) const {
  if (!(temperature > 0.0)) throw std::invalid_argument("predict_proba: temperature must be > 0");
  return nn::softmax_rows(logits(x) / temperature);
}

std::vector<int> Classifier::predict(const Eigen::Ref<const Matrix>& x) const {
  const Matrix l = logits(x);
  std::vector<int> out(static_cast<std::size_t>(l.rows()));
  for (Eigen::Index r = 0; r < l.rows(); ++r) {
    Eigen::Index arg;
    l.row(r).maxCoeff(&arg);
    out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return out;
}

Matrix one_hot(const std::vector<int>& labels, std::size_t n_classes) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes)
      throw std::invalid_argument("one_hot: label out of range");
    out(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return out;
}

double cross_entropy(const Matrix& logits, const Matrix& targets) {
  require_shape(logits.rows() == targets.rows() && logits.cols() == targets.cols(), "cross_entropy: shape mismatch");
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    total += -(targets.row(r).array() * (logits.row(r).array() - lse)).sum();
  }
  return total / static_cast<double>(logits.rows());
}

Classifier train_classifier(const Eigen::Ref<const Matrix>& x, const Matrix& soft_targets, const ClassifierConfig& cfg,
                            ClassifierTrainingReport* report) {
  if (x.rows() == 0) throw std::invalid_argument("train_classifier: empty data");
  require_shape(soft_targets.rows() == x.rows(), "train_classifier: one target row per sample required");
  Classifier model(static_cast<std::size_t>(x.cols()), static_cast<std::size_t>(soft_targets.cols()), cfg);
  Rng rng(derive_seed(cfg.seed, 0x7C));
  nn::Adam adam(cfg.lr);
  ClassifierTrainingReport rep;
  const Eigen::Index n = x.rows();
  const auto batch = static_cast<Eigen::Index>(cfg.batch);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index b = std::min(batch, n - start);
      const std::vector<Eigen::Index> rows(order.begin() + start, order.begin() + start + b);
      const Matrix xb = nn::gather_rows(x, rows);
      const Matrix tb = nn::gather_rows(soft_targets, rows);
      Classifier::Tape tape;
      const Matrix l = model.forward(xb, &tape);
      const double loss = cross_entropy(l, tb);
      if (!std::isfinite(loss)) {
        rep.loss_curve.push_back(loss);
        throw TrainingFailure("train_classifier: loss diverged at epoch " + std::to_string(epoch), rep.loss_curve);
      }
      loss_sum += loss * static_cast<double>(b);
      const Matrix d_logits = (nn::softmax_rows(l) - tb) / static_cast<double>(b);
      const auto grads = model.backward(tape, d_logits);
      std::vector<const Matrix*> gptr;
      for (const auto& g : grads) gptr.push_back(&g);
      adam.step(model.parameters(), gptr);
    }
    rep.loss_curve.push_back(loss_sum / static_cast<double>(n));
    if (report || epoch + 1 == cfg.epochs) {
      const auto pred = model.predict(x);
      std::size_t hits = 0;
      for (Eigen::Index r = 0; r < n; ++r) {
        Eigen::Index arg;
        soft_targets.row(r).maxCoeff(&arg);
        hits += pred[static_cast<std::size_t>(r)] == arg;
      }
      rep.accuracy_curve.push_back(static_cast<double>(hits) / static_cast<double>(n));
    }
  }
  if (report) *report = std::move(rep);
  return model;
}

Classifier train_classifier(const Eigen::Ref<const Matrix>& x, const std::vector<int>& labels, std::size_t n_classes,
                            const ClassifierConfig& cfg, ClassifierTrainingReport* report) {
  return train_classifier(x, one_hot(labels, n_classes), cfg, report);
}

double evaluate(const Classifier& c, const Eigen::Ref<const Matrix>& x, const std::vector<int>& labels) {
  require_shape(static_cast<std::size_t>(x.rows()) == labels.size(), "evaluate: one label per sample required");
  if (labels.empty()) throw std::invalid_argument("evaluate: empty test set");
  const auto pred = c.predict(x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Matrix relabel(const Classifier& teacher, const Eigen::Ref<const Matrix>& samples, double temperature) {
  return teacher.predict_proba(samples, temperature);
}

}  // namespace dsco
