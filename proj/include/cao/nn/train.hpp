#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cao/nn/model.hpp"
#include "cao/random.hpp"

namespace cao::nn {

template <typename Scalar>
struct LossResult {
  Scalar loss;
  RowMatrix<Scalar> grad;  // same shape as the logits
};

/// Weighted mean softmax cross-entropy over a batch x classes logit matrix,
/// max-subtracted for stability:
///   loss = (1/B) sum_i w_i * -log softmax(z_i)[y_i]
///   grad_i = w_i * (softmax(z_i) - onehot(y_i)) / B
template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const RowMatrix<Scalar>& logits, std::span<const int> labels,
                                         std::span<const Scalar> weights) {
  const Index batch = logits.rows();
  const Index classes = logits.cols();
  if (static_cast<Index>(labels.size()) != batch || static_cast<Index>(weights.size()) != batch)
    throw std::invalid_argument("softmax_cross_entropy: labels/weights length must equal batch size");
  if (batch == 0) throw std::invalid_argument("softmax_cross_entropy: empty batch");
  LossResult<Scalar> out{Scalar(0), RowMatrix<Scalar>(batch, classes)};
  for (Index i = 0; i < batch; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= classes)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
    const Scalar w = weights[static_cast<std::size_t>(i)];
    const Scalar m = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - m).eval();
    const Scalar log_sum = std::log(shifted.exp().sum());
    out.loss += w * (log_sum - shifted(y));
    out.grad.row(i) = (shifted - log_sum).exp().matrix();
    out.grad(i, y) -= Scalar(1);
    out.grad.row(i) *= w / Scalar(batch);
  }
  out.loss /= Scalar(batch);
  return out;
}

template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const Tensor<Scalar>& logits, std::span<const int> labels,
                                         std::span<const Scalar> weights) {
  if (logits.rank() != 2) throw std::invalid_argument("logits must be [batch, classes]");
  return softmax_cross_entropy<Scalar>(RowMatrix<Scalar>(logits.matrix(logits.dim(0), logits.dim(1))), labels,
                                       weights);
}

/// Pulses with binary targets for one stage classifier.
struct LabeledPulses {
  std::vector<const Pulse*> pulses;
  std::vector<int> labels;

  std::size_t size() const { return pulses.size(); }
  std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
};

/// Inverse class-frequency weights n / (2 n_c).
inline std::array<double, 2> inverse_frequency_weights(std::span<const int> labels) {
  std::array<double, 2> counts{0.0, 0.0};
  for (int y : labels) counts[static_cast<std::size_t>(y)] += 1.0;
  const double n = counts[0] + counts[1];
  return {n / (2.0 * counts[0]), n / (2.0 * counts[1])};
}

template <typename Scalar>
class Adam {
 public:
  explicit Adam(const TrainConfig& cfg) : cfg_(cfg) {}

  void step(const std::vector<Parameter<Scalar>*>& params) {
    if (m_.empty()) {
      for (const Parameter<Scalar>* p : params) {
        m_.push_back(Vector<Scalar>::Zero(p->value.size()));
        v_.push_back(Vector<Scalar>::Zero(p->value.size()));
      }
    }
    ++t_;
    const Scalar b1 = Scalar(cfg_.beta1), b2 = Scalar(cfg_.beta2);
    const Scalar c1 = Scalar(1) - std::pow(b1, Scalar(t_));
    const Scalar c2 = Scalar(1) - std::pow(b2, Scalar(t_));
    const Scalar lr = Scalar(cfg_.learning_rate);
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Vector<Scalar>& g = params[i]->grad.values();
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g.cwiseAbs2();
      params[i]->value.values().array() -=
          lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + Scalar(cfg_.epsilon));
    }
  }

 private:
  TrainConfig cfg_;
  std::vector<Vector<Scalar>> m_, v_;
  long t_ = 0;
};

struct TrainResult {
  std::vector<double> loss_trace;  // sample-weighted mean batch loss per epoch
};

/// Mini-batch Adam on weighted cross-entropy. Shuffling is seeded by
/// cfg.seed, so the result is a deterministic function of (model, data, cfg).
/// Throws when the data holds a single class, or if any loss or parameter
/// turns non-finite (checked every epoch).
template <typename Scalar>
TrainResult train(Model<Scalar>& model, const LabeledPulses& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.pulses.empty()) throw std::invalid_argument("train: empty dataset");
  if (data.labels.size() != data.pulses.size()) throw std::invalid_argument("train: labels/pulses length mismatch");
  for (int y : data.labels)
    if (y != 0 && y != 1) throw std::invalid_argument("train: labels must be 0 or 1");
  const std::size_t pos = data.positives();
  if (pos == 0 || pos == data.size())
    throw std::invalid_argument("train: both classes must be present to train a stage classifier");

  const std::array<double, 2> class_w =
      cfg.class_weighted ? inverse_frequency_weights(data.labels) : std::array<double, 2>{1.0, 1.0};
  Rng rng(cfg.seed);
  Adam<Scalar> adam(cfg);
  std::vector<Parameter<Scalar>*> params = model.parameters();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  std::vector<const Pulse*> batch;
  std::vector<int> labels;
  std::vector<Scalar> weights;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      batch.clear();
      labels.clear();
      weights.clear();
      for (std::size_t k = start; k < end; ++k) {
        batch.push_back(data.pulses[order[k]]);
        labels.push_back(data.labels[order[k]]);
        weights.push_back(Scalar(class_w[static_cast<std::size_t>(labels.back())]));
      }
      const RowMatrix<Scalar> logits = model.forward(pack_pulses<Scalar>(batch, model.config().variant));
      const LossResult<Scalar> loss = softmax_cross_entropy<Scalar>(logits, labels, weights);
      model.zero_grad();
      model.backward(loss.grad);
      adam.step(params);
      epoch_loss += static_cast<double>(loss.loss) * static_cast<double>(end - start);
    }
    epoch_loss /= static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
    for (const Parameter<Scalar>* p : model.state())
      if (!p->value.all_finite())
        throw std::runtime_error("train: parameter " + p->name + " became non-finite at epoch " + std::to_string(epoch));
    result.loss_trace.push_back(epoch_loss);
  }
  model.set_trained(true);
  return result;
}

/// Positive-class probability per pulse, eval mode.
template <typename Scalar>
std::vector<double> predict_proba(const Model<Scalar>& model, std::span<const Pulse* const> pulses,
                                  std::size_t batch_size = 64) {
  std::vector<double> out;
  out.reserve(pulses.size());
  for (std::size_t start = 0; start < pulses.size(); start += batch_size) {
    const std::size_t end = std::min(pulses.size(), start + batch_size);
    const RowMatrix<Scalar> logits =
        model.infer(pack_pulses<Scalar>(pulses.subspan(start, end - start), model.config().variant));
    for (Index i = 0; i < logits.rows(); ++i)
      out.push_back(1.0 / (1.0 + std::exp(static_cast<double>(logits(i, 0) - logits(i, 1)))));
  }
  return out;
}

/// Probability of class 1 from a logit pair.
inline double positive_probability(double logit0, double logit1) { return 1.0 / (1.0 + std::exp(logit0 - logit1)); }

}  // namespace cao::nn
