#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cao/nn/config.hpp"
#include "cao/nn/layers.hpp"
#include "cao/pulse.hpp"

namespace cao::nn {

enum class Mode { Train, Eval };

/// Batch of pulses as network input. CONV1D: 12 channels, height 1, width L.
/// CONV2D: 1 channel, height 12, width L.
template <typename Scalar>
FeatureMap<Scalar> pack_pulses(std::span<const Pulse* const> pulses, Variant variant) {
  if (pulses.empty()) throw std::invalid_argument("pack_pulses: empty batch");
  const Index leads = pulses.front()->leads.rows();
  const Index len = pulses.front()->leads.cols();
  const auto batch = static_cast<Index>(pulses.size());
  FeatureMap<Scalar> x;
  x.batch = batch;
  if (variant == Variant::Conv1D) {
    x.height = 1;
    x.width = len;
    x.data.resize(leads, batch * len);
  } else {
    x.height = leads;
    x.width = len;
    x.data.resize(1, batch * leads * len);
  }
  for (Index b = 0; b < batch; ++b) {
    const LeadMatrix& m = pulses[static_cast<std::size_t>(b)]->leads;
    if (m.rows() != leads || m.cols() != len)
      throw std::invalid_argument("pack_pulses: pulses in a batch must share one shape");
    for (Index l = 0; l < leads; ++l) {
      if (variant == Variant::Conv1D)
        x.data.row(l).segment(b * len, len) = m.row(l).template cast<Scalar>();
      else
        x.data.row(0).segment((b * leads + l) * len, len) = m.row(l).template cast<Scalar>();
    }
  }
  return x;
}

/// Tensor batch as network input: [B, C, L] for CONV1D, [B, 1, H, W] for CONV2D.
template <typename Scalar>
FeatureMap<Scalar> pack_tensor(const Tensor<Scalar>& t, Variant variant) {
  const Index want = variant == Variant::Conv1D ? 3 : 4;
  if (t.rank() != want)
    throw std::invalid_argument("model input must have rank " + std::to_string(want) + ", got " + t.shape_string());
  FeatureMap<Scalar> x;
  x.batch = t.dim(0);
  const Index c = t.dim(1);
  x.height = variant == Variant::Conv1D ? 1 : t.dim(2);
  x.width = t.dim(want - 1);
  x.data.resize(c, x.batch * x.plane());
  const Index p = x.plane();
  for (Index b = 0; b < x.batch; ++b)
    for (Index ch = 0; ch < c; ++ch)
      x.data.row(ch).segment(b * p, p) = t.values().segment((b * c + ch) * p, p).transpose();
  return x;
}

/// Residual CNN stage classifier:
///   stem conv (stride stem_stride) -> norm -> ReLU -> max-pool(stem_pool)
///   -> residual blocks (stride 2 on the time axis at every channel transition)
///   -> global average pool -> FC(fc_hidden) -> ReLU -> FC(2).
template <typename Scalar = double>
class Model {
 public:
  explicit Model(ModelConfig config = {}, std::uint64_t init_seed = 0) : config_(std::move(config)) {
    config_.validate();
    const bool two_d = config_.variant == Variant::Conv2D;
    const Index kh = two_d ? config_.kernel_leads : 1;
    const Index in_ch = two_d ? 1 : config_.input_leads;
    stem_ = Conv2d<Scalar>("stem.conv", {in_ch, config_.stem_channels, kh, config_.kernel_time, 1,
                                         config_.stem_stride, Padding::Same});
    stem_bn_ = BatchNorm<Scalar>("stem.bn", config_.stem_channels);
    Index prev = config_.stem_channels;
    for (std::size_t i = 0; i < config_.block_channels.size(); ++i) {
      const Index stride = i == 0 ? 1 : 2;
      blocks_.emplace_back("block" + std::to_string(i), prev, config_.block_channels[i], kh, config_.kernel_time,
                           stride);
      prev = config_.block_channels[i];
    }
    fc1_ = Linear<Scalar>("fc1", prev, config_.fc_hidden);
    fc2_ = Linear<Scalar>("fc2", config_.fc_hidden, config_.n_outputs);

    Rng rng(init_seed);
    stem_.init(rng);
    for (auto& b : blocks_) b.init(rng);
    fc1_.init(rng);
    fc2_.init(rng, 1.0);
  }

  const ModelConfig& config() const { return config_; }
  bool trained() const { return trained_; }
  void set_trained(bool t = true) { trained_ = t; }
  std::vector<ResidualBlock<Scalar>>& blocks() { return blocks_; }

  /// Train-mode forward: batch statistics, caches for backward. Logits are batch x 2.
  RowMatrix<Scalar> forward(const FeatureMap<Scalar>& x) {
    FeatureMap<Scalar> h = stem_relu_.forward(stem_bn_.forward(stem_.forward(x)));
    if (config_.stem_pool > 1) {
      pool_ = MaxPoolWidth<Scalar>(config_.stem_pool);
      h = pool_.forward(h);
    }
    for (auto& b : blocks_) h = b.forward(h);
    const RowMatrix<Scalar> z = fc_relu_.forward(fc1_.forward(gap_.forward(h)));
    return fc2_.forward(z).transpose();
  }

  /// Eval-mode forward: running statistics, no caching, safe to call concurrently.
  RowMatrix<Scalar> infer(const FeatureMap<Scalar>& x) const {
    FeatureMap<Scalar> h = Relu<Scalar>::infer(stem_bn_.infer(stem_.infer(x)));
    if (config_.stem_pool > 1) h = MaxPoolWidth<Scalar>(config_.stem_pool).infer(h);
    for (const auto& b : blocks_) h = b.infer(h);
    const RowMatrix<Scalar> z = Relu<Scalar>::infer(fc1_.infer(GlobalAvgPool<Scalar>::infer(h)));
    return fc2_.infer(z).transpose();
  }

  RowMatrix<Scalar> forward(const FeatureMap<Scalar>& x, Mode mode) {
    return mode == Mode::Train ? forward(x) : infer(x);
  }

  /// Backpropagates batch x 2 logit gradients from the last train-mode forward,
  /// accumulating into parameter gradients.
  FeatureMap<Scalar> backward(const RowMatrix<Scalar>& grad_logits, bool input_grad = false) {
    RowMatrix<Scalar> g = fc2_.backward(grad_logits.transpose());
    g = fc1_.backward(fc_relu_.backward(g));
    FeatureMap<Scalar> h = gap_.backward(g);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) h = it->backward(h);
    if (config_.stem_pool > 1) h = pool_.backward(h);
    return stem_.backward(stem_bn_.backward(stem_relu_.backward(h)), input_grad);
  }

  void zero_grad() {
    for (Parameter<Scalar>* p : parameters()) p->grad.set_zero();
  }

  std::vector<Parameter<Scalar>*> parameters() {
    auto [t, b] = collect();
    return t;
  }
  std::vector<Parameter<Scalar>*> buffers() {
    auto [t, b] = collect();
    return b;
  }
  /// Every named tensor (trainable first, then buffers), in a fixed order.
  std::vector<Parameter<Scalar>*> state() {
    auto [t, b] = collect();
    t.insert(t.end(), b.begin(), b.end());
    return t;
  }
  std::vector<const Parameter<Scalar>*> state() const {
    auto all = const_cast<Model*>(this)->state();
    return {all.begin(), all.end()};
  }

 private:
  std::pair<std::vector<Parameter<Scalar>*>, std::vector<Parameter<Scalar>*>> collect() {
    std::vector<Parameter<Scalar>*> trainable, buffers;
    stem_.collect(trainable, buffers);
    stem_bn_.collect(trainable, buffers);
    for (auto& b : blocks_) b.collect(trainable, buffers);
    fc1_.collect(trainable, buffers);
    fc2_.collect(trainable, buffers);
    return {trainable, buffers};
  }

  ModelConfig config_;
  bool trained_ = false;
  Conv2d<Scalar> stem_;
  BatchNorm<Scalar> stem_bn_;
  Relu<Scalar> stem_relu_;
  MaxPoolWidth<Scalar> pool_{1};
  std::vector<ResidualBlock<Scalar>> blocks_;
  GlobalAvgPool<Scalar> gap_;
  Linear<Scalar> fc1_;
  Relu<Scalar> fc_relu_;
  Linear<Scalar> fc2_;
};

/// Logits ([B, 2]) for a batch of pulses.
template <typename Scalar>
Tensor<Scalar> model_forward(Model<Scalar>& model, std::span<const Pulse* const> pulses, Mode mode = Mode::Eval) {
  const RowMatrix<Scalar> logits = model.forward(pack_pulses<Scalar>(pulses, model.config().variant), mode);
  return Tensor<Scalar>({logits.rows(), logits.cols()}, Eigen::Map<const Vector<Scalar>>(logits.data(), logits.size()));
}

template <typename Scalar>
Tensor<Scalar> model_forward(Model<Scalar>& model, const Tensor<Scalar>& batch, Mode mode = Mode::Eval) {
  const RowMatrix<Scalar> logits = model.forward(pack_tensor(batch, model.config().variant), mode);
  return Tensor<Scalar>({logits.rows(), logits.cols()}, Eigen::Map<const Vector<Scalar>>(logits.data(), logits.size()));
}

}  // namespace cao::nn
