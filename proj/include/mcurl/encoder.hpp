#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mcurl/core.hpp"
#include "mcurl/env.hpp"
#include "mcurl/nn.hpp"

namespace mcurl {

struct EncoderConfig {
  int in_channels = 3;  // stack K * frame channels
  int in_height = 56;
  int in_width = 56;
  int conv_channels = 32;
  int num_conv_layers = 4;
  int kernel = 3;
  int first_stride = 2;  // remaining layers stride 1
  int feature_dim = 50;
};

// CNN query encoder: conv stack with ReLU between layers, a linear head,
// and LayerNorm on the output features.
template <typename Scalar>
class PixelEncoder {
 public:
  PixelEncoder() = default;

  explicit PixelEncoder(const EncoderConfig& cfg) : cfg_(cfg) {
    int c = cfg.in_channels, h = cfg.in_height, w = cfg.in_width;
    for (int l = 0; l < cfg.num_conv_layers; ++l) {
      const int stride = l == 0 ? cfg.first_stride : 1;
      convs_.emplace_back(c, h, w, cfg.conv_channels, cfg.kernel, stride,
                          "enc.conv" + std::to_string(l));
      h = convs_.back().out_h();
      w = convs_.back().out_w();
      c = cfg.conv_channels;
    }
    relus_.resize(convs_.size());
    fc_ = Linear<Scalar>(c * h * w, cfg.feature_dim, "enc.fc");
    ln_ = LayerNorm<Scalar>(cfg.feature_dim, "enc.ln");
  }

  void init(Rng& rng) {
    for (auto& cv : convs_) cv.init(rng);
    fc_.init(rng);
  }

  const EncoderConfig& config() const { return cfg_; }
  int feature_dim() const { return cfg_.feature_dim; }
  int input_dim() const { return cfg_.in_channels * cfg_.in_height * cfg_.in_width; }

  // x: (in_channels * H * W) x B -> feature_dim x B
  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool cache = true) {
    Matrix<Scalar> h = x;
    for (std::size_t l = 0; l < convs_.size(); ++l) {
      h = convs_[l].forward(h, cache);
      h = relus_[l].forward(h, cache);
    }
    h = fc_.forward(h, cache);
    return ln_.forward(h, cache);
  }

  // Accumulates parameter grads; input grads are not needed (pixels are leaves).
  void backward(const Matrix<Scalar>& dfeat) {
    Matrix<Scalar> d = ln_.backward(dfeat);
    d = fc_.backward(d);
    for (std::size_t l = convs_.size(); l-- > 0;) {
      d = relus_[l].backward(d);
      d = convs_[l].backward(d, /*input_grad=*/l > 0);
    }
  }

  Matrix<Scalar> encode_stack(const ObservationStack<Scalar>& s, bool cache = false) {
    std::vector<const ObservationStack<Scalar>*> one{&s};
    return forward(stacks_to_matrix(one), cache);
  }

  ParamRefs<Scalar> params() {
    ParamRefs<Scalar> out;
    for (auto& cv : convs_)
      for (auto* p : cv.params()) out.push_back(p);
    for (auto* p : fc_.params()) out.push_back(p);
    for (auto* p : ln_.params()) out.push_back(p);
    return out;
  }

 private:
  EncoderConfig cfg_;
  std::vector<Conv2d<Scalar>> convs_;
  std::vector<ReluLayer<Scalar>> relus_;
  Linear<Scalar> fc_;
  LayerNorm<Scalar> ln_;
};

// Query parameters theta plus their EMA key twin theta_k. The key side
// never appears in a gradient computation; its grad buffers stay zero.
template <typename Scalar>
class MomentumPair {
 public:
  MomentumPair() = default;
  MomentumPair(const EncoderConfig& cfg, Scalar m) : query_(cfg), key_(cfg), m_(m) {
    if (m < Scalar(0) || m > Scalar(1)) throw std::invalid_argument("MomentumPair: m outside [0,1]");
  }

  void init(Rng& rng) {
    query_.init(rng);
    copy_params(key_.params(), query_.params());
  }

  void momentum_update() { ema_update(key_.params(), query_.params(), m_); }

  PixelEncoder<Scalar>& query() { return query_; }
  PixelEncoder<Scalar>& key() { return key_; }
  Scalar momentum() const { return m_; }

  // Forward through theta_k; the result is detached by construction
  // (no backward path exists through this call).
  Matrix<Scalar> key_encode(const Matrix<Scalar>& x) { return key_.forward(x, /*cache=*/false); }

 private:
  PixelEncoder<Scalar> query_;
  PixelEncoder<Scalar> key_;
  Scalar m_ = Scalar(0.05);
};

}  // namespace mcurl
