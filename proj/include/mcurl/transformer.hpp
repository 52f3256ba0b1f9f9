#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcurl/core.hpp"
#include "mcurl/nn.hpp"

namespace mcurl {

// Fixed sinusoid table, T x d, rows are positions. Not learned.
//   p(k, 2i)   = sin(k / 10000^(2i/d))
//   p(k, 2i+1) = cos(k / 10000^(2i/d))
template <typename Scalar>
Matrix<Scalar> positional_table(int T, int d) {
  if (T < 1) throw std::invalid_argument("positional_table: T must be >= 1");
  if (d % 2 != 0) throw std::invalid_argument("positional_table: d must be even");
  Matrix<Scalar> p(T, d);
  for (int k = 0; k < T; ++k) {
    for (int i = 0; i < d / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / d);
      p(k, 2 * i) = static_cast<Scalar>(std::sin(k * freq));
      p(k, 2 * i + 1) = static_cast<Scalar>(std::cos(k * freq));
    }
  }
  return p;
}

// Row k of the table is added to feature column k.
template <typename Scalar>
Matrix<Scalar> add_positions(const Matrix<Scalar>& h0, const Matrix<Scalar>& table) {
  if (table.rows() != h0.cols() || table.cols() != h0.rows())
    throw std::invalid_argument("add_positions: shape mismatch");
  return h0 + table.transpose();
}

struct TransformerConfig {
  int dim = 50;
  int num_layers = 2;
  int num_heads = 1;
  int ffn_mult = 4;
  bool scaled_attention = false;  // the block equations carry no 1/sqrt(d) factor

  void validate() const {
    if (dim < 1 || num_layers < 0 || ffn_mult < 1) throw std::invalid_argument("transformer: bad dims");
    if (num_heads < 1 || num_heads > 4) throw std::invalid_argument("transformer: heads must be 1..4");
    if (dim % num_heads != 0) throw std::invalid_argument("transformer: dim must be divisible by heads");
  }
};

// One encoder block, post-norm ordering:
//   attention -> LayerNorm(residual) -> feed-forward -> LayerNorm(residual)
template <typename Scalar>
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const TransformerConfig& cfg, const std::string& name) : cfg_(cfg) {
    const int d = cfg.dim;
    wq_.resize(d, d);
    wk_.resize(d, d);
    wv_.resize(d, d);
    wq_.name = name + ".wq";
    wk_.name = name + ".wk";
    wv_.name = name + ".wv";
    ln1_ = LayerNorm<Scalar>(d, name + ".ln1");
    ln2_ = LayerNorm<Scalar>(d, name + ".ln2");
    ffn1_ = Linear<Scalar>(d, d * cfg.ffn_mult, name + ".ffn1");
    ffn2_ = Linear<Scalar>(d * cfg.ffn_mult, d, name + ".ffn2");
  }

  void init(Rng& rng) {
    orthogonal_init(wq_.value, rng);
    orthogonal_init(wk_.value, rng);
    orthogonal_init(wv_.value, rng);
    ffn1_.init(rng);
    ffn2_.init(rng);
  }

  // h: d x T, columns are positions.
  Matrix<Scalar> forward(const Matrix<Scalar>& h, bool cache = true) {
    const int d = cfg_.dim;
    const int nh = cfg_.num_heads;
    const int dh = d / nh;
    if (h.rows() != d) throw std::invalid_argument("TransformerBlock: feature dim mismatch");
    const Eigen::Index T = h.cols();

    Matrix<Scalar> q = wq_.value * h;
    Matrix<Scalar> k = wk_.value * h;
    Matrix<Scalar> v = wv_.value * h;

    Matrix<Scalar> attn(d, T);
    std::vector<Matrix<Scalar>> alphas(nh);
    for (int hd = 0; hd < nh; ++hd) {
      auto qh = q.middleRows(hd * dh, dh);
      auto kh = k.middleRows(hd * dh, dh);
      Matrix<Scalar> scores = qh.transpose() * kh;  // scores(i,j) = q_i . k_j
      if (cfg_.scaled_attention) scores /= std::sqrt(static_cast<Scalar>(dh));
      softmax_rows_inplace(scores);
      attn.middleRows(hd * dh, dh) = v.middleRows(hd * dh, dh) * scores.transpose();
      alphas[hd] = std::move(scores);
    }

    Matrix<Scalar> mid = ln1_.forward(h + attn, cache);
    Matrix<Scalar> f = ffn2_.forward(relu_.forward(ffn1_.forward(mid, cache), cache), cache);
    Matrix<Scalar> out = ln2_.forward(mid + f, cache);

    if (cache) {
      h_ = h;
      q_ = std::move(q);
      k_ = std::move(k);
      v_ = std::move(v);
      alphas_ = std::move(alphas);
    }
    return out;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dout) {
    const int d = cfg_.dim;
    const int nh = cfg_.num_heads;
    const int dh = d / nh;

    Matrix<Scalar> dsum2 = ln2_.backward(dout);
    Matrix<Scalar> dmid = dsum2;  // residual branch
    dmid += ffn1_.backward(relu_.backward(ffn2_.backward(dsum2)));
    Matrix<Scalar> dsum1 = ln1_.backward(dmid);

    Matrix<Scalar> dh = dsum1;  // residual branch
    Matrix<Scalar> dq(d, dsum1.cols()), dk(d, dsum1.cols()), dv(d, dsum1.cols());
    for (int hd = 0; hd < nh; ++hd) {
      const Matrix<Scalar>& alpha = alphas_[hd];
      auto dattn = dsum1.middleRows(hd * dh, dh);
      auto vh = v_.middleRows(hd * dh, dh);
      dv.middleRows(hd * dh, dh) = dattn * alpha;
      Matrix<Scalar> dalpha = dattn.transpose() * vh;  // T x T
      Matrix<Scalar> dscores(alpha.rows(), alpha.cols());
      for (Eigen::Index i = 0; i < alpha.rows(); ++i) {
        const Scalar dot = dalpha.row(i).cwiseProduct(alpha.row(i)).sum();
        dscores.row(i) = alpha.row(i).cwiseProduct(dalpha.row(i).array() - dot);
      }
      if (cfg_.scaled_attention) dscores /= std::sqrt(static_cast<Scalar>(dh));
      dq.middleRows(hd * dh, dh) = k_.middleRows(hd * dh, dh) * dscores.transpose();
      dk.middleRows(hd * dh, dh) = q_.middleRows(hd * dh, dh) * dscores;
    }
    wq_.grad.noalias() += dq * h_.transpose();
    wk_.grad.noalias() += dk * h_.transpose();
    wv_.grad.noalias() += dv * h_.transpose();
    dh.noalias() += wq_.value.transpose() * dq;
    dh.noalias() += wk_.value.transpose() * dk;
    dh.noalias() += wv_.value.transpose() * dv;
    return dh;
  }

  ParamRefs<Scalar> params() {
    ParamRefs<Scalar> out{&wq_, &wk_, &wv_};
    for (auto* p : ffn1_.params()) out.push_back(p);
    for (auto* p : ffn2_.params()) out.push_back(p);
    for (auto* p : ln1_.params()) out.push_back(p);
    for (auto* p : ln2_.params()) out.push_back(p);
    return out;
  }

  const std::vector<Matrix<Scalar>>& attention_weights() const { return alphas_; }

 private:
  TransformerConfig cfg_;
  Param<Scalar> wq_, wk_, wv_;
  LayerNorm<Scalar> ln1_, ln2_;
  Linear<Scalar> ffn1_, ffn2_;
  ReluLayer<Scalar> relu_;
  Matrix<Scalar> h_, q_, k_, v_;
  std::vector<Matrix<Scalar>> alphas_;
};

// Position table plus L stacked blocks; reconstructs masked features
// from context.
template <typename Scalar>
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  explicit TransformerEncoder(const TransformerConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    for (int l = 0; l < cfg.num_layers; ++l)
      blocks_.emplace_back(cfg, "tf.block" + std::to_string(l));
  }

  void init(Rng& rng) {
    for (auto& b : blocks_) b.init(rng);
  }

  const TransformerConfig& config() const { return cfg_; }
  std::size_t num_layers() const { return blocks_.size(); }

  // h0: d x T feature columns; table: T x d positional rows.
  Matrix<Scalar> forward(const Matrix<Scalar>& h0, const Matrix<Scalar>& table, bool cache = true) {
    Matrix<Scalar> h = add_positions(h0, table);
    for (auto& b : blocks_) h = b.forward(h, cache);
    return h;
  }

  // Returns grad wrt h0 (the positional table is constant).
  Matrix<Scalar> backward(const Matrix<Scalar>& dhl) {
    Matrix<Scalar> d = dhl;
    for (std::size_t l = blocks_.size(); l-- > 0;) d = blocks_[l].backward(d);
    return d;
  }

  ParamRefs<Scalar> params() {
    ParamRefs<Scalar> out;
    for (auto& b : blocks_)
      for (auto* p : b.params()) out.push_back(p);
    return out;
  }

  std::vector<TransformerBlock<Scalar>>& blocks() { return blocks_; }

 private:
  TransformerConfig cfg_;
  std::vector<TransformerBlock<Scalar>> blocks_;
};

}  // namespace mcurl
