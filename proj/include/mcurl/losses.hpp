#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mcurl/core.hpp"
#include "mcurl/mask.hpp"
#include "mcurl/nn.hpp"

namespace mcurl {

// Queries, keys and mask for one window. Columns are positions, so
// Q.col(i) is the reconstructed query q_i and K.col(i) the key k_i.
template <typename Scalar>
struct ContrastiveBatch {
  Matrix<Scalar> Q;
  Matrix<Scalar> K;
  MaskVector M;
  Scalar tau = Scalar(1);

  void validate() const {
    if (tau <= Scalar(0)) throw std::invalid_argument("ContrastiveBatch: tau must be positive");
    if (Q.rows() != K.rows() || Q.cols() != K.cols())
      throw std::invalid_argument("ContrastiveBatch: Q/K shape mismatch");
    if (static_cast<Eigen::Index>(M.size()) != Q.cols())
      throw std::invalid_argument("ContrastiveBatch: mask length mismatch");
  }
};

template <typename Scalar>
struct InfoNceResult {
  Scalar loss = Scalar(0);
  Matrix<Scalar> dq;            // gradient wrt Q; keys are behind stop-gradient
  std::size_t masked_count = 0;
  std::size_t correct_count = 0;  // masked positions whose nearest key is their own

  double accuracy() const {
    return masked_count == 0 ? 0.0 : static_cast<double>(correct_count) / masked_count;
  }
};

namespace detail {

// loss = sum_i M_i * (logsumexp_j logits(i,j) - logits(i,i)),
// with dloss/dlogits returned for the masked rows.
template <typename Scalar>
InfoNceResult<Scalar> nce_from_logits(const Matrix<Scalar>& logits, const MaskVector& m,
                                      Matrix<Scalar>& dlogits) {
  const Eigen::Index T = logits.rows();
  InfoNceResult<Scalar> r;
  dlogits.setZero(T, T);
  for (Eigen::Index i = 0; i < T; ++i) {
    if (!m.bits[i]) continue;
    ++r.masked_count;
    const Scalar mx = logits.row(i).maxCoeff();
    Vector<Scalar> e = (logits.row(i).array() - mx).exp();
    const Scalar z = e.sum();
    r.loss += std::log(z) + mx - logits(i, i);
    dlogits.row(i) = (e / z).transpose();
    dlogits(i, i) -= Scalar(1);
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (best == i) ++r.correct_count;
  }
  return r;
}

}  // namespace detail

// Masked InfoNCE over one window: dot-product similarity at temperature
// tau, negatives are the other keys of the same window. Gradient flows
// into Q only.
template <typename Scalar>
InfoNceResult<Scalar> masked_infonce_with_grad(const ContrastiveBatch<Scalar>& batch) {
  batch.validate();
  Matrix<Scalar> logits = batch.Q.transpose() * batch.K / batch.tau;
  Matrix<Scalar> dlogits;
  InfoNceResult<Scalar> r = detail::nce_from_logits(logits, batch.M, dlogits);
  r.dq.noalias() = batch.K * dlogits.transpose() / batch.tau;
  return r;
}

template <typename Scalar>
Scalar masked_infonce(const ContrastiveBatch<Scalar>& batch) {
  return masked_infonce_with_grad(batch).loss;
}

// Optional learned bilinear similarity q_i^T W k_j (in place of dot/tau).
template <typename Scalar>
class BilinearSimilarity {
 public:
  BilinearSimilarity() = default;
  explicit BilinearSimilarity(int dim) {
    w_.resize(dim, dim);
    w_.value.setIdentity();
    w_.name = "ct.bilinear";
  }

  InfoNceResult<Scalar> loss_with_grad(const ContrastiveBatch<Scalar>& batch) {
    batch.validate();
    Matrix<Scalar> wk = w_.value * batch.K;
    Matrix<Scalar> logits = batch.Q.transpose() * wk / batch.tau;
    Matrix<Scalar> dlogits;
    InfoNceResult<Scalar> r = detail::nce_from_logits(logits, batch.M, dlogits);
    r.dq.noalias() = wk * dlogits.transpose() / batch.tau;
    w_.grad.noalias() += batch.Q * dlogits * batch.K.transpose() / batch.tau;
    return r;
  }

  Param<Scalar>& weight() { return w_; }
  ParamRefs<Scalar> params() { return {&w_}; }

 private:
  Param<Scalar> w_;
};

// Joint objective of the RL and contrastive terms.
template <typename Scalar>
Scalar combine(Scalar l_rl, Scalar l_ct, Scalar lambda) {
  return l_rl + lambda * l_ct;
}

}  // namespace mcurl
