#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcurl/core.hpp"

namespace mcurl {

template <typename Scalar>
struct Param {
  Matrix<Scalar> value;
  Matrix<Scalar> grad;
  Matrix<Scalar> adam_m;
  Matrix<Scalar> adam_v;
  std::string name;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

template <typename Scalar>
using ParamRefs = std::vector<Param<Scalar>*>;

template <typename Scalar>
void zero_grads(const ParamRefs<Scalar>& params) {
  for (auto* p : params) p->zero_grad();
}

// theta_k = m * theta + (1 - m) * theta_k, elementwise, gradient-free.
template <typename Scalar>
void ema_update(const ParamRefs<Scalar>& target, const ParamRefs<Scalar>& source, Scalar m) {
  if (target.size() != source.size()) throw std::invalid_argument("ema_update: parameter count mismatch");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i]->value.rows() != source[i]->value.rows() ||
        target[i]->value.cols() != source[i]->value.cols())
      throw std::invalid_argument("ema_update: shape mismatch at " + source[i]->name);
    target[i]->value = m * source[i]->value + (Scalar(1) - m) * target[i]->value;
  }
}

template <typename Scalar>
void copy_params(const ParamRefs<Scalar>& dst, const ParamRefs<Scalar>& src) {
  if (dst.size() != src.size()) throw std::invalid_argument("copy_params: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->value = src[i]->value;
}

// Orthogonal rows/columns (whichever is the smaller side), QR-based.
template <typename Scalar>
void orthogonal_init(Matrix<Scalar>& w, Rng& rng, Scalar gain = Scalar(1)) {
  const bool tall = w.rows() >= w.cols();
  const Eigen::Index r = tall ? w.rows() : w.cols();
  const Eigen::Index c = tall ? w.cols() : w.rows();
  Matrix<Scalar> a(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) a(i, j) = static_cast<Scalar>(rng.normal());
  Eigen::HouseholderQR<Matrix<Scalar>> qr(a);
  Matrix<Scalar> q = qr.householderQ() * Matrix<Scalar>::Identity(r, c);
  Matrix<Scalar> rr = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < c; ++j)
    if (rr(j, j) < Scalar(0)) q.col(j) = -q.col(j);
  w = tall ? (gain * q) : Matrix<Scalar>(gain * q.transpose());
}

template <typename Scalar>
class Adam {
 public:
  explicit Adam(Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999), Scalar eps = Scalar(1e-8))
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const ParamRefs<Scalar>& params, Scalar lr) {
    ++t_;
    const Scalar c1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(t_));
    for (auto* p : params) {
      if (p->adam_m.size() == 0) {
        p->adam_m.setZero(p->value.rows(), p->value.cols());
        p->adam_v.setZero(p->value.rows(), p->value.cols());
      }
      p->adam_m = beta1_ * p->adam_m + (Scalar(1) - beta1_) * p->grad;
      p->adam_v = beta2_ * p->adam_v + (Scalar(1) - beta2_) * p->grad.cwiseProduct(p->grad);
      p->value.array() -=
          lr * (p->adam_m.array() / c1) / ((p->adam_v.array() / c2).sqrt() + eps_);
    }
  }

  long steps_taken() const { return t_; }
  void set_steps_taken(long t) { t_ = t; }

 private:
  Scalar beta1_, beta2_, eps_;
  long t_ = 0;
};

template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, std::string name = "linear") {
    w_.resize(out, in);
    b_.resize(out, 1);
    w_.name = name + ".w";
    b_.name = name + ".b";
  }

  void init(Rng& rng, Scalar gain = Scalar(1)) {
    orthogonal_init(w_.value, rng, gain);
    b_.value.setZero();
  }

  // x: in x B -> out x B
  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool cache = true) {
    if (x.rows() != w_.value.cols()) throw std::invalid_argument("Linear: input dim mismatch");
    if (cache) x_ = x;
    Matrix<Scalar> y = w_.value * x;
    y.colwise() += Vector<Scalar>(b_.value.col(0));
    return y;
  }

  // Accumulates parameter grads, returns grad wrt input.
  Matrix<Scalar> backward(const Matrix<Scalar>& dy, bool input_grad = true, bool param_grad = true) {
    if (param_grad) {
      if (x_.size() == 0) throw std::logic_error("Linear::backward without cached forward");
      w_.grad.noalias() += dy * x_.transpose();
      b_.grad.col(0) += dy.rowwise().sum();
    }
    if (!input_grad) return Matrix<Scalar>();
    return w_.value.transpose() * dy;
  }

  Param<Scalar>& weight() { return w_; }
  Param<Scalar>& bias() { return b_; }
  ParamRefs<Scalar> params() { return {&w_, &b_}; }

 private:
  Param<Scalar> w_, b_;
  Matrix<Scalar> x_;
};

template <typename Scalar>
class ReluLayer {
 public:
  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool cache = true) {
    Matrix<Scalar> y = x.cwiseMax(Scalar(0));
    if (cache) mask_ = (x.array() > Scalar(0)).template cast<Scalar>();
    return y;
  }
  Matrix<Scalar> backward(const Matrix<Scalar>& dy) const {
    return dy.cwiseProduct(mask_);
  }

 private:
  Matrix<Scalar> mask_;
};

// Normalizes each column over the feature dimension; learnable gain/bias.
template <typename Scalar>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(int dim, std::string name = "ln") {
    g_.resize(dim, 1);
    b_.resize(dim, 1);
    g_.value.setOnes();
    g_.name = name + ".g";
    b_.name = name + ".b";
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool cache = true) {
    const Scalar d = static_cast<Scalar>(x.rows());
    Matrix<Scalar> xhat(x.rows(), x.cols());
    Vector<Scalar> inv_std(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const Scalar mu = x.col(j).mean();
      const Scalar var = (x.col(j).array() - mu).square().sum() / d;
      const Scalar is = Scalar(1) / std::sqrt(var + eps_);
      xhat.col(j) = (x.col(j).array() - mu) * is;
      inv_std[j] = is;
    }
    Matrix<Scalar> y =
        (xhat.array().colwise() * g_.value.col(0).array()).colwise() + b_.value.col(0).array();
    if (cache) {
      xhat_ = std::move(xhat);
      inv_std_ = std::move(inv_std);
    }
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy) {
    if (xhat_.size() == 0) throw std::logic_error("LayerNorm::backward without cached forward");
    const Scalar d = static_cast<Scalar>(dy.rows());
    g_.grad.col(0) += dy.cwiseProduct(xhat_).rowwise().sum();
    b_.grad.col(0) += dy.rowwise().sum();
    Matrix<Scalar> dxhat = dy.array().colwise() * g_.value.col(0).array();
    Matrix<Scalar> dx(dy.rows(), dy.cols());
    for (Eigen::Index j = 0; j < dy.cols(); ++j) {
      const Scalar m1 = dxhat.col(j).mean();
      const Scalar m2 = dxhat.col(j).cwiseProduct(xhat_.col(j)).sum() / d;
      dx.col(j) = (dxhat.col(j).array() - m1 - xhat_.col(j).array() * m2) * inv_std_[j];
    }
    return dx;
  }

  Param<Scalar>& gain() { return g_; }
  Param<Scalar>& bias() { return b_; }
  ParamRefs<Scalar> params() { return {&g_, &b_}; }

 private:
  Param<Scalar> g_, b_;
  Matrix<Scalar> xhat_;
  Vector<Scalar> inv_std_;
  static constexpr Scalar eps_ = Scalar(1e-8);
};

// Valid (unpadded) convolution via im2col and one batched GEMM.
// Activations are (channels * height * width) x batch, planar layout.
template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_c, int in_h, int in_w, int out_c, int kernel, int stride, std::string name = "conv")
      : in_c_(in_c), in_h_(in_h), in_w_(in_w), out_c_(out_c), k_(kernel), stride_(stride) {
    out_h_ = (in_h - kernel) / stride + 1;
    out_w_ = (in_w - kernel) / stride + 1;
    if (out_h_ < 1 || out_w_ < 1) throw std::invalid_argument("Conv2d: kernel larger than input");
    w_.resize(out_c, in_c * kernel * kernel);
    b_.resize(out_c, 1);
    w_.name = name + ".w";
    b_.name = name + ".b";
  }

  void init(Rng& rng, Scalar gain = Scalar(1)) {
    orthogonal_init(w_.value, rng, gain);
    b_.value.setZero();
  }

  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }
  int out_c() const { return out_c_; }
  int out_dim() const { return out_c_ * out_h_ * out_w_; }
  int in_dim() const { return in_c_ * in_h_ * in_w_; }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, bool cache = true) {
    if (x.rows() != in_dim()) throw std::invalid_argument("Conv2d: input dim mismatch");
    const Eigen::Index batch = x.cols();
    const int P = out_h_ * out_w_;
    Matrix<Scalar>& col = cache ? col_ : scratch_col_;
    im2col(x, col);
    Matrix<Scalar> prod = w_.value * col;  // out_c x (B*P)
    prod.colwise() += Vector<Scalar>(b_.value.col(0));
    Matrix<Scalar> y(out_dim(), batch);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int c = 0; c < out_c_; ++c)
        for (int p = 0; p < P; ++p) y(c * P + p, b) = prod(c, b * P + p);
    if (!cache) scratch_col_.resize(0, 0);
    return y;
  }

  Matrix<Scalar> backward(const Matrix<Scalar>& dy, bool input_grad = true) {
    if (col_.size() == 0) throw std::logic_error("Conv2d::backward without cached forward");
    const Eigen::Index batch = dy.cols();
    const int P = out_h_ * out_w_;
    Matrix<Scalar> dprod(out_c_, batch * P);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (int c = 0; c < out_c_; ++c)
        for (int p = 0; p < P; ++p) dprod(c, b * P + p) = dy(c * P + p, b);
    w_.grad.noalias() += dprod * col_.transpose();
    b_.grad.col(0) += dprod.rowwise().sum();
    if (!input_grad) return Matrix<Scalar>();
    Matrix<Scalar> dcol = w_.value.transpose() * dprod;  // (in_c*k*k) x (B*P)
    return col2im(dcol, batch);
  }

  Param<Scalar>& weight() { return w_; }
  Param<Scalar>& bias() { return b_; }
  ParamRefs<Scalar> params() { return {&w_, &b_}; }

 private:
  void im2col(const Matrix<Scalar>& x, Matrix<Scalar>& col) const {
    const Eigen::Index batch = x.cols();
    const int P = out_h_ * out_w_;
    col.resize(in_c_ * k_ * k_, batch * P);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Scalar* xb = x.col(b).data();
      for (int oy = 0; oy < out_h_; ++oy) {
        for (int ox = 0; ox < out_w_; ++ox) {
          Scalar* cp = col.col(b * P + oy * out_w_ + ox).data();
          for (int c = 0; c < in_c_; ++c) {
            const Scalar* plane = xb + static_cast<std::size_t>(c) * in_h_ * in_w_;
            for (int ky = 0; ky < k_; ++ky) {
              const Scalar* row = plane + static_cast<std::size_t>(oy * stride_ + ky) * in_w_ +
                                  ox * stride_;
              for (int kx = 0; kx < k_; ++kx) *cp++ = row[kx];
            }
          }
        }
      }
    }
  }

  Matrix<Scalar> col2im(const Matrix<Scalar>& dcol, Eigen::Index batch) const {
    const int P = out_h_ * out_w_;
    Matrix<Scalar> dx = Matrix<Scalar>::Zero(in_dim(), batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      Scalar* xb = dx.col(b).data();
      for (int oy = 0; oy < out_h_; ++oy) {
        for (int ox = 0; ox < out_w_; ++ox) {
          const Scalar* cp = dcol.col(b * P + oy * out_w_ + ox).data();
          for (int c = 0; c < in_c_; ++c) {
            Scalar* plane = xb + static_cast<std::size_t>(c) * in_h_ * in_w_;
            for (int ky = 0; ky < k_; ++ky) {
              Scalar* row = plane + static_cast<std::size_t>(oy * stride_ + ky) * in_w_ +
                            ox * stride_;
              for (int kx = 0; kx < k_; ++kx) row[kx] += *cp++;
            }
          }
        }
      }
    }
    return dx;
  }

  int in_c_ = 0, in_h_ = 0, in_w_ = 0, out_c_ = 0, k_ = 0, stride_ = 1;
  int out_h_ = 0, out_w_ = 0;
  Param<Scalar> w_, b_;
  Matrix<Scalar> col_;
  Matrix<Scalar> scratch_col_;
};

// Row-wise softmax with max subtraction.
template <typename Scalar>
void softmax_rows_inplace(Matrix<Scalar>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Scalar mx = m.row(i).maxCoeff();
    m.row(i) = (m.row(i).array() - mx).exp();
    m.row(i) /= m.row(i).sum();
  }
}

}  // namespace mcurl
