#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcurl/core.hpp"
#include "mcurl/nn.hpp"

namespace mcurl {

struct SacConfig {
  int feature_dim = 50;
  int action_dim = 2;
  int hidden = 256;
  double log_std_min = -10.0;
  double log_std_max = 2.0;
};

// Diagonal-Gaussian policy with tanh squashing; three fully connected
// layers produce means and log-stds.
template <typename Scalar>
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  explicit GaussianPolicy(const SacConfig& cfg)
      : cfg_(cfg),
        l1_(cfg.feature_dim, cfg.hidden, "actor.l1"),
        l2_(cfg.hidden, cfg.hidden, "actor.l2"),
        l3_(cfg.hidden, 2 * cfg.action_dim, "actor.l3") {}

  void init(Rng& rng) {
    l1_.init(rng);
    l2_.init(rng);
    l3_.init(rng);
  }

  const SacConfig& config() const { return cfg_; }

  struct Head {
    Matrix<Scalar> mean;     // A x B
    Matrix<Scalar> log_std;  // clamped
    Matrix<Scalar> in_range;  // 1 where the raw log-std is strictly inside the clamp interval
  };

  Head head(const Matrix<Scalar>& features, bool cache = true) {
    Matrix<Scalar> h = r1_.forward(l1_.forward(features, cache), cache);
    h = r2_.forward(l2_.forward(h, cache), cache);
    Matrix<Scalar> out = l3_.forward(h, cache);
    const int A = cfg_.action_dim;
    Head hd;
    hd.mean = out.topRows(A);
    Matrix<Scalar> raw = out.bottomRows(A);
    const Scalar lo = static_cast<Scalar>(cfg_.log_std_min);
    const Scalar hi = static_cast<Scalar>(cfg_.log_std_max);
    hd.in_range = ((raw.array() > lo) && (raw.array() < hi)).template cast<Scalar>();
    hd.log_std = raw.array().max(lo).min(hi);
    return hd;
  }

  // Squashed reparameterized sample: a = tanh(mean + std * eps), plus the
  // log-density with change-of-variables correction
  //   log pi(a) = sum_d [ logN(u_d) - log(1 - tanh(u_d)^2) ]
  // computed in the numerically stable form
  //   log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)).
  struct Sample {
    Matrix<Scalar> action;    // tanh(u), A x B
    Matrix<Scalar> u;         // pre-squash
    Matrix<Scalar> eps;       // the fixed noise used
    Vector<Scalar> log_prob;  // per column
    Head head;
  };

  Sample sample_with_eps(const Matrix<Scalar>& features, const Matrix<Scalar>& eps,
                         bool cache = true) {
    Sample s;
    s.head = head(features, cache);
    s.eps = eps;
    Matrix<Scalar> std = s.head.log_std.array().exp();
    s.u = s.head.mean + std.cwiseProduct(eps);
    s.action = s.u.array().tanh();
    const Scalar half_log_2pi = Scalar(0.5) * std::log(Scalar(2) * Scalar(EIGEN_PI));
    s.log_prob.setZero(features.cols());
    for (Eigen::Index b = 0; b < features.cols(); ++b) {
      Scalar lp = 0;
      for (int d = 0; d < cfg_.action_dim; ++d) {
        const Scalar e = eps(d, b);
        lp += -Scalar(0.5) * e * e - s.head.log_std(d, b) - half_log_2pi;
        const Scalar uu = s.u(d, b);
        lp -= Scalar(2) * (std::log(Scalar(2)) - uu - softplus(-Scalar(2) * uu));
      }
      s.log_prob[b] = lp;
    }
    return s;
  }

  Sample sample(const Matrix<Scalar>& features, Rng& rng, bool cache = true) {
    Matrix<Scalar> eps(cfg_.action_dim, features.cols());
    for (Eigen::Index b = 0; b < eps.cols(); ++b)
      for (int d = 0; d < cfg_.action_dim; ++d) eps(d, b) = static_cast<Scalar>(rng.normal());
    return sample_with_eps(features, eps, cache);
  }

  // Single-state convenience: action strictly inside (-1,1)^A.
  Vector<Scalar> act(const Matrix<Scalar>& feature, bool deterministic, Rng& rng) {
    if (deterministic) {
      Head hd = head(feature, /*cache=*/false);
      return hd.mean.col(0).array().tanh();
    }
    return sample(feature, rng, /*cache=*/false).action.col(0);
  }

  // Backpropagates d(loss)/d(action) and d(loss)/d(log pi) through the
  // reparameterized sample into the trunk parameters. Feature gradients
  // are not propagated (the encoder sees no gradient from the policy).
  void backward_sample(const Sample& s, const Matrix<Scalar>& daction,
                       const Vector<Scalar>& dlogpi) {
    const int A = cfg_.action_dim;
    Matrix<Scalar> tanh_u = s.action;
    Matrix<Scalar> du(A, s.u.cols());
    Matrix<Scalar> dlogstd(A, s.u.cols());
    Matrix<Scalar> std = s.head.log_std.array().exp();
    for (Eigen::Index b = 0; b < s.u.cols(); ++b) {
      for (int d = 0; d < A; ++d) {
        const Scalar w = dlogpi[b];
        // d log pi / du = 2 tanh(u); d a / du = 1 - tanh(u)^2
        Scalar g = daction(d, b) * (Scalar(1) - tanh_u(d, b) * tanh_u(d, b)) +
                   w * Scalar(2) * tanh_u(d, b);
        du(d, b) = g;
        // u = mean + std * eps; log pi carries an extra -1 per log-std
        dlogstd(d, b) = g * std(d, b) * s.eps(d, b) - w;
      }
    }
    Matrix<Scalar> dout(2 * A, s.u.cols());
    dout.topRows(A) = du;
    dout.bottomRows(A) = dlogstd.cwiseProduct(s.head.in_range);
    Matrix<Scalar> dh = l3_.backward(dout);
    dh = l2_.backward(r2_.backward(dh));
    l1_.backward(r1_.backward(dh), /*input_grad=*/false);
  }

  ParamRefs<Scalar> params() {
    ParamRefs<Scalar> out;
    for (auto* p : l1_.params()) out.push_back(p);
    for (auto* p : l2_.params()) out.push_back(p);
    for (auto* p : l3_.params()) out.push_back(p);
    return out;
  }

 private:
  static Scalar softplus(Scalar x) {
    // log(1 + e^x), overflow-safe
    return x > Scalar(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }

  SacConfig cfg_;
  Linear<Scalar> l1_, l2_, l3_;
  ReluLayer<Scalar> r1_, r2_;
};

// One Q head over (feature, action); three fully connected layers.
template <typename Scalar>
class QHead {
 public:
  QHead() = default;
  QHead(const SacConfig& cfg, const std::string& name)
      : cfg_(cfg),
        l1_(cfg.feature_dim + cfg.action_dim, cfg.hidden, name + ".l1"),
        l2_(cfg.hidden, cfg.hidden, name + ".l2"),
        l3_(cfg.hidden, 1, name + ".l3") {}

  void init(Rng& rng) {
    l1_.init(rng);
    l2_.init(rng);
    l3_.init(rng);
  }

  // -> 1 x B row of Q values
  Matrix<Scalar> forward(const Matrix<Scalar>& features, const Matrix<Scalar>& actions,
                         bool cache = true) {
    Matrix<Scalar> in(cfg_.feature_dim + cfg_.action_dim, features.cols());
    in.topRows(cfg_.feature_dim) = features;
    in.bottomRows(cfg_.action_dim) = actions;
    Matrix<Scalar> h = r1_.forward(l1_.forward(in, cache), cache);
    h = r2_.forward(l2_.forward(h, cache), cache);
    return l3_.forward(h, cache);
  }

  struct InputGrads {
    Matrix<Scalar> dfeatures;
    Matrix<Scalar> dactions;
  };

  // param_grad=false evaluates only d(loss)/d(inputs), used by the actor
  // update where the critic is held constant.
  InputGrads backward(const Matrix<Scalar>& dq, bool param_grad = true) {
    Matrix<Scalar> dh = l3_.backward(dq, /*input_grad=*/true, param_grad);
    dh = l2_.backward(r2_.backward(dh), /*input_grad=*/true, param_grad);
    Matrix<Scalar> din = l1_.backward(r1_.backward(dh), /*input_grad=*/true, param_grad);
    return {din.topRows(cfg_.feature_dim), din.bottomRows(cfg_.action_dim)};
  }

  ParamRefs<Scalar> params() {
    ParamRefs<Scalar> out;
    for (auto* p : l1_.params()) out.push_back(p);
    for (auto* p : l2_.params()) out.push_back(p);
    for (auto* p : l3_.params()) out.push_back(p);
    return out;
  }

 private:
  SacConfig cfg_;
  Linear<Scalar> l1_, l2_, l3_;
  ReluLayer<Scalar> r1_, r2_;
};

// Two independent Q heads plus EMA target copies.
template <typename Scalar>
class TwinCritic {
 public:
  TwinCritic() = default;
  explicit TwinCritic(const SacConfig& cfg)
      : q1_(cfg, "critic.q1"), q2_(cfg, "critic.q2"),
        tq1_(cfg, "critic.tq1"), tq2_(cfg, "critic.tq2") {}

  void init(Rng& rng) {
    q1_.init(rng);
    q2_.init(rng);
    copy_params(tq1_.params(), q1_.params());
    copy_params(tq2_.params(), q2_.params());
  }

  // target <- tau2 * main + (1 - tau2) * target
  void update_targets(Scalar tau2) {
    ema_update(tq1_.params(), q1_.params(), tau2);
    ema_update(tq2_.params(), q2_.params(), tau2);
  }

  QHead<Scalar>& q1() { return q1_; }
  QHead<Scalar>& q2() { return q2_; }
  QHead<Scalar>& target_q1() { return tq1_; }
  QHead<Scalar>& target_q2() { return tq2_; }

  // min over the two target heads, gradient-free
  Vector<Scalar> target_min(const Matrix<Scalar>& features, const Matrix<Scalar>& actions) {
    Matrix<Scalar> a = tq1_.forward(features, actions, /*cache=*/false);
    Matrix<Scalar> b = tq2_.forward(features, actions, /*cache=*/false);
    return a.cwiseMin(b).row(0).transpose();
  }

  ParamRefs<Scalar> params() {
    ParamRefs<Scalar> out;
    for (auto* p : q1_.params()) out.push_back(p);
    for (auto* p : q2_.params()) out.push_back(p);
    return out;
  }
  ParamRefs<Scalar> target_params() {
    ParamRefs<Scalar> out;
    for (auto* p : tq1_.params()) out.push_back(p);
    for (auto* p : tq2_.params()) out.push_back(p);
    return out;
  }

 private:
  QHead<Scalar> q1_, q2_, tq1_, tq2_;
};

// i.i.d. minibatch already encoded to features.
template <typename Scalar>
struct SacBatch {
  Matrix<Scalar> features;       // 50 x B, differentiable wrt encoder
  Matrix<Scalar> actions;        // A x B
  Vector<Scalar> rewards;        // B
  Vector<Scalar> done_mask;      // 1 where the episode terminated
  Matrix<Scalar> next_features;  // 50 x B, momentum-encoded, constant
  Scalar gamma = Scalar(0.99);
};

// Actor, twin critics plus targets, and the learnable temperature.
template <typename Scalar>
class SacAgent {
 public:
  SacAgent() = default;
  SacAgent(const SacConfig& cfg, Scalar init_alpha, Scalar target_entropy)
      : cfg_(cfg), actor_(cfg), critic_(cfg), target_entropy_(target_entropy) {
    if (init_alpha <= Scalar(0)) throw std::invalid_argument("SacAgent: init_alpha must be positive");
    log_alpha_.resize(1, 1);
    log_alpha_.value(0, 0) = std::log(init_alpha);
    log_alpha_.name = "sac.log_alpha";
  }

  void init(Rng& rng) {
    actor_.init(rng);
    critic_.init(rng);
  }

  GaussianPolicy<Scalar>& actor() { return actor_; }
  TwinCritic<Scalar>& critic() { return critic_; }
  Param<Scalar>& log_alpha() { return log_alpha_; }
  Scalar alpha() const { return std::exp(log_alpha_.value(0, 0)); }
  Scalar target_entropy() const { return target_entropy_; }

  // Bellman targets y = r + gamma (1-d) (min_target_Q(s', a') - alpha log pi(a'|s')),
  // a' freshly sampled; entirely gradient-free.
  Vector<Scalar> compute_targets(const SacBatch<Scalar>& batch, Rng& rng) {
    auto next = actor_.sample(batch.next_features, rng, /*cache=*/false);
    Vector<Scalar> tq = critic_.target_min(batch.next_features, next.action);
    Vector<Scalar> y = batch.rewards.array() +
                       batch.gamma * (Scalar(1) - batch.done_mask.array()) *
                           (tq.array() - alpha() * next.log_prob.array());
    return y;
  }

  struct CriticLossResult {
    Scalar loss = Scalar(0);
    Matrix<Scalar> dfeatures;  // gradient wrt the (differentiable) state features
  };

  // Squared Bellman residual, averaged over the batch and both critics.
  // Accumulates critic parameter grads and returns the feature gradient
  // for the encoder.
  CriticLossResult critic_loss(const SacBatch<Scalar>& batch, const Vector<Scalar>& targets) {
    const Eigen::Index B = batch.features.cols();
    Matrix<Scalar> q1 = critic_.q1().forward(batch.features, batch.actions);
    Matrix<Scalar> q2 = critic_.q2().forward(batch.features, batch.actions);
    Matrix<Scalar> r1 = q1.row(0).transpose() - targets;
    Matrix<Scalar> r2 = q2.row(0).transpose() - targets;
    CriticLossResult out;
    out.loss = (r1.squaredNorm() + r2.squaredNorm()) / static_cast<Scalar>(2 * B);
    Matrix<Scalar> dq1 = r1.transpose() / static_cast<Scalar>(B);
    Matrix<Scalar> dq2 = r2.transpose() / static_cast<Scalar>(B);
    auto g1 = critic_.q1().backward(dq1);
    auto g2 = critic_.q2().backward(dq2);
    out.dfeatures = g1.dfeatures + g2.dfeatures;
    return out;
  }

  struct ActorLossResult {
    Scalar loss = Scalar(0);
    Vector<Scalar> log_prob;  // reused by the temperature update
  };

  // E[alpha log pi(a|s) - min Q(s,a)] over reparameterized samples;
  // features are constants here and critics receive no parameter grads.
  ActorLossResult actor_loss_with_eps(const Matrix<Scalar>& features, const Matrix<Scalar>& eps) {
    const Eigen::Index B = features.cols();
    auto s = actor_.sample_with_eps(features, eps);
    Matrix<Scalar> q1 = critic_.q1().forward(features, s.action);
    Matrix<Scalar> q2 = critic_.q2().forward(features, s.action);
    const Scalar a = alpha();
    ActorLossResult out;
    out.log_prob = s.log_prob;
    Matrix<Scalar> dq1 = Matrix<Scalar>::Zero(1, B);
    Matrix<Scalar> dq2 = Matrix<Scalar>::Zero(1, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const Scalar qmin = std::min(q1(0, b), q2(0, b));
      out.loss += a * s.log_prob[b] - qmin;
      // subgradient through the min: route through the smaller head
      if (q1(0, b) <= q2(0, b))
        dq1(0, b) = Scalar(-1) / static_cast<Scalar>(B);
      else
        dq2(0, b) = Scalar(-1) / static_cast<Scalar>(B);
    }
    out.loss /= static_cast<Scalar>(B);
    auto g1 = critic_.q1().backward(dq1, /*param_grad=*/false);
    auto g2 = critic_.q2().backward(dq2, /*param_grad=*/false);
    Matrix<Scalar> daction = g1.dactions + g2.dactions;
    Vector<Scalar> dlogpi = Vector<Scalar>::Constant(B, a / static_cast<Scalar>(B));
    actor_.backward_sample(s, daction, dlogpi);
    return out;
  }

  ActorLossResult actor_loss(const Matrix<Scalar>& features, Rng& rng) {
    Matrix<Scalar> eps(cfg_.action_dim, features.cols());
    for (Eigen::Index b = 0; b < eps.cols(); ++b)
      for (int d = 0; d < cfg_.action_dim; ++d) eps(d, b) = static_cast<Scalar>(rng.normal());
    return actor_loss_with_eps(features, eps);
  }

  // E[-alpha (log pi + target_entropy)], log pi detached; accumulates the
  // gradient on log alpha.
  Scalar temperature_loss(const Vector<Scalar>& log_prob) {
    const Scalar a = alpha();
    const Scalar mean_term =
        (log_prob.array() + target_entropy_).mean();
    const Scalar loss = -a * mean_term;
    log_alpha_.grad(0, 0) += -a * mean_term;  // d/d(log alpha) of -exp(log alpha) * mean_term
    return loss;
  }

  ParamRefs<Scalar> actor_params() { return actor_.params(); }
  ParamRefs<Scalar> critic_params() { return critic_.params(); }
  ParamRefs<Scalar> alpha_params() { return {&log_alpha_}; }

 private:
  SacConfig cfg_;
  GaussianPolicy<Scalar> actor_;
  TwinCritic<Scalar> critic_;
  Param<Scalar> log_alpha_;
  Scalar target_entropy_ = Scalar(-2);
};

}  // namespace mcurl
