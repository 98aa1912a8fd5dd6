#ifndef TASAR_ATTACK_HPP
#define TASAR_ATTACK_HPP

// Iterative signed-gradient attacks under an l-infinity budget.
//
// All three methods share one loop: evaluate loss and input gradient at the
// current iterate, take a signed step (ascent for untargeted, descent for
// targeted), project back into the epsilon-box around the clean input.  They
// differ only in where the gradient comes from: the plain classifier
// (ifgsm), an l1-normalized momentum accumulator over classifier gradients
// (mifgsm), or the head-ensemble gradient passed through the temporal
// dynamics augmentation (tasar_attack).

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tasar/bayes.hpp"
#include "tasar/data.hpp"
#include "tasar/models.hpp"
#include "tasar/tvar.hpp"

namespace tasar {

struct AttackConfig {
  double epsilon = 0.01;
  std::optional<double> step_alpha;  // default: epsilon / 50
  int iterations = 200;
  AttackMode mode;
  double momentum_mu = 1.0;   // mifgsm decay
  DynWeights weights;         // temporal augmentation mix (tasar)
  int M = 20;                 // weight-noise draws per head (tasar)
  double sigma = 0.01;
  double xi = 0.9;
  int refit_interval = 1;     // recurrence refit period in iterations (tasar)
  bool freeze_noise = false;  // reuse iteration-0 noise draws (ablation)
  std::uint64_t seed = 1;

  double alpha() const { return step_alpha ? *step_alpha : epsilon / 50.0; }

  void validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("attack: epsilon must be > 0");
    if (!(alpha() > 0.0)) throw std::invalid_argument("attack: step must be > 0");
    if (iterations < 1) throw std::invalid_argument("attack: iterations must be >= 1");
    if (momentum_mu < 0.0) throw std::invalid_argument("attack: negative momentum");
    if (M < 0 || sigma < 0.0 || !(xi > 0.0) || !(xi < 1.0))
      throw std::invalid_argument("attack: bad ensemble-noise settings");
    if (refit_interval < 1) throw std::invalid_argument("attack: refit_interval < 1");
    weights.validate();
  }
};

struct AdvResult {
  MotionSequence adversarial;
  bool success = false;
  int final_prediction = -1;
  std::vector<double> loss_trace;  // loss at the iterate before each step
  double linf_distance = 0.0;
  // Provenance used by the benchmark when re-evaluating on other models.
  int true_label = -1;
  int clean_prediction = -1;
  int target_label = -1;  // -1 for untargeted
};

inline MotionSequence project_linf(const MotionSequence& adv,
                                   const MotionSequence& clean, double eps) {
  if (adv.frames.rows() != clean.frames.rows() ||
      adv.frames.cols() != clean.frames.cols())
    throw std::invalid_argument("project_linf: shape mismatch");
  if (eps < 0.0) throw std::invalid_argument("project_linf: negative budget");
  MotionSequence out;
  out.frames = adv.frames.array()
                   .max(clean.frames.array() - eps)
                   .min(clean.frames.array() + eps)
                   .matrix();
  return out;
}

// One gradient provider evaluation: loss and gradient at the iterate, plus
// the model's prediction there (used for success tracking at no extra cost).
struct StepEval {
  double loss = 0.0;
  Eigen::MatrixXd grad;
  int prediction = -1;
};

// Gradient source for the baseline attacks ("model_eval").  Implementations
// wrap a plain classifier or the base-plus-head composite.
class GradEval {
 public:
  virtual ~GradEval() = default;
  virtual StepEval step(const MotionSequence& x, int y,
                        const AttackMode& mode) const = 0;
  virtual Eigen::VectorXd logits(const MotionSequence& x) const = 0;

  std::pair<double, Eigen::MatrixXd> loss_and_input_grad(
      const MotionSequence& x, int y, const AttackMode& mode = {}) const {
    StepEval e = step(x, y, mode);
    return {e.loss, std::move(e.grad)};
  }
};

class ClassifierEval : public GradEval {
 public:
  explicit ClassifierEval(const Classifier& c) : c_(&c) {}

  StepEval step(const MotionSequence& x, int y,
                const AttackMode& mode) const override {
    ForwardTrace t;
    c_->forward(x, t);
    StepEval e;
    Eigen::VectorXd dlogits;
    e.loss = cross_entropy(t.logits, mode.label_for_loss(y, c_->class_count()),
                           &dlogits);
    c_->backward(t, dlogits, nullptr, &e.grad);
    e.prediction = argmax(t.logits);
    return e;
  }

  Eigen::VectorXd logits(const MotionSequence& x) const override {
    return c_->logits(x);
  }

 private:
  const Classifier* c_;
};

// Straight-line base-plus-head composite: forward base, forward head with the
// skip connection, cross-entropy; backward head, backward base.
class CompositeEval : public GradEval {
 public:
  CompositeEval(const Classifier& base, const AppendedHead& head)
      : base_(&base), head_(&head) {
    if (head.class_count != base.class_count())
      throw std::invalid_argument("composite: class count mismatch");
  }

  StepEval step(const MotionSequence& x, int y,
                const AttackMode& mode) const override {
    ForwardTrace bt;
    base_->forward(x, bt);
    detail::HeadTrace ht;
    detail::head_forward_trace(*head_, nullptr, bt.logits, ht);
    StepEval e;
    Eigen::VectorXd dout, dz;
    e.loss = cross_entropy(ht.out, mode.label_for_loss(y, base_->class_count()),
                           &dout);
    detail::head_backward(*head_, ht, dout, &dz, nullptr);
    base_->backward(bt, dz, nullptr, &e.grad);
    e.prediction = argmax(ht.out);
    return e;
  }

  Eigen::VectorXd logits(const MotionSequence& x) const override {
    return head_forward(base_->logits(x), *head_);
  }

 private:
  const Classifier* base_;
  const AppendedHead* head_;
};

namespace detail {

inline Eigen::MatrixXd sign_of(const Eigen::MatrixXd& g) {
  return g.unaryExpr([](double v) {
    return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  });
}

// Shared iterative loop.  `eval_at(iterate, iteration)` supplies loss,
// gradient, and the attacked model's prediction at the current point; success
// is tracked stickily over every visited point including the start and end.
inline AdvResult run_signed_attack(
    const std::function<StepEval(const MotionSequence&, int)>& eval_at,
    const std::function<int(const MotionSequence&)>& predict_at,
    const MotionSequence& x, int y, const AttackConfig& cfg, bool momentum) {
  cfg.validate();
  x.validate();
  const double alpha = cfg.alpha();
  const double dir = cfg.mode.targeted ? -1.0 : 1.0;
  auto succeeded = [&](int pred) {
    return cfg.mode.targeted ? pred == cfg.mode.target_label : pred != y;
  };

  AdvResult r;
  r.true_label = y;
  r.target_label = cfg.mode.targeted ? cfg.mode.target_label : -1;
  r.loss_trace.reserve(cfg.iterations);

  MotionSequence cur = x;
  Eigen::MatrixXd gacc = Eigen::MatrixXd::Zero(x.frames.rows(), x.frames.cols());
  for (int i = 0; i < cfg.iterations; ++i) {
    StepEval e = eval_at(cur, i);
    if (i == 0) {
      r.clean_prediction = e.prediction;
      r.success = succeeded(e.prediction);
    } else {
      r.success = r.success || succeeded(e.prediction);
    }
    r.loss_trace.push_back(e.loss);
    const Eigen::MatrixXd* step_src = &e.grad;
    if (momentum) {
      const double l1 = e.grad.cwiseAbs().sum();
      if (l1 > 0.0)
        gacc = cfg.momentum_mu * gacc + e.grad / l1;
      else
        gacc *= cfg.momentum_mu;
      step_src = &gacc;
    }
    cur.frames += (alpha * dir) * sign_of(*step_src);
    cur = project_linf(cur, x, cfg.epsilon);
  }
  r.final_prediction = predict_at(cur);
  r.success = r.success || succeeded(r.final_prediction);
  r.adversarial = std::move(cur);
  r.linf_distance = linf_distance(r.adversarial, x);
  if (r.linf_distance > cfg.epsilon + 1e-9)
    throw std::logic_error("attack result escaped the perturbation budget");
  return r;
}

}  // namespace detail

inline AdvResult ifgsm(const GradEval& model, const MotionSequence& x, int y,
                       const AttackConfig& cfg) {
  return detail::run_signed_attack(
      [&](const MotionSequence& cur, int) { return model.step(cur, y, cfg.mode); },
      [&](const MotionSequence& cur) { return argmax(model.logits(cur)); },
      x, y, cfg, /*momentum=*/false);
}

inline AdvResult mifgsm(const GradEval& model, const MotionSequence& x, int y,
                        const AttackConfig& cfg) {
  return detail::run_signed_attack(
      [&](const MotionSequence& cur, int) { return model.step(cur, y, cfg.mode); },
      [&](const MotionSequence& cur) { return argmax(model.logits(cur)); },
      x, y, cfg, /*momentum=*/true);
}

// Full attack: ensemble gradient over K heads with M fresh truncated noise
// draws per iteration, augmented through recurrences refit on the current
// iterate every refit_interval iterations, then the shared signed loop.
inline AdvResult tasar_attack(const Classifier& base, const HeadEnsemble& ens,
                              const MotionSequence& x, int y,
                              const AttackConfig& cfg) {
  ens.validate();
  if (ens.base_checksum != payload_checksum(base.params))
    throw std::invalid_argument("tasar_attack: ensemble was built on a different base");
  if (x.frame_count() < 3)
    throw std::invalid_argument("tasar_attack: need at least 3 frames");

  const bool augment = cfg.weights.w1 > 0.0 || cfg.weights.w2 > 0.0;
  TVAR1Model m1;
  TVAR2Model m2;

  auto eval_at = [&](const MotionSequence& cur, int iter) {
    const std::uint64_t iter_seed =
        mix(mix(cfg.seed, 0xA77AC4ull), cfg.freeze_noise ? 0ull
                                                         : static_cast<std::uint64_t>(iter));
    EnsembleEvalResult er = ensemble_loss_grad(base, ens, cur, y, cfg.M,
                                               cfg.sigma, cfg.xi, iter_seed,
                                               cfg.mode);
    StepEval e;
    e.loss = er.loss;
    e.prediction = argmax(er.mean_logits);
    if (augment) {
      if (iter % cfg.refit_interval == 0) {
        if (cfg.weights.w1 > 0.0) m1 = fit_tvar1(cur);
        if (cfg.weights.w2 > 0.0) m2 = fit_tvar2(cur);
      }
      e.grad = apply_dynamic(er.grad, cfg.weights.w1 > 0.0 ? &m1 : nullptr,
                             cfg.weights.w2 > 0.0 ? &m2 : nullptr, cfg.weights);
    } else {
      e.grad = std::move(er.grad);
    }
    return e;
  };
  // Deployable prediction of the attacked composite: noise-free mean over
  // heads (the sum has the same argmax).
  auto predict_at = [&](const MotionSequence& cur) {
    Eigen::VectorXd z = base.logits(cur);
    Eigen::VectorXd sum;
    for (int k = 0; k < ens.size(); ++k) {
      Eigen::VectorXd o = head_forward(z, ens.heads[k]);
      if (k == 0) sum = std::move(o); else sum += o;
    }
    return argmax(sum);
  };
  return detail::run_signed_attack(eval_at, predict_at, x, y, cfg,
                                   /*momentum=*/false);
}

}  // namespace tasar

#endif  // TASAR_ATTACK_HPP
