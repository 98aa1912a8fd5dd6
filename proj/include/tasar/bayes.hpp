#ifndef TASAR_BAYES_HPP
#define TASAR_BAYES_HPP

// Post-train Bayesian appended heads.
//
// A head is a tiny two-layer MLP g over the frozen base's logits with a skip
// connection: logits' = g(z) + z.  With its second layer initialized to zero
// the head is an exact identity at step 0, so training starts from the base's
// own decision function.  K independently initialized and shuffled heads form
// a deep ensemble that stands in for a posterior over the appended weights.
//
// "Dual" training makes each head's whole weight neighborhood good, not just
// the point estimate: per step, take the analytic worst case within the
// xi-confidence ball of a Gaussian N(0, sigma^2 I) around the weights (radius
// rho = sigma * sqrt(chi-square quantile), direction along the gradient), and
// descend using the gradient evaluated at that shifted point.
//
// The ensemble attack gradient averages loss and d loss / d logits over all
// K heads and (optionally) M fresh weight-noise draws per head, then runs one
// exact backward pass through the frozen base, which is equivalent by
// linearity to averaging full input gradients.

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tasar/data.hpp"
#include "tasar/models.hpp"
#include "tasar/numeric.hpp"
#include "tasar/rng.hpp"

namespace tasar {

struct AppendedHead {
  int class_count = 0;
  int hidden = 0;
  Eigen::VectorXd params;  // [w1 (H x C col-major), b1 (H), w2 (C x H), b2 (C)]

  static int param_count(int c, int h) { return 2 * h * c + h + c; }

  int w1_off() const { return 0; }
  int b1_off() const { return hidden * class_count; }
  int w2_off() const { return hidden * class_count + hidden; }
  int b2_off() const { return 2 * hidden * class_count + hidden; }

  void validate() const {
    if (class_count < 2 || hidden < 1)
      throw std::invalid_argument("head: bad dimensions");
    if (params.size() != param_count(class_count, hidden))
      throw std::invalid_argument("head: parameter length mismatch");
    if (!params.allFinite()) throw std::invalid_argument("head: non-finite params");
  }
};

struct DualBayesConfig {
  int K = 3;
  int M = 20;
  double sigma = 0.01;
  double xi = 0.9;
  int head_hidden = 0;  // 0: same as class count
  int epochs = 30;
  double learning_rate = 0.05;
  int batch_size = 32;
  std::uint64_t seed = 1;

  void validate() const {
    if (K < 1 || M < 0 || sigma < 0.0 || !(xi > 0.0) || !(xi < 1.0) ||
        head_hidden < 0 || epochs < 0 || !(learning_rate > 0.0) || batch_size < 1)
      throw std::invalid_argument("dual bayes config: bad values");
  }
};

struct HeadEnsemble {
  std::vector<AppendedHead> heads;
  double sigma = 0.01;
  double xi = 0.9;
  std::uint64_t seed = 0;
  bool dual = false;
  std::uint64_t base_checksum = 0;

  int size() const { return static_cast<int>(heads.size()); }
  int class_count() const { return heads.empty() ? 0 : heads[0].class_count; }
  int hidden() const { return heads.empty() ? 0 : heads[0].hidden; }

  void validate() const {
    if (heads.empty()) throw std::invalid_argument("ensemble: no heads");
    for (const auto& h : heads) {
      h.validate();
      if (h.class_count != class_count() || h.hidden != hidden())
        throw std::invalid_argument("ensemble: heads disagree on shape");
    }
  }

  int total_params() const {
    return size() * AppendedHead::param_count(class_count(), hidden());
  }
};

namespace detail {

struct HeadTrace {
  Eigen::VectorXd eff;  // effective weights of this pass (params + noise)
  Eigen::VectorXd z, h_pre, h, out;
};

// out = w2 * relu(w1 z + b1) + b2 + z, with weights params + optional noise.
inline void head_forward_trace(const AppendedHead& head,
                               const Eigen::VectorXd* noise,
                               const Eigen::VectorXd& z, HeadTrace& t) {
  const int c = head.class_count, h = head.hidden;
  t.eff = head.params;
  if (noise) {
    if (noise->size() != t.eff.size())
      throw std::invalid_argument("head noise length mismatch");
    t.eff += *noise;
  }
  Eigen::Map<const Eigen::MatrixXd> w1(t.eff.data() + head.w1_off(), h, c);
  Eigen::Map<const Eigen::VectorXd> b1(t.eff.data() + head.b1_off(), h);
  Eigen::Map<const Eigen::MatrixXd> w2(t.eff.data() + head.w2_off(), c, h);
  Eigen::Map<const Eigen::VectorXd> b2(t.eff.data() + head.b2_off(), c);
  t.z = z;
  t.h_pre = w1 * z + b1;
  t.h = t.h_pre.cwiseMax(0.0);
  t.out = w2 * t.h + b2 + z;
}

// d loss / d z and optionally d loss / d head params, given d loss / d out.
inline void head_backward(const AppendedHead& head, const HeadTrace& t,
                          const Eigen::VectorXd& dout, Eigen::VectorXd* dz,
                          Eigen::VectorXd* dparams) {
  const int c = head.class_count, h = head.hidden;
  Eigen::Map<const Eigen::MatrixXd> w1(t.eff.data() + head.w1_off(), h, c);
  Eigen::Map<const Eigen::MatrixXd> w2(t.eff.data() + head.w2_off(), c, h);
  Eigen::VectorXd dh = w2.transpose() * dout;
  Eigen::VectorXd dh_pre = (t.h_pre.array() > 0.0).select(dh, 0.0);
  if (dparams) {
    dparams->setZero(head.params.size());
    Eigen::Map<Eigen::MatrixXd>(dparams->data() + head.w1_off(), h, c) =
        dh_pre * t.z.transpose();
    Eigen::Map<Eigen::VectorXd>(dparams->data() + head.b1_off(), h) = dh_pre;
    Eigen::Map<Eigen::MatrixXd>(dparams->data() + head.w2_off(), c, h) =
        dout * t.h.transpose();
    Eigen::Map<Eigen::VectorXd>(dparams->data() + head.b2_off(), c) = dout;
  }
  if (dz) *dz = w1.transpose() * dh_pre + dout;
}

}  // namespace detail

// Head output on a base logit vector; noise, when present, shifts the head
// weights for this evaluation only.
inline Eigen::VectorXd head_forward(const Eigen::VectorXd& base_logits,
                                    const AppendedHead& head,
                                    const Eigen::VectorXd* noise = nullptr) {
  head.validate();
  if (base_logits.size() != head.class_count)
    throw std::invalid_argument("head_forward: logit dimension mismatch");
  detail::HeadTrace t;
  detail::head_forward_trace(head, noise, base_logits, t);
  return t.out;
}

// Radius of the xi-confidence ball of N(0, sigma^2 I) in `dim` dimensions.
inline double confidence_radius(double sigma, double xi, int dim) {
  if (sigma < 0.0 || !(xi > 0.0) || !(xi < 1.0) || dim < 1)
    throw std::invalid_argument("confidence_radius: bad arguments");
  return sigma * std::sqrt(chi2_quantile(xi, dim));
}

// Worst case of the linearized loss over that ball: a step of length rho
// along the gradient direction.  Zero gradient (or sigma = 0) maps to zero.
inline Eigen::VectorXd inner_max_perturbation(const Eigen::VectorXd& grad,
                                              double sigma, double xi) {
  if (!grad.allFinite())
    throw std::invalid_argument("inner_max_perturbation: non-finite gradient");
  double rho = confidence_radius(sigma, xi, static_cast<int>(grad.size()));
  double norm = grad.norm();
  if (norm == 0.0 || rho == 0.0)
    return Eigen::VectorXd::Zero(grad.size());
  return (rho / norm) * grad;
}

namespace detail {

inline AppendedHead init_head(int class_count, int hidden, std::uint64_t seed) {
  AppendedHead h;
  h.class_count = class_count;
  h.hidden = hidden;
  h.params = Eigen::VectorXd::Zero(AppendedHead::param_count(class_count, hidden));
  Stream rng(seed);
  // First layer small random; second layer and biases zero, so the skip
  // connection makes the head an exact identity before training.
  for (int i = 0; i < hidden * class_count; ++i) h.params[i] = 1e-2 * rng.gaussian();
  return h;
}

// Mean CE loss and mean parameter gradient of one head over a batch of cached
// base logit vectors.
inline double head_batch_grad(const AppendedHead& head,
                              const Eigen::VectorXd& at_params,
                              const std::vector<Eigen::VectorXd>& logits,
                              const std::vector<int>& labels,
                              const std::vector<int>& idx, int start, int count,
                              Eigen::VectorXd* gsum) {
  AppendedHead eval = head;
  eval.params = at_params;
  double loss = 0.0;
  if (gsum) gsum->setZero(head.params.size());
  Eigen::VectorXd dlogits, dp;
  for (int k = 0; k < count; ++k) {
    const int i = idx[start + k];
    HeadTrace t;
    head_forward_trace(eval, nullptr, logits[i], t);
    loss += cross_entropy(t.out, labels[i], &dlogits);
    if (gsum) {
      head_backward(eval, t, dlogits, nullptr, &dp);
      *gsum += dp;
    }
  }
  if (gsum) *gsum /= count;
  return loss / count;
}

}  // namespace detail

// Trains K heads on the frozen base's logits.  dual=true turns each SGD step
// into the two-step worst-case update; dual=false is plain SGD.  The base is
// read-only throughout.
inline HeadEnsemble train_heads(const Classifier& base, const Dataset& data,
                                const DualBayesConfig& cfg, bool dual) {
  cfg.validate();
  data.validate();
  const int c = base.class_count();
  const int hidden = cfg.head_hidden > 0 ? cfg.head_hidden : c;

  // Cache base logits once; heads never touch the motion data again.
  std::vector<Eigen::VectorXd> logits(data.size());
  for (int i = 0; i < data.size(); ++i) logits[i] = base.logits(data.motions[i]);

  HeadEnsemble ens;
  ens.sigma = cfg.sigma;
  ens.xi = cfg.xi;
  ens.seed = cfg.seed;
  ens.dual = dual;
  ens.base_checksum = payload_checksum(base.params);

  std::vector<int> order(data.size());
  Eigen::VectorXd g;
  for (int k = 0; k < cfg.K; ++k) {
    AppendedHead head =
        detail::init_head(c, hidden, mix(mix(cfg.seed, 909), static_cast<std::uint64_t>(k)));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      for (int i = 0; i < data.size(); ++i) order[i] = i;
      Stream shuffle_rng(mix(mix(mix(cfg.seed, 910), static_cast<std::uint64_t>(k)),
                             static_cast<std::uint64_t>(epoch)));
      shuffle_rng.shuffle(order);
      for (int start = 0; start < data.size(); start += cfg.batch_size) {
        const int n = std::min(cfg.batch_size, data.size() - start);
        double loss = detail::head_batch_grad(head, head.params, logits,
                                              data.labels, order, start, n, &g);
        if (!std::isfinite(loss))
          throw std::runtime_error("train_heads: non-finite loss at head " +
                                   std::to_string(k) + ", epoch " +
                                   std::to_string(epoch));
        if (dual) {
          Eigen::VectorXd delta = inner_max_perturbation(g, cfg.sigma, cfg.xi);
          detail::head_batch_grad(head, head.params + delta, logits, data.labels,
                                  order, start, n, &g);
        }
        head.params -= cfg.learning_rate * g;
      }
    }
    ens.heads.push_back(std::move(head));
  }
  ens.validate();
  return ens;
}

// ---------------------------------------------------------------------------
// Ensemble attack gradient.

struct EnsembleEvalResult {
  double loss = 0.0;
  Eigen::MatrixXd grad;         // d loss / d input coordinates
  Eigen::VectorXd mean_logits;  // noise-free mean head output (for argmax)
};

namespace detail {

// Gaussian draw in head-parameter space, truncated to the confidence ball by
// radial rescaling when it lands outside.
inline Eigen::VectorXd draw_truncated_noise(int dim, double sigma, double xi,
                                            std::uint64_t seed) {
  Stream rng(seed);
  Eigen::VectorXd delta(dim);
  for (int i = 0; i < dim; ++i) delta[i] = sigma * rng.gaussian();
  const double rho = confidence_radius(sigma, xi, dim);
  const double norm = delta.norm();
  if (norm > rho && norm > 0.0) delta *= rho / norm;
  return delta;
}

}  // namespace detail

// Averages CE loss and gradient over the K heads and, when M > 0 and
// sigma > 0, M fresh truncated weight-noise draws per head (term (k, m) uses
// the stream mix(noise_seed, k * M + m)).  sigma == 0 or M == 0 short-circuit
// to one noise-free term per head, so both settings give identical results.
// One backward pass through the frozen base propagates the averaged logit
// gradient to the input.
inline EnsembleEvalResult ensemble_loss_grad(
    const Classifier& base, const HeadEnsemble& ens, const MotionSequence& x,
    int y, int m_draws, double sigma, double xi, std::uint64_t noise_seed,
    const AttackMode& mode = {}) {
  ens.validate();
  if (m_draws < 0) throw std::invalid_argument("ensemble_loss_grad: M < 0");
  if (ens.class_count() != base.class_count())
    throw std::invalid_argument("ensemble_loss_grad: class count mismatch");
  const int label = mode.label_for_loss(y, base.class_count());

  ForwardTrace trace;
  base.forward(x, trace);
  const Eigen::VectorXd& z = trace.logits;

  const int k_heads = ens.size();
  const int dim = static_cast<int>(ens.heads[0].params.size());
  const int m_eff = (sigma == 0.0) ? 0 : m_draws;
  const int terms = k_heads * std::max(m_eff, 1);

  double loss_sum = 0.0;
  Eigen::VectorXd dz_sum;
  Eigen::VectorXd mean_logits;
  Eigen::VectorXd dlogits, dz;
  bool first = true;
  for (int k = 0; k < k_heads; ++k) {
    const AppendedHead& head = ens.heads[k];
    // Noise-free pass: contributes the deployable mean logits, and doubles as
    // the loss term when no noise is requested.
    detail::HeadTrace t;
    detail::head_forward_trace(head, nullptr, z, t);
    if (k == 0) mean_logits = t.out; else mean_logits += t.out;
    if (m_eff == 0) {
      loss_sum += cross_entropy(t.out, label, &dlogits);
      detail::head_backward(head, t, dlogits, &dz, nullptr);
      if (first) { dz_sum = dz; first = false; } else dz_sum += dz;
    } else {
      for (int m = 0; m < m_eff; ++m) {
        Eigen::VectorXd delta = detail::draw_truncated_noise(
            dim, sigma, xi,
            mix(noise_seed, static_cast<std::uint64_t>(k) * m_eff + m));
        detail::HeadTrace tn;
        detail::head_forward_trace(head, &delta, z, tn);
        loss_sum += cross_entropy(tn.out, label, &dlogits);
        detail::head_backward(head, tn, dlogits, &dz, nullptr);
        if (first) { dz_sum = dz; first = false; } else dz_sum += dz;
      }
    }
  }

  EnsembleEvalResult out;
  out.loss = loss_sum / terms;
  out.mean_logits = mean_logits / k_heads;
  dz_sum /= terms;
  base.backward(trace, dz_sum, nullptr, &out.grad);
  return out;
}

// ---------------------------------------------------------------------------
// Ensemble checkpoints: header + concatenated head parameter blobs.

inline void save_ensemble(const HeadEnsemble& ens,
                          const std::filesystem::path& path) {
  ens.validate();
  Eigen::VectorXd payload(ens.total_params());
  int off = 0;
  for (const auto& h : ens.heads) {
    payload.segment(off, h.params.size()) = h.params;
    off += static_cast<int>(h.params.size());
  }
  json header{{"format", "tasar-checkpoint-v1"},
              {"kind", "head_ensemble"},
              {"K", ens.size()},
              {"H", ens.hidden()},
              {"class_count", ens.class_count()},
              {"sigma", ens.sigma},
              {"xi", ens.xi},
              {"seed", ens.seed},
              {"dual", ens.dual},
              {"base_checksum", Classifier::checksum_hex(ens.base_checksum)}};
  save_checkpoint(path, header, payload);
}

inline HeadEnsemble load_ensemble(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.header.value("kind", "") != "head_ensemble")
    throw std::runtime_error("not a head-ensemble checkpoint: " + path.string());
  HeadEnsemble ens;
  const int k = ck.header["K"].get<int>();
  const int h = ck.header["H"].get<int>();
  const int c = ck.header["class_count"].get<int>();
  ens.sigma = ck.header["sigma"].get<double>();
  ens.xi = ck.header["xi"].get<double>();
  ens.seed = ck.header["seed"].get<std::uint64_t>();
  ens.dual = ck.header.value("dual", false);
  ens.base_checksum = std::stoull(
      ck.header["base_checksum"].get<std::string>(), nullptr, 16);
  const int per = AppendedHead::param_count(c, h);
  if (ck.payload.size() != static_cast<Eigen::Index>(per) * k)
    throw std::runtime_error("head-ensemble payload length mismatch");
  for (int i = 0; i < k; ++i) {
    AppendedHead head;
    head.class_count = c;
    head.hidden = h;
    head.params = ck.payload.segment(static_cast<Eigen::Index>(i) * per, per);
    ens.heads.push_back(std::move(head));
  }
  ens.validate();
  return ens;
}

}  // namespace tasar

#endif  // TASAR_BAYES_HPP
