#ifndef TASAR_TVAR_HPP
#define TASAR_TVAR_HPP

// Time-varying autoregressive structure of a motion clip, and gradient
// augmentation through it.
//
// Per frame t the clip approximately satisfies a linear recurrence with
// scalar, frame-dependent coefficients shared across all joint coordinates:
//   order 1:  x_t ≈ A_t x_{t-1} + B_t
//   order 2:  x_t ≈ C_t x_{t-1} + D_t x_{t-2} + E_t
// The coefficients are fit per frame by cross-sectional ridge least squares
// over the J*3 coordinates.  Augmentation then propagates a per-frame loss
// gradient backward through the recurrence: perturbing frame t-1 also moves
// frame t (and, at order 2, frame t+1 through two channels), so those
// downstream sensitivities are added to the frame's own gradient.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "tasar/data.hpp"

namespace tasar {

inline constexpr double kTvarRidge = 1e-8;

struct TVAR1Model {
  // Index i holds the coefficients of frame t = i+1, i in [0, T-2].
  Eigen::VectorXd a, b;
  Eigen::MatrixXd residuals;  // (T-1) x (J*3), row i = x_{i+1} - a_i x_i - b_i

  int modeled_frames() const { return static_cast<int>(a.size()); }
};

struct TVAR2Model {
  // Index i holds the coefficients of frame t = i+2, i in [0, T-3].
  Eigen::VectorXd c, d, e;
  Eigen::MatrixXd residuals;  // (T-2) x (J*3)

  int modeled_frames() const { return static_cast<int>(c.size()); }
};

struct DynWeights {
  double w0 = 0.6, w1 = 0.3, w2 = 0.1;

  void validate() const {
    if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0)
      throw std::invalid_argument("dyn weights: negative weight");
    if (std::abs(w0 + w1 + w2 - 1.0) > 1e-12)
      throw std::invalid_argument("dyn weights: must sum to 1");
  }
};

inline TVAR1Model fit_tvar1(const MotionSequence& seq, double ridge = kTvarRidge) {
  const int t_total = seq.frame_count();
  const int n = seq.dims();
  if (t_total < 2) throw std::invalid_argument("fit_tvar1: need at least 2 frames");
  TVAR1Model m;
  m.a.resize(t_total - 1);
  m.b.resize(t_total - 1);
  m.residuals.resize(t_total - 1, n);
  for (int t = 1; t < t_total; ++t) {
    auto u = seq.frames.row(t - 1);
    auto v = seq.frames.row(t);
    Eigen::Matrix2d lhs;
    lhs << u.squaredNorm() + ridge, u.sum(), u.sum(), n + ridge;
    Eigen::Vector2d rhs(u.dot(v), v.sum());
    Eigen::Vector2d beta = lhs.ldlt().solve(rhs);
    m.a[t - 1] = beta[0];
    m.b[t - 1] = beta[1];
    m.residuals.row(t - 1) = v - beta[0] * u - Eigen::RowVectorXd::Constant(n, beta[1]);
  }
  return m;
}

inline TVAR2Model fit_tvar2(const MotionSequence& seq, double ridge = kTvarRidge) {
  const int t_total = seq.frame_count();
  const int n = seq.dims();
  if (t_total < 3) throw std::invalid_argument("fit_tvar2: need at least 3 frames");
  TVAR2Model m;
  m.c.resize(t_total - 2);
  m.d.resize(t_total - 2);
  m.e.resize(t_total - 2);
  m.residuals.resize(t_total - 2, n);
  for (int t = 2; t < t_total; ++t) {
    auto p = seq.frames.row(t - 1);
    auto q = seq.frames.row(t - 2);
    auto v = seq.frames.row(t);
    Eigen::Matrix3d lhs;
    lhs << p.squaredNorm() + ridge, p.dot(q), p.sum(),
           p.dot(q), q.squaredNorm() + ridge, q.sum(),
           p.sum(), q.sum(), n + ridge;
    Eigen::Vector3d rhs(p.dot(v), q.dot(v), v.sum());
    Eigen::Vector3d beta = lhs.ldlt().solve(rhs);
    m.c[t - 2] = beta[0];
    m.d[t - 2] = beta[1];
    m.e[t - 2] = beta[2];
    m.residuals.row(t - 2) =
        v - beta[0] * p - beta[1] * q - Eigen::RowVectorXd::Constant(n, beta[2]);
  }
  return m;
}

// First-order augmentation: out[s] = g[s] + g[s+1] * A_{s+1}.  The last frame
// has no successor and passes through unchanged.
inline Eigen::MatrixXd augment_grad_order1(const Eigen::MatrixXd& grad,
                                           const TVAR1Model& m) {
  const int t_total = static_cast<int>(grad.rows());
  if (m.modeled_frames() != t_total - 1)
    throw std::invalid_argument("augment_grad_order1: model/grad length mismatch");
  Eigen::MatrixXd out = grad;
  for (int s = 0; s + 1 < t_total; ++s)
    out.row(s) += grad.row(s + 1) * m.a[s];  // a[s] is A_{s+1}
  return out;
}

// Second-order augmentation:
//   out[s] = g[s] + g[s+1] * C_{s+1} + g[s+2] * (D_{s+2} + C_{s+2} * C_{s+1}).
// The two-channel third term covers the direct lag-2 dependence and the
// composition through the intermediate frame.  Frames whose referenced
// coefficients do not exist pass through unchanged: the first frame (C_1 is
// not defined; the recurrence starts at t = 2) and the last two frames (no
// successors).
inline Eigen::MatrixXd augment_grad_order2(const Eigen::MatrixXd& grad,
                                           const TVAR2Model& m) {
  const int t_total = static_cast<int>(grad.rows());
  if (m.modeled_frames() != t_total - 2)
    throw std::invalid_argument("augment_grad_order2: model/grad length mismatch");
  Eigen::MatrixXd out = grad;
  // c[i], d[i] are C_{i+2}, D_{i+2}.
  for (int s = 1; s + 2 < t_total; ++s) {
    const double c_s1 = m.c[s - 1];  // C_{s+1}
    const double c_s2 = m.c[s];      // C_{s+2}
    const double d_s2 = m.d[s];      // D_{s+2}
    out.row(s) += grad.row(s + 1) * c_s1 + grad.row(s + 2) * (d_s2 + c_s2 * c_s1);
  }
  return out;
}

// Weighted combination used by the attack loop once the models are in hand.
// Zero-weighted terms are skipped entirely, so weights (1,0,0) is an exact
// identity on grad.
inline Eigen::MatrixXd apply_dynamic(const Eigen::MatrixXd& grad,
                                     const TVAR1Model* m1, const TVAR2Model* m2,
                                     const DynWeights& w) {
  w.validate();
  if (w.w1 == 0.0 && w.w2 == 0.0) return grad;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(grad.rows(), grad.cols());
  if (w.w0 > 0.0) out = w.w0 * grad;
  if (w.w1 > 0.0) {
    if (!m1) throw std::invalid_argument("apply_dynamic: missing order-1 model");
    out += w.w1 * augment_grad_order1(grad, *m1);
  }
  if (w.w2 > 0.0) {
    if (!m2) throw std::invalid_argument("apply_dynamic: missing order-2 model");
    out += w.w2 * augment_grad_order2(grad, *m2);
  }
  return out;
}

// Fits both recurrences on x and returns
//   w0 * grad + w1 * order-1 augmentation + w2 * order-2 augmentation.
inline Eigen::MatrixXd dynamic_gradient(const MotionSequence& x,
                                        const Eigen::MatrixXd& grad,
                                        const DynWeights& w,
                                        double ridge = kTvarRidge) {
  w.validate();
  if (x.frames.rows() != grad.rows() || x.frames.cols() != grad.cols())
    throw std::invalid_argument("dynamic_gradient: shape mismatch");
  if (w.w1 == 0.0 && w.w2 == 0.0) return grad;
  if (x.frame_count() < 3)
    throw std::invalid_argument("dynamic_gradient: need at least 3 frames");
  TVAR1Model m1;
  TVAR2Model m2;
  if (w.w1 > 0.0) m1 = fit_tvar1(x, ridge);
  if (w.w2 > 0.0) m2 = fit_tvar2(x, ridge);
  return apply_dynamic(grad, w.w1 > 0.0 ? &m1 : nullptr,
                       w.w2 > 0.0 ? &m2 : nullptr, w);
}

}  // namespace tasar

#endif  // TASAR_TVAR_HPP
