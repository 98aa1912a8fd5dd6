#ifndef TASAR_NUMERIC_HPP
#define TASAR_NUMERIC_HPP

// Small numerical toolbox: stable softmax / cross-entropy and the chi-square
// quantile used to size confidence-ball radii.

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tasar {

// Index of the largest coefficient; ties resolve to the lowest index.
inline int argmax(const Eigen::VectorXd& v) {
  if (v.size() == 0) throw std::invalid_argument("argmax: empty vector");
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

// Negative log-likelihood of `label` under softmax(logits).  If `grad` is
// non-null it receives d loss / d logits = softmax(logits) - onehot(label).
inline double cross_entropy(const Eigen::VectorXd& logits, int label,
                            Eigen::VectorXd* grad = nullptr) {
  if (label < 0 || label >= logits.size())
    throw std::invalid_argument("cross_entropy: label out of range");
  double m = logits.maxCoeff();
  double lse = m + std::log((logits.array() - m).exp().sum());
  if (grad) {
    *grad = (logits.array() - lse).exp();
    (*grad)[label] -= 1.0;
  }
  return lse - logits[label];
}

// Regularized lower incomplete gamma P(a, x); series for x < a+1, continued
// fraction for the upper tail otherwise.
inline double gamma_p(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0))
    throw std::invalid_argument("gamma_p: need a > 0, x >= 0");
  if (x == 0.0) return 0.0;
  double lg = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, del = 1.0 / a, sum = del;
    for (int n = 0; n < 1000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - lg);
  }
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i <= 1000; ++i) {
    double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - lg) * h;
}

// Inverse of gamma_p in x: returns x with P(a, x) = p.  Bracketed Newton, so
// it cannot escape [lo, hi]; accurate to ~1e-14 relative.
inline double gamma_p_inv(double a, double p) {
  if (!(a > 0.0) || !(p >= 0.0) || !(p < 1.0))
    throw std::invalid_argument("gamma_p_inv: need a > 0, p in [0, 1)");
  if (p == 0.0) return 0.0;
  double lg = std::lgamma(a);
  // Wilson-Hilferty style start (standard initialization for this inverse).
  double x;
  if (a > 1.0) {
    double pp = (p < 0.5) ? p : 1.0 - p;
    double t = std::sqrt(-2.0 * std::log(pp));
    double g = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
    if (p < 0.5) g = -g;
    double c = 1.0 - 1.0 / (9.0 * a) - g / (3.0 * std::sqrt(a));
    x = std::max(1e-3, a * c * c * c);
  } else {
    double t = 1.0 - a * (0.253 + a * 0.12);
    x = (p < t) ? std::pow(p / t, 1.0 / a)
                : 1.0 - std::log(1.0 - (p - t) / (1.0 - t));
    x = std::max(x, 1e-10);
  }
  double lo = 0.0, hi = x;
  for (int i = 0; i < 400 && gamma_p(a, hi) < p; ++i) {
    lo = hi;
    hi *= 2.0;
  }
  for (int it = 0; it < 200; ++it) {
    double err = gamma_p(a, x) - p;
    if (err > 0.0)
      hi = x;
    else
      lo = x;
    double dpdx = std::exp(-x + (a - 1.0) * std::log(x) - lg);
    double step = (dpdx > 0.0) ? err / dpdx : 0.0;
    double xn = x - step;
    if (!(xn > lo) || !(xn < hi)) xn = 0.5 * (lo + hi);
    if (std::abs(xn - x) <= 1e-15 * std::abs(x)) {
      x = xn;
      break;
    }
    x = xn;
  }
  return x;
}

// p-quantile of the chi-square distribution with dof degrees of freedom.
inline double chi2_quantile(double p, int dof) {
  if (dof < 1) throw std::invalid_argument("chi2_quantile: dof must be >= 1");
  return 2.0 * gamma_p_inv(0.5 * dof, p);
}

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.allFinite();
}

}  // namespace tasar

#endif  // TASAR_NUMERIC_HPP
