#ifndef TASAR_LANDSCAPE_HPP
#define TASAR_LANDSCAPE_HPP

// Loss surface slices through parameter space, in the two-random-directions
// style: draw two Gaussian vectors, rescale each layer slice to the norm of
// the corresponding parameter slice (so the plot is comparable across models
// of different scales), and evaluate the loss on a symmetric grid.  Sharpness
// is the worst loss rise over the grid relative to the center.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tasar/models.hpp"
#include "tasar/rng.hpp"

namespace tasar {

struct LandscapeGrid {
  Eigen::VectorXd alphas, betas;  // grid coordinates, symmetric about 0
  Eigen::MatrixXd losses;         // losses(i, j) at (alphas[i], betas[j])
  double center_loss = 0.0;
};

// Two independent Gaussian directions, filter-normalized per layer slice:
// each slice of the direction is rescaled to the norm of the same slice of
// `params`.  Slices with zero parameter norm become zero in the direction.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> random_directions(
    const Eigen::VectorXd& params, const std::vector<LayerSlice>& layout,
    std::uint64_t seed) {
  if (layout.empty())
    throw std::invalid_argument("random_directions: empty layout");
  for (const auto& s : layout)
    if (s.offset < 0 || s.size <= 0 || s.offset + s.size > params.size())
      throw std::invalid_argument("random_directions: slice out of bounds");
  auto draw = [&](std::uint64_t tag) {
    Stream rng(mix(seed, tag));
    Eigen::VectorXd d(params.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = rng.gaussian();
    for (const auto& s : layout) {
      double pn = params.segment(s.offset, s.size).norm();
      double dn = d.segment(s.offset, s.size).norm();
      if (pn > 0.0 && dn > 0.0)
        d.segment(s.offset, s.size) *= pn / dn;
      else
        d.segment(s.offset, s.size).setZero();
    }
    return d;
  };
  return {draw(1), draw(2)};
}

// Evaluates eval_loss over the (2c+1)-point-per-axis symmetric grid
// params + alpha * d1 + beta * d2.  G must be odd so the center is on-grid;
// the center entry is the unperturbed loss, computed with no offset applied.
// Non-finite evaluations are recorded as +infinity rather than aborting.
inline LandscapeGrid loss_grid(
    const std::function<double(const Eigen::VectorXd&)>& eval_loss,
    const Eigen::VectorXd& params, const Eigen::VectorXd& d1,
    const Eigen::VectorXd& d2, double half_range, int g) {
  if (g < 1 || g % 2 == 0)
    throw std::invalid_argument("loss_grid: G must be odd and positive");
  if (half_range < 0.0)
    throw std::invalid_argument("loss_grid: negative half_range");
  if (d1.size() != params.size() || d2.size() != params.size())
    throw std::invalid_argument("loss_grid: direction size mismatch");
  const int c = (g - 1) / 2;
  LandscapeGrid grid;
  grid.alphas.resize(g);
  grid.betas.resize(g);
  for (int i = 0; i < g; ++i) {
    double v = (g == 1) ? 0.0 : (i - c) * (half_range / c);
    grid.alphas[i] = v;
    grid.betas[i] = v;
  }
  grid.center_loss = eval_loss(params);
  grid.losses.resize(g, g);
  Eigen::VectorXd p(params.size());
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j) {
      if (i == c && j == c) {
        grid.losses(i, j) = grid.center_loss;
        continue;
      }
      p = params + grid.alphas[i] * d1 + grid.betas[j] * d2;
      double loss = eval_loss(p);
      grid.losses(i, j) =
          std::isfinite(loss) ? loss : std::numeric_limits<double>::infinity();
    }
  return grid;
}

// Worst-case loss rise on the grid.  The center contributes zero, so the
// metric is never negative.
inline double sharpness_metric(const LandscapeGrid& grid) {
  if (grid.losses.size() == 0)
    throw std::invalid_argument("sharpness_metric: empty grid");
  return (grid.losses.array() - grid.center_loss).maxCoeff();
}

}  // namespace tasar

#endif  // TASAR_LANDSCAPE_HPP
