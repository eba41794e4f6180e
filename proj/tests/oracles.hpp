#pragma once

// Test-only oracles, kept independent of the library code paths they check:
// finite-difference gradients, a Caratheodory-based low-dimensional hull
// membership test, and re-implementations of closed forms.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "chfkit/nn.hpp"

namespace oracles {

/// Central finite differences of an arbitrary scalar function of the
/// network parameters. `loss` must be a pure function of the network.
template <typename LossFn>
chfkit::Gradients finite_difference_gradients(const chfkit::DenseNetwork& net, LossFn loss,
                                              double h) {
  chfkit::DenseNetwork work = net;
  chfkit::Gradients g = chfkit::zero_gradients_like(net);
  for (std::size_t l = 0; l < work.layers.size(); ++l) {
    auto& w = work.layers[l].weights;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        const double orig = w(r, c);
        w(r, c) = orig + h;
        const double up = loss(work);
        w(r, c) = orig - h;
        const double down = loss(work);
        w(r, c) = orig;
        g.weights[l](r, c) = (up - down) / (2.0 * h);
      }
    auto& b = work.layers[l].biases;
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      const double orig = b[r];
      b[r] = orig + h;
      const double up = loss(work);
      b[r] = orig - h;
      const double down = loss(work);
      b[r] = orig;
      g.biases[l][r] = (up - down) / (2.0 * h);
    }
  }
  return g;
}

/// Worst-case gradient discrepancy: relative where either side is
/// appreciable, absolute where both are tiny (finite differences bottom out
/// near 1e-10, far below any honest gradient).
inline double max_gradient_discrepancy(const chfkit::Gradients& analytic,
                                       const chfkit::Gradients& numeric) {
  double worst = 0.0;
  auto check = [&](double a, double n) {
    const double mag = std::max(std::abs(a), std::abs(n));
    const double diff = std::abs(a - n);
    if (mag >= 1e-4) {
      worst = std::max(worst, diff / mag);
    } else if (diff > 1e-9) {
      worst = std::max(worst, 1.0);  // tiny gradients must agree almost exactly
    }
  };
  for (std::size_t l = 0; l < analytic.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < analytic.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < analytic.weights[l].cols(); ++c)
        check(analytic.weights[l](r, c), numeric.weights[l](r, c));
    for (Eigen::Index r = 0; r < analytic.biases[l].size(); ++r)
      check(analytic.biases[l][r], numeric.biases[l][r]);
  }
  return worst;
}

/// Exact membership test for low dimensions via Caratheodory's theorem: a
/// point lies in the hull iff it lies in the simplex of some affinely
/// independent subset of at most d+1 points, whose barycentric coordinates
/// are unique and solvable by normal equations. Independent of the simplex
/// LP under test.
inline bool in_hull_lowdim(const Eigen::MatrixXd& points, const Eigen::VectorXd& query,
                           double eps = 1e-9) {
  const Eigen::Index n = points.rows();
  const Eigen::Index d = points.cols();
  // Single vertices.
  for (Eigen::Index i = 0; i < n; ++i)
    if ((points.row(i).transpose() - query).norm() <= eps) return true;

  std::vector<Eigen::Index> subset;
  // Enumerate subsets of size 2 .. d+1 via a simple recursion.
  auto test_subset = [&](const std::vector<Eigen::Index>& idx) -> bool {
    const auto k = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd edges(d, k - 1);
    const Eigen::VectorXd v0 = points.row(idx[0]).transpose();
    for (Eigen::Index j = 1; j < k; ++j)
      edges.col(j - 1) = points.row(idx[static_cast<std::size_t>(j)]).transpose() - v0;
    const Eigen::MatrixXd gram = edges.transpose() * edges;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (!lu.isInvertible()) return false;  // affinely dependent subset
    const Eigen::VectorXd rhs = edges.transpose() * (query - v0);
    const Eigen::VectorXd w = lu.solve(rhs);
    const double residual = (edges * w - (query - v0)).norm();
    if (residual > eps) return false;
    double lambda0 = 1.0 - w.sum();
    if (lambda0 < -eps) return false;
    for (Eigen::Index j = 0; j < w.size(); ++j)
      if (w[j] < -eps) return false;
    return true;
  };

  bool found = false;
  auto recurse = [&](auto&& self, Eigen::Index start, Eigen::Index want) -> void {
    if (found) return;
    if (want == 0) {
      if (test_subset(subset)) found = true;
      return;
    }
    for (Eigen::Index i = start; i + want <= n && !found; ++i) {
      subset.push_back(i);
      self(self, i + 1, want - 1);
      subset.pop_back();
    }
  };
  for (Eigen::Index size = 2; size <= d + 1 && !found; ++size)
    recurse(recurse, 0, size);
  return found;
}

/// Gradient checks need generic parameter points: zero-initialized biases
/// plus dead rectifier paths put preactivations exactly on the kink, where
/// central differences and the subgradient convention legitimately disagree.
inline void randomize_biases(chfkit::DenseNetwork& net, chfkit::Rng& rng) {
  for (auto& layer : net.layers)
    for (Eigen::Index i = 0; i < layer.biases.size(); ++i)
      layer.biases[i] = 0.5 * rng.normal();
}

/// Independent re-evaluation of the synthetic generator's closed form.
inline double synthetic_chf_reference(double L, double P, double G, double X, double dHin) {
  const double a = 30.0, b = 0.5, c = 4.0, d = 2.0;
  return a * std::pow(G, 0.5) * (1.0 + b * P / 1e4) * (1.0 - X) * std::exp(-L / c) + d * dHin;
}

}  // namespace oracles
