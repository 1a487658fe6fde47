#pragma once

// Reference computations that share no code with the library: exhaustive
// enumeration of hidden paths, pair counting, scalar bisection. They are slow
// and only meant for tiny inputs.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Path = std::vector<int>;

inline void for_each_path(int k, int n, const std::function<void(const Path&)>& visit) {
  Path path(static_cast<std::size_t>(n), 0);
  for (;;) {
    visit(path);
    int pos = n - 1;
    while (pos >= 0 && path[static_cast<std::size_t>(pos)] == k - 1) path[static_cast<std::size_t>(pos--)] = 0;
    if (pos < 0) return;
    ++path[static_cast<std::size_t>(pos)];
  }
}

// Joint density of a path and the observations, given densities f(i, j).
inline double path_density(const Eigen::MatrixXd& Q, const Eigen::VectorXd& init, const Eigen::MatrixXd& f,
                           const Path& path) {
  double p = init(path[0]) * f(0, path[0]);
  for (std::size_t i = 1; i < path.size(); ++i)
    p *= Q(path[i - 1], path[i]) * f(static_cast<Eigen::Index>(i), path[i]);
  return p;
}

inline double likelihood(const Eigen::MatrixXd& Q, const Eigen::VectorXd& init, const Eigen::MatrixXd& f) {
  double total = 0.0;
  for_each_path(static_cast<int>(Q.rows()), static_cast<int>(f.rows()),
                [&](const Path& p) { total += path_density(Q, init, f, p); });
  return total;
}

// First path (lexicographic order) attaining the maximal joint density.
inline Path best_path(const Eigen::MatrixXd& Q, const Eigen::VectorXd& init, const Eigen::MatrixXd& f) {
  Path best;
  double best_density = -1.0;
  for_each_path(static_cast<int>(Q.rows()), static_cast<int>(f.rows()), [&](const Path& p) {
    const double d = path_density(Q, init, f, p);
    if (d > best_density) {
      best_density = d;
      best = p;
    }
  });
  return best;
}

struct Posteriors {
  Eigen::MatrixXd tau;                // n x k
  std::vector<Eigen::MatrixXd> pair;  // n - 1 matrices k x k
};

inline Posteriors posteriors(const Eigen::MatrixXd& Q, const Eigen::VectorXd& init, const Eigen::MatrixXd& f) {
  const auto k = Q.rows();
  const auto n = f.rows();
  Posteriors out{Eigen::MatrixXd::Zero(n, k), std::vector<Eigen::MatrixXd>(static_cast<std::size_t>(n - 1),
                                                                           Eigen::MatrixXd::Zero(k, k))};
  double total = 0.0;
  for_each_path(static_cast<int>(k), static_cast<int>(n), [&](const Path& p) {
    const double d = path_density(Q, init, f, p);
    total += d;
    for (Eigen::Index i = 0; i < n; ++i) out.tau(i, p[static_cast<std::size_t>(i)]) += d;
    for (Eigen::Index i = 0; i + 1 < n; ++i)
      out.pair[static_cast<std::size_t>(i)](p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(i + 1)]) += d;
  });
  out.tau /= total;
  for (auto& m : out.pair) m /= total;
  return out;
}

// Density of (Y_i, Y_{i+1}, Y_{i+2}) with the first state drawn from init.
inline double triplet_density(const Eigen::MatrixXd& Q, const Eigen::VectorXd& init, const Eigen::MatrixXd& f,
                              Eigen::Index i) {
  const auto k = static_cast<int>(Q.rows());
  double total = 0.0;
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      for (int c = 0; c < k; ++c) total += init(a) * f(i, a) * Q(a, b) * f(i + 1, b) * Q(b, c) * f(i + 2, c);
  return total;
}

inline double rand_index_pairs(const std::vector<int>& a, const std::vector<int>& b) {
  double concordant = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      pairs += 1.0;
      if ((a[i] == a[j]) == (b[i] == b[j])) concordant += 1.0;
    }
  }
  return concordant / pairs;
}

// Root of a decreasing function on [lo, hi] by plain bisection.
inline double bisect_decreasing(const std::function<double(double)>& g, double lo, double hi, int steps = 200) {
  for (int s = 0; s < steps; ++s) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

inline Eigen::VectorXd random_simplex(Eigen::Index size, std::mt19937_64& rng, double floor = 0.0) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Eigen::VectorXd v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = g(rng) + floor;
  return v / v.sum();
}

inline Eigen::MatrixXd random_stochastic(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                                         double floor = 0.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) m.row(r) = random_simplex(cols, rng, floor).transpose();
  return m;
}

inline double relative_error(double value, double reference) {
  return std::abs(value - reference) / std::max(std::abs(reference), std::numeric_limits<double>::min());
}

}  // namespace oracle
