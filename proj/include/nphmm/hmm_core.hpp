#pragma once

#include <vector>

#include <Eigen/Dense>

#include "nphmm/transition.hpp"

namespace nphmm {

/// Densities of exactly zero are replaced by this value inside recursions so
/// every log-density stays finite.
inline constexpr double kDensityFloor = 1e-300;

double floored_log(double density);

using StatePath = std::vector<int>;
using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Smoothed posteriors of a fixed model given one observation sequence.
///
/// `tau(i, j)` is P(X_i = j | Y), and row i of `pair_joint` holds the k x k
/// matrix P(X_i = j, X_{i+1} = j' | Y) flattened row-major (n - 1 rows).
struct PosteriorSet {
  Eigen::MatrixXd tau;
  RowMajorMatrix pair_joint;
  double log_lik = 0.0;

  int k() const { return static_cast<int>(tau.cols()); }
  Eigen::Index size() const { return tau.rows(); }

  Eigen::Map<const RowMajorMatrix> pair(Eigen::Index i) const {
    return {pair_joint.row(i).data(), k(), k()};
  }
  Eigen::Map<RowMajorMatrix> pair(Eigen::Index i) {
    return {pair_joint.row(i).data(), k(), k()};
  }

  /// Sum over positions of the pair posteriors (expected transition counts).
  Eigen::MatrixXd expected_transitions() const;
};

// All recursions below take an n x k matrix of log emission densities,
// log f_j(Y_i), already floored (see floored_log). They run in log space and
// are pure functions of their inputs.

PosteriorSet forward_backward(const TransitionModel& model, const Eigen::MatrixXd& log_emission);

double log_likelihood(const TransitionModel& model, const Eigen::MatrixXd& log_emission);

/// Per-triplet log densities log p3(Y_i, Y_{i+1}, Y_{i+2}), i = 1..n-2, for a
/// chain whose first state of each triplet is drawn from `model.init()`.
Eigen::VectorXd triplet_log_densities(const TransitionModel& model,
                                      const Eigen::MatrixXd& log_emission);

/// Sum of triplet_log_densities. Throws SequenceTooShort if n < 3.
double pseudo_log_likelihood(const TransitionModel& model, const Eigen::MatrixXd& log_emission);

/// Most probable joint state path; ties go to the lowest state index.
StatePath viterbi(const TransitionModel& model, const Eigen::MatrixXd& log_emission);

/// Position-wise argmax of the posterior rows; ties go to the lowest index.
StatePath map_decode(const PosteriorSet& post);

/// Log joint density of a given state path and the observations.
double path_log_density(const TransitionModel& model, const Eigen::MatrixXd& log_emission,
                        const StatePath& path);

}  // namespace nphmm
