#pragma once

#include <Eigen/Dense>

namespace nphmm {

/// Row-stochastic transition matrix Q of the hidden chain together with the
/// distribution of the first hidden state.
class TransitionModel {
 public:
  TransitionModel(Eigen::MatrixXd Q, Eigen::VectorXd init);

  /// Builds a model whose initial distribution is the stationary law of Q.
  static TransitionModel stationary(Eigen::MatrixXd Q);

  int k() const { return static_cast<int>(Q_.rows()); }
  const Eigen::MatrixXd& Q() const { return Q_; }
  const Eigen::VectorXd& init() const { return init_; }
  const Eigen::MatrixXd& log_Q() const { return log_Q_; }
  const Eigen::VectorXd& log_init() const { return log_init_; }

  /// Whether init * Q == init within 1e-10.
  bool is_stationary() const { return stationary_; }

 private:
  Eigen::MatrixXd Q_;
  Eigen::VectorXd init_;
  Eigen::MatrixXd log_Q_;
  Eigen::VectorXd log_init_;
  bool stationary_ = false;
};

/// Solves pi Q = pi, sum(pi) = 1. Throws NonUniqueStationary when the chain
/// admits more than one stationary law (the null space of Q^T - I has
/// dimension > 1 at tolerance 1e-10).
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& Q);

}  // namespace nphmm
