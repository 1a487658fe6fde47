#include "nphmm/transition.hpp"

#include <cmath>
#include <string>

#include "nphmm/error.hpp"

namespace nphmm {

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kStationaryTol = 1e-10;

Eigen::MatrixXd elementwise_log(const Eigen::MatrixXd& m) {
  return m.unaryExpr([](double v) { return std::log(v); });
}

}  // namespace

TransitionModel::TransitionModel(Eigen::MatrixXd Q, Eigen::VectorXd init)
    : Q_(std::move(Q)), init_(std::move(init)) {
  const auto k = Q_.rows();
  if (k < 1 || Q_.cols() != k) {
    throw Error(ErrorCode::DimensionMismatch, "transition matrix must be square and non-empty");
  }
  if (init_.size() != k) {
    throw Error(ErrorCode::DimensionMismatch, "initial distribution length differs from k");
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index l = 0; l < k; ++l) {
      const double q = Q_(j, l);
      if (!(q >= 0.0 && q <= 1.0)) {
        throw Error(ErrorCode::InvalidModel, "transition entry outside [0,1] in row " +
                                                 std::to_string(j + 1));
      }
    }
    if (std::abs(Q_.row(j).sum() - 1.0) > kStochasticTol) {
      throw Error(ErrorCode::InvalidModel,
                  "transition row " + std::to_string(j + 1) + " does not sum to 1");
    }
    if (!(init_(j) >= 0.0 && init_(j) <= 1.0)) {
      throw Error(ErrorCode::InvalidModel, "initial probability outside [0,1]");
    }
  }
  if (std::abs(init_.sum() - 1.0) > kStochasticTol) {
    throw Error(ErrorCode::InvalidModel, "initial distribution does not sum to 1");
  }
  log_Q_ = elementwise_log(Q_);
  log_init_ = elementwise_log(init_);
  stationary_ = ((init_.transpose() * Q_).transpose() - init_).cwiseAbs().maxCoeff() <= kStationaryTol;
}

TransitionModel TransitionModel::stationary(Eigen::MatrixXd Q) {
  Eigen::VectorXd pi = stationary_distribution(Q);
  return TransitionModel(std::move(Q), std::move(pi));
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& Q) {
  const auto k = Q.rows();
  if (k < 1 || Q.cols() != k) {
    throw Error(ErrorCode::DimensionMismatch, "transition matrix must be square and non-empty");
  }
  if (k == 1) return Eigen::VectorXd::Ones(1);

  const Eigen::MatrixXd A = Q.transpose() - Eigen::MatrixXd::Identity(k, k);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const auto& sv = svd.singularValues();  // descending
  if (sv(k - 2) < kStationaryTol) {
    throw Error(ErrorCode::NonUniqueStationary,
                "transition matrix is reducible; supply the initial distribution explicitly");
  }

  Eigen::MatrixXd system(k + 1, k);
  system.topRows(k) = A;
  system.row(k).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  rhs(k) = 1.0;
  Eigen::VectorXd pi = system.colPivHouseholderQr().solve(rhs);
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();
  return pi;
}

}  // namespace nphmm
