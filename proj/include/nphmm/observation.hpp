#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace nphmm {

enum class ObservationKind { Count, RealVector };

/// An ordered sequence Y_1..Y_n of either non-negative counts or real vectors
/// of a fixed dimension. Values are stored row-wise in an n x d matrix; counts
/// use d = 1.
class ObservationSequence {
 public:
  static ObservationSequence counts(const std::vector<std::int64_t>& values);
  static ObservationSequence real(Eigen::MatrixXd values);

  ObservationKind kind() const { return kind_; }
  Eigen::Index size() const { return values_.rows(); }
  Eigen::Index dim() const { return values_.cols(); }

  std::int64_t count(Eigen::Index i) const { return static_cast<std::int64_t>(values_(i, 0)); }
  std::int64_t max_count() const;
  auto row(Eigen::Index i) const { return values_.row(i); }
  const Eigen::MatrixXd& values() const { return values_; }

  ObservationSequence slice(Eigen::Index start, Eigen::Index length) const;

 private:
  ObservationSequence(ObservationKind kind, Eigen::MatrixXd values)
      : kind_(kind), values_(std::move(values)) {}

  ObservationKind kind_;
  Eigen::MatrixXd values_;
};

}  // namespace nphmm
