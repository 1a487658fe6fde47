#include "nphmm/observation.hpp"

#include <cmath>

#include "nphmm/error.hpp"

namespace nphmm {

ObservationSequence ObservationSequence::counts(const std::vector<std::int64_t>& values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "observation sequence is empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(values.size()), 1);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0) {
      throw Error(ErrorCode::InvalidArgument,
                  "negative count at position " + std::to_string(i + 1));
    }
    m(static_cast<Eigen::Index>(i), 0) = static_cast<double>(values[i]);
  }
  return ObservationSequence(ObservationKind::Count, std::move(m));
}

ObservationSequence ObservationSequence::real(Eigen::MatrixXd values) {
  if (values.rows() == 0 || values.cols() == 0) {
    throw Error(ErrorCode::InvalidArgument, "observation sequence is empty");
  }
  if (!values.allFinite()) throw Error(ErrorCode::InvalidArgument, "non-finite observation");
  return ObservationSequence(ObservationKind::RealVector, std::move(values));
}

std::int64_t ObservationSequence::max_count() const {
  return static_cast<std::int64_t>(values_.col(0).maxCoeff());
}

ObservationSequence ObservationSequence::slice(Eigen::Index start, Eigen::Index length) const {
  if (start < 0 || length < 1 || start + length > size()) {
    throw Error(ErrorCode::InvalidArgument, "slice out of range");
  }
  return ObservationSequence(kind_, values_.middleRows(start, length));
}

}  // namespace nphmm
