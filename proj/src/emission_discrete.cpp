#include "nphmm/emission_discrete.hpp"

#include <cmath>
#include <map>

#include <boost/math/special_functions/digamma.hpp>

#include "nphmm/error.hpp"

namespace nphmm {

namespace {

constexpr double kRowTol = 1e-10;
constexpr double kZeroWeight = 1e-12;
constexpr double kBisectionTol = 1e-12;
constexpr double kMaxP = 1.0 - 1e-12;

void check_counts(const Eigen::VectorXd& s) {
  if (s.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty weighted count vector");
  if ((s.array() < 0.0).any()) throw Error(ErrorCode::InvalidArgument, "negative weighted count");
  if (!(s.sum() > kZeroWeight)) throw Error(ErrorCode::ZeroWeight, "total state weight is zero");
}

// Weighted counts per distinct value; the negative binomial score only needs
// these, so digamma is evaluated once per distinct count.
struct CountHistogram {
  std::map<double, double> weight;
  double total = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

CountHistogram histogram(const Eigen::VectorXd& values, const Eigen::VectorXd& weights) {
  if (values.size() != weights.size()) {
    throw Error(ErrorCode::DimensionMismatch, "values and weights differ in length");
  }
  CountHistogram h;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (weights(i) < 0.0) throw Error(ErrorCode::InvalidArgument, "negative weight");
    if (weights(i) == 0.0) continue;
    h.weight[values(i)] += weights(i);
    h.total += weights(i);
  }
  if (!(h.total > kZeroWeight)) throw Error(ErrorCode::ZeroWeight, "total state weight is zero");
  for (const auto& [y, w] : h.weight) h.mean += w * y;
  h.mean /= h.total;
  for (const auto& [y, w] : h.weight) h.variance += w * (y - h.mean) * (y - h.mean);
  h.variance /= h.total;
  return h;
}

double profile_score(const CountHistogram& h, double r) {
  double s = 0.0;
  const double dr = boost::math::digamma(r);
  for (const auto& [y, w] : h.weight) s += w * (boost::math::digamma(y + r) - dr);
  return s + h.total * std::log(r / (r + h.mean));
}

double profile_log_lik(const CountHistogram& h, double r) {
  const double p = std::min(r / (r + h.mean), kMaxP);
  double ll = 0.0;
  for (const auto& [y, w] : h.weight) ll += w * negbin_log_pmf(static_cast<std::int64_t>(y), r, p);
  return ll;
}

}  // namespace

void validate(const DiscreteEmission& emission) {
  if (emission.probs.rows() < 1 || emission.probs.cols() < 1) {
    throw Error(ErrorCode::InvalidModel, "empty discrete emission table");
  }
  for (Eigen::Index j = 0; j < emission.probs.rows(); ++j) {
    if ((emission.probs.row(j).array() < 0.0).any() || (emission.probs.row(j).array() > 1.0).any()) {
      throw Error(ErrorCode::InvalidModel, "emission probability outside [0,1]");
    }
    if (std::abs(emission.probs.row(j).sum() - 1.0) > kRowTol) {
      throw Error(ErrorCode::InvalidModel,
                  "emission row " + std::to_string(j + 1) + " does not sum to 1");
    }
  }
}

void validate(const PenaltySpec& penalty) {
  if (!(penalty.lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  if (!(penalty.alpha > 0.0)) throw Error(ErrorCode::InvalidArgument, "alpha must be > 0");
}

Eigen::VectorXd m_step_np(const Eigen::VectorXd& weighted_counts) {
  check_counts(weighted_counts);
  return weighted_counts / weighted_counts.sum();
}

RegularizedEstimate m_step_regularized(const Eigen::VectorXd& weighted_counts,
                                       const PenaltySpec& penalty) {
  validate(penalty);
  if (penalty.lambda == 0.0) {
    return {m_step_np(weighted_counts), weighted_counts.sum()};
  }
  check_counts(weighted_counts);
  const Eigen::Index size = weighted_counts.size();
  const double total = weighted_counts.sum();

  Eigen::VectorXd shift(size);
  double min_shift = std::numeric_limits<double>::infinity();
  for (Eigen::Index y = 0; y < size; ++y) {
    shift(y) = penalty.lambda * penalty.weight(static_cast<double>(y));
    if (weighted_counts(y) > 0.0) min_shift = std::min(min_shift, shift(y));
  }
  auto mass = [&](double c) {
    double acc = 0.0;
    for (Eigen::Index y = 0; y < size; ++y)
      if (weighted_counts(y) > 0.0) acc += weighted_counts(y) / (shift(y) + c);
    return acc;
  };

  // mass(c) is strictly decreasing on (-min_shift, inf), diverges at the left
  // end and is <= 1 at c = total, so the root is bracketed. When S(0) > 0 the
  // left end is 0 and the root is positive; otherwise it may be negative.
  double lo = -min_shift + kZeroWeight * total;
  double hi = total;
  while (mass(lo) < 1.0) lo = -min_shift + 0.5 * (lo + min_shift);
  while (hi - lo > kBisectionTol) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  const double c = 0.5 * (lo + hi);

  RegularizedEstimate out;
  out.normalizer = c;
  out.probs.resize(size);
  for (Eigen::Index y = 0; y < size; ++y)
    out.probs(y) = weighted_counts(y) > 0.0 ? weighted_counts(y) / (shift(y) + c) : 0.0;
  out.probs /= out.probs.sum();
  return out;
}

double penalty_value(const Eigen::VectorXd& probs, const PenaltySpec& penalty) {
  double acc = 0.0;
  for (Eigen::Index y = 0; y < probs.size(); ++y)
    acc += penalty.weight(static_cast<double>(y)) * probs(y);
  return acc;
}

double negbin_log_pmf(std::int64_t y, double r, double p) {
  if (y < 0) return -std::numeric_limits<double>::infinity();
  const double yd = static_cast<double>(y);
  double out = std::lgamma(yd + r) - std::lgamma(r) - std::lgamma(yd + 1.0) + r * std::log(p);
  if (y > 0) out += yd * std::log1p(-p);
  return out;
}

double NegBinEmission::log_density(int state, std::int64_t y) const {
  return negbin_log_pmf(y, r(state), p(state));
}

void validate(const NegBinEmission& emission) {
  if (emission.r.size() < 1 || emission.p.size() != emission.r.size()) {
    throw Error(ErrorCode::InvalidModel, "negative binomial parameter vectors are inconsistent");
  }
  for (Eigen::Index j = 0; j < emission.r.size(); ++j) {
    if (!(emission.r(j) > 0.0)) throw Error(ErrorCode::InvalidModel, "negative binomial r must be > 0");
    if (!(emission.p(j) > 0.0 && emission.p(j) < 1.0)) {
      throw Error(ErrorCode::InvalidModel, "negative binomial p must lie in (0,1)");
    }
  }
}

double negbin_profile_log_lik(const Eigen::VectorXd& values, const Eigen::VectorXd& weights,
                              double r) {
  return profile_log_lik(histogram(values, weights), r);
}

NegBinFit m_step_negbin(const Eigen::VectorXd& values, const Eigen::VectorXd& weights) {
  const CountHistogram h = histogram(values, weights);
  NegBinFit fit;
  auto finish = [&](double r) {
    fit.r = r;
    fit.p = std::min(r / (r + h.mean), kMaxP);
    return fit;
  };
  if (h.variance <= h.mean) {
    fit.underdispersed = true;
    return finish(kNegBinMaxR);
  }

  // Bisection on log r; the score is positive left of the maximizer.
  double lo = std::log(kNegBinMinR);
  double hi = std::log(kNegBinMaxR);
  if (profile_score(h, kNegBinMaxR) >= 0.0) {
    fit.underdispersed = true;
    return finish(kNegBinMaxR);
  }
  if (profile_score(h, kNegBinMinR) <= 0.0) return finish(kNegBinMinR);
  const double r0 = h.mean * h.mean / (h.variance - h.mean);
  if (r0 > kNegBinMinR && r0 < kNegBinMaxR) {
    (profile_score(h, r0) > 0.0 ? lo : hi) = std::log(r0);
  }
  for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
    const double mid = 0.5 * (lo + hi);
    (profile_score(h, std::exp(mid)) > 0.0 ? lo : hi) = mid;
  }
  return finish(std::exp(0.5 * (lo + hi)));
}

}  // namespace nphmm
