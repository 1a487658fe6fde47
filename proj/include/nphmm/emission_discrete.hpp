#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace nphmm {

/// Nonparametric emission table on the support {0, ..., y_max}: row j holds
/// f_j(0..y_max). Counts above y_max have probability zero.
struct DiscreteEmission {
  Eigen::MatrixXd probs;

  int k() const { return static_cast<int>(probs.rows()); }
  int y_max() const { return static_cast<int>(probs.cols()) - 1; }
  double density(int state, std::int64_t y) const {
    return (y < 0 || y > y_max()) ? 0.0 : probs(state, static_cast<Eigen::Index>(y));
  }
};

void validate(const DiscreteEmission& emission);

/// Regularization I(f) = sum_y m(y) f(y) with m(y) = y^alpha, weighted by
/// lambda in the penalized likelihood.
struct PenaltySpec {
  double lambda = 1.0;
  double alpha = 2.0;

  double weight(double y) const { return y == 0.0 ? 0.0 : std::pow(y, alpha); }
};

void validate(const PenaltySpec& penalty);

/// f(y) = S(y) / N with N = sum_y S(y). Throws ZeroWeight when N <= 1e-12.
Eigen::VectorXd m_step_np(const Eigen::VectorXd& weighted_counts);

struct RegularizedEstimate {
  Eigen::VectorXd probs;
  double normalizer = 0.0;  // the constant c in f(y) = S(y) / (lambda m(y) + c)
};

/// Maximizer of sum_y S(y) log f(y) - lambda I(f) over the simplex. The
/// normalizing constant is located by bisection to absolute precision 1e-12.
/// With lambda == 0 the result is exactly m_step_np.
RegularizedEstimate m_step_regularized(const Eigen::VectorXd& weighted_counts,
                                       const PenaltySpec& penalty);

double penalty_value(const Eigen::VectorXd& probs, const PenaltySpec& penalty);

/// Per-state negative binomial, P(y) = Gamma(y+r)/(Gamma(r) y!) p^r (1-p)^y.
struct NegBinEmission {
  Eigen::VectorXd r;
  Eigen::VectorXd p;

  int k() const { return static_cast<int>(r.size()); }
  double log_density(int state, std::int64_t y) const;
  double mean(int state) const { return r(state) * (1.0 - p(state)) / p(state); }
};

void validate(const NegBinEmission& emission);

double negbin_log_pmf(std::int64_t y, double r, double p);

inline constexpr double kNegBinMinR = 1e-4;
inline constexpr double kNegBinMaxR = 1e6;

struct NegBinFit {
  double r = 0.0;
  double p = 0.0;
  bool underdispersed = false;  // r capped at kNegBinMaxR (near-Poisson)
};

/// Weighted maximum likelihood for one state. p is profiled out in closed form
/// and r solves the profile score on (1e-4, 1e6), starting from the weighted
/// method-of-moments value.
NegBinFit m_step_negbin(const Eigen::VectorXd& values, const Eigen::VectorXd& weights);

/// Weighted log-likelihood of (r, p) maximized over p, as used by m_step_negbin.
double negbin_profile_log_lik(const Eigen::VectorXd& values, const Eigen::VectorXd& weights,
                              double r);

}  // namespace nphmm
