#pragma once

#include <string>
#include <vector>

#include "nphmm/emission.hpp"

namespace nphmm {

inline constexpr double kDefaultRankTol = 1e-8;

struct RankVerdict {
  bool full_rank = false;
  double sigma_min = 0.0;
};

/// Smallest singular value of Q against `tol`.
RankVerdict check_transition_rank(const Eigen::MatrixXd& Q, double tol = kDefaultRankTol);

/// k-th singular value of a k x S table after scaling every row to unit
/// Euclidean length (0 when S < k or a row vanishes).
RankVerdict check_table_rank(const Eigen::MatrixXd& table, double tol = kDefaultRankTol);

struct IndependenceVerdict {
  bool independent = false;
  double sigma_min = 0.0;
  // True when the verdict follows from exact probabilities on a finite
  // support; grid evaluations of continuous densities are only evidence.
  bool rigorous = false;
  std::string method;
};

/// Discrete emissions use the probability table (negative binomial and count
/// mixtures truncated far into the tail). Continuous emissions use the
/// smallest eigenvalue of the normalized Gram matrix of the densities on a
/// grid of 512 points (d = 1) or 64 x 64 (d = 2) covering the support plus
/// three bandwidths or standard deviations; `grid_scale` multiplies the
/// points per axis.
IndependenceVerdict check_emission_independence(const EmissionModel& emission, double tol = kDefaultRankTol,
                                                int grid_scale = 1);

struct IdentifiabilityReport {
  bool q_full_rank = false;
  double q_sigma_min = 0.0;
  bool emissions_independent = false;
  double emission_sigma_min = 0.0;
  bool emission_check_rigorous = false;
  std::string emission_method;
  double tolerance = kDefaultRankTol;
  bool has_psi_check = false;
  bool psi_full_rank = false;
  double psi_sigma_min = 0.0;
  std::vector<std::string> notes;

  bool identifiable() const { return q_full_rank && emissions_independent && (!has_psi_check || psi_full_rank); }
};

IdentifiabilityReport diagnose(const HmmModel& model, double tol = kDefaultRankTol, int grid_scale = 1);

}  // namespace nphmm
