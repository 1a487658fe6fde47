#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/hmm_core.hpp"
#include "nphmm/observation.hpp"
#include "nphmm/transition.hpp"

namespace nphmm {

struct PoissonComponent {
  double rate = 1.0;
};

/// Gaussian with diagonal covariance; `variance` holds one entry per dimension.
struct GaussianComponent {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

struct BinomialComponent {
  int trials = 1;
  double prob = 0.5;
};

struct DiracAtZero {};

/// Discrete triangular law T_l(y) = 2(l - y) / (l(l + 1)) on {0, ..., l-1}.
struct TriangularComponent {
  int size = 1;
};

using Component =
    std::variant<PoissonComponent, GaussianComponent, BinomialComponent, DiracAtZero, TriangularComponent>;

/// Log density of one component at observation row `y` (counting measure for
/// the discrete families, Lebesgue for the Gaussian). Zero mass gives -inf.
double component_log_density(const Component& component, const Eigen::Ref<const Eigen::RowVectorXd>& y);

bool is_count_component(const Component& component);

/// Probabilities of the triangular law of the given size.
Eigen::VectorXd triangular_component(int size);

/// Emissions mu_j = sum_l psi(j, l) phi_l over a component dictionary shared by
/// all states. A zero-inflated emission keeps the sparse psi pattern fixed
/// during fitting: only the last column (and the matching diagonal) is free.
struct MixtureEmission {
  Eigen::MatrixXd psi;  // k x m
  std::vector<Component> components;
  bool zero_inflated = false;

  int k() const { return static_cast<int>(psi.rows()); }
  int m() const { return static_cast<int>(psi.cols()); }
};

void validate(const MixtureEmission& emission);

/// n x m matrix of floored component log densities at each observation.
Eigen::MatrixXd component_log_matrix(const MixtureEmission& emission, const ObservationSequence& obs);

/// n x k matrix of floored log marginal densities log sum_l psi(j,l) phi_l(Y_i).
Eigen::MatrixXd mixture_log_emission(const MixtureEmission& emission, const ObservationSequence& obs);

/// The chain on pairs (X_i, Z_i) with k*m states; pair (j, l) has index j*m + l.
TransitionModel joint_chain(const TransitionModel& model, const Eigen::MatrixXd& psi);

struct ExtendedPosteriorSet {
  Eigen::MatrixXd xi;      // n x m, P(Z_i = l | Y)
  RowMajorMatrix joint_xz;  // n x (k*m), P(X_i = j, Z_i = l | Y) flattened row-major
  int k = 0;

  int m() const { return static_cast<int>(xi.cols()); }
  Eigen::Map<const RowMajorMatrix> joint(Eigen::Index i) const {
    return {joint_xz.row(i).data(), k, m()};
  }
};

struct MixturePosterior {
  PosteriorSet states;  // marginal over X: tau and pair posteriors
  ExtendedPosteriorSet extended;
};

/// Exact forward-backward on the joint (X, Z) chain.
MixturePosterior e_step_extended(const TransitionModel& model, const MixtureEmission& emission,
                                 const ObservationSequence& obs);
MixturePosterior e_step_extended(const TransitionModel& model, const Eigen::MatrixXd& psi,
                                 const Eigen::MatrixXd& component_log);

/// psi(j, l) = sum_i joint_i(j, l) / sum_i tau(i, j).
Eigen::MatrixXd m_step_psi(const ExtendedPosteriorSet& ext, const Eigen::MatrixXd& tau);

/// Zero-inflated variant: only q_j = P(Z = dirac | X = j) is re-estimated.
Eigen::MatrixXd m_step_zero_inflated_psi(const ExtendedPosteriorSet& ext, const Eigen::MatrixXd& tau);

/// Weighted sufficient statistics of one component: N = sum_i w_i,
/// T = sum_i w_i Y_i and, per dimension, the centered second moment sum
/// sum_i w_i (Y_i - T/N)^2 (kept centered for numerical accuracy).
struct SufficientStats {
  double weight = 0.0;
  Eigen::VectorXd first;
  Eigen::VectorXd second;
};

SufficientStats sufficient_statistics(const ObservationSequence& obs, const Eigen::VectorXd& weights);

inline constexpr double kVarianceFloor = 1e-8;
inline constexpr double kProbClip = 1e-8;
inline constexpr double kRateFloor = 1e-8;

struct ExpFamUpdate {
  Component component;
  bool degenerate_variance = false;
};

/// Solves b'(theta) = T / N for the Poisson, Gaussian and Binomial families.
/// Components without free parameters (Dirac, triangular) are returned as is.
ExpFamUpdate m_step_expfam(const Component& current, const SufficientStats& stats);

/// psi = [diag(1 - q) | q] with a Dirac-at-zero component appended.
MixtureEmission make_zero_inflated(const Eigen::VectorXd& q, std::vector<Component> base);

struct RankCheck {
  bool full_rank = false;
  double sigma_min = 0.0;
};

/// Compares the k-th largest singular value of psi with `tol`.
RankCheck check_psi_rank(const Eigen::MatrixXd& psi, double tol = 1e-8);

}  // namespace nphmm
