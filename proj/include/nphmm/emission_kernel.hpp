#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nphmm/observation.hpp"

namespace nphmm {

enum class KernelId { GaussianSpherical, EpanechnikovProduct };

const char* to_string(KernelId id);
KernelId parse_kernel_id(const std::string& name);

/// R(z) for a d-dimensional argument; both kernels integrate to 1 on R^d.
double kernel_value(KernelId id, const Eigen::Ref<const Eigen::RowVectorXd>& z);

/// Weighted kernel density per state,
///   f_j(y) = w^-d sum_u P(u, j) R((y - y_u) / w),
/// where the anchors y_u are (a stride of) the training observations.
struct KernelEmission {
  Eigen::MatrixXd anchors;  // n_a x d
  double bandwidth = 1.0;
  KernelId kernel = KernelId::GaussianSpherical;
  Eigen::MatrixXd weights;  // n_a x k, columns sum to 1

  int k() const { return static_cast<int>(weights.cols()); }
  Eigen::Index dim() const { return anchors.cols(); }
};

void validate(const KernelEmission& emission);

/// R(i, u) = R((points_i - anchors_u) / w).
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& points, const Eigen::MatrixXd& anchors,
                              KernelId id, double bandwidth);
/// Symmetric n x n matrix over the observations themselves.
Eigen::MatrixXd kernel_matrix(const ObservationSequence& obs, KernelId id, double bandwidth);

double density_eval(const KernelEmission& emission, int state, const Eigen::Ref<const Eigen::RowVectorXd>& y);

/// n x k floored log densities of the observations.
Eigen::MatrixXd kernel_log_emission(const KernelEmission& emission, const ObservationSequence& obs);

/// Same, reusing a precomputed kernel matrix against the emission's anchors.
Eigen::MatrixXd kernel_log_emission(const Eigen::MatrixXd& R, const Eigen::MatrixXd& weights,
                                    double bandwidth, Eigen::Index dim);

/// G(P) = sum_{i,j} tau(i,j) log(w^-d sum_u P(u,j) R(i,u)); terms with
/// tau(i,j) == 0 contribute nothing.
double gem_objective(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& tau, const Eigen::MatrixXd& R,
                     double bandwidth, Eigen::Index dim);

/// One multiplicative weight update: with gamma(i,u,j) proportional to
/// P(u,j) R(i,u), P'(u,j) is the tau-weighted average of gamma over i. Never
/// decreases gem_objective. Throws DegenerateDenominator when some
/// sum_v P(v,j) R(i,v) is zero for a position with tau(i,j) > 0.
Eigen::MatrixXd gem_inner_update(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& tau,
                                 const Eigen::MatrixXd& R);

inline constexpr double kWeightPrune = 1e-12;

/// `inner_iters` inner updates followed by pruning of weights below 1e-12.
/// When `trace` is given it receives G before the first and after every update.
Eigen::MatrixXd gem_emission_m_step(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& tau,
                                    const Eigen::MatrixXd& R, int inner_iters,
                                    std::vector<double>* trace = nullptr, double bandwidth = 1.0,
                                    Eigen::Index dim = 1);

/// Leave-one-out log-likelihood of the pooled kernel density estimate.
double loo_log_likelihood(const ObservationSequence& obs, KernelId id, double bandwidth);

/// Grid bandwidth maximizing loo_log_likelihood; ties go to the larger value.
double bandwidth_cv(const ObservationSequence& obs, const std::vector<double>& grid,
                    KernelId id = KernelId::GaussianSpherical);

/// 20 log-spaced values over [0.05, 2] x sd n^{-1/(4+d)}.
std::vector<double> default_bandwidth_grid(const ObservationSequence& obs);

}  // namespace nphmm
