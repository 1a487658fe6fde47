#include "nphmm/emission_kernel.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "nphmm/error.hpp"
#include "nphmm/hmm_core.hpp"

namespace nphmm {

const char* to_string(KernelId id) {
  return id == KernelId::GaussianSpherical ? "gaussian-spherical" : "epanechnikov-product";
}

KernelId parse_kernel_id(const std::string& name) {
  if (name == "gaussian-spherical" || name == "gaussian") return KernelId::GaussianSpherical;
  if (name == "epanechnikov-product" || name == "epanechnikov") return KernelId::EpanechnikovProduct;
  throw Error(ErrorCode::InvalidArgument, "unknown kernel '" + name + "'");
}

double kernel_value(KernelId id, const Eigen::Ref<const Eigen::RowVectorXd>& z) {
  if (id == KernelId::GaussianSpherical) {
    const double d = static_cast<double>(z.size());
    return std::exp(-0.5 * z.squaredNorm()) / std::pow(2.0 * std::numbers::pi, 0.5 * d);
  }
  double out = 1.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double u = z(i);
    if (std::abs(u) >= 1.0) return 0.0;
    out *= 0.75 * (1.0 - u * u);
  }
  return out;
}

void validate(const KernelEmission& emission) {
  if (!(emission.bandwidth > 0.0)) throw Error(ErrorCode::InvalidModel, "bandwidth must be > 0");
  if (emission.anchors.rows() < 1 || emission.anchors.cols() < 1) {
    throw Error(ErrorCode::InvalidModel, "kernel emission has no anchors");
  }
  if (emission.weights.rows() != emission.anchors.rows() || emission.weights.cols() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "weight matrix must be n_anchors x k");
  }
  if ((emission.weights.array() < 0.0).any() || (emission.weights.array() > 1.0).any()) {
    throw Error(ErrorCode::InvalidModel, "kernel weight outside [0,1]");
  }
  for (Eigen::Index j = 0; j < emission.weights.cols(); ++j) {
    if (std::abs(emission.weights.col(j).sum() - 1.0) > 1e-10) {
      throw Error(ErrorCode::InvalidModel, "kernel weights of state " + std::to_string(j + 1) +
                                               " do not sum to 1");
    }
  }
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& points, const Eigen::MatrixXd& anchors,
                              KernelId id, double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidth must be > 0");
  if (points.cols() != anchors.cols()) throw Error(ErrorCode::DimensionMismatch, "dimension mismatch");
  Eigen::MatrixXd R(points.rows(), anchors.rows());
  Eigen::RowVectorXd z(points.cols());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index u = 0; u < anchors.rows(); ++u) {
      z = (points.row(i) - anchors.row(u)) / bandwidth;
      R(i, u) = kernel_value(id, z);
    }
  }
  return R;
}

Eigen::MatrixXd kernel_matrix(const ObservationSequence& obs, KernelId id, double bandwidth) {
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidth must be > 0");
  const Eigen::Index n = obs.size();
  Eigen::MatrixXd R(n, n);
  Eigen::RowVectorXd z(obs.dim());
  R.diagonal().setConstant(kernel_value(id, Eigen::RowVectorXd::Zero(obs.dim())));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index u = i + 1; u < n; ++u) {
      z = (obs.row(i) - obs.row(u)) / bandwidth;
      R(i, u) = R(u, i) = kernel_value(id, z);
    }
  }
  return R;
}

double density_eval(const KernelEmission& emission, int state, const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  const double w = emission.bandwidth;
  double acc = 0.0;
  Eigen::RowVectorXd z(emission.dim());
  for (Eigen::Index u = 0; u < emission.anchors.rows(); ++u) {
    const double p = emission.weights(u, state);
    if (p == 0.0) continue;
    z = (y - emission.anchors.row(u)) / w;
    acc += p * kernel_value(emission.kernel, z);
  }
  return acc / std::pow(w, static_cast<double>(emission.dim()));
}

Eigen::MatrixXd kernel_log_emission(const Eigen::MatrixXd& R, const Eigen::MatrixXd& weights,
                                    double bandwidth, Eigen::Index dim) {
  const double scale = std::pow(bandwidth, static_cast<double>(dim));
  Eigen::MatrixXd dens = (R * weights) / scale;
  return dens.unaryExpr([](double v) { return floored_log(v); });
}

Eigen::MatrixXd kernel_log_emission(const KernelEmission& emission, const ObservationSequence& obs) {
  if (obs.dim() != emission.dim()) throw Error(ErrorCode::DimensionMismatch, "observation dimension differs");
  const Eigen::MatrixXd R = kernel_matrix(obs.values(), emission.anchors, emission.kernel, emission.bandwidth);
  return kernel_log_emission(R, emission.weights, emission.bandwidth, emission.dim());
}

double gem_objective(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& tau, const Eigen::MatrixXd& R,
                     double bandwidth, Eigen::Index dim) {
  const Eigen::MatrixXd mix = R * weights;
  const double log_scale = static_cast<double>(dim) * std::log(bandwidth);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < tau.rows(); ++i)
    for (Eigen::Index j = 0; j < tau.cols(); ++j)
      if (tau(i, j) > 0.0) acc += tau(i, j) * (std::log(mix(i, j)) - log_scale);
  return acc;
}

Eigen::MatrixXd gem_inner_update(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& tau,
                                 const Eigen::MatrixXd& R) {
  if (R.cols() != weights.rows() || R.rows() != tau.rows() || tau.cols() != weights.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "inconsistent kernel update dimensions");
  }
  // denom(i, j) = sum_v P(v, j) R(i, v); the update is
  // P'(u, j) ∝ P(u, j) sum_i tau(i, j) R(i, u) / denom(i, j).
  const Eigen::MatrixXd denom = R * weights;
  Eigen::MatrixXd ratio = Eigen::MatrixXd::Zero(tau.rows(), tau.cols());
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    for (Eigen::Index j = 0; j < tau.cols(); ++j) {
      if (tau(i, j) == 0.0) continue;
      if (!(denom(i, j) > 0.0)) {
        throw Error(ErrorCode::DegenerateDenominator,
                    "kernel mixture density vanishes at position " + std::to_string(i + 1) +
                        " for state " + std::to_string(j + 1));
      }
      ratio(i, j) = tau(i, j) / denom(i, j);
    }
  }
  Eigen::MatrixXd next = weights.cwiseProduct(R.transpose() * ratio);
  for (Eigen::Index j = 0; j < next.cols(); ++j) {
    const double total = next.col(j).sum();
    if (!(total > 0.0)) throw Error(ErrorCode::ZeroWeight, "state " + std::to_string(j + 1) + " has no weight");
    next.col(j) /= total;
  }
  return next;
}

Eigen::MatrixXd gem_emission_m_step(const Eigen::MatrixXd& weights, const Eigen::MatrixXd& tau,
                                    const Eigen::MatrixXd& R, int inner_iters, std::vector<double>* trace,
                                    double bandwidth, Eigen::Index dim) {
  if (inner_iters < 1) throw Error(ErrorCode::InvalidArgument, "inner iterations must be >= 1");
  Eigen::MatrixXd current = weights;
  if (trace) trace->push_back(gem_objective(current, tau, R, bandwidth, dim));
  for (int it = 0; it < inner_iters; ++it) {
    current = gem_inner_update(current, tau, R);
    if (trace) trace->push_back(gem_objective(current, tau, R, bandwidth, dim));
  }
  bool pruned = false;
  for (Eigen::Index u = 0; u < current.rows(); ++u)
    for (Eigen::Index j = 0; j < current.cols(); ++j)
      if (current(u, j) > 0.0 && current(u, j) < kWeightPrune) {
        current(u, j) = 0.0;
        pruned = true;
      }
  if (pruned) {
    for (Eigen::Index j = 0; j < current.cols(); ++j) current.col(j) /= current.col(j).sum();
  }
  return current;
}

double loo_log_likelihood(const ObservationSequence& obs, KernelId id, double bandwidth) {
  const Eigen::Index n = obs.size();
  if (n < 2) throw Error(ErrorCode::SequenceTooShort, "leave-one-out needs n >= 2");
  const Eigen::MatrixXd R = kernel_matrix(obs, id, bandwidth);
  const double log_norm =
      std::log(static_cast<double>(n - 1)) + static_cast<double>(obs.dim()) * std::log(bandwidth);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double others = R.row(i).sum() - R(i, i);
    acc += std::log(others) - log_norm;
  }
  return acc;
}

double bandwidth_cv(const ObservationSequence& obs, const std::vector<double>& grid, KernelId id) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "bandwidth grid is empty");
  double best_w = 0.0;
  double best_score = -std::numeric_limits<double>::infinity();
  bool first = true;
  for (double w : grid) {
    if (!(w > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidths must be > 0");
    const double score = loo_log_likelihood(obs, id, w);
    if (first || score > best_score || (score == best_score && w > best_w)) {
      best_w = w;
      best_score = score;
      first = false;
    }
  }
  return best_w;
}

std::vector<double> default_bandwidth_grid(const ObservationSequence& obs) {
  const Eigen::Index n = obs.size();
  const auto d = static_cast<double>(obs.dim());
  double sd = 0.0;
  for (Eigen::Index c = 0; c < obs.dim(); ++c) {
    const auto col = obs.values().col(c);
    const double mean = col.mean();
    sd += std::sqrt((col.array() - mean).square().sum() / static_cast<double>(std::max<Eigen::Index>(n - 1, 1)));
  }
  sd /= d;
  if (!(sd > 0.0)) sd = 1.0;
  const double scale = sd * std::pow(static_cast<double>(n), -1.0 / (4.0 + d));
  constexpr int kCount = 20;
  std::vector<double> grid(kCount);
  const double lo = std::log(0.05), hi = std::log(2.0);
  for (int g = 0; g < kCount; ++g) grid[g] = scale * std::exp(lo + (hi - lo) * g / (kCount - 1));
  return grid;
}

}  // namespace nphmm
