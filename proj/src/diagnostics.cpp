#include "nphmm/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "nphmm/error.hpp"

namespace nphmm {

namespace {

double kth_singular_value(const Eigen::MatrixXd& m) {
  const Eigen::Index k = m.rows();
  if (k == 0) return 0.0;
  if (m.cols() < k) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(k - 1);
}

Eigen::Index count_support_bound(const Component& c) {
  return std::visit(
      [](const auto& comp) -> Eigen::Index {
        using T = std::decay_t<decltype(comp)>;
        if constexpr (std::is_same_v<T, PoissonComponent>) {
          return static_cast<Eigen::Index>(std::ceil(comp.rate + 10.0 * std::sqrt(comp.rate) + 10.0));
        } else if constexpr (std::is_same_v<T, BinomialComponent>) {
          return comp.trials;
        } else if constexpr (std::is_same_v<T, TriangularComponent>) {
          return comp.size - 1;
        } else {
          return 0;
        }
      },
      c);
}

Eigen::MatrixXd count_table(const EmissionModel& emission, Eigen::Index y_max) {
  const int k = num_states(emission);
  Eigen::MatrixXd table(k, y_max + 1);
  Eigen::RowVectorXd y(1);
  for (int j = 0; j < k; ++j) {
    for (Eigen::Index v = 0; v <= y_max; ++v) {
      y(0) = static_cast<double>(v);
      table(j, v) = emission_density(emission, j, y);
    }
  }
  return table;
}

// Evaluation grid: the box [lo - pad, hi + pad] per axis, `per_axis` points each.
Eigen::MatrixXd box_grid(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, int per_axis) {
  const Eigen::Index d = lo.size();
  Eigen::Index total = 1;
  for (Eigen::Index c = 0; c < d; ++c) total *= per_axis;
  Eigen::MatrixXd grid(total, d);
  for (Eigen::Index g = 0; g < total; ++g) {
    Eigen::Index rest = g;
    for (Eigen::Index c = 0; c < d; ++c) {
      const Eigen::Index idx = rest % per_axis;
      rest /= per_axis;
      const double t = per_axis == 1 ? 0.5 : static_cast<double>(idx) / (per_axis - 1);
      grid(g, c) = lo(c) + t * (hi(c) - lo(c));
    }
  }
  return grid;
}

int points_per_axis(Eigen::Index d, int grid_scale) {
  int base = 0;
  if (d == 1) {
    base = 512;
  } else if (d == 2) {
    base = 64;
  } else {
    base = std::max(2, static_cast<int>(std::floor(std::pow(4096.0, 1.0 / static_cast<double>(d)))));
  }
  return base * grid_scale;
}

double normalized_gram_min_eigenvalue(const Eigen::MatrixXd& densities) {
  const Eigen::VectorXd norms = densities.rowwise().norm();
  if ((norms.array() <= 0.0).any()) return 0.0;
  const Eigen::MatrixXd unit = norms.cwiseInverse().asDiagonal() * densities;
  const Eigen::MatrixXd gram = unit * unit.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, eig.eigenvalues()(0));
}

IndependenceVerdict table_verdict(const Eigen::MatrixXd& table, double tol, std::string method) {
  const RankVerdict r = check_table_rank(table, tol);
  return {r.full_rank, r.sigma_min, true, std::move(method)};
}

IndependenceVerdict grid_verdict(const Eigen::MatrixXd& densities, double tol, std::string method) {
  const double s = normalized_gram_min_eigenvalue(densities);
  return {s > tol, s, false, std::move(method)};
}

}  // namespace

RankVerdict check_transition_rank(const Eigen::MatrixXd& Q, double tol) {
  if (Q.rows() != Q.cols()) throw Error(ErrorCode::DimensionMismatch, "transition matrix must be square");
  const double s = kth_singular_value(Q);
  return {s > tol, s};
}

RankVerdict check_table_rank(const Eigen::MatrixXd& table, double tol) {
  const Eigen::VectorXd norms = table.rowwise().norm();
  if ((norms.array() <= 0.0).any()) return {false, 0.0};
  const double s = kth_singular_value(norms.cwiseInverse().asDiagonal() * table);
  return {s > tol, s};
}

IndependenceVerdict check_emission_independence(const EmissionModel& emission, double tol, int grid_scale) {
  if (grid_scale < 1) throw Error(ErrorCode::InvalidArgument, "grid scale must be >= 1");
  if (const auto* e = std::get_if<DiscreteEmission>(&emission)) {
    return table_verdict(e->probs, tol, "probability table");
  }
  if (const auto* e = std::get_if<NegBinEmission>(&emission)) {
    double bound = 0.0;
    for (int j = 0; j < e->k(); ++j) {
      const double mean = e->r(j) * (1.0 - e->p(j)) / e->p(j);
      const double sd = std::sqrt(mean / e->p(j));
      bound = std::max(bound, mean + 10.0 * sd + 10.0);
    }
    return table_verdict(count_table(emission, static_cast<Eigen::Index>(std::ceil(bound))), tol,
                         "truncated probability table");
  }
  if (const auto* e = std::get_if<MixtureEmission>(&emission)) {
    if (is_count_component(e->components.front())) {
      Eigen::Index bound = 0;
      for (const auto& c : e->components) bound = std::max(bound, count_support_bound(c));
      return table_verdict(count_table(emission, bound), tol, "truncated probability table");
    }
    const Eigen::Index d = observation_dim(emission);
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = -lo;
    for (const auto& c : e->components) {
      const auto& g = std::get<GaussianComponent>(c);
      const Eigen::VectorXd sd = g.variance.cwiseSqrt();
      lo = lo.cwiseMin(g.mean - 3.0 * sd);
      hi = hi.cwiseMax(g.mean + 3.0 * sd);
    }
    const Eigen::MatrixXd grid = box_grid(lo, hi, points_per_axis(d, grid_scale));
    Eigen::MatrixXd densities(e->k(), grid.rows());
    for (int j = 0; j < e->k(); ++j)
      for (Eigen::Index g = 0; g < grid.rows(); ++g) densities(j, g) = emission_density(emission, j, grid.row(g));
    return grid_verdict(densities, tol, "normalized Gram matrix on a grid");
  }
  const auto& e = std::get<KernelEmission>(emission);
  const Eigen::Index d = e.dim();
  const Eigen::VectorXd pad = Eigen::VectorXd::Constant(d, 3.0 * e.bandwidth);
  const Eigen::VectorXd lo = e.anchors.colwise().minCoeff().transpose() - pad;
  const Eigen::VectorXd hi = e.anchors.colwise().maxCoeff().transpose() + pad;
  const Eigen::MatrixXd grid = box_grid(lo, hi, points_per_axis(d, grid_scale));
  const Eigen::MatrixXd densities = (kernel_matrix(grid, e.anchors, e.kernel, e.bandwidth) * e.weights).transpose();
  return grid_verdict(densities, tol, "normalized Gram matrix on a grid");
}

IdentifiabilityReport diagnose(const HmmModel& model, double tol, int grid_scale) {
  validate(model);
  IdentifiabilityReport report;
  report.tolerance = tol;
  const RankVerdict q = check_transition_rank(model.transition.Q(), tol);
  report.q_full_rank = q.full_rank;
  report.q_sigma_min = q.sigma_min;
  const IndependenceVerdict em = check_emission_independence(model.emission, tol, grid_scale);
  report.emissions_independent = em.independent;
  report.emission_sigma_min = em.sigma_min;
  report.emission_check_rigorous = em.rigorous;
  report.emission_method = em.method;

  if (!q.full_rank) report.notes.push_back("transition matrix is rank deficient");
  if (!em.independent) report.notes.push_back("emission laws are linearly dependent at this tolerance");
  if (em.independent && !em.rigorous) {
    report.notes.push_back("emission independence was assessed on a finite grid and is heuristic");
  }
  if (const auto* mix = std::get_if<MixtureEmission>(&model.emission)) {
    const RankCheck psi = check_psi_rank(mix->psi, tol);
    report.has_psi_check = true;
    report.psi_full_rank = psi.full_rank;
    report.psi_sigma_min = psi.sigma_min;
    report.notes.push_back(psi.full_rank ? "mixing proportions psi have full row rank"
                                         : "mixing proportions psi are rank deficient");
  }
  return report;
}

}  // namespace nphmm
