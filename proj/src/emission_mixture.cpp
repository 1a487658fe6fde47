#include "nphmm/emission_mixture.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "nphmm/error.hpp"

namespace nphmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kRowTol = 1e-10;
constexpr double kZeroWeight = 1e-12;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_integer(double y) { return y >= 0.0 && std::floor(y) == y; }

}  // namespace

double component_log_density(const Component& component, const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  return std::visit(
      overloaded{
          [&](const PoissonComponent& c) {
            const double v = y(0);
            if (!is_integer(v)) return kNegInf;
            return (v > 0.0 ? v * std::log(c.rate) : 0.0) - c.rate - std::lgamma(v + 1.0);
          },
          [&](const GaussianComponent& c) {
            double acc = 0.0;
            for (Eigen::Index d = 0; d < c.mean.size(); ++d) {
              const double z = y(d) - c.mean(d);
              acc -= 0.5 * (std::log(2.0 * std::numbers::pi * c.variance(d)) + z * z / c.variance(d));
            }
            return acc;
          },
          [&](const BinomialComponent& c) {
            const double v = y(0);
            if (!is_integer(v) || v > c.trials) return kNegInf;
            const double n = c.trials;
            double out = std::lgamma(n + 1.0) - std::lgamma(v + 1.0) - std::lgamma(n - v + 1.0);
            if (v > 0.0) out += v * std::log(c.prob);
            if (v < n) out += (n - v) * std::log1p(-c.prob);
            return out;
          },
          [&](const DiracAtZero&) { return y(0) == 0.0 ? 0.0 : kNegInf; },
          [&](const TriangularComponent& c) {
            const double v = y(0);
            if (!is_integer(v) || v > c.size - 1) return kNegInf;
            const double l = c.size;
            return std::log(2.0 * (l - v) / (l * (l + 1.0)));
          },
      },
      component);
}

bool is_count_component(const Component& component) {
  return !std::holds_alternative<GaussianComponent>(component);
}

Eigen::VectorXd triangular_component(int size) {
  if (size < 1) throw Error(ErrorCode::InvalidArgument, "triangular size must be >= 1");
  Eigen::VectorXd out(size);
  const double l = size;
  for (int y = 0; y < size; ++y) out(y) = 2.0 * (l - y) / (l * (l + 1.0));
  return out;
}

void validate(const MixtureEmission& emission) {
  const int k = emission.k();
  const int m = emission.m();
  if (k < 1 || m < 1) throw Error(ErrorCode::InvalidModel, "empty mixture proportion matrix");
  if (m < k) throw Error(ErrorCode::InvalidModel, "mixture needs at least k components");
  if (static_cast<int>(emission.components.size()) != m) {
    throw Error(ErrorCode::DimensionMismatch, "psi columns differ from component count");
  }
  for (int j = 0; j < k; ++j) {
    if ((emission.psi.row(j).array() < 0.0).any() || (emission.psi.row(j).array() > 1.0).any()) {
      throw Error(ErrorCode::InvalidModel, "psi entry outside [0,1]");
    }
    if (std::abs(emission.psi.row(j).sum() - 1.0) > kRowTol) {
      throw Error(ErrorCode::InvalidModel, "psi row " + std::to_string(j + 1) + " does not sum to 1");
    }
  }
  const bool counts = is_count_component(emission.components.front());
  std::map<int, int> binomials_per_trials;
  Eigen::Index gaussian_dim = -1;
  for (const auto& c : emission.components) {
    if (is_count_component(c) != counts) {
      throw Error(ErrorCode::InvalidModel, "mixture mixes count and continuous components");
    }
    std::visit(overloaded{
                   [](const PoissonComponent& p) {
                     if (!(p.rate > 0.0)) throw Error(ErrorCode::InvalidModel, "Poisson rate must be > 0");
                   },
                   [&](const GaussianComponent& g) {
                     if (g.mean.size() < 1 || g.variance.size() != g.mean.size()) {
                       throw Error(ErrorCode::InvalidModel, "Gaussian mean/variance dimension mismatch");
                     }
                     if (gaussian_dim >= 0 && g.mean.size() != gaussian_dim) {
                       throw Error(ErrorCode::InvalidModel, "Gaussian components differ in dimension");
                     }
                     gaussian_dim = g.mean.size();
                     if (!(g.variance.array() > 0.0).all()) {
                       throw Error(ErrorCode::InvalidModel, "Gaussian variance must be > 0");
                     }
                   },
                   [&](const BinomialComponent& b) {
                     if (b.trials < 1) throw Error(ErrorCode::InvalidModel, "binomial trials must be >= 1");
                     if (!(b.prob > 0.0 && b.prob < 1.0)) {
                       throw Error(ErrorCode::InvalidModel, "binomial probability must lie in (0,1)");
                     }
                     ++binomials_per_trials[b.trials];
                   },
                   [](const DiracAtZero&) {},
                   [](const TriangularComponent& t) {
                     if (t.size < 1) throw Error(ErrorCode::InvalidModel, "triangular size must be >= 1");
                   },
               },
               c);
  }
  for (const auto& [trials, count] : binomials_per_trials) {
    if (trials < 2 * count - 1) {
      throw Error(ErrorCode::InvalidModel,
                  "binomial components sharing N = " + std::to_string(trials) +
                      " are not linearly independent (need N >= 2m - 1 for m = " +
                      std::to_string(count) + ")");
    }
  }
  if (emission.zero_inflated) {
    if (m != k + 1 || !std::holds_alternative<DiracAtZero>(emission.components.back())) {
      throw Error(ErrorCode::InvalidModel, "zero-inflated mixture needs k base components plus a Dirac");
    }
    for (int j = 0; j < k; ++j)
      for (int l = 0; l < k; ++l)
        if (l != j && emission.psi(j, l) != 0.0) {
          throw Error(ErrorCode::InvalidModel, "zero-inflated psi must be [diag(1-q) | q]");
        }
  }
}

Eigen::MatrixXd component_log_matrix(const MixtureEmission& emission, const ObservationSequence& obs) {
  const Eigen::Index n = obs.size();
  const int m = emission.m();
  const double floor = std::log(kDensityFloor);
  Eigen::MatrixXd out(n, m);
  for (int l = 0; l < m; ++l) {
    const auto& c = emission.components[static_cast<std::size_t>(l)];
    for (Eigen::Index i = 0; i < n; ++i)
      out(i, l) = std::max(component_log_density(c, obs.row(i)), floor);
  }
  return out;
}

Eigen::MatrixXd mixture_log_emission(const MixtureEmission& emission, const ObservationSequence& obs) {
  const Eigen::MatrixXd comp = component_log_matrix(emission, obs);
  const Eigen::Index n = obs.size();
  const int k = emission.k();
  const int m = emission.m();
  Eigen::MatrixXd out(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double top = comp.row(i).maxCoeff();
    for (int j = 0; j < k; ++j) {
      double acc = 0.0;
      for (int l = 0; l < m; ++l) acc += emission.psi(j, l) * std::exp(comp(i, l) - top);
      out(i, j) = std::max(top + std::log(acc), std::log(kDensityFloor));
    }
  }
  return out;
}

TransitionModel joint_chain(const TransitionModel& model, const Eigen::MatrixXd& psi) {
  const int k = model.k();
  const auto m = psi.cols();
  if (psi.rows() != k) throw Error(ErrorCode::DimensionMismatch, "psi rows differ from k");
  const Eigen::Index size = k * m;
  Eigen::MatrixXd T(size, size);
  Eigen::VectorXd init(size);
  for (int j = 0; j < k; ++j) {
    for (Eigen::Index l = 0; l < m; ++l) {
      init(j * m + l) = model.init()(j) * psi(j, l);
      for (int jn = 0; jn < k; ++jn)
        for (Eigen::Index ln = 0; ln < m; ++ln) T(j * m + l, jn * m + ln) = model.Q()(j, jn) * psi(jn, ln);
    }
  }
  // Rows are exact products of stochastic rows; renormalize away rounding.
  for (Eigen::Index s = 0; s < size; ++s) T.row(s) /= T.row(s).sum();
  init /= init.sum();
  return TransitionModel(std::move(T), std::move(init));
}

MixturePosterior e_step_extended(const TransitionModel& model, const MixtureEmission& emission,
                                 const ObservationSequence& obs) {
  return e_step_extended(model, emission.psi, component_log_matrix(emission, obs));
}

MixturePosterior e_step_extended(const TransitionModel& model, const Eigen::MatrixXd& psi,
                                 const Eigen::MatrixXd& component_log) {
  const int k = model.k();
  const auto m = psi.cols();
  if (component_log.cols() != m) {
    throw Error(ErrorCode::DimensionMismatch, "component matrix width differs from psi columns");
  }
  const Eigen::Index n = component_log.rows();
  const Eigen::Index size = k * m;

  Eigen::MatrixXd joint_log(n, size);
  for (int j = 0; j < k; ++j) joint_log.middleCols(j * m, m) = component_log;
  const PosteriorSet joint = forward_backward(joint_chain(model, psi), joint_log);

  MixturePosterior out;
  out.extended.k = k;
  out.extended.joint_xz = joint.tau;  // column j*m + l is pair (j, l)
  out.extended.xi = Eigen::MatrixXd::Zero(n, m);
  out.states.tau = Eigen::MatrixXd::Zero(n, k);
  out.states.log_lik = joint.log_lik;
  for (int j = 0; j < k; ++j) {
    out.extended.xi += joint.tau.middleCols(j * m, m);
    out.states.tau.col(j) = joint.tau.middleCols(j * m, m).rowwise().sum();
  }
  out.states.pair_joint = RowMajorMatrix::Zero(n - 1, static_cast<Eigen::Index>(k) * k);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const auto pair = joint.pair(i);
    auto target = out.states.pair(i);
    for (int j = 0; j < k; ++j)
      for (int jn = 0; jn < k; ++jn) target(j, jn) = pair.block(j * m, jn * m, m, m).sum();
  }
  return out;
}

Eigen::MatrixXd m_step_psi(const ExtendedPosteriorSet& ext, const Eigen::MatrixXd& tau) {
  const int k = ext.k;
  const int m = ext.m();
  if (tau.cols() != k || tau.rows() != ext.joint_xz.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "tau does not match the extended posteriors");
  }
  const Eigen::RowVectorXd sums = ext.joint_xz.colwise().sum();
  const Eigen::RowVectorXd occupancy = tau.colwise().sum();
  Eigen::MatrixXd psi(k, m);
  for (int j = 0; j < k; ++j) {
    if (occupancy(j) < kZeroWeight) {
      throw Error(ErrorCode::EmptyState, "state " + std::to_string(j + 1) + " has no posterior mass");
    }
    for (int l = 0; l < m; ++l) psi(j, l) = sums(j * m + l) / occupancy(j);
    psi.row(j) /= psi.row(j).sum();
  }
  return psi;
}

Eigen::MatrixXd m_step_zero_inflated_psi(const ExtendedPosteriorSet& ext, const Eigen::MatrixXd& tau) {
  const int k = ext.k;
  if (ext.m() != k + 1) throw Error(ErrorCode::DimensionMismatch, "zero-inflated psi needs m = k + 1");
  const Eigen::RowVectorXd sums = ext.joint_xz.colwise().sum();
  const Eigen::RowVectorXd occupancy = tau.colwise().sum();
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(k, k + 1);
  for (int j = 0; j < k; ++j) {
    if (occupancy(j) < kZeroWeight) {
      throw Error(ErrorCode::EmptyState, "state " + std::to_string(j + 1) + " has no posterior mass");
    }
    const double q = std::clamp(sums(j * (k + 1) + k) / occupancy(j), 0.0, 1.0);
    psi(j, j) = 1.0 - q;
    psi(j, k) = q;
  }
  return psi;
}

SufficientStats sufficient_statistics(const ObservationSequence& obs, const Eigen::VectorXd& weights) {
  if (weights.size() != obs.size()) throw Error(ErrorCode::DimensionMismatch, "weights differ from n");
  SufficientStats s;
  s.weight = weights.sum();
  s.first = obs.values().transpose() * weights;
  s.second = Eigen::VectorXd::Zero(obs.dim());
  if (s.weight > 0.0) {
    const Eigen::RowVectorXd mean = (s.first / s.weight).transpose();
    for (Eigen::Index i = 0; i < obs.size(); ++i)
      s.second += (weights(i) * (obs.row(i) - mean).array().square()).matrix().transpose();
  }
  return s;
}

ExpFamUpdate m_step_expfam(const Component& current, const SufficientStats& stats) {
  if (!(stats.weight > kZeroWeight)) throw Error(ErrorCode::ZeroWeight, "component has no posterior weight");
  ExpFamUpdate out{current, false};
  std::visit(overloaded{
                 [&](const PoissonComponent&) {
                   out.component = PoissonComponent{std::max(stats.first(0) / stats.weight, kRateFloor)};
                 },
                 [&](const GaussianComponent&) {
                   GaussianComponent g;
                   g.mean = stats.first / stats.weight;
                   g.variance = stats.second / stats.weight;
                   for (Eigen::Index d = 0; d < g.variance.size(); ++d) {
                     if (!(g.variance(d) > kVarianceFloor)) {
                       g.variance(d) = kVarianceFloor;
                       out.degenerate_variance = true;
                     }
                   }
                   out.component = std::move(g);
                 },
                 [&](const BinomialComponent& b) {
                   const double p = stats.first(0) / (stats.weight * b.trials);
                   out.component = BinomialComponent{b.trials, std::clamp(p, kProbClip, 1.0 - kProbClip)};
                 },
                 [](const DiracAtZero&) {},
                 [](const TriangularComponent&) {},
             },
             current);
  return out;
}

MixtureEmission make_zero_inflated(const Eigen::VectorXd& q, std::vector<Component> base) {
  const auto k = q.size();
  if (k < 1 || static_cast<Eigen::Index>(base.size()) != k) {
    throw Error(ErrorCode::DimensionMismatch, "need one base component per state");
  }
  int ones = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (!(q(j) >= 0.0 && q(j) <= 1.0)) throw Error(ErrorCode::InvalidArgument, "q must lie in [0,1]");
    if (q(j) == 1.0) ++ones;
  }
  if (ones > 1) {
    throw Error(ErrorCode::RankDeficient, "more than one state is a pure Dirac at zero; psi loses rank");
  }
  MixtureEmission out;
  out.psi = Eigen::MatrixXd::Zero(k, k + 1);
  for (Eigen::Index j = 0; j < k; ++j) {
    out.psi(j, j) = 1.0 - q(j);
    out.psi(j, k) = q(j);
  }
  out.components = std::move(base);
  out.components.emplace_back(DiracAtZero{});
  out.zero_inflated = true;
  return out;
}

RankCheck check_psi_rank(const Eigen::MatrixXd& psi, double tol) {
  const auto k = psi.rows();
  RankCheck out;
  if (k == 0) return out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(psi);
  const auto& sv = svd.singularValues();
  out.sigma_min = k <= sv.size() ? sv(k - 1) : 0.0;
  out.full_rank = out.sigma_min > tol;
  return out;
}

}  // namespace nphmm
