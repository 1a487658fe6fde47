#include "nphmm/emission.hpp"

#include <cmath>

#include "nphmm/error.hpp"

namespace nphmm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_permutation(const std::vector<int>& perm, int k) {
  if (static_cast<int>(perm.size()) != k) throw Error(ErrorCode::DimensionMismatch, "permutation size differs from k");
  std::vector<bool> seen(static_cast<std::size_t>(k), false);
  for (int v : perm) {
    if (v < 0 || v >= k || seen[static_cast<std::size_t>(v)]) {
      throw Error(ErrorCode::InvalidArgument, "not a permutation");
    }
    seen[static_cast<std::size_t>(v)] = true;
  }
}

std::int64_t sample_component(const Component& c, std::mt19937_64& rng, Eigen::RowVectorXd& out) {
  return std::visit(
      overloaded{
          [&](const PoissonComponent& p) -> std::int64_t {
            std::poisson_distribution<std::int64_t> d(p.rate);
            return d(rng);
          },
          [&](const GaussianComponent& g) -> std::int64_t {
            out.resize(g.mean.size());
            for (Eigen::Index i = 0; i < g.mean.size(); ++i) {
              std::normal_distribution<double> d(g.mean(i), std::sqrt(g.variance(i)));
              out(i) = d(rng);
            }
            return -1;
          },
          [&](const BinomialComponent& b) -> std::int64_t {
            std::binomial_distribution<std::int64_t> d(b.trials, b.prob);
            return d(rng);
          },
          [](const DiracAtZero&) -> std::int64_t { return 0; },
          [&](const TriangularComponent& t) -> std::int64_t {
            const Eigen::VectorXd probs = triangular_component(t.size);
            std::discrete_distribution<int> d(probs.data(), probs.data() + probs.size());
            return d(rng);
          },
      },
      c);
}

Eigen::RowVectorXd count_row(std::int64_t y) {
  Eigen::RowVectorXd out(1);
  out(0) = static_cast<double>(y);
  return out;
}

}  // namespace

int num_states(const EmissionModel& emission) {
  return std::visit([](const auto& e) { return e.k(); }, emission);
}

ObservationKind observation_kind(const EmissionModel& emission) {
  return std::visit(overloaded{
                        [](const DiscreteEmission&) { return ObservationKind::Count; },
                        [](const NegBinEmission&) { return ObservationKind::Count; },
                        [](const MixtureEmission& m) {
                          return m.components.empty() || is_count_component(m.components.front())
                                     ? ObservationKind::Count
                                     : ObservationKind::RealVector;
                        },
                        [](const KernelEmission&) { return ObservationKind::RealVector; },
                    },
                    emission);
}

Eigen::Index observation_dim(const EmissionModel& emission) {
  return std::visit(overloaded{
                        [](const MixtureEmission& m) -> Eigen::Index {
                          if (!m.components.empty())
                            if (const auto* g = std::get_if<GaussianComponent>(&m.components.front()))
                              return g->mean.size();
                          return 1;
                        },
                        [](const KernelEmission& e) -> Eigen::Index { return e.dim(); },
                        [](const auto&) -> Eigen::Index { return 1; },
                    },
                    emission);
}

std::string family_name(const EmissionModel& emission) {
  return std::visit(overloaded{
                        [](const DiscreteEmission&) { return std::string("discrete"); },
                        [](const NegBinEmission&) { return std::string("negbin"); },
                        [](const MixtureEmission&) { return std::string("mixture"); },
                        [](const KernelEmission&) { return std::string("kernel"); },
                    },
                    emission);
}

void validate(const EmissionModel& emission) {
  std::visit([](const auto& e) { validate(e); }, emission);
}

void validate(const HmmModel& model) {
  validate(model.emission);
  if (num_states(model.emission) != model.k()) {
    throw Error(ErrorCode::DimensionMismatch, "emission state count differs from transition k");
  }
}

Eigen::MatrixXd log_emission_matrix(const EmissionModel& emission, const ObservationSequence& obs) {
  if (observation_kind(emission) != obs.kind()) {
    throw Error(ErrorCode::IncompatibleFamily,
                family_name(emission) + " emissions do not match the observation kind");
  }
  if (observation_dim(emission) != obs.dim()) {
    throw Error(ErrorCode::IncompatibleFamily, "observation dimension differs from the emission model");
  }
  return std::visit(
      overloaded{
          [&](const DiscreteEmission& e) {
            Eigen::MatrixXd out(obs.size(), e.k());
            for (Eigen::Index i = 0; i < obs.size(); ++i)
              for (int j = 0; j < e.k(); ++j) out(i, j) = floored_log(e.density(j, obs.count(i)));
            return out;
          },
          [&](const NegBinEmission& e) {
            Eigen::MatrixXd out(obs.size(), e.k());
            const double floor = std::log(kDensityFloor);
            for (Eigen::Index i = 0; i < obs.size(); ++i)
              for (int j = 0; j < e.k(); ++j) out(i, j) = std::max(e.log_density(j, obs.count(i)), floor);
            return out;
          },
          [&](const MixtureEmission& e) { return mixture_log_emission(e, obs); },
          [&](const KernelEmission& e) { return kernel_log_emission(e, obs); },
      },
      emission);
}

double emission_density(const EmissionModel& emission, int state,
                        const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  return std::visit(overloaded{
                        [&](const DiscreteEmission& e) {
                          const double v = y(0);
                          if (v < 0.0 || std::floor(v) != v) return 0.0;
                          return e.density(state, static_cast<std::int64_t>(v));
                        },
                        [&](const NegBinEmission& e) {
                          const double v = y(0);
                          if (v < 0.0 || std::floor(v) != v) return 0.0;
                          return std::exp(e.log_density(state, static_cast<std::int64_t>(v)));
                        },
                        [&](const MixtureEmission& e) {
                          double acc = 0.0;
                          for (int l = 0; l < e.m(); ++l) {
                            if (e.psi(state, l) == 0.0) continue;
                            acc += e.psi(state, l) *
                                   std::exp(component_log_density(e.components[static_cast<std::size_t>(l)], y));
                          }
                          return acc;
                        },
                        [&](const KernelEmission& e) { return density_eval(e, state, y); },
                    },
                    emission);
}

Eigen::RowVectorXd sample_emission(const EmissionModel& emission, int state, std::mt19937_64& rng) {
  return std::visit(
      overloaded{
          [&](const DiscreteEmission& e) {
            const Eigen::VectorXd row = e.probs.row(state).transpose();
            std::discrete_distribution<int> d(row.data(), row.data() + row.size());
            return count_row(d(rng));
          },
          [&](const NegBinEmission& e) {
            // Gamma-Poisson representation; r need not be an integer.
            std::gamma_distribution<double> g(e.r(state), (1.0 - e.p(state)) / e.p(state));
            const double rate = g(rng);
            if (!(rate > 0.0)) return count_row(0);
            std::poisson_distribution<std::int64_t> d(rate);
            return count_row(d(rng));
          },
          [&](const MixtureEmission& e) {
            const Eigen::VectorXd row = e.psi.row(state).transpose();
            std::discrete_distribution<int> pick(row.data(), row.data() + row.size());
            Eigen::RowVectorXd out;
            const std::int64_t y = sample_component(e.components[static_cast<std::size_t>(pick(rng))], rng, out);
            return y >= 0 ? count_row(y) : out;
          },
          [&](const KernelEmission& e) {
            const Eigen::VectorXd col = e.weights.col(state);
            std::discrete_distribution<Eigen::Index> pick(col.data(), col.data() + col.size());
            Eigen::RowVectorXd out = e.anchors.row(pick(rng));
            if (e.kernel == KernelId::GaussianSpherical) {
              std::normal_distribution<double> z(0.0, 1.0);
              for (Eigen::Index d = 0; d < out.size(); ++d) out(d) += e.bandwidth * z(rng);
            } else {
              // Median of three uniforms on [-1, 1] has the Epanechnikov law.
              std::uniform_real_distribution<double> u(-1.0, 1.0);
              for (Eigen::Index d = 0; d < out.size(); ++d) {
                const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
                const double draw =
                    (std::abs(u3) >= std::abs(u2) && std::abs(u3) >= std::abs(u1)) ? u2 : u3;
                out(d) += e.bandwidth * draw;
              }
            }
            return out;
          },
      },
      emission);
}

HmmModel permute_states(const HmmModel& model, const std::vector<int>& perm) {
  const int k = model.k();
  check_permutation(perm, k);
  Eigen::MatrixXd Q(k, k);
  Eigen::VectorXd init(k);
  for (int a = 0; a < k; ++a) {
    init(perm[a]) = model.transition.init()(a);
    for (int b = 0; b < k; ++b) Q(perm[a], perm[b]) = model.transition.Q()(a, b);
  }
  EmissionModel emission = std::visit(
      overloaded{
          [&](const DiscreteEmission& e) -> EmissionModel {
            DiscreteEmission out = e;
            for (int a = 0; a < k; ++a) out.probs.row(perm[a]) = e.probs.row(a);
            return out;
          },
          [&](const NegBinEmission& e) -> EmissionModel {
            NegBinEmission out = e;
            for (int a = 0; a < k; ++a) {
              out.r(perm[a]) = e.r(a);
              out.p(perm[a]) = e.p(a);
            }
            return out;
          },
          [&](const MixtureEmission& e) -> EmissionModel {
            MixtureEmission out = e;
            for (int a = 0; a < k; ++a) out.psi.row(perm[a]) = e.psi.row(a);
            if (e.zero_inflated) {
              // Keep the [diag(1-q) | q] layout: base components follow their states.
              for (int a = 0; a < k; ++a) {
                out.components[static_cast<std::size_t>(perm[a])] = e.components[static_cast<std::size_t>(a)];
              }
              out.psi.setZero();
              for (int a = 0; a < k; ++a) {
                out.psi(perm[a], perm[a]) = e.psi(a, a);
                out.psi(perm[a], k) = e.psi(a, k);
              }
            }
            return out;
          },
          [&](const KernelEmission& e) -> EmissionModel {
            KernelEmission out = e;
            for (int a = 0; a < k; ++a) out.weights.col(perm[a]) = e.weights.col(a);
            return out;
          },
      },
      model.emission);
  return HmmModel{TransitionModel(std::move(Q), std::move(init)), std::move(emission)};
}

PosteriorSet forward_backward(const HmmModel& model, const ObservationSequence& obs) {
  return forward_backward(model.transition, log_emission_matrix(model.emission, obs));
}

double log_likelihood(const HmmModel& model, const ObservationSequence& obs) {
  return log_likelihood(model.transition, log_emission_matrix(model.emission, obs));
}

double pseudo_log_likelihood(const HmmModel& model, const ObservationSequence& obs) {
  return pseudo_log_likelihood(model.transition, log_emission_matrix(model.emission, obs));
}

StatePath viterbi(const HmmModel& model, const ObservationSequence& obs) {
  return viterbi(model.transition, log_emission_matrix(model.emission, obs));
}

}  // namespace nphmm
