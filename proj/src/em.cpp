#include "nphmm/em.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>

#include "nphmm/error.hpp"
#include "nphmm/parallel.hpp"

namespace nphmm {

namespace {

constexpr double kEmptyState = 1e-12;
constexpr int kMaxAlignStates = 10;

struct EStep {
  PosteriorSet post;
  std::optional<ExtendedPosteriorSet> extended;
};

double uniform_factor(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 1.5);
  return u(rng);
}

// Positions sorted by an ordering key (the count, or the coordinate sum of a
// real vector) and cut into `bands` contiguous groups of near-equal size.
std::vector<std::vector<Eigen::Index>> quantile_bands(const Eigen::MatrixXd& rows, int bands) {
  const Eigen::Index n = rows.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::VectorXd key = rows.rowwise().sum();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return key(a) < key(b); });
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(bands));
  for (int b = 0; b < bands; ++b) {
    const Eigen::Index lo = n * b / bands;
    const Eigen::Index hi = n * (b + 1) / bands;
    out[static_cast<std::size_t>(b)].assign(order.begin() + lo, order.begin() + hi);
  }
  return out;
}

Eigen::VectorXd band_weights(const std::vector<Eigen::Index>& band, Eigen::Index n, double smoothing) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(n, smoothing / static_cast<double>(n));
  if (band.empty()) return w / w.sum();
  for (Eigen::Index i : band) w(i) += (1.0 - smoothing) / static_cast<double>(band.size());
  return w;
}

Eigen::MatrixXd initial_transition(int k) {
  if (k == 1) return Eigen::MatrixXd::Ones(1, 1);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Constant(k, k, 0.2 / (k - 1));
  Q.diagonal().setConstant(0.8);
  return Q;
}

TransitionModel initial_chain(int k) {
  return TransitionModel(initial_transition(k), Eigen::VectorXd::Constant(k, 1.0 / k));
}

std::size_t distinct_rows(const ObservationSequence& obs) {
  std::set<std::vector<double>> seen;
  for (Eigen::Index i = 0; i < obs.size(); ++i) {
    const Eigen::RowVectorXd r = obs.row(i);
    seen.emplace(r.data(), r.data() + r.size());
  }
  return seen.size();
}

void require_kind(const ObservationSequence& obs, ObservationKind kind, const std::string& family) {
  if (obs.kind() != kind) {
    throw Error(ErrorCode::IncompatibleFamily,
                family + (kind == ObservationKind::Count ? " emissions need count data"
                                                         : " emissions need real-vector data"));
  }
}

void require_distinct(const ObservationSequence& obs, int k) {
  if (distinct_rows(obs) < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::DegenerateData, "fewer distinct observed values than states");
  }
}

class Family {
 public:
  explicit Family(const ObservationSequence& obs) : obs_(obs) {}
  virtual ~Family() = default;

  virtual HmmModel initialize(int k, InitStrategy strategy, std::mt19937_64& rng, double smoothing) const = 0;

  virtual EStep e_step(const HmmModel& model) const {
    return {forward_backward(model.transition, log_emission_matrix(model.emission, obs_)), std::nullopt};
  }

  virtual EmissionModel m_step(const HmmModel& current, const EStep& e) const = 0;

  virtual double penalty(const EmissionModel&) const { return 0.0; }

 protected:
  const ObservationSequence& obs_;
};

class DiscreteFamily final : public Family {
 public:
  DiscreteFamily(const ObservationSequence& obs, int k, const EmissionOptions& opts)
      : Family(obs), regularized_(opts.family == FamilyKind::NpRegularized), penalty_(opts.penalty) {
    require_kind(obs, ObservationKind::Count, "discrete");
    require_distinct(obs, k);
    validate(penalty_);
    y_max_ = opts.y_max >= 0 ? opts.y_max : static_cast<int>(obs.max_count());
  }

  HmmModel initialize(int k, InitStrategy strategy, std::mt19937_64& rng, double smoothing) const override {
    const auto bands = quantile_bands(obs_.values(), k);
    DiscreteEmission e;
    e.probs.resize(k, y_max_ + 1);
    for (int j = 0; j < k; ++j) {
      e.probs.row(j) = weighted_counts(band_weights(bands[static_cast<std::size_t>(j)], obs_.size(), smoothing))
                           .transpose();
      if (strategy == InitStrategy::RandomPerturb) {
        for (Eigen::Index y = 0; y < e.probs.cols(); ++y) e.probs(j, y) *= uniform_factor(rng);
      }
      e.probs.row(j) /= e.probs.row(j).sum();
    }
    return {initial_chain(k), std::move(e)};
  }

  EmissionModel m_step(const HmmModel& current, const EStep& e) const override {
    DiscreteEmission out;
    out.probs.resize(current.k(), y_max_ + 1);
    for (int j = 0; j < current.k(); ++j) {
      const Eigen::VectorXd s = weighted_counts(e.post.tau.col(j));
      out.probs.row(j) =
          (regularized_ ? m_step_regularized(s, penalty_).probs : m_step_np(s)).transpose();
    }
    return out;
  }

  double penalty(const EmissionModel& emission) const override {
    if (!regularized_ || penalty_.lambda == 0.0) return 0.0;
    const auto& e = std::get<DiscreteEmission>(emission);
    double total = 0.0;
    for (int j = 0; j < e.k(); ++j) total += penalty_value(e.probs.row(j).transpose(), penalty_);
    return penalty_.lambda * total;
  }

 private:
  Eigen::VectorXd weighted_counts(const Eigen::VectorXd& weights) const {
    Eigen::VectorXd s = Eigen::VectorXd::Zero(y_max_ + 1);
    for (Eigen::Index i = 0; i < obs_.size(); ++i) {
      const auto y = obs_.count(i);
      if (y <= y_max_) s(y) += weights(i);
    }
    return s;
  }

  bool regularized_;
  PenaltySpec penalty_;
  int y_max_ = 0;
};

class NegBinFamily final : public Family {
 public:
  NegBinFamily(const ObservationSequence& obs, int k) : Family(obs), values_(obs.values().col(0)) {
    require_kind(obs, ObservationKind::Count, "negative binomial");
    require_distinct(obs, k);
  }

  HmmModel initialize(int k, InitStrategy strategy, std::mt19937_64& rng, double smoothing) const override {
    const auto bands = quantile_bands(obs_.values(), k);
    NegBinEmission e{Eigen::VectorXd(k), Eigen::VectorXd(k)};
    for (int j = 0; j < k; ++j) {
      const NegBinFit f = m_step_negbin(values_, band_weights(bands[static_cast<std::size_t>(j)], obs_.size(), smoothing));
      double r = f.r;
      double mean = r * (1.0 - f.p) / f.p;
      if (strategy == InitStrategy::RandomPerturb) {
        r = std::clamp(r * uniform_factor(rng), kNegBinMinR, kNegBinMaxR);
        mean *= uniform_factor(rng);
      }
      e.r(j) = r;
      e.p(j) = std::clamp(r / (r + mean), 1e-12, 1.0 - 1e-12);
    }
    return {initial_chain(k), std::move(e)};
  }

  EmissionModel m_step(const HmmModel& current, const EStep& e) const override {
    const auto& prev = std::get<NegBinEmission>(current.emission);
    NegBinEmission out = prev;
    for (int j = 0; j < current.k(); ++j) {
      const Eigen::VectorXd w = e.post.tau.col(j);
      const NegBinFit f = m_step_negbin(values_, w);
      // Keep the previous parameters if the capped/clipped root is not an
      // improvement, so the step stays a generalized EM step.
      if (weighted_log_lik(w, f.r, f.p) >= weighted_log_lik(w, prev.r(j), prev.p(j))) {
        out.r(j) = f.r;
        out.p(j) = f.p;
      }
    }
    return out;
  }

 private:
  double weighted_log_lik(const Eigen::VectorXd& w, double r, double p) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < obs_.size(); ++i)
      if (w(i) > 0.0) acc += w(i) * negbin_log_pmf(obs_.count(i), r, p);
    return acc;
  }

  Eigen::VectorXd values_;
};

class MixtureFamily final : public Family {
 public:
  MixtureFamily(const ObservationSequence& obs, int k, const EmissionOptions& opts)
      : Family(obs), family_(opts.component_family) {
    if (family_ == ComponentFamily::Gaussian) {
      require_kind(obs, ObservationKind::RealVector, "Gaussian mixture");
    } else {
      require_kind(obs, ObservationKind::Count, std::string(to_string(family_)) + " mixture");
    }
    require_distinct(obs, k);
    if (family_ == ComponentFamily::ZeroInflated) {
      m_ = k + 1;
    } else {
      m_ = opts.components > 0 ? opts.components : k;
      if (m_ < k) throw Error(ErrorCode::InvalidArgument, "mixture needs at least k components");
    }
    if (obs.kind() == ObservationKind::Count) y_max_ = static_cast<int>(obs.max_count());
  }

  HmmModel initialize(int k, InitStrategy strategy, std::mt19937_64& rng, double smoothing) const override {
    const bool perturb = strategy == InitStrategy::RandomPerturb;
    MixtureEmission e;
    if (family_ == ComponentFamily::ZeroInflated) {
      const auto bands = quantile_bands(obs_.values(), k);
      Eigen::VectorXd q(k);
      std::vector<Component> base;
      for (int j = 0; j < k; ++j) {
        const auto& band = bands[static_cast<std::size_t>(j)];
        double zeros = 0.0, sum = 0.0;
        for (Eigen::Index i : band) {
          zeros += obs_.count(i) == 0 ? 1.0 : 0.0;
          sum += static_cast<double>(obs_.count(i));
        }
        const double size = std::max<double>(1.0, static_cast<double>(band.size()));
        q(j) = std::clamp(zeros / size, 0.05, 0.95);
        double rate = std::max(sum / size, 1e-2);
        if (perturb) {
          q(j) = std::clamp(q(j) * uniform_factor(rng), 0.01, 0.99);
          rate *= uniform_factor(rng);
        }
        base.emplace_back(PoissonComponent{rate});
      }
      e = make_zero_inflated(q, std::move(base));
    } else {
      e.components = initial_components(perturb, rng);
      e.psi.resize(k, m_);
      for (int j = 0; j < k; ++j) {
        int owned = 0;
        for (int l = 0; l < m_; ++l) owned += (l * k / m_ == j) ? 1 : 0;
        for (int l = 0; l < m_; ++l) {
          e.psi(j, l) = smoothing / m_ + ((l * k / m_ == j) ? (1.0 - smoothing) / owned : 0.0);
          if (perturb) e.psi(j, l) *= uniform_factor(rng);
        }
        e.psi.row(j) /= e.psi.row(j).sum();
      }
    }
    return {initial_chain(k), std::move(e)};
  }

  EStep e_step(const HmmModel& model) const override {
    MixturePosterior mp = e_step_extended(model.transition, std::get<MixtureEmission>(model.emission), obs_);
    return {std::move(mp.states), std::move(mp.extended)};
  }

  EmissionModel m_step(const HmmModel& current, const EStep& e) const override {
    const auto& prev = std::get<MixtureEmission>(current.emission);
    MixtureEmission out = prev;
    out.psi = prev.zero_inflated ? m_step_zero_inflated_psi(*e.extended, e.post.tau)
                                 : m_step_psi(*e.extended, e.post.tau);
    for (int l = 0; l < out.m(); ++l) {
      const SufficientStats stats = sufficient_statistics(obs_, e.extended->xi.col(l));
      if (stats.weight <= kEmptyState) continue;  // starved component keeps its parameters
      out.components[static_cast<std::size_t>(l)] =
          m_step_expfam(prev.components[static_cast<std::size_t>(l)], stats).component;
    }
    return out;
  }

 private:
  std::vector<Component> initial_components(bool perturb, std::mt19937_64& rng) const {
    std::vector<Component> out;
    const auto bands = quantile_bands(obs_.values(), m_);
    const Eigen::Index d = obs_.dim();
    const Eigen::RowVectorXd pooled_mean = obs_.values().colwise().mean();
    const Eigen::RowVectorXd pooled_var =
        (obs_.values().rowwise() - pooled_mean).array().square().colwise().mean();
    int previous_size = 0;
    for (int l = 0; l < m_; ++l) {
      const auto& band = bands[static_cast<std::size_t>(l)];
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(d);
      for (Eigen::Index i : band) mean += obs_.row(i);
      if (!band.empty()) mean /= static_cast<double>(band.size());
      switch (family_) {
        case ComponentFamily::Poisson: {
          double rate = std::max(mean(0), 1e-2);
          if (perturb) rate *= uniform_factor(rng);
          out.emplace_back(PoissonComponent{rate});
          break;
        }
        case ComponentFamily::Binomial: {
          const int trials = std::max({y_max_, 2 * m_ - 1, 1});
          double p = mean(0) / trials;
          if (perturb) p *= uniform_factor(rng);
          out.emplace_back(BinomialComponent{trials, std::clamp(p, 1e-3, 1.0 - 1e-3)});
          break;
        }
        case ComponentFamily::Triangular: {
          const double top = y_max_ + 1.0;
          int size = m_ == 1 ? static_cast<int>(top)
                             : static_cast<int>(std::lround(std::pow(top, static_cast<double>(l) / (m_ - 1))));
          size = std::max(size, previous_size + 1);
          previous_size = size;
          out.emplace_back(TriangularComponent{size});
          break;
        }
        case ComponentFamily::Gaussian: {
          Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
          for (Eigen::Index i : band) var += (obs_.row(i) - mean).array().square().matrix();
          if (!band.empty()) var /= static_cast<double>(band.size());
          GaussianComponent g;
          g.variance = var.cwiseMax(1e-2 * pooled_var).cwiseMax(kVarianceFloor).transpose();
          g.mean = mean.transpose();
          if (perturb) {
            for (Eigen::Index c = 0; c < d; ++c)
              g.mean(c) += (uniform_factor(rng) - 1.0) * std::sqrt(g.variance(c));
          }
          out.emplace_back(std::move(g));
          break;
        }
        case ComponentFamily::ZeroInflated:
          break;
      }
    }
    return out;
  }

  ComponentFamily family_;
  int m_ = 0;
  int y_max_ = 0;
};

class KernelFamily final : public Family {
 public:
  KernelFamily(const ObservationSequence& obs, int k, const EmissionOptions& opts, const KernelEmission* fixed)
      : Family(obs), inner_iters_(opts.inner_iters) {
    require_kind(obs, ObservationKind::RealVector, "kernel");
    if (inner_iters_ < 1) throw Error(ErrorCode::InvalidArgument, "inner iterations must be >= 1");
    if (fixed) {
      kernel_ = fixed->kernel;
      bandwidth_ = fixed->bandwidth;
      anchors_ = fixed->anchors;
    } else {
      kernel_ = opts.kernel;
      if (opts.anchor_stride < 1) throw Error(ErrorCode::InvalidArgument, "anchor stride must be >= 1");
      const Eigen::Index count = (obs.size() + opts.anchor_stride - 1) / opts.anchor_stride;
      anchors_.resize(count, obs.dim());
      for (Eigen::Index a = 0; a < count; ++a) anchors_.row(a) = obs.row(a * opts.anchor_stride);
      if (opts.bandwidth > 0.0) {
        bandwidth_ = opts.bandwidth;
      } else {
        bandwidth_ = bandwidth_cv(obs, opts.bandwidth_grid.empty() ? default_bandwidth_grid(obs) : opts.bandwidth_grid,
                                  kernel_);
      }
      stride_one_ = opts.anchor_stride == 1;
    }
    if (anchors_.rows() < k) throw Error(ErrorCode::DegenerateData, "fewer kernel anchors than states");
    R_ = stride_one_ ? kernel_matrix(obs, kernel_, bandwidth_)
                     : kernel_matrix(obs.values(), anchors_, kernel_, bandwidth_);
  }

  double bandwidth() const { return bandwidth_; }

  HmmModel initialize(int k, InitStrategy strategy, std::mt19937_64& rng, double smoothing) const override {
    const auto bands = quantile_bands(anchors_, k);
    KernelEmission e;
    e.anchors = anchors_;
    e.bandwidth = bandwidth_;
    e.kernel = kernel_;
    e.weights.resize(anchors_.rows(), k);
    for (int j = 0; j < k; ++j) {
      e.weights.col(j) = band_weights(bands[static_cast<std::size_t>(j)], anchors_.rows(), smoothing);
      if (strategy == InitStrategy::RandomPerturb) {
        for (Eigen::Index u = 0; u < e.weights.rows(); ++u) e.weights(u, j) *= uniform_factor(rng);
      }
      e.weights.col(j) /= e.weights.col(j).sum();
    }
    return {initial_chain(k), std::move(e)};
  }

  EStep e_step(const HmmModel& model) const override {
    const auto& e = std::get<KernelEmission>(model.emission);
    return {forward_backward(model.transition, kernel_log_emission(R_, e.weights, bandwidth_, obs_.dim())),
            std::nullopt};
  }

  EmissionModel m_step(const HmmModel& current, const EStep& e) const override {
    KernelEmission out = std::get<KernelEmission>(current.emission);
    out.weights = gem_emission_m_step(out.weights, e.post.tau, R_, inner_iters_);
    return out;
  }

 private:
  int inner_iters_;
  KernelId kernel_ = KernelId::GaussianSpherical;
  double bandwidth_ = 1.0;
  Eigen::MatrixXd anchors_;
  bool stride_one_ = false;
  Eigen::MatrixXd R_;
};

std::unique_ptr<Family> make_family(const ObservationSequence& obs, int k, const EmissionOptions& opts,
                                    const HmmModel* initial = nullptr) {
  switch (opts.family) {
    case FamilyKind::Np:
    case FamilyKind::NpRegularized:
      return std::make_unique<DiscreteFamily>(obs, k, opts);
    case FamilyKind::NegBin:
      return std::make_unique<NegBinFamily>(obs, k);
    case FamilyKind::Mixture:
      return std::make_unique<MixtureFamily>(obs, k, opts);
    case FamilyKind::Kernel: {
      const KernelEmission* fixed = initial ? std::get_if<KernelEmission>(&initial->emission) : nullptr;
      return std::make_unique<KernelFamily>(obs, k, opts, fixed);
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown emission family");
}

FitReport run_single(const Family& family, HmmModel model, const FitOptions& opts) {
  std::vector<double> trace;
  double log_lik = 0.0;
  bool converged = false;
  int iterations = 0;
  for (;;) {
    EStep e = family.e_step(model);
    const double objective = e.post.log_lik - family.penalty(model.emission);
    if (!std::isfinite(objective)) throw Error(ErrorCode::FitFailed, "objective is not finite");
    log_lik = e.post.log_lik;
    if (!trace.empty()) {
      const double prev = trace.back();
      const double rel = prev != 0.0 ? (objective - prev) / std::abs(prev) : objective - prev;
      trace.push_back(objective);
      if (rel < opts.tol) {
        converged = true;
        break;
      }
    } else {
      trace.push_back(objective);
    }
    if (iterations == opts.max_iter) break;
    TransitionModel transition = m_step_transition(e.post);
    EmissionModel emission = family.m_step(model, e);
    model = HmmModel{std::move(transition), std::move(emission)};
    ++iterations;
  }
  return FitReport{std::move(model), std::move(trace), converged, iterations, 0, log_lik, {}};
}

void check_fit_inputs(const ObservationSequence& obs, int k, const FitOptions& opts) {
  validate(opts);
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (obs.size() < 3) throw Error(ErrorCode::SequenceTooShort, "fitting needs n >= 3");
}

}  // namespace

const char* to_string(FamilyKind family) {
  switch (family) {
    case FamilyKind::NegBin: return "nb";
    case FamilyKind::Np: return "np";
    case FamilyKind::NpRegularized: return "np-reg";
    case FamilyKind::Mixture: return "mixture";
    case FamilyKind::Kernel: return "kernel";
  }
  return "unknown";
}

const char* to_string(ComponentFamily family) {
  switch (family) {
    case ComponentFamily::Poisson: return "poisson";
    case ComponentFamily::Gaussian: return "gaussian";
    case ComponentFamily::Binomial: return "binomial";
    case ComponentFamily::Triangular: return "triangular";
    case ComponentFamily::ZeroInflated: return "zero-inflated";
  }
  return "unknown";
}

FamilyKind parse_family(const std::string& name) {
  for (auto f : {FamilyKind::NegBin, FamilyKind::Np, FamilyKind::NpRegularized, FamilyKind::Mixture,
                 FamilyKind::Kernel})
    if (name == to_string(f)) return f;
  throw Error(ErrorCode::InvalidArgument, "unknown emission family '" + name + "'");
}

ComponentFamily parse_component_family(const std::string& name) {
  for (auto f : {ComponentFamily::Poisson, ComponentFamily::Gaussian, ComponentFamily::Binomial,
                 ComponentFamily::Triangular, ComponentFamily::ZeroInflated})
    if (name == to_string(f)) return f;
  throw Error(ErrorCode::InvalidArgument, "unknown component family '" + name + "'");
}

void validate(const FitOptions& opts) {
  if (opts.max_iter < 1) throw Error(ErrorCode::InvalidArgument, "max-iter must be >= 1");
  if (!(opts.tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be > 0");
  if (opts.n_starts < 1) throw Error(ErrorCode::InvalidArgument, "starts must be >= 1");
  if (!(opts.init_smoothing >= 0.0 && opts.init_smoothing < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "init smoothing must lie in [0,1)");
  }
  validate(opts.emission.penalty);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

TransitionModel m_step_transition(const PosteriorSet& post) {
  const int k = post.k();
  const Eigen::Index n = post.size();
  if (n < 2) throw Error(ErrorCode::EmptyState, "no transitions in a sequence of length 1");
  const Eigen::RowVectorXd occupancy = post.tau.topRows(n - 1).colwise().sum();
  const Eigen::MatrixXd counts = post.expected_transitions();
  Eigen::MatrixXd Q(k, k);
  for (int j = 0; j < k; ++j) {
    if (occupancy(j) < kEmptyState) {
      throw Error(ErrorCode::EmptyState, "state " + std::to_string(j + 1) + " has no posterior mass");
    }
    Q.row(j) = counts.row(j) / occupancy(j);
    Q.row(j) /= Q.row(j).sum();
  }
  Eigen::VectorXd init = post.tau.row(0).transpose();
  init /= init.sum();
  return TransitionModel(std::move(Q), std::move(init));
}

HmmModel initialize(const ObservationSequence& obs, int k, InitStrategy strategy, std::uint64_t seed,
                    const FitOptions& opts) {
  validate(opts);
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  const auto family = make_family(obs, k, opts.emission);
  std::mt19937_64 rng(seed);
  return family->initialize(k, strategy, rng, opts.init_smoothing);
}

FitReport run_em(const ObservationSequence& obs, const HmmModel& initial, const FitOptions& opts) {
  check_fit_inputs(obs, initial.k(), opts);
  validate(initial);
  const auto family = make_family(obs, initial.k(), opts.emission, &initial);
  return run_single(*family, initial, opts);
}

FitReport fit(const ObservationSequence& obs, int k, const FitOptions& opts) {
  check_fit_inputs(obs, k, opts);
  const auto family = make_family(obs, k, opts.emission);

  const auto starts = static_cast<std::size_t>(opts.n_starts);
  std::vector<std::optional<FitReport>> runs(starts);
  std::vector<std::string> errors(starts);
  parallel_for(
      starts,
      [&](std::size_t s) {
        try {
          std::mt19937_64 rng(derive_seed(opts.seed, s));
          const InitStrategy strategy = s == 0 ? InitStrategy::Quantile : InitStrategy::RandomPerturb;
          runs[s] = run_single(*family, family->initialize(k, strategy, rng, opts.init_smoothing), opts);
        } catch (const Error& e) {
          errors[s] = e.what();
        }
      },
      opts.threads);

  std::optional<std::size_t> best;
  for (std::size_t s = 0; s < starts; ++s) {
    if (!runs[s]) continue;
    if (!best || runs[s]->objective_trace.back() > runs[*best]->objective_trace.back()) best = s;
  }
  if (!best) {
    std::string detail;
    for (const auto& e : errors) detail += (detail.empty() ? "" : "; ") + e;
    throw Error(ErrorCode::FitFailed, "every start failed: " + detail);
  }
  FitReport out = std::move(*runs[*best]);
  out.best_start = static_cast<int>(*best);
  out.start_errors = std::move(errors);
  return out;
}

double total_variation(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "distributions differ in support size");
  return 0.5 * (a - b).cwiseAbs().sum();
}

namespace {

// Exhaustive scan over permutations of {0..k-1}; `score` is maximized and the
// lexicographically first maximizer wins.
template <typename Score>
std::vector<int> best_permutation(int k, Score score) {
  if (k > kMaxAlignStates) throw Error(ErrorCode::KTooLarge, "label alignment supports k <= 10");
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_score = score(perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double s = score(perm);
    if (s > best_score) {
      best_score = s;
      best = perm;
    }
  }
  return best;
}

}  // namespace

std::vector<int> align_labels(const StatePath& reference, const StatePath& candidate, int k) {
  if (reference.size() != candidate.size()) throw Error(ErrorCode::LengthMismatch, "paths differ in length");
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > kMaxAlignStates) throw Error(ErrorCode::KTooLarge, "label alignment supports k <= 10");
  Eigen::MatrixXd agree = Eigen::MatrixXd::Zero(k, k);  // (candidate, reference) counts
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i] < 0 || reference[i] >= k || candidate[i] < 0 || candidate[i] >= k) {
      throw Error(ErrorCode::InvalidArgument, "state label outside 0..k-1");
    }
    agree(candidate[i], reference[i]) += 1.0;
  }
  return best_permutation(k, [&](const std::vector<int>& perm) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) s += agree(c, perm[static_cast<std::size_t>(c)]);
    return s;
  });
}

std::vector<int> align_labels(const Eigen::MatrixXd& reference_rows, const Eigen::MatrixXd& candidate_rows) {
  if (reference_rows.rows() != candidate_rows.rows() || reference_rows.cols() != candidate_rows.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "emission tables differ in shape");
  }
  const auto k = static_cast<int>(reference_rows.rows());
  if (k > kMaxAlignStates) throw Error(ErrorCode::KTooLarge, "label alignment supports k <= 10");
  Eigen::MatrixXd cost(k, k);
  for (int c = 0; c < k; ++c)
    for (int r = 0; r < k; ++r) cost(c, r) = total_variation(candidate_rows.row(c), reference_rows.row(r));
  return best_permutation(k, [&](const std::vector<int>& perm) {
    double s = 0.0;
    for (int c = 0; c < k; ++c) s -= cost(c, perm[static_cast<std::size_t>(c)]);
    return s;
  });
}

}  // namespace nphmm
