#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <doctest.h>

#include "nphmm/em.hpp"
#include "nphmm/error.hpp"
#include "nphmm/simeval.hpp"
#include "oracles.hpp"

using namespace nphmm;

namespace {

ErrorCode code_of(const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

PosteriorSet one_hot(const StatePath& path, int k) {
  PosteriorSet post;
  const auto n = static_cast<Eigen::Index>(path.size());
  post.tau = Eigen::MatrixXd::Zero(n, k);
  post.pair_joint = RowMajorMatrix::Zero(n - 1, k * k);
  for (Eigen::Index i = 0; i < n; ++i) post.tau(i, path[static_cast<std::size_t>(i)]) = 1.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i)
    post.pair_joint(i, path[static_cast<std::size_t>(i)] * k + path[static_cast<std::size_t>(i + 1)]) = 1.0;
  return post;
}

HmmModel two_state_counts() {
  Eigen::MatrixXd probs(2, 6);
  probs << 0.5, 0.3, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.2, 0.3, 0.4;
  return {TransitionModel::stationary((Eigen::MatrixXd(2, 2) << 0.9, 0.1, 0.2, 0.8).finished()),
          DiscreteEmission{probs}};
}

void check_ascent(const FitReport& r) {
  for (std::size_t t = 1; t < r.objective_trace.size(); ++t)
    CHECK(r.objective_trace[t] >= r.objective_trace[t - 1] - 1e-8);
  CHECK(r.objective_trace.size() == static_cast<std::size_t>(r.iterations) + 1);
}

FitOptions options(FamilyKind family, int starts = 3, std::uint64_t seed = 1) {
  FitOptions o;
  o.emission.family = family;
  o.n_starts = starts;
  o.seed = seed;
  o.max_iter = 200;
  return o;
}

}  // namespace

TEST_CASE("family names") {
  for (auto f : {FamilyKind::NegBin, FamilyKind::Np, FamilyKind::NpRegularized, FamilyKind::Mixture, FamilyKind::Kernel})
    CHECK(parse_family(to_string(f)) == f);
  for (auto f : {ComponentFamily::Poisson, ComponentFamily::Gaussian, ComponentFamily::Binomial,
                 ComponentFamily::Triangular, ComponentFamily::ZeroInflated})
    CHECK(parse_component_family(to_string(f)) == f);
  CHECK_THROWS_AS(parse_family("gamma"), Error);
}

TEST_CASE("fit options are validated") {
  FitOptions o;
  o.max_iter = 0;
  CHECK_THROWS_AS(validate(o), Error);
  o = FitOptions{};
  o.tol = 0.0;
  CHECK_THROWS_AS(validate(o), Error);
  o = FitOptions{};
  o.n_starts = 0;
  CHECK_THROWS_AS(validate(o), Error);
  o = FitOptions{};
  o.emission.penalty.lambda = -1.0;
  CHECK_THROWS_AS(validate(o), Error);
}

TEST_CASE("transition M-step") {
  const TransitionModel t = m_step_transition(one_hot({0, 0, 1, 1}, 2));
  CHECK(t.Q()(0, 0) == doctest::Approx(0.5));
  CHECK(t.Q()(0, 1) == doctest::Approx(0.5));
  CHECK(t.Q()(1, 0) == 0.0);
  CHECK(t.Q()(1, 1) == doctest::Approx(1.0));
  CHECK(t.init()(0) == 1.0);

  PosteriorSet uniform;
  uniform.tau = Eigen::MatrixXd::Constant(5, 3, 1.0 / 3.0);
  uniform.pair_joint = RowMajorMatrix::Constant(4, 9, 1.0 / 9.0);
  const TransitionModel u = m_step_transition(uniform);
  CHECK((u.Q().array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const TransitionModel g(oracle::random_stochastic(3, 3, rng, 0.05), oracle::random_simplex(3, rng, 0.05));
    Eigen::MatrixXd lf = oracle::random_stochastic(12, 3, rng, 0.05).array().log();
    const TransitionModel next = m_step_transition(forward_backward(g, lf));
    CHECK((next.Q().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK((next.Q().array() >= 0.0).all());
  }

  CHECK(code_of([] { m_step_transition(one_hot({0, 0, 0, 1}, 2)); }) == ErrorCode::EmptyState);
}

TEST_CASE("single state fit is the empirical distribution") {
  const auto obs = ObservationSequence::counts({0, 1, 1, 3, 3, 3, 2, 0});
  const FitReport r = fit(obs, 1, options(FamilyKind::Np));
  const auto& e = std::get<DiscreteEmission>(r.model.emission);
  const Eigen::Vector4d expected(2.0 / 8, 2.0 / 8, 1.0 / 8, 3.0 / 8);
  CHECK((e.probs.row(0).transpose() - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(r.model.transition.Q()(0, 0) == 1.0);

  for (auto strategy : {InitStrategy::Quantile, InitStrategy::RandomPerturb}) {
    FitOptions o = options(FamilyKind::Np);
    o.init_smoothing = 0.0;
    const HmmModel m = initialize(obs, 1, strategy, 5, o);
    if (strategy == InitStrategy::Quantile)
      CHECK((std::get<DiscreteEmission>(m.emission).probs.row(0).transpose() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("quantile initialization splits sorted values into bands") {
  std::vector<std::int64_t> ys(100);
  std::iota(ys.begin(), ys.end(), 0);
  std::shuffle(ys.begin(), ys.end(), std::mt19937_64(4));
  const auto obs = ObservationSequence::counts(ys);
  FitOptions o = options(FamilyKind::Np);
  o.init_smoothing = 0.0;
  const HmmModel m = initialize(obs, 2, InitStrategy::Quantile, 0, o);
  const auto& e = std::get<DiscreteEmission>(m.emission);
  for (int y = 0; y < 100; ++y) {
    CHECK(e.probs(0, y) == doctest::Approx(y < 50 ? 0.02 : 0.0));
    CHECK(e.probs(1, y) == doctest::Approx(y < 50 ? 0.0 : 0.02));
  }
  CHECK(m.transition.Q()(0, 0) == doctest::Approx(0.8));
  CHECK(m.transition.Q()(0, 1) == doctest::Approx(0.2));

  FitOptions smooth = options(FamilyKind::Np);
  const HmmModel s = initialize(obs, 2, InitStrategy::Quantile, 0, smooth);
  CHECK((std::get<DiscreteEmission>(s.emission).probs.array() > 0.0).all());

  const HmmModel a = initialize(obs, 2, InitStrategy::RandomPerturb, 9, smooth);
  const HmmModel b = initialize(obs, 2, InitStrategy::RandomPerturb, 9, smooth);
  const HmmModel c = initialize(obs, 2, InitStrategy::RandomPerturb, 10, smooth);
  CHECK(std::get<DiscreteEmission>(a.emission).probs == std::get<DiscreteEmission>(b.emission).probs);
  CHECK(std::get<DiscreteEmission>(a.emission).probs != std::get<DiscreteEmission>(c.emission).probs);
}

TEST_CASE("incompatible and degenerate data") {
  const auto real = ObservationSequence::real(Eigen::MatrixXd::Random(20, 1));
  CHECK(code_of([&] { fit(real, 2, options(FamilyKind::Np)); }) == ErrorCode::IncompatibleFamily);
  CHECK(code_of([&] { fit(real, 2, options(FamilyKind::NegBin)); }) == ErrorCode::IncompatibleFamily);
  const auto counts = ObservationSequence::counts({0, 1, 2, 1, 0, 2});
  CHECK(code_of([&] { fit(counts, 2, options(FamilyKind::Kernel)); }) == ErrorCode::IncompatibleFamily);
  const auto flat = ObservationSequence::counts({4, 4, 4, 4, 4});
  CHECK(code_of([&] { fit(flat, 2, options(FamilyKind::Np)); }) == ErrorCode::DegenerateData);
  CHECK(code_of([&] { fit(flat, 2, options(FamilyKind::NegBin)); }) == ErrorCode::DegenerateData);
  CHECK(code_of([&] { fit(ObservationSequence::counts({1, 2}), 1, options(FamilyKind::Np)); }) ==
        ErrorCode::SequenceTooShort);
}

TEST_CASE("every family ascends") {
  const LabeledSequence counts = simulate_hmm(two_state_counts(), 300, 21);
  for (FamilyKind f : {FamilyKind::Np, FamilyKind::NpRegularized, FamilyKind::NegBin}) {
    const FitReport r = fit(counts.obs, 2, options(f));
    check_ascent(r);
    CHECK(r.converged);
  }
  for (ComponentFamily c : {ComponentFamily::Poisson, ComponentFamily::Binomial, ComponentFamily::Triangular,
                            ComponentFamily::ZeroInflated}) {
    FitOptions o = options(FamilyKind::Mixture);
    o.emission.component_family = c;
    o.emission.components = c == ComponentFamily::ZeroInflated ? 0 : 4;
    const FitReport r = fit(counts.obs, 2, o);
    check_ascent(r);
    CHECK(std::get<MixtureEmission>(r.model.emission).m() == (c == ComponentFamily::ZeroInflated ? 3 : 4));
  }

  MixtureEmission gauss;
  gauss.psi = Eigen::MatrixXd::Identity(2, 2);
  gauss.components = {GaussianComponent{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)},
                      GaussianComponent{Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Ones(1)}};
  const HmmModel real_model{TransitionModel::stationary((Eigen::MatrixXd(2, 2) << 0.9, 0.1, 0.1, 0.9).finished()),
                            gauss};
  const LabeledSequence real = simulate_hmm(real_model, 200, 22);
  FitOptions g = options(FamilyKind::Mixture);
  g.emission.component_family = ComponentFamily::Gaussian;
  g.emission.components = 3;
  check_ascent(fit(real.obs, 2, g));
  FitOptions k = options(FamilyKind::Kernel, 2);
  const FitReport kr = fit(real.obs, 2, k);
  check_ascent(kr);
  const auto& ke = std::get<KernelEmission>(kr.model.emission);
  CHECK(ke.anchors.rows() == 200);
  CHECK((ke.weights.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);

  k.emission.anchor_stride = 4;
  k.emission.bandwidth = 1.5;
  const FitReport strided = fit(real.obs, 2, k);
  check_ascent(strided);
  CHECK(std::get<KernelEmission>(strided.model.emission).anchors.rows() == 50);
  CHECK(std::get<KernelEmission>(strided.model.emission).bandwidth == 1.5);
}

TEST_CASE("lambda 0 regularization reproduces the free fit") {
  const LabeledSequence data = simulate_hmm(two_state_counts(), 300, 5);
  FitOptions reg = options(FamilyKind::NpRegularized);
  reg.emission.penalty.lambda = 0.0;
  const FitReport a = fit(data.obs, 2, options(FamilyKind::Np));
  const FitReport b = fit(data.obs, 2, reg);
  CHECK(std::get<DiscreteEmission>(a.model.emission).probs == std::get<DiscreteEmission>(b.model.emission).probs);
  CHECK(a.model.transition.Q() == b.model.transition.Q());
  CHECK(a.objective_trace == b.objective_trace);
}

TEST_CASE("penalized objective is the traced quantity") {
  const LabeledSequence data = simulate_hmm(two_state_counts(), 300, 6);
  FitOptions reg = options(FamilyKind::NpRegularized);
  reg.emission.penalty.lambda = 4.0;
  const FitReport r = fit(data.obs, 2, reg);
  const auto& e = std::get<DiscreteEmission>(r.model.emission);
  double pen = 0.0;
  for (int j = 0; j < 2; ++j) pen += penalty_value(e.probs.row(j).transpose(), reg.emission.penalty);
  // The trace ends at the objective of the model before the final M-step,
  // so compare against a fresh evaluation with slack for the last step.
  const double objective = log_likelihood(r.model, data.obs) - 4.0 * pen;
  CHECK(objective >= r.objective_trace.back() - 1e-8);
  CHECK(objective - r.objective_trace.back() < 1e-4 * std::abs(objective));
}

TEST_CASE("fits are reproducible and independent of the worker count") {
  const LabeledSequence data = simulate_hmm(two_state_counts(), 400, 7);
  FitOptions o = options(FamilyKind::NegBin, 4, 99);
  o.threads = 1;
  const FitReport a = fit(data.obs, 2, o);
  o.threads = 3;
  const FitReport b = fit(data.obs, 2, o);
  CHECK(a.objective_trace == b.objective_trace);
  CHECK(a.best_start == b.best_start);
  CHECK(std::get<NegBinEmission>(a.model.emission).r == std::get<NegBinEmission>(b.model.emission).r);
}

TEST_CASE("disjoint supports recover the transition matrix") {
  Eigen::MatrixXd probs(2, 6);
  probs << 0.5, 0.3, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, 0.3, 0.4;
  const Eigen::MatrixXd Q = (Eigen::MatrixXd(2, 2) << 0.85, 0.15, 0.25, 0.75).finished();
  const HmmModel truth{TransitionModel::stationary(Q), DiscreteEmission{probs}};
  const LabeledSequence data = simulate_hmm(truth, 5000, 8);
  const FitReport r = fit(data.obs, 2, options(FamilyKind::Np, 3, 8));
  const auto perm = align_labels(probs, std::get<DiscreteEmission>(r.model.emission).probs);
  const HmmModel aligned = permute_states(r.model, perm);
  CHECK((aligned.transition.Q() - Q).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("all starts failing is reported") {
  Eigen::MatrixXd spread(8, 1);
  for (int i = 0; i < 8; ++i) spread(i, 0) = 10.0 * i;
  FitOptions o = options(FamilyKind::Kernel, 2);
  o.emission.kernel = KernelId::EpanechnikovProduct;
  o.emission.bandwidth = 0.1;
  o.emission.anchor_stride = 2;
  try {
    fit(ObservationSequence::real(spread), 2, o);
    FAIL("positions off the anchors have zero density");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FitFailed);
  }
}

TEST_CASE("label alignment") {
  const StatePath ref{0, 0, 1, 1, 2, 2};
  CHECK(align_labels(ref, ref, 3) == std::vector<int>{0, 1, 2});
  const StatePath swapped{1, 1, 0, 0, 2, 2};
  CHECK(align_labels(ref, swapped, 3) == std::vector<int>{1, 0, 2});

  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int trial = 0; trial < 30; ++trial) {
    StatePath a(40), b(40);
    for (int i = 0; i < 40; ++i) {
      a[static_cast<std::size_t>(i)] = lab(rng);
      b[static_cast<std::size_t>(i)] = lab(rng);
    }
    const auto perm = align_labels(a, b, 3);
    CHECK(std::set<int>(perm.begin(), perm.end()).size() == 3);
    auto agreement = [&](const std::vector<int>& p) {
      int hits = 0;
      for (int i = 0; i < 40; ++i) hits += p[static_cast<std::size_t>(b[static_cast<std::size_t>(i)])] == a[static_cast<std::size_t>(i)];
      return hits;
    };
    std::vector<int> p{0, 1, 2};
    int best = 0;
    do best = std::max(best, agreement(p));
    while (std::next_permutation(p.begin(), p.end()));
    CHECK(agreement(perm) == best);
  }

  StatePath big(12);
  std::iota(big.begin(), big.end(), 0);
  CHECK(code_of([&] { align_labels(big, big, 11); }) == ErrorCode::KTooLarge);

  Eigen::MatrixXd rows(3, 4);
  rows << 0.7, 0.1, 0.1, 0.1, 0.1, 0.7, 0.1, 0.1, 0.1, 0.1, 0.1, 0.7;
  Eigen::MatrixXd shuffled(3, 4);
  shuffled << rows.row(2), rows.row(0), rows.row(1);
  CHECK(align_labels(rows, shuffled) == std::vector<int>{2, 0, 1});
  CHECK(total_variation(rows.row(0), rows.row(1)) == doctest::Approx(0.6));
}

TEST_CASE("derived seeds are distinct and stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 1000; ++i) seen.insert(derive_seed(42, i));
  CHECK(seen.size() == 1000);
  CHECK(derive_seed(42, 3) == derive_seed(42, 3));
  CHECK(derive_seed(42, 3) != derive_seed(43, 3));
}
