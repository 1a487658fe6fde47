#include <cmath>
#include <random>

#include <boost/math/distributions/negative_binomial.hpp>
#include <doctest.h>

#include "nphmm/emission_discrete.hpp"
#include "nphmm/error.hpp"
#include "oracles.hpp"

using namespace nphmm;

namespace {

double penalized_objective(const Eigen::VectorXd& S, const Eigen::VectorXd& f, const PenaltySpec& pen) {
  double v = 0.0;
  for (Eigen::Index y = 0; y < S.size(); ++y)
    if (S(y) > 0) v += S(y) * std::log(f(y));
  return v - pen.lambda * penalty_value(f, pen);
}

ErrorCode code_of(const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("free M-step") {
  const Eigen::VectorXd f = m_step_np(Eigen::Vector2d(2.0, 1.0));
  CHECK(f(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(f(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  Eigen::VectorXd S(9);
  for (Eigen::Index y = 0; y < 9; ++y) S(y) = u(rng);
  const Eigen::VectorXd g = m_step_np(S);
  const double N = S.sum();
  for (Eigen::Index y = 0; y < 9; ++y) CHECK(std::abs(g(y) - S(y) / N) < 1e-15);
  CHECK(std::abs(g.sum() - 1.0) < 1e-14);

  CHECK(code_of([] { m_step_np(Eigen::Vector3d::Zero()); }) == ErrorCode::ZeroWeight);
  CHECK(code_of([] { m_step_regularized(Eigen::Vector3d::Zero(), PenaltySpec{}); }) == ErrorCode::ZeroWeight);
}

TEST_CASE("regularized M-step closed form") {
  const RegularizedEstimate est = m_step_regularized(Eigen::Vector2d(2.0, 1.0), PenaltySpec{1.0, 2.0});
  CHECK(std::abs(est.normalizer - (1.0 + std::sqrt(3.0))) < 1e-10);
  CHECK(std::abs(est.probs(0) - 2.0 / (1.0 + std::sqrt(3.0))) < 1e-10);
  CHECK(std::abs(est.probs(1) - 1.0 / (2.0 + std::sqrt(3.0))) < 1e-10);
  CHECK(std::abs(est.probs.sum() - 1.0) < 1e-10);
}

TEST_CASE("regularized M-step with lambda 0 is the free M-step, bitwise") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd S(12);
    for (Eigen::Index y = 0; y < 12; ++y) S(y) = trial % 3 == 0 && y % 4 == 0 ? 0.0 : u(rng);
    const Eigen::VectorXd a = m_step_np(S);
    const Eigen::VectorXd b = m_step_regularized(S, PenaltySpec{0.0, 2.0}).probs;
    CHECK((a.array() == b.array()).all());
  }
}

TEST_CASE("regularized M-step matches an independent root search and maximizes the objective") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::uniform_real_distribution<double> lam(0.05, 20.0);
  std::uniform_real_distribution<double> alp(0.5, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd S(8);
    for (Eigen::Index y = 0; y < 8; ++y) S(y) = u(rng);
    if (trial % 4 == 0) S(0) = 0.0;  // root may be negative here
    if (trial % 5 == 0) S(3) = 0.0;
    const PenaltySpec pen{lam(rng), alp(rng)};
    const RegularizedEstimate est = m_step_regularized(S, pen);
    CHECK(std::abs(est.probs.sum() - 1.0) < 1e-10);
    CHECK((est.probs.array() >= 0.0).all());

    // The smallest penalty weight among observed values bounds the root from below.
    double m_min = std::numeric_limits<double>::infinity();
    for (Eigen::Index y = 0; y < 8; ++y)
      if (S(y) > 0) m_min = std::min(m_min, pen.weight(static_cast<double>(y)));
    const auto excess = [&](double c) {
      double total = 0.0;
      for (Eigen::Index y = 0; y < 8; ++y)
        if (S(y) > 0) total += S(y) / (pen.lambda * pen.weight(static_cast<double>(y)) + c);
      return total - 1.0;
    };
    const double c = oracle::bisect_decreasing(excess, -pen.lambda * m_min, S.sum() + 1.0);
    CHECK(std::abs(est.normalizer - c) < 1e-9 * std::max(1.0, std::abs(c)));

    // No feasible perturbation inside the support improves the penalized objective.
    const double best = penalized_objective(S, est.probs, pen);
    std::uniform_int_distribution<int> pick(0, 7);
    for (int probe = 0; probe < 20; ++probe) {
      const int a = pick(rng), b = pick(rng);
      if (a == b || S(a) == 0.0 || S(b) == 0.0) continue;
      Eigen::VectorXd g = est.probs;
      const double step = 1e-3 * std::min(g(a), g(b));
      g(a) += step;
      g(b) -= step;
      CHECK(penalized_objective(S, g, pen) <= best + 1e-12);
    }
  }
}

TEST_CASE("a heavy penalty moves mass to zero") {
  const Eigen::VectorXd f = m_step_regularized(Eigen::Vector3d(1.0, 5.0, 5.0), PenaltySpec{1e8, 2.0}).probs;
  CHECK(f(0) > 0.999999);
}

TEST_CASE("penalty value") {
  const PenaltySpec pen{1.0, 2.0};
  CHECK(penalty_value(Eigen::Vector3d(1.0, 0.0, 0.0), pen) == 0.0);
  CHECK(penalty_value(Eigen::Vector3d(1.0, 0.0, 0.0), PenaltySpec{1.0, 0.7}) == 0.0);
  CHECK(penalty_value(Eigen::Vector2d(0.5, 0.5), pen) == doctest::Approx(0.5));
  CHECK(penalty_value(Eigen::Vector4d::Constant(0.25), pen) == doctest::Approx(3.5).epsilon(1e-14));

  std::mt19937_64 rng(4);
  const Eigen::VectorXd f = oracle::random_simplex(10, rng), g = oracle::random_simplex(10, rng);
  const double a = 0.3;
  CHECK(std::abs(penalty_value(a * f + (1 - a) * g, pen) - (a * penalty_value(f, pen) + (1 - a) * penalty_value(g, pen))) <
        1e-12);
}

TEST_CASE("penalty and table validation") {
  CHECK_THROWS_AS(validate(PenaltySpec{-1.0, 2.0}), Error);
  CHECK_THROWS_AS(validate(PenaltySpec{1.0, 0.0}), Error);
  CHECK_THROWS_AS(validate(DiscreteEmission{(Eigen::MatrixXd(1, 2) << 0.6, 0.6).finished()}), Error);
  CHECK_NOTHROW(validate(DiscreteEmission{(Eigen::MatrixXd(1, 2) << 0.4, 0.6).finished()}));
}

TEST_CASE("negative binomial pmf") {
  for (double r : {0.3, 1.0, 4.5}) {
    for (double p : {0.1, 0.5, 0.9}) {
      const boost::math::negative_binomial_distribution<> ref(r, p);
      for (int y : {0, 1, 5, 30}) CHECK(std::abs(negbin_log_pmf(y, r, p) - std::log(boost::math::pdf(ref, y))) < 1e-10);
    }
  }
}

TEST_CASE("negative binomial M-step") {
  std::mt19937_64 rng(5);
  const double r = 5.0, mean = 10.0;
  std::negative_binomial_distribution<int> draw(static_cast<int>(r), r / (r + mean));
  Eigen::VectorXd y(10000);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = draw(rng);
  const NegBinFit fit = m_step_negbin(y, Eigen::VectorXd::Ones(y.size()));
  const double fitted_mean = fit.r * (1 - fit.p) / fit.p;
  CHECK(std::abs(fitted_mean - y.mean()) < 0.02 * y.mean());
  CHECK(std::abs(fit.r - r) < 1.0);
  CHECK_FALSE(fit.underdispersed);

  const NegBinFit flat = m_step_negbin(Eigen::VectorXd::Constant(50, 3.0), Eigen::VectorXd::Ones(50));
  CHECK(flat.underdispersed);
  CHECK(flat.r == kNegBinMaxR);

  CHECK_THROWS_AS(m_step_negbin(y, Eigen::VectorXd::Zero(y.size())), Error);
}

TEST_CASE("negative binomial M-step beats a grid scan of the profile likelihood") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::negative_binomial_distribution<int> draw(1 + trial % 4, 0.2 + 0.05 * trial);
    Eigen::VectorXd y(300), w(300);
    for (Eigen::Index i = 0; i < 300; ++i) {
      y(i) = draw(rng);
      w(i) = u(rng);
    }
    const NegBinFit fit = m_step_negbin(y, w);
    if (fit.underdispersed) continue;
    const double at_fit = negbin_profile_log_lik(y, w, fit.r);
    for (int g = 0; g < 1000; ++g) {
      const double r = std::exp(std::log(kNegBinMinR) + (std::log(kNegBinMaxR) - std::log(kNegBinMinR)) * (g + 0.5) / 1000);
      CHECK(at_fit >= negbin_profile_log_lik(y, w, r) - 1e-9 * std::abs(at_fit));
    }
  }
}
