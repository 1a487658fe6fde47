#include <cmath>
#include <random>

#include <doctest.h>

#include "nphmm/emission_kernel.hpp"
#include "nphmm/error.hpp"
#include "oracles.hpp"

using namespace nphmm;

namespace {

constexpr double kPi = 3.14159265358979323846;

Eigen::MatrixXd random_points(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < d; ++c) x(i, c) = g(rng) + (i % 2 == 0 ? 3.0 : 0.0);
  return x;
}

double gaussian_1d(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi); }

// Leave-one-out criterion of a 1-D Gaussian kernel estimate, summed directly.
double loo_direct(const std::vector<double>& y, double w) {
  const double n = static_cast<double>(y.size());
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double s = 0.0;
    for (std::size_t u = 0; u < y.size(); ++u)
      if (u != i) s += gaussian_1d((y[i] - y[u]) / w);
    total += std::log(s / ((n - 1.0) * w));
  }
  return total;
}

}  // namespace

TEST_CASE("kernel ids") {
  CHECK(parse_kernel_id("gaussian-spherical") == KernelId::GaussianSpherical);
  CHECK(parse_kernel_id("epanechnikov-product") == KernelId::EpanechnikovProduct);
  CHECK(std::string(to_string(KernelId::EpanechnikovProduct)) == "epanechnikov-product");
  CHECK_THROWS_AS(parse_kernel_id("box"), Error);
}

TEST_CASE("kernel matrix") {
  const auto same = ObservationSequence::real(Eigen::MatrixXd::Constant(4, 1, 2.5));
  const Eigen::MatrixXd R = kernel_matrix(same, KernelId::GaussianSpherical, 0.7);
  CHECK((R.array() - 1.0 / std::sqrt(2.0 * kPi)).abs().maxCoeff() < 1e-15);

  const auto pair = ObservationSequence::real((Eigen::MatrixXd(2, 1) << 0.0, 0.3).finished());
  const Eigen::MatrixXd P = kernel_matrix(pair, KernelId::GaussianSpherical, 0.3);
  CHECK(P(0, 1) == doctest::Approx(0.241971).epsilon(1e-6));

  std::mt19937_64 rng(1);
  const auto obs = ObservationSequence::real(random_points(rng, 30, 2));
  for (KernelId id : {KernelId::GaussianSpherical, KernelId::EpanechnikovProduct}) {
    const Eigen::MatrixXd M = kernel_matrix(obs, id, 0.8);
    CHECK((M - M.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((M.array() >= 0.0).all());
    for (Eigen::Index i = 0; i < 30; ++i) CHECK(M(i, i) == doctest::Approx(M.row(i).maxCoeff()));
    const Eigen::MatrixXd A = kernel_matrix(obs.values(), obs.values(), id, 0.8);
    CHECK((A - M).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("kernel densities integrate to one") {
  std::mt19937_64 rng(2);
  for (KernelId id : {KernelId::GaussianSpherical, KernelId::EpanechnikovProduct}) {
    KernelEmission e;
    e.anchors = random_points(rng, 12, 1);
    e.bandwidth = 0.6;
    e.kernel = id;
    e.weights = oracle::random_stochastic(2, 12, rng).transpose();
    for (int j = 0; j < 2; ++j) {
      const double lo = e.anchors.minCoeff() - 8.0, hi = e.anchors.maxCoeff() + 8.0;
      const int steps = 40000;
      const double h = (hi - lo) / steps;
      double integral = 0.0;
      Eigen::RowVectorXd y(1);
      for (int s = 0; s <= steps; ++s) {
        y(0) = lo + s * h;
        integral += (s == 0 || s == steps ? 0.5 : 1.0) * density_eval(e, j, y);
      }
      CHECK(std::abs(integral * h - 1.0) < 1e-3);
    }
  }

  KernelEmission e2;
  e2.anchors = random_points(rng, 5, 2);
  e2.bandwidth = 0.9;
  e2.weights = oracle::random_simplex(5, rng);
  const double lo = -6.0, hi = 10.0;
  const int steps = 400;
  const double h = (hi - lo) / steps;
  double integral = 0.0;
  Eigen::RowVectorXd y(2);
  for (int a = 0; a <= steps; ++a)
    for (int b = 0; b <= steps; ++b) {
      y << lo + a * h, lo + b * h;
      integral += (a == 0 || a == steps ? 0.5 : 1.0) * (b == 0 || b == steps ? 0.5 : 1.0) * density_eval(e2, 0, y);
    }
  CHECK(std::abs(integral * h * h - 1.0) < 1e-3);
}

TEST_CASE("density at the single anchor and under anchor permutation") {
  KernelEmission one;
  one.anchors = Eigen::MatrixXd::Constant(1, 2, 1.5);
  one.bandwidth = 0.5;
  one.weights = Eigen::MatrixXd::Ones(1, 1);
  CHECK(density_eval(one, 0, one.anchors.row(0)) == doctest::Approx(1.0 / (2.0 * kPi) / 0.25));

  std::mt19937_64 rng(3);
  KernelEmission e;
  e.anchors = random_points(rng, 8, 1);
  e.bandwidth = 0.4;
  e.weights = oracle::random_stochastic(2, 8, rng).transpose();
  KernelEmission p = e;
  const std::vector<int> order{3, 1, 7, 0, 5, 2, 6, 4};
  for (int u = 0; u < 8; ++u) {
    p.anchors.row(u) = e.anchors.row(order[static_cast<std::size_t>(u)]);
    p.weights.row(u) = e.weights.row(order[static_cast<std::size_t>(u)]);
  }
  Eigen::RowVectorXd y(1);
  y(0) = 0.37;
  CHECK(density_eval(e, 1, y) == doctest::Approx(density_eval(p, 1, y)).epsilon(1e-14));
}

TEST_CASE("inner updates ascend") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 2 + trial % 25;
    const int k = 1 + trial % 3;
    const auto obs = ObservationSequence::real(random_points(rng, n, 1 + trial % 2));
    const double w = 0.3 + 0.1 * (trial % 7);
    const Eigen::MatrixXd R = kernel_matrix(obs, KernelId::GaussianSpherical, w);
    const Eigen::MatrixXd P = oracle::random_stochastic(k, n, rng).transpose();
    const Eigen::MatrixXd tau = oracle::random_stochastic(n, k, rng);
    const Eigen::MatrixXd next = gem_inner_update(P, tau, R);
    CHECK((next.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(gem_objective(next, tau, R, w, obs.dim()) >= gem_objective(P, tau, R, w, obs.dim()) - 1e-10);
  }
}

TEST_CASE("inner update fixed points") {
  const Eigen::MatrixXd R = Eigen::MatrixXd::Constant(5, 5, 0.3);
  const Eigen::MatrixXd P = Eigen::MatrixXd::Constant(5, 2, 0.2);
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd tau = oracle::random_stochastic(5, 2, rng);
  CHECK((gem_inner_update(P, tau, R) - P).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((gem_emission_m_step(P, tau, R, 5) - P).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXd single = gem_inner_update(Eigen::MatrixXd::Ones(1, 2), Eigen::MatrixXd::Constant(1, 2, 0.5),
                                                  Eigen::MatrixXd::Constant(1, 1, 0.4));
  CHECK((single.array() == 1.0).all());
}

TEST_CASE("GEM M-step traces and pruning") {
  std::mt19937_64 rng(6);
  const auto obs = ObservationSequence::real(random_points(rng, 20, 1));
  const Eigen::MatrixXd R = kernel_matrix(obs, KernelId::GaussianSpherical, 0.5);
  const Eigen::MatrixXd P = oracle::random_stochastic(2, 20, rng).transpose();
  const Eigen::MatrixXd tau = oracle::random_stochastic(20, 2, rng);

  std::vector<double> trace;
  const Eigen::MatrixXd out = gem_emission_m_step(P, tau, R, 8, &trace, 0.5, 1);
  REQUIRE(trace.size() == 9);
  for (std::size_t s = 1; s < trace.size(); ++s) CHECK(trace[s] >= trace[s - 1] - 1e-10);
  CHECK((out.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(((out.array() == 0.0) || (out.array() >= kWeightPrune)).all());

  const Eigen::MatrixXd once = gem_emission_m_step(P, tau, R, 1);
  CHECK((once - gem_inner_update(P, tau, R)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("vanishing mixture density is reported") {
  Eigen::MatrixXd R = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd P(3, 1);
  P << 0.0, 0.5, 0.5;
  try {
    gem_inner_update(P, Eigen::MatrixXd::Ones(3, 1), R);
    FAIL("row 0 has zero density");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateDenominator);
  }
}

TEST_CASE("bandwidth cross-validation") {
  std::vector<double> y;
  for (int i = 0; i < 10; ++i) y.push_back(0.03 * i);
  for (int i = 0; i < 10; ++i) y.push_back(1.0 + 0.03 * i);
  Eigen::MatrixXd m(20, 1);
  for (int i = 0; i < 20; ++i) m(i, 0) = y[static_cast<std::size_t>(i)];
  const auto obs = ObservationSequence::real(m);
  const std::vector<double> grid{0.01, 0.2, 5.0};
  std::vector<double> scores;
  for (double w : grid) {
    scores.push_back(loo_direct(y, w));
    CHECK(std::abs(loo_log_likelihood(obs, KernelId::GaussianSpherical, w) - scores.back()) <
          1e-9 * std::abs(scores.back()));
  }
  CHECK(scores[1] > scores[0]);
  CHECK(scores[1] > scores[2]);
  CHECK(bandwidth_cv(obs, grid) == 0.2);
  CHECK(bandwidth_cv(obs, {0.7}) == 0.7);
  CHECK_THROWS_AS(bandwidth_cv(obs, {}), Error);

  // Compact kernels far apart score equally at every small bandwidth; the
  // larger one is kept.
  const auto apart = ObservationSequence::real((Eigen::MatrixXd(2, 1) << 0.0, 10.0).finished());
  CHECK(bandwidth_cv(apart, {0.1, 0.3, 0.2}, KernelId::EpanechnikovProduct) == 0.3);

  const std::vector<double> def = default_bandwidth_grid(obs);
  REQUIRE(def.size() == 20);
  for (std::size_t i = 1; i < def.size(); ++i) CHECK(def[i] > def[i - 1]);
  CHECK(def.back() / def.front() == doctest::Approx(40.0));
  const double w = bandwidth_cv(obs, def);
  for (double g : def) CHECK(loo_log_likelihood(obs, KernelId::GaussianSpherical, w) >=
                             loo_log_likelihood(obs, KernelId::GaussianSpherical, g));
}
