#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <doctest.h>

#include "nphmm/error.hpp"
#include "nphmm/io.hpp"
#include "oracles.hpp"

using namespace nphmm;
using nlohmann::json;

namespace {

std::string error_text(const std::function<void()>& body, ErrorCode expected) {
  try {
    body();
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

ObservationSequence parse_text(const std::string& text, ObservationKind kind) {
  std::istringstream in(text);
  return parse_observations(in, kind, "data.txt");
}

StatePath parse_state_text(const std::string& text) {
  std::istringstream in(text);
  return parse_states(in, "states.txt");
}

void check_round_trip(const HmmModel& model, const ObservationSequence& probe) {
  const std::string text = model_to_json(model).dump(2);
  const HmmModel back = model_from_json(json::parse(text));
  CHECK(model_to_json(back).dump(2) == text);
  CHECK(back.transition.Q() == model.transition.Q());
  CHECK(back.transition.init() == model.transition.init());
  const Eigen::MatrixXd a = log_emission_matrix(model.emission, probe);
  const Eigen::MatrixXd b = log_emission_matrix(back.emission, probe);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-15 * a.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("models round-trip for every family") {
  std::mt19937_64 rng(41);
  const TransitionModel t(oracle::random_stochastic(2, 2, rng, 0.05), oracle::random_simplex(2, rng, 0.05));
  const auto counts = ObservationSequence::counts({0, 1, 2, 3, 4, 5, 0, 2});
  check_round_trip({t, DiscreteEmission{oracle::random_stochastic(2, 6, rng)}}, counts);
  check_round_trip({t, NegBinEmission{Eigen::Vector2d(0.3, 12.5), Eigen::Vector2d(1.0 / 3.0, 0.77)}}, counts);

  MixtureEmission pois;
  pois.psi = oracle::random_stochastic(2, 3, rng, 0.05);
  pois.components = {PoissonComponent{0.7}, BinomialComponent{6, 0.45}, TriangularComponent{4}};
  check_round_trip({t, pois}, counts);
  check_round_trip({t, make_zero_inflated(Eigen::Vector2d(0.2, 0.9), {PoissonComponent{1.5}, PoissonComponent{6.1}})},
                   counts);

  const auto real = ObservationSequence::real(Eigen::MatrixXd::Random(10, 2));
  MixtureEmission gauss;
  gauss.psi = oracle::random_stochastic(2, 2, rng, 0.05);
  gauss.components = {GaussianComponent{Eigen::Vector2d(0.1, -0.2), Eigen::Vector2d(0.5, 2.0)},
                      GaussianComponent{Eigen::Vector2d(1.0 / 3.0, 2.0), Eigen::Vector2d(1.0, 0.1)}};
  check_round_trip({t, gauss}, real);

  KernelEmission kern;
  kern.anchors = Eigen::MatrixXd::Random(5, 2);
  kern.bandwidth = 0.3141592653589793;
  kern.kernel = KernelId::EpanechnikovProduct;
  kern.weights = oracle::random_stochastic(2, 5, rng, 0.01).transpose();
  check_round_trip({t, kern}, ObservationSequence::real(kern.anchors));
}

TEST_CASE("malformed models are rejected") {
  const HmmModel m{TransitionModel::stationary(Eigen::MatrixXd::Identity(2, 2) * 0.5 + Eigen::MatrixXd::Constant(2, 2, 0.25)),
                   DiscreteEmission{Eigen::MatrixXd::Constant(2, 2, 0.5)}};
  json doc = model_to_json(m);
  doc["schema"] = "other";
  error_text([&] { model_from_json(doc); }, ErrorCode::ParseError);
  doc = model_to_json(m);
  doc["version"] = 7;
  error_text([&] { model_from_json(doc); }, ErrorCode::ParseError);
  doc = model_to_json(m);
  doc.erase("Q");
  error_text([&] { model_from_json(doc); }, ErrorCode::ParseError);
  doc = model_to_json(m);
  doc["Q"][0][0] = 0.9;
  CHECK_THROWS_AS(model_from_json(doc), Error);
  doc = model_to_json(m);
  doc["emission"]["family"] = "gamma";
  CHECK_THROWS_AS(model_from_json(doc), Error);
}

TEST_CASE("observation files") {
  const auto plain = parse_text("3\n1\n4\n", ObservationKind::Count);
  CHECK(plain.size() == 3);
  CHECK(plain.count(2) == 4);

  const auto headed = parse_text("# comment\ncount\n\n5\n  6  \n", ObservationKind::Count);
  CHECK(headed.size() == 2);
  CHECK(headed.count(0) == 5);

  const auto grid = parse_text("x;y\n1.5;2\n-3 4e-2\n0.25\t7\n", ObservationKind::RealVector);
  CHECK(grid.dim() == 2);
  CHECK(grid.values()(1, 1) == 0.04);
  CHECK(grid.values()(2, 0) == 0.25);

  CHECK(error_text([] { parse_text("1\n2\nx\n", ObservationKind::Count); }, ErrorCode::ParseError).find("data.txt:3") !=
        std::string::npos);
  CHECK(error_text([] { parse_text("1\n-2\n", ObservationKind::Count); }, ErrorCode::ParseError).find("data.txt:2") !=
        std::string::npos);
  CHECK(error_text([] { parse_text("1.5\n", ObservationKind::Count); }, ErrorCode::ParseError).find("data.txt:1") !=
        std::string::npos);
  CHECK(error_text([] { parse_text("1,2\n3\n", ObservationKind::RealVector); }, ErrorCode::ParseError)
            .find("data.txt:2") != std::string::npos);
  CHECK(error_text([] { parse_text("1,2\n3,nan\n", ObservationKind::RealVector); }, ErrorCode::ParseError)
            .find("data.txt:2") != std::string::npos);
  error_text([] { parse_text("# only a comment\n", ObservationKind::Count); }, ErrorCode::ParseError);

  const auto again = parse_text(format_observations(grid), ObservationKind::RealVector);
  CHECK(again.values() == grid.values());
}

TEST_CASE("state files are one-based on disk") {
  const StatePath p = parse_state_text("state\n1\n2\n2\n3\n");
  CHECK(p == StatePath{0, 1, 1, 2});
  CHECK(format_states(p) == "1\n2\n2\n3\n");
  CHECK(error_text([] { parse_state_text("1\n0\n"); }, ErrorCode::ParseError).find("states.txt:2") !=
        std::string::npos);
}

TEST_CASE("fit settings are strict") {
  const FitOptions o = fit_options_from_json(json::parse(R"({"emission":"np-reg","lambda":0.5,"starts":3})"));
  CHECK(o.emission.family == FamilyKind::NpRegularized);
  CHECK(o.emission.penalty.lambda == 0.5);
  CHECK(o.n_starts == 3);
  CHECK(error_text([] { fit_options_from_json(json::parse(R"({"emission":"np","lamda":1})")); }, ErrorCode::ParseError)
            .find("lamda") != std::string::npos);
  CHECK_THROWS_AS(fit_options_from_json(json::parse(R"({"lambda":1})")), Error);
}

TEST_CASE("benchmark configs") {
  const json doc = json::parse(R"({
    "replicates": 2, "master_seed": 5, "decoders": ["viterbi", "map"],
    "models": [{"name": "np", "k": 4, "emission": "np"},
               {"name": "np-reg", "k": 4, "emission": "np-reg", "lambdas": [0.25, 1, 16]}]})");
  const BenchmarkConfig c = benchmark_from_json(doc, ".");
  CHECK(c.replicates == 2);
  CHECK(c.master_seed == 5);
  CHECK(c.decoders.size() == 2);
  REQUIRE(c.models.size() == 4);
  CHECK(c.models[3].fit.emission.penalty.lambda == 16.0);
  const auto& scheme = std::get<RegionScheme>(c.source);
  CHECK(scheme.length() == default_desk_scheme().length());

  json bad = doc;
  bad["models"][0]["name"] = "a,b";
  CHECK_THROWS_AS(benchmark_from_json(bad, "."), Error);
  bad = doc;
  bad["seeds"] = 1;
  CHECK_THROWS_AS(benchmark_from_json(bad, "."), Error);

  const RegionScheme explicit_scheme = scheme_from_json(json::parse(
      R"({"regions":[{"state":1,"length":3},{"state":2,"length":4}],"distributions":[[0.5,0.5],[0,1]]})"));
  CHECK(explicit_scheme.regions[1].state == 1);
  CHECK(explicit_scheme.length() == 7);
}

TEST_CASE("atomic writes leave no temporary file") {
  const auto dir = std::filesystem::temp_directory_path() / "nphmm_io_test";
  std::filesystem::create_directories(dir);
  const auto target = dir / "out.txt";
  write_file_atomic(target, "first\n");
  write_file_atomic(target, "second\n");
  std::ifstream in(target);
  std::string line;
  std::getline(in, line);
  CHECK(line == "second");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) CHECK(entry.path().extension() != ".tmp");
  std::filesystem::remove_all(dir);
}
