#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nphmm/em.hpp"

namespace nphmm {

struct Region {
  int state;  // 0-based
  Eigen::Index length;
};

/// Piecewise-constant state layout with one discrete law per state;
/// distributions[j](y) is the probability of count y under state j.
struct RegionScheme {
  std::vector<Region> regions;
  std::vector<Eigen::VectorXd> distributions;

  int k() const { return static_cast<int>(distributions.size()); }
  Eigen::Index length() const;
};

void validate(const RegionScheme& scheme);

struct LabeledSequence {
  ObservationSequence obs;
  std::optional<StatePath> truth;
};

LabeledSequence simulate_regions(const RegionScheme& scheme, std::uint64_t seed);
LabeledSequence simulate_hmm(const HmmModel& model, Eigen::Index n, std::uint64_t seed);

/// Share of concordant position pairs, from contingency counts.
double rand_index(const StatePath& a, const StatePath& b);

/// Best position-wise agreement over relabelings of `pred` (labels 0..9).
double aligned_accuracy(const StatePath& truth, const StatePath& pred);

/// k = 4, n = 1000, 14 regions. Each state's law is a fixed shape contaminated
/// by a negative binomial tail, so a pure negative-binomial model is misspecified.
RegionScheme default_desk_scheme();

enum class Decoder { Viterbi, Map };
const char* to_string(Decoder decoder);
Decoder parse_decoder(const std::string& name);

struct ModelConfig {
  std::string name;
  int k = 2;
  FitOptions fit;
};

struct SimulationModel {
  HmmModel model;
  Eigen::Index n;
};

struct BenchmarkConfig {
  int replicates = 20;
  std::variant<RegionScheme, SimulationModel> source;
  std::vector<ModelConfig> models;
  std::vector<Decoder> decoders{Decoder::Viterbi};
  std::uint64_t master_seed = 0;
  int threads = 0;
};

void validate(const BenchmarkConfig& config);

struct BenchmarkRow {
  int replicate = 0;  // 1-based
  std::string model;
  Decoder decoder = Decoder::Viterbi;
  std::optional<double> lambda;  // np-reg only
  double rand_index = 0.0;
  double aligned_accuracy = 0.0;
  double log_lik = 0.0;
  int iterations = 0;
  bool converged = false;
  std::optional<std::string> error;  // set when the fit failed
};

/// Rows ordered by replicate, then model, then decoder. Replicate s simulates
/// with derive_seed(derive_seed(master, s), 0) and fits every model with
/// derive_seed(derive_seed(master, s), 1).
std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& config);

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);

/// Shortest decimal text that parses back to the same double; "nan", "inf", "-inf" otherwise.
std::string format_double(double value);

}  // namespace nphmm
