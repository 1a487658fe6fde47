#include "nphmm/simeval.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <random>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/negative_binomial.hpp>
#include <boost/math/distributions/poisson.hpp>

#include "nphmm/error.hpp"
#include "nphmm/parallel.hpp"

namespace nphmm {

namespace {

constexpr double kDistributionTol = 1e-10;
constexpr int kDeskSupport = 40;  // counts 0..39

template <typename Dist>
Eigen::VectorXd tabulate(const Dist& dist) {
  Eigen::VectorXd p(kDeskSupport);
  for (int y = 0; y < kDeskSupport; ++y) p(y) = boost::math::pdf(dist, y);
  return p;
}

Eigen::VectorXd binomial_table(int trials, double prob) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(kDeskSupport);
  const boost::math::binomial_distribution<> dist(trials, prob);
  for (int y = 0; y <= trials && y < kDeskSupport; ++y) p(y) = boost::math::pdf(dist, y);
  return p;
}

std::discrete_distribution<int> sampler(const Eigen::VectorXd& probs) {
  return std::discrete_distribution<int>(probs.data(), probs.data() + probs.size());
}

double pairs(double count) { return count * (count - 1.0) / 2.0; }

}  // namespace

Eigen::Index RegionScheme::length() const {
  Eigen::Index n = 0;
  for (const auto& r : regions) n += r.length;
  return n;
}

void validate(const RegionScheme& scheme) {
  if (scheme.regions.empty()) throw Error(ErrorCode::InvalidArgument, "region scheme has no regions");
  if (scheme.distributions.empty()) throw Error(ErrorCode::InvalidArgument, "region scheme has no state distributions");
  for (const auto& r : scheme.regions) {
    if (r.state < 0 || r.state >= scheme.k()) {
      throw Error(ErrorCode::InvalidArgument, "region state " + std::to_string(r.state + 1) + " outside 1..k");
    }
    if (r.length < 1) throw Error(ErrorCode::InvalidArgument, "region length must be >= 1");
  }
  for (std::size_t j = 0; j < scheme.distributions.size(); ++j) {
    const auto& p = scheme.distributions[j];
    if (p.size() == 0 || (p.array() < 0.0).any() || !p.allFinite() ||
        std::abs(p.sum() - 1.0) > kDistributionTol) {
      throw Error(ErrorCode::InvalidArgument,
                  "distribution of state " + std::to_string(j + 1) + " is not a probability vector");
    }
  }
}

LabeledSequence simulate_regions(const RegionScheme& scheme, std::uint64_t seed) {
  validate(scheme);
  std::mt19937_64 rng(seed);
  std::vector<std::discrete_distribution<int>> draw;
  for (const auto& p : scheme.distributions) draw.push_back(sampler(p));
  std::vector<std::int64_t> values;
  StatePath truth;
  values.reserve(static_cast<std::size_t>(scheme.length()));
  truth.reserve(values.capacity());
  for (const auto& r : scheme.regions) {
    for (Eigen::Index i = 0; i < r.length; ++i) {
      truth.push_back(r.state);
      values.push_back(draw[static_cast<std::size_t>(r.state)](rng));
    }
  }
  return {ObservationSequence::counts(values), std::move(truth)};
}

LabeledSequence simulate_hmm(const HmmModel& model, Eigen::Index n, std::uint64_t seed) {
  validate(model);
  if (n < 1) throw Error(ErrorCode::InvalidArgument, "sequence length must be >= 1");
  std::mt19937_64 rng(seed);
  const int k = model.k();
  std::vector<std::discrete_distribution<int>> step;
  for (int j = 0; j < k; ++j) step.push_back(sampler(model.transition.Q().row(j).transpose()));
  auto initial = sampler(model.transition.init());

  StatePath truth(static_cast<std::size_t>(n));
  Eigen::MatrixXd values(n, observation_dim(model.emission));
  int state = initial(rng);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i > 0) state = step[static_cast<std::size_t>(state)](rng);
    truth[static_cast<std::size_t>(i)] = state;
    values.row(i) = sample_emission(model.emission, state, rng);
  }
  if (observation_kind(model.emission) == ObservationKind::Count) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) counts[static_cast<std::size_t>(i)] = std::llround(values(i, 0));
    return {ObservationSequence::counts(counts), std::move(truth)};
  }
  return {ObservationSequence::real(std::move(values)), std::move(truth)};
}

double rand_index(const StatePath& a, const StatePath& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::LengthMismatch, "label paths differ in length");
  if (a.size() < 2) throw Error(ErrorCode::SequenceTooShort, "Rand index needs n >= 2");
  std::map<int, double> rows, cols;
  std::map<std::pair<int, int>, double> cells;
  for (std::size_t i = 0; i < a.size(); ++i) {
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
    cells[{a[i], b[i]}] += 1.0;
  }
  double same_a = 0.0, same_b = 0.0, same_both = 0.0;
  for (const auto& [label, c] : rows) same_a += pairs(c);
  for (const auto& [label, c] : cols) same_b += pairs(c);
  for (const auto& [label, c] : cells) same_both += pairs(c);
  // Discordant pairs are together in exactly one labeling.
  const double discordant = same_a + same_b - 2.0 * same_both;
  return 1.0 - discordant / pairs(static_cast<double>(a.size()));
}

double aligned_accuracy(const StatePath& truth, const StatePath& pred) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::LengthMismatch, "label paths differ in length");
  if (truth.empty()) throw Error(ErrorCode::SequenceTooShort, "accuracy needs n >= 1");
  int k = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || pred[i] < 0) throw Error(ErrorCode::InvalidArgument, "negative state label");
    k = std::max({k, truth[i] + 1, pred[i] + 1});
  }
  const std::vector<int> perm = align_labels(truth, pred, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    hits += perm[static_cast<std::size_t>(pred[i])] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

RegionScheme default_desk_scheme() {
  using boost::math::negative_binomial_distribution;
  using boost::math::poisson_distribution;
  // Contaminating tail: negative binomial with r = 1, mean 6.
  const Eigen::VectorXd tail = tabulate(negative_binomial_distribution<>(1.0, 1.0 / 7.0));
  const double eps = 0.1;

  std::vector<Eigen::VectorXd> shapes;
  shapes.push_back(tabulate(poisson_distribution<>(0.3)));
  shapes.push_back(binomial_table(4, 0.4));
  shapes.push_back(0.5 * tabulate(poisson_distribution<>(0.3)) + 0.5 * binomial_table(6, 0.55));
  shapes.push_back(binomial_table(5, 0.75));

  RegionScheme scheme;
  for (const auto& shape : shapes) {
    Eigen::VectorXd p = (1.0 - eps) * shape + eps * tail;
    scheme.distributions.push_back(p / p.sum());
  }
  const int states[] = {0, 1, 2, 3, 1, 0, 2, 1, 3, 2, 0, 3, 1, 2};
  const Eigen::Index lengths[] = {90, 60, 80, 50, 70, 110, 40, 90, 60, 70, 80, 50, 90, 60};
  for (int r = 0; r < 14; ++r) scheme.regions.push_back({states[r], lengths[r]});
  return scheme;
}

const char* to_string(Decoder decoder) { return decoder == Decoder::Viterbi ? "viterbi" : "map"; }

Decoder parse_decoder(const std::string& name) {
  if (name == "viterbi") return Decoder::Viterbi;
  if (name == "map") return Decoder::Map;
  throw Error(ErrorCode::InvalidArgument, "unknown decoder '" + name + "'");
}

void validate(const BenchmarkConfig& config) {
  if (config.replicates < 1) throw Error(ErrorCode::InvalidArgument, "replicates must be >= 1");
  if (config.models.empty()) throw Error(ErrorCode::InvalidArgument, "benchmark lists no models");
  if (config.decoders.empty()) throw Error(ErrorCode::InvalidArgument, "benchmark lists no decoders");
  for (const auto& m : config.models) {
    if (m.k < 1) throw Error(ErrorCode::InvalidArgument, "model '" + m.name + "' needs k >= 1");
    validate(m.fit);
  }
  if (const auto* scheme = std::get_if<RegionScheme>(&config.source)) {
    validate(*scheme);
  } else {
    const auto& sim = std::get<SimulationModel>(config.source);
    validate(sim.model);
    if (sim.n < 1) throw Error(ErrorCode::InvalidArgument, "simulation length must be >= 1");
  }
}

std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& config) {
  validate(config);
  const auto replicates = static_cast<std::size_t>(config.replicates);
  std::vector<std::vector<BenchmarkRow>> per_replicate(replicates);

  parallel_for(
      replicates,
      [&](std::size_t s) {
        const std::uint64_t seed = derive_seed(config.master_seed, s);
        const LabeledSequence data =
            std::holds_alternative<RegionScheme>(config.source)
                ? simulate_regions(std::get<RegionScheme>(config.source), derive_seed(seed, 0))
                : simulate_hmm(std::get<SimulationModel>(config.source).model,
                               std::get<SimulationModel>(config.source).n, derive_seed(seed, 0));
        auto& rows = per_replicate[s];
        for (const auto& m : config.models) {
          FitOptions opts = m.fit;
          opts.seed = derive_seed(seed, 1);
          opts.threads = 1;
          BenchmarkRow base;
          base.replicate = static_cast<int>(s) + 1;
          base.model = m.name;
          if (opts.emission.family == FamilyKind::NpRegularized) base.lambda = opts.emission.penalty.lambda;
          std::optional<FitReport> report;
          try {
            report = fit(data.obs, m.k, opts);
          } catch (const Error& e) {
            base.error = e.what();
          }
          for (Decoder d : config.decoders) {
            BenchmarkRow row = base;
            row.decoder = d;
            if (!report) {
              row.rand_index = row.aligned_accuracy = row.log_lik = std::nan("");
            } else {
              const StatePath path = d == Decoder::Viterbi ? viterbi(report->model, data.obs)
                                                           : map_decode(forward_backward(report->model, data.obs));
              row.rand_index = rand_index(*data.truth, path);
              row.aligned_accuracy = aligned_accuracy(*data.truth, path);
              row.log_lik = report->log_lik;
              row.iterations = report->iterations;
              row.converged = report->converged;
            }
            rows.push_back(std::move(row));
          }
        }
      },
      config.threads);

  std::vector<BenchmarkRow> out;
  for (auto& rows : per_replicate)
    for (auto& r : rows) out.push_back(std::move(r));
  return out;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, result.ptr);
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "replicate,model,decoder,lambda,rand_index,aligned_accuracy,loglik,iterations,converged\n";
  for (const auto& r : rows) {
    out << r.replicate << ',' << r.model << ',' << to_string(r.decoder) << ','
        << (r.lambda ? format_double(*r.lambda) : "") << ',' << format_double(r.rand_index) << ','
        << format_double(r.aligned_accuracy) << ',' << format_double(r.log_lik) << ',' << r.iterations << ','
        << (r.error ? "failed" : (r.converged ? "true" : "false")) << '\n';
  }
}

}  // namespace nphmm
