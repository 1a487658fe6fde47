#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nphmm/emission.hpp"

namespace nphmm {

enum class FamilyKind { NegBin, Np, NpRegularized, Mixture, Kernel };
enum class ComponentFamily { Poisson, Gaussian, Binomial, Triangular, ZeroInflated };

const char* to_string(FamilyKind family);
const char* to_string(ComponentFamily family);
FamilyKind parse_family(const std::string& name);
ComponentFamily parse_component_family(const std::string& name);

struct EmissionOptions {
  FamilyKind family = FamilyKind::Np;
  PenaltySpec penalty;  // np-reg only
  int components = 0;   // mixture size m; 0 means k (k + 1 for zero-inflated)
  ComponentFamily component_family = ComponentFamily::Poisson;
  KernelId kernel = KernelId::GaussianSpherical;
  double bandwidth = 0.0;              // 0 selects by cross-validation
  std::vector<double> bandwidth_grid;  // empty: default_bandwidth_grid
  int inner_iters = 5;
  int anchor_stride = 1;
  int y_max = -1;  // discrete support; -1 uses the largest observed count
};

enum class InitStrategy { Quantile, RandomPerturb };

struct FitOptions {
  int max_iter = 500;
  double tol = 1e-6;  // relative objective improvement
  int n_starts = 5;
  std::uint64_t seed = 0;
  EmissionOptions emission;
  // Quantile initializations blend each band's empirical law with this share
  // of the pooled law, so no state starts with zero mass on an observed value.
  double init_smoothing = 0.05;
  int threads = 0;  // restarts run concurrently; 0 = thread_count()
};

void validate(const FitOptions& opts);

struct FitReport {
  HmmModel model;
  std::vector<double> objective_trace;  // penalized when lambda > 0
  bool converged = false;
  int iterations = 0;
  int best_start = 0;
  double log_lik = 0.0;  // unpenalized log-likelihood of `model`
  std::vector<std::string> start_errors;  // empty string for successful starts
};

/// Best of `opts.n_starts` EM runs. Start 0 uses the quantile initialization,
/// the others random-perturb with seeds derived from `opts.seed`. Throws
/// FitFailed when every start aborts.
FitReport fit(const ObservationSequence& obs, int k, const FitOptions& opts);

/// A single EM run from a given model (no restarts).
FitReport run_em(const ObservationSequence& obs, const HmmModel& initial, const FitOptions& opts);

HmmModel initialize(const ObservationSequence& obs, int k, InitStrategy strategy, std::uint64_t seed,
                    const FitOptions& opts);

/// Q(j, l) = sum_i pair_i(j, l) / sum_i tau(i, j) over i = 1..n-1, init = tau row 1.
TransitionModel m_step_transition(const PosteriorSet& post);

/// Permutation perm (candidate state c -> reference state perm[c]) maximizing
/// position-wise agreement. Exhaustive over k! orderings, k <= 10.
std::vector<int> align_labels(const StatePath& reference, const StatePath& candidate, int k);

/// Same, minimizing the summed total-variation distance between matched rows
/// of two k x S probability tables.
std::vector<int> align_labels(const Eigen::MatrixXd& reference_rows, const Eigen::MatrixXd& candidate_rows);

double total_variation(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b);

/// Independent stream seed for replicate/start `index` of a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace nphmm
