#pragma once

#include <random>
#include <string>
#include <variant>
#include <vector>

#include "nphmm/emission_discrete.hpp"
#include "nphmm/emission_kernel.hpp"
#include "nphmm/emission_mixture.hpp"
#include "nphmm/hmm_core.hpp"
#include "nphmm/observation.hpp"
#include "nphmm/transition.hpp"

namespace nphmm {

using EmissionModel = std::variant<DiscreteEmission, NegBinEmission, MixtureEmission, KernelEmission>;

/// A complete model: hidden chain plus per-state emission laws.
struct HmmModel {
  TransitionModel transition;
  EmissionModel emission;

  int k() const { return transition.k(); }
};

int num_states(const EmissionModel& emission);
ObservationKind observation_kind(const EmissionModel& emission);
Eigen::Index observation_dim(const EmissionModel& emission);
std::string family_name(const EmissionModel& emission);

void validate(const EmissionModel& emission);
void validate(const HmmModel& model);

/// n x k floored log densities; throws IncompatibleFamily on a kind or
/// dimension mismatch between the emission family and the observations.
Eigen::MatrixXd log_emission_matrix(const EmissionModel& emission, const ObservationSequence& obs);

double emission_density(const EmissionModel& emission, int state,
                        const Eigen::Ref<const Eigen::RowVectorXd>& y);

Eigen::RowVectorXd sample_emission(const EmissionModel& emission, int state, std::mt19937_64& rng);

/// Relabels states: old state s becomes state perm[s].
HmmModel permute_states(const HmmModel& model, const std::vector<int>& perm);

PosteriorSet forward_backward(const HmmModel& model, const ObservationSequence& obs);
double log_likelihood(const HmmModel& model, const ObservationSequence& obs);
double pseudo_log_likelihood(const HmmModel& model, const ObservationSequence& obs);
StatePath viterbi(const HmmModel& model, const ObservationSequence& obs);

}  // namespace nphmm
