#include "nphmm/hmm_core.hpp"

#include <cmath>
#include <limits>

#include "nphmm/error.hpp"

namespace nphmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Log-sum-exp of `count` values. An all -inf input yields -inf (a state that
// is structurally unreachable), never NaN.
template <typename Term>
double log_sum_exp(int count, Term term) {
  double best = kNegInf;
  for (int j = 0; j < count; ++j) best = std::max(best, term(j));
  if (best == kNegInf) return kNegInf;
  double acc = 0.0;
  for (int j = 0; j < count; ++j) acc += std::exp(term(j) - best);
  return best + std::log(acc);
}

void check_dimensions(const TransitionModel& model, const Eigen::MatrixXd& log_emission) {
  if (log_emission.cols() != model.k()) {
    throw Error(ErrorCode::DimensionMismatch,
                "emission matrix has " + std::to_string(log_emission.cols()) +
                    " states, transition model has " + std::to_string(model.k()));
  }
  if (log_emission.rows() < 1) throw Error(ErrorCode::InvalidArgument, "empty observation sequence");
}

RowMajorMatrix forward_log(const TransitionModel& model, const Eigen::MatrixXd& le) {
  const int k = model.k();
  const Eigen::Index n = le.rows();
  const Eigen::MatrixXd& lq = model.log_Q();
  RowMajorMatrix alpha(n, k);
  for (int j = 0; j < k; ++j) alpha(0, j) = model.log_init()(j) + le(0, j);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (int to = 0; to < k; ++to) {
      alpha(i, to) = le(i, to) + log_sum_exp(k, [&](int from) {
                       return alpha(i - 1, from) + lq(from, to);
                     });
    }
  }
  return alpha;
}

RowMajorMatrix backward_log(const TransitionModel& model, const Eigen::MatrixXd& le) {
  const int k = model.k();
  const Eigen::Index n = le.rows();
  const Eigen::MatrixXd& lq = model.log_Q();
  RowMajorMatrix beta(n, k);
  beta.row(n - 1).setZero();
  for (Eigen::Index i = n - 2; i >= 0; --i) {
    for (int from = 0; from < k; ++from) {
      beta(i, from) = log_sum_exp(k, [&](int to) {
        return lq(from, to) + le(i + 1, to) + beta(i + 1, to);
      });
    }
  }
  return beta;
}

}  // namespace

double floored_log(double density) {
  return std::log(density > kDensityFloor ? density : kDensityFloor);
}

Eigen::MatrixXd PosteriorSet::expected_transitions() const {
  const int kk = k();
  Eigen::RowVectorXd sums = pair_joint.colwise().sum();
  Eigen::MatrixXd out(kk, kk);
  for (int j = 0; j < kk; ++j)
    for (int l = 0; l < kk; ++l) out(j, l) = pair_joint.rows() > 0 ? sums(j * kk + l) : 0.0;
  return out;
}

PosteriorSet forward_backward(const TransitionModel& model, const Eigen::MatrixXd& log_emission) {
  check_dimensions(model, log_emission);
  const int k = model.k();
  const Eigen::Index n = log_emission.rows();
  const RowMajorMatrix alpha = forward_log(model, log_emission);
  const RowMajorMatrix beta = backward_log(model, log_emission);

  PosteriorSet post;
  post.log_lik = log_sum_exp(k, [&](int j) { return alpha(n - 1, j); });
  post.tau.resize(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      post.tau(i, j) = std::exp(alpha(i, j) + beta(i, j) - post.log_lik);
      total += post.tau(i, j);
    }
    post.tau.row(i) /= total;
  }

  const Eigen::MatrixXd& lq = model.log_Q();
  post.pair_joint.resize(n - 1, static_cast<Eigen::Index>(k) * k);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      for (int l = 0; l < k; ++l) {
        const double v = std::exp(alpha(i, j) + lq(j, l) + log_emission(i + 1, l) +
                                  beta(i + 1, l) - post.log_lik);
        post.pair_joint(i, j * k + l) = v;
        total += v;
      }
    }
    post.pair_joint.row(i) /= total;
  }
  return post;
}

double log_likelihood(const TransitionModel& model, const Eigen::MatrixXd& log_emission) {
  check_dimensions(model, log_emission);
  const int k = model.k();
  const Eigen::MatrixXd& lq = model.log_Q();
  Eigen::VectorXd prev(k), next(k);
  for (int j = 0; j < k; ++j) prev(j) = model.log_init()(j) + log_emission(0, j);
  for (Eigen::Index i = 1; i < log_emission.rows(); ++i) {
    for (int to = 0; to < k; ++to) {
      next(to) = log_emission(i, to) +
                 log_sum_exp(k, [&](int from) { return prev(from) + lq(from, to); });
    }
    prev.swap(next);
  }
  return log_sum_exp(k, [&](int j) { return prev(j); });
}

Eigen::VectorXd triplet_log_densities(const TransitionModel& model,
                                      const Eigen::MatrixXd& log_emission) {
  check_dimensions(model, log_emission);
  const Eigen::Index n = log_emission.rows();
  if (n < 3) throw Error(ErrorCode::SequenceTooShort, "pseudo-likelihood needs n >= 3");
  const int k = model.k();
  const Eigen::MatrixXd& lq = model.log_Q();
  Eigen::VectorXd out(n - 2);
  Eigen::VectorXd a(k), b(k);
  for (Eigen::Index i = 0; i + 2 < n; ++i) {
    for (int j = 0; j < k; ++j) a(j) = model.log_init()(j) + log_emission(i, j);
    for (int step = 1; step <= 2; ++step) {
      for (int to = 0; to < k; ++to) {
        b(to) = log_emission(i + step, to) +
                log_sum_exp(k, [&](int from) { return a(from) + lq(from, to); });
      }
      a.swap(b);
    }
    out(i) = log_sum_exp(k, [&](int j) { return a(j); });
  }
  return out;
}

double pseudo_log_likelihood(const TransitionModel& model, const Eigen::MatrixXd& log_emission) {
  return triplet_log_densities(model, log_emission).sum();
}

StatePath viterbi(const TransitionModel& model, const Eigen::MatrixXd& log_emission) {
  check_dimensions(model, log_emission);
  const int k = model.k();
  const Eigen::Index n = log_emission.rows();
  const Eigen::MatrixXd& lq = model.log_Q();
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> back(n, k);
  Eigen::VectorXd delta(k), next(k);
  for (int j = 0; j < k; ++j) delta(j) = model.log_init()(j) + log_emission(0, j);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (int to = 0; to < k; ++to) {
      int arg = 0;
      double best = delta(0) + lq(0, to);
      for (int from = 1; from < k; ++from) {
        const double v = delta(from) + lq(from, to);
        if (v > best) {
          best = v;
          arg = from;
        }
      }
      next(to) = best + log_emission(i, to);
      back(i, to) = arg;
    }
    delta.swap(next);
  }
  StatePath path(static_cast<std::size_t>(n));
  int state = 0;
  for (int j = 1; j < k; ++j)
    if (delta(j) > delta(state)) state = j;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    path[static_cast<std::size_t>(i)] = state;
    if (i > 0) state = back(i, state);
  }
  return path;
}

StatePath map_decode(const PosteriorSet& post) {
  StatePath path(static_cast<std::size_t>(post.size()));
  for (Eigen::Index i = 0; i < post.size(); ++i) {
    int arg = 0;
    for (int j = 1; j < post.k(); ++j)
      if (post.tau(i, j) > post.tau(i, arg)) arg = j;
    path[static_cast<std::size_t>(i)] = arg;
  }
  return path;
}

double path_log_density(const TransitionModel& model, const Eigen::MatrixXd& log_emission,
                        const StatePath& path) {
  check_dimensions(model, log_emission);
  if (static_cast<Eigen::Index>(path.size()) != log_emission.rows()) {
    throw Error(ErrorCode::LengthMismatch, "path length differs from sequence length");
  }
  double total = model.log_init()(path[0]) + log_emission(0, path[0]);
  for (std::size_t i = 1; i < path.size(); ++i) {
    total += model.log_Q()(path[i - 1], path[i]) +
             log_emission(static_cast<Eigen::Index>(i), path[i]);
  }
  return total;
}

}  // namespace nphmm
