#pragma once

// Policy inertia composition: a Dirac on the previous action blended with a
// policy core by a scalar weight mu in [0, 1].

#include <cstddef>
#include <span>
#include <vector>

#include "pic/common.hpp"

namespace pic {

/// Probabilities are clamped to this value before any log is taken.
inline constexpr double kLogFloor = 1e-12;

double floored_log(double p);

/// Inertia weight with an optional floor mu0. Invariant: mu0 <= value <= 1.
class PicWeight {
 public:
  PicWeight() = default;
  /// Throws if the pair violates 0 <= mu0 <= value <= 1.
  PicWeight(double value, double mu0 = 0.0);

  double value() const { return value_; }
  double mu0() const { return mu0_; }

 private:
  double value_ = 0.0;
  double mu0_ = 0.0;
};

/// mu0 + (1 - mu0) * raw.
PicWeight apply_lower_bound(double raw, double mu0);

/// Maps a tanh output in [-1, 1] to [0, 1].
inline double unit_from_tanh(double t) { return 0.5 * (t + 1.0); }

struct MixedDistribution {
  std::vector<double> probs;
  std::vector<double> core;
  PrevAction prev;
};

/// mu * onehot(prev) + (1 - mu) * core; the null previous action yields core.
MixedDistribution mix_distribution(std::span<const double> core, PrevAction prev, PicWeight mu);

/// Allocation-free variant used by the agents' batched code.
void mix_into(std::span<const double> core, PrevAction prev, double mu, std::span<double> out);

std::size_t sample_mixed(const MixedDistribution& dist, Rng& rng);

struct LogProbEntropy {
  std::vector<double> log_probs;
  double entropy = 0.0;
};

LogProbEntropy mixed_log_prob_and_entropy(const MixedDistribution& dist);

}  // namespace pic
