#include "pic/mixed_policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace pic {

double floored_log(double p) { return std::log(std::max(p, kLogFloor)); }

PicWeight::PicWeight(double value, double mu0) : value_(value), mu0_(mu0) {
  if (!(mu0 >= 0.0 && mu0 <= 1.0)) throw Error("PIC lower bound mu0 must lie in [0, 1]");
  if (!(value >= mu0 && value <= 1.0))
    throw Error("PIC weight " + std::to_string(value) + " outside [mu0, 1]");
}

PicWeight apply_lower_bound(double raw, double mu0) {
  if (!(mu0 >= 0.0 && mu0 <= 1.0)) throw Error("PIC lower bound mu0 must lie in [0, 1]");
  const double value = mu0 + (1.0 - mu0) * raw;
  return PicWeight(std::clamp(value, mu0, 1.0), mu0);
}

void mix_into(std::span<const double> core, PrevAction prev, double mu, std::span<double> out) {
  if (!prev) {
    std::copy(core.begin(), core.end(), out.begin());
    return;
  }
  const double keep = 1.0 - mu;
  for (std::size_t a = 0; a < core.size(); ++a) out[a] = keep * core[a];
  out[*prev] += mu;
}

MixedDistribution mix_distribution(std::span<const double> core, PrevAction prev, PicWeight mu) {
  if (prev && *prev >= core.size()) throw Error("previous action out of range");
  MixedDistribution dist{std::vector<double>(core.size()), std::vector<double>(core.begin(), core.end()), prev};
  mix_into(core, prev, mu.value(), dist.probs);
  return dist;
}

std::size_t sample_mixed(const MixedDistribution& dist, Rng& rng) { return sample_categorical(dist.probs, rng); }

LogProbEntropy mixed_log_prob_and_entropy(const MixedDistribution& dist) {
  LogProbEntropy out;
  out.log_probs.reserve(dist.probs.size());
  for (double p : dist.probs) {
    const double lp = floored_log(p);
    out.log_probs.push_back(lp);
    out.entropy -= p * lp;
  }
  return out;
}

}  // namespace pic
