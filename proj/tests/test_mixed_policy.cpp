#include <doctest.h>

#include <cmath>

#include "pic/mixed_policy.hpp"

using namespace pic;

TEST_CASE("mix_distribution arithmetic") {
  const std::vector<double> core{0.2, 0.8};
  const auto half = mix_distribution(core, 0, PicWeight(0.5));
  CHECK(half.probs[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(half.probs[1] == doctest::Approx(0.4).epsilon(1e-15));

  const auto dirac = mix_distribution(core, 0, PicWeight(1.0));
  CHECK(dirac.probs[0] == 1.0);
  CHECK(dirac.probs[1] == 0.0);

  const auto same = mix_distribution(core, 1, PicWeight(0.0));
  CHECK(same.probs == core);
  const auto null_prev = mix_distribution(core, std::nullopt, PicWeight(0.9));
  CHECK(null_prev.probs == core);
  CHECK_THROWS_AS(mix_distribution(core, 2, PicWeight(0.5)), Error);
}

TEST_CASE("mixed distributions stay normalized") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> core(5);
    double z = 0.0;
    for (auto& p : core) z += p = uniform01(rng);
    for (auto& p : core) p /= z;
    const auto prev = static_cast<std::size_t>(rng() % 5);
    const double mu = uniform01(rng);
    const auto dist = mix_distribution(core, prev, PicWeight(mu));
    double total = 0.0;
    for (double p : dist.probs) {
      CHECK(p >= 0.0);
      total += p;
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
    CHECK(dist.probs[prev] >= mu - 1e-15);
  }
}

TEST_CASE("PicWeight invariants") {
  CHECK_THROWS_AS(PicWeight(1.2), Error);
  CHECK_THROWS_AS(PicWeight(-0.1), Error);
  CHECK_THROWS_AS(PicWeight(0.1, 0.2), Error);
  CHECK_NOTHROW(PicWeight(0.2, 0.2));
}

TEST_CASE("apply_lower_bound") {
  CHECK(apply_lower_bound(0.0, 0.2).value() == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(apply_lower_bound(1.0, 0.2).value() == 1.0);
  CHECK(apply_lower_bound(1.0, 0.6).value() == 1.0);
  CHECK(apply_lower_bound(0.5, 0.0).value() == 0.5);
  CHECK_THROWS_AS(apply_lower_bound(0.5, 1.5), Error);
  for (double raw = 0.0; raw <= 1.0; raw += 0.125)
    for (double mu0 : {0.0, 0.2, 0.4, 0.6}) CHECK(apply_lower_bound(raw, mu0).value() >= mu0);
  CHECK(unit_from_tanh(-1.0) == 0.0);
  CHECK(unit_from_tanh(1.0) == 1.0);
}

TEST_CASE("sample_mixed") {
  Rng rng(8);
  const MixedDistribution point{{1.0, 0.0}, {1.0, 0.0}, std::nullopt};
  for (int i = 0; i < 1000; ++i) CHECK(sample_mixed(point, rng) == 0);

  const MixedDistribution fair{{0.5, 0.5}, {0.5, 0.5}, std::nullopt};
  std::size_t zeros = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) zeros += sample_mixed(fair, rng) == 0;
  CHECK(std::abs(static_cast<double>(zeros) / n - 0.5) < 0.01);

  Rng a(77), b(77);
  for (int i = 0; i < 100; ++i) CHECK(sample_mixed(fair, a) == sample_mixed(fair, b));
}

TEST_CASE("mixed_log_prob_and_entropy") {
  const MixedDistribution uniform{{0.5, 0.5}, {0.5, 0.5}, std::nullopt};
  CHECK(mixed_log_prob_and_entropy(uniform).entropy == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const MixedDistribution point{{1.0, 0.0}, {1.0, 0.0}, std::nullopt};
  const auto pe = mixed_log_prob_and_entropy(point);
  CHECK(std::abs(pe.entropy) < 1e-12);
  CHECK(pe.log_probs[1] == doctest::Approx(std::log(kLogFloor)));
  CHECK(std::isfinite(pe.log_probs[1]));

  const MixedDistribution skewed{{0.6, 0.4}, {0.6, 0.4}, std::nullopt};
  CHECK(mixed_log_prob_and_entropy(skewed).entropy == doctest::Approx(0.6730116670092565).epsilon(1e-15));
}
