#pragma once

#include <cstddef>
#include <vector>

#include "pic/mdp.hpp"

namespace pic::test {

/// One state, `n_actions` actions, every reward equal to `reward`.
inline MdpSpec single_state(std::size_t n_actions, double reward, double gamma,
                            std::optional<std::size_t> horizon = std::nullopt) {
  MdpSpec spec;
  spec.n_states = 1;
  spec.n_actions = n_actions;
  spec.transition.assign(n_actions, 1.0);
  spec.reward.assign(n_actions, reward);
  spec.rho0 = {1.0};
  spec.gamma = gamma;
  spec.horizon = horizon;
  return validate_mdp(spec);
}

/// Random stochastic core: rows drawn from a Dirichlet(1) with every entry positive.
inline TabularPolicy random_core(std::size_t n_states, std::size_t n_actions, Rng& rng) {
  TabularPolicy p{n_states, n_actions, std::vector<double>(n_states * n_actions)};
  std::exponential_distribution<double> expo(1.0);
  for (std::size_t s = 0; s < n_states; ++s) {
    double z = 0.0;
    for (auto& x : p.row(s)) z += x = expo(rng) + 1e-3;
    for (auto& x : p.row(s)) x /= z;
  }
  return p;
}

}  // namespace pic::test
