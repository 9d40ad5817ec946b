#pragma once

// Property suites behind the `verify` command. Every check runs over a set of
// seeds and reports how many passed and the worst error measure observed; a
// seed passes when its measure is at most the check's tolerance.

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace pic {

struct CheckResult {
  std::string check;
  std::size_t seeds = 0;
  std::size_t pass_count = 0;
  double worst_violation = 0.0;
  double tolerance = 0.0;
  bool passed() const { return seeds > 0 && pass_count == seeds; }
};

struct VerifyReport {
  std::string suite;
  std::vector<CheckResult> checks;
  bool passed() const;
};

struct VerifyOptions {
  /// Number of seeds per check; 0 keeps each suite's own default.
  std::size_t seeds = 0;
  std::uint64_t base_seed = 0;
};

const std::vector<std::string>& verify_suite_names();

/// tabular: evaluation against dense linear solves at alpha 0 and 0.1, soft
///   policy iteration against soft value iteration, oscillation metrics.
/// gradcheck: central differences for every NSAC loss and the DQN TD loss,
///   plus the stop-gradient contract of the inertia loss.
/// reduction: NSAC with mu forced to 0 and no outer updates against SAC,
///   bitwise over 1000 updates.
/// theorem1: the symmetric witness and 100 Garnet cores.
/// lemma1: the intermediate improvement margin and the bound's homogeneity.
/// npi-monotone: J never decreases across outer iterations.
VerifyReport run_verify_suite(const std::string& suite, const VerifyOptions& options = {});

/// One line per check: check seeds pass_count worst_violation tolerance status
void print_report(std::ostream& out, const VerifyReport& report);

}  // namespace pic
