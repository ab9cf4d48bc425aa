#pragma once

#include <cstdint>
#include <optional>

#include "seqstage/procedures.hpp"

namespace seqstage {

/// Exact operating characteristics of a test under H_truth, obtained by a
/// forward sweep of probability mass over lattice states.
struct OracleResult {
  double en = 0.0;  // E(N | absorbed)
  double em = 0.0;  // E(M | absorbed)
  double err = 0.0;  // P(D = 1 - truth)
  double p_decide[2] = {0.0, 0.0};
  double absorbed = 0.0;
  /// Mass still undecided at the observation cap (or below the pruning
  /// floor) when the sweep ended.
  double truncation_mass = 0.0;
  /// Largest |live + absorbed + truncated - 1| over all sweeps.
  double conservation_error = 0.0;
  /// E(terminal llr) - E(N) E(llr increment), relative to E(terminal llr).
  double wald_residual = 0.0;
  double mean_terminal_llr = 0.0;
  std::int64_t states_visited = 0;
};

/// Requires a Bernoulli pair. Throws TruncationExcessive when the unabsorbed
/// mass exceeds `max_truncation`. The default cap is the test's default
/// observation budget.
OracleResult exact_characteristics(const TestSpec& spec, int truth,
                                   std::optional<std::int64_t> max_obs = std::nullopt,
                                   double max_truncation = 1e-9);

/// True iff err_i + truncation_mass <= d under both hypotheses.
bool wald_bound_check(const TestSpec& spec, double d, std::optional<std::int64_t> max_obs = std::nullopt);

}  // namespace seqstage
