#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "seqstage/numeric.hpp"

namespace seqstage {

/// Stage-to-observation cost ratio as a function of the distance to the
/// boundary. Constant ratios are tagged so that composition with f^-1 is
/// skipped exactly.
class CostRatio {
 public:
  static CostRatio constant(double value);
  static CostRatio function(std::function<double(double)> fn);

  double operator()(double x) const;
  bool is_constant() const noexcept { return !fn_; }

 private:
  double value_ = 0.0;
  std::function<double(double)> fn_;
};

namespace family {
/// One block of n, then blocks of ceil(sqrt(n)).
struct Bold {
  std::int64_t n;
};
/// m-stage recursion ending in bold sampling tuned by the cost ratio h.
struct DeltaO {
  int m;
  CostRatio h;
};
/// m-stage recursion whose last planned stage targets quantile z.
struct DeltaPlus {
  int m;
  Quantile z;
};
/// Constant stage size k.
struct Group {
  std::int64_t k;
};
}  // namespace family

using SamplerFamily = std::variant<family::Bold, family::DeltaO, family::DeltaPlus, family::Group>;

struct SamplerSpec {
  SamplerFamily family;
  double mu = 1.0;        // drift of the standardized increments
  double boundary = 1.0;  // a > 0

  /// Throws DomainError when an invariant is violated.
  void validate() const;
  /// Default observation cap 100 a / mu.
  std::int64_t default_budget() const;
};

enum class Phase { staged, bold_first, bold_repeat };

struct SamplerState {
  double running_total = 0.0;
  double remaining = 0.0;  // boundary - running_total
  int stage_index = 0;     // completed stages
  int depth = 0;           // nonfinal stages still to come
  Phase phase = Phase::staged;
  std::int64_t bold_step = 0;
  int h_compositions = 0;  // times h has been composed with f^-1
  std::int64_t total_n = 0;
  std::vector<std::int64_t> stage_sizes;
};

struct CrossingResult {
  std::int64_t total_n = 0;
  int stages = 0;
  double overshoot = 0.0;
  std::vector<std::int64_t> stage_sizes;
};

using AdvanceResult = std::variant<SamplerState, CrossingResult>;

SamplerState initial_state(const SamplerSpec& spec);

/// Cost ratio in force at the current recursion level, h o (f^-1)^k.
double current_cost_ratio(const SamplerSpec& spec, const SamplerState& state, double x);

/// zeta(x) = -( sqrt(h(x)) / x^(1/4)  min  sqrt(1.5 log(x + 1)) ).
double bold_quantile(double h_value, double x);

std::int64_t next_stage_size(const SamplerSpec& spec, const SamplerState& state);

/// Folds one completed stage into the state. `taken` overrides the stage
/// size the sampler would have prescribed (a stage chosen by a caller that
/// is counted as this sampler's own).
AdvanceResult advance(const SamplerSpec& spec, const SamplerState& state, double stage_sum,
                      std::optional<std::int64_t> taken = std::nullopt);

/// As advance, but sets the running total directly so callers holding an
/// exact statistic avoid accumulated rounding.
AdvanceResult advance_to_total(const SamplerSpec& spec, const SamplerState& state,
                               double new_total, std::optional<std::int64_t> taken = std::nullopt);

/// Source of i.i.d. increments consumed a stage at a time.
class IncrementSource {
 public:
  virtual ~IncrementSource() = default;
  virtual double stage_sum(std::int64_t n) = 0;
};

/// Repeats a fixed cycle of increments.
class CyclicIncrements final : public IncrementSource {
 public:
  explicit CyclicIncrements(std::vector<double> cycle);
  double stage_sum(std::int64_t n) override;

 private:
  std::vector<double> cycle_;
  std::size_t pos_ = 0;
};

/// Distribution of the standardized increments used by Monte Carlo runs.
struct IncrementModel {
  enum class Kind { normal, bernoulli };
  Kind kind = Kind::normal;
  double mu = 1.0;  // normal: mean with unit variance
  double p = 0.5;   // bernoulli: P(X = 1), standardized to unit variance

  static IncrementModel normal(double mu);
  static IncrementModel bernoulli(double p);
  /// Mean of one standardized increment.
  double mean() const;
  std::unique_ptr<IncrementSource> make_source(std::uint64_t seed, std::uint64_t replication) const;
};

CrossingResult run_to_crossing(const SamplerSpec& spec, IncrementSource& increments,
                               std::optional<std::int64_t> max_total_n = std::nullopt);

struct SamplerRiskEstimate {
  double risk = 0.0;
  double risk_se = 0.0;
  double mean_n = 0.0;
  double mean_n_se = 0.0;
  double mean_m = 0.0;
  double mean_m_se = 0.0;
  double mean_overshoot = 0.0;
  /// mean(N - S_M / mu) with its standard error; zero in expectation.
  double wald_gap = 0.0;
  double wald_gap_se = 0.0;
  std::int64_t replications = 0;
};

/// Monte Carlo estimate of E(N - a/mu) + h_value * EM.
SamplerRiskEstimate estimate_sampler_risk(const SamplerSpec& spec, double h_value,
                                          std::int64_t replications, std::uint64_t seed,
                                          const IncrementModel& model, int workers = 1);

/// (1/mu)^(1 - 2^-k) F_h^(k)(a) for k = 1..m-1, with F_y(x) = sqrt(x log(x / y^2))
/// and y = h(a). Experimental diagnostic.
std::vector<double> schedule_thresholds(const SamplerSpec& spec, double a, const CostRatio& h);

}  // namespace seqstage
