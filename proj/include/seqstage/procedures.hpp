#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "seqstage/models.hpp"
#include "seqstage/numeric.hpp"
#include "seqstage/sampler.hpp"

namespace seqstage {

/// Observation cost c, stage cost d (also the likelihood boundary scale),
/// priors and misclassification losses.
struct CostSpec {
  double c = 0.0;
  double d = 0.0;
  std::array<double, 2> pi{0.5, 0.5};
  std::array<double, 2> w{1.0, 1.0};

  /// d = exp(-log_d_inv), c = d / d_over_c.
  static CostSpec from_ratio(double log_d_inv, double d_over_c);
  void validate() const;
  double log_d_inv() const { return -std::log(d); }
  double d_over_c() const { return d / c; }
};

enum class TestKind { auto_delta_o, delta_plus, group };

struct TestFamily {
  TestKind kind = TestKind::auto_delta_o;
  std::int64_t k = 1;  // group only

  static TestFamily auto_delta_o() { return {TestKind::auto_delta_o, 1}; }
  static TestFamily delta_plus() { return {TestKind::delta_plus, 1}; }
  static TestFamily group(std::int64_t k) { return {TestKind::group, k}; }
};

/// Smallest m >= 1 with kappa_m h_m(a_i + 1) - kappa_{m+1} h_{m+1}(a_i + 1) <= d/c.
int m_star(const HypothesisPair& pair, int i, const CostSpec& cost);

/// Power-one sampler for side i: delta_o with h = d/c, or delta_plus with
/// z_i* from the evaluated hazard ratio. `case_two_switch` evaluates h_m at
/// sigma_0^-1 (1 - I_0/I_1) log d^-1 (side 0 only, requires I_0 < I_1).
SamplerSpec power_one_spec(const HypothesisPair& pair, int i, const CostSpec& cost, TestKind kind,
                           bool case_two_switch = false);

/// z* for a hazard ratio kappa_m h_m(arg) / (d/c).
Quantile design_quantile(int m, double mu, double arg, double d_over_c);

struct SideDesign {
  double a = 0.0;      // sigma_i^-1 log d^-1
  double mu = 0.0;     // I_i / sigma_i
  double sigma = 0.0;
  int m = 0;
  std::optional<Quantile> z;
  std::optional<SamplerSpec> sampler;  // absent for group tests
};

struct TestSpec {
  HypothesisPair pair;
  CostSpec cost;
  TestFamily family;
  std::array<SideDesign, 2> side;

  static TestSpec make(const HypothesisPair& pair, const CostSpec& cost, const TestFamily& family);
  double log_d_inv() const { return cost.log_d_inv(); }
  /// Size of the stage shared by both power-one samplers.
  std::int64_t first_stage() const;
  /// Observation cap used when the caller gives none.
  std::int64_t default_budget() const;
  /// Side chosen after the first stage given its log-likelihood ratio.
  int select_side(double llr) const;
  /// sign_i * llr / sigma_i, the running total of side i's standardized increments.
  double side_total(int i, double llr) const;
};

struct TrialRecord {
  std::int64_t n = 0;
  int m = 0;
  int decision = 0;  // D = i rejects H_{1-i}
  double terminal_llr = 0.0;
  std::vector<std::int64_t> stage_sizes;
  int truth = 0;
  int side = -1;  // power-one side selected after stage 1; -1 for group tests
};

TrialRecord run_trial(const TestSpec& spec, ObservationSource& source,
                      std::optional<std::int64_t> max_total_n = std::nullopt);

/// Per-truth sufficient statistics of a batch of trials.
struct TruthSummary {
  std::int64_t count = 0;
  double en = 0.0, en_var = 0.0;
  double em = 0.0, em_var = 0.0;
  double err = 0.0, err_var = 0.0;  // P_truth(D = 1 - truth)
  double risk = 0.0, risk_var = 0.0;  // c N + d M + w 1{D = 1 - truth}
  /// Terminal llr minus N times its per-observation mean; zero in
  /// expectation by Wald's identity. Left at 0 when no drift is given.
  double wald_gap = 0.0, wald_gap_var = 0.0;

  static TruthSummary from(const std::vector<TrialRecord>& records, int truth, const CostSpec& cost,
                           std::optional<double> llr_drift = std::nullopt);
};

struct RiskReport {
  std::array<TruthSummary, 2> by_truth;
  double en = 0.0, en_se = 0.0;
  double em = 0.0, em_se = 0.0;
  double err0 = 0.0, err1 = 0.0;
  double risk = 0.0, risk_se = 0.0;
  double risk_over_d = 0.0;
};

/// r = sum_i pi_i [c E_i N + d E_i M + w_i P_i(D = 1 - i)].
RiskReport integrated_risk(const std::vector<TrialRecord>& truth0, const std::vector<TrialRecord>& truth1,
                           const CostSpec& cost);
RiskReport integrated_risk(const std::array<TruthSummary, 2>& by_truth, const CostSpec& cost);

/// r - c EN_1 - d, with EN_1 the mixture EN of the one-at-a-time test.
double second_order_risk(const RiskReport& report, double baseline_en_group1, const CostSpec& cost);

struct PredictedRisk {
  std::array<int, 2> m_star{};
  double r_tilde_over_d = 0.0;
};

/// r~/d = sum_i pi_i [(c/d) log d^-1 / I_i + m_i*].
PredictedRisk predicted_risk(const HypothesisPair& pair, const CostSpec& cost);

}  // namespace seqstage
