#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "seqstage/procedures.hpp"

namespace seqstage {

/// Experiment settings read from a `key = value` file. Keys left out keep
/// the defaults below, which are those of the table1 study.
struct ExperimentConfig {
  std::string model_kind = "bernoulli";
  double p0 = 0.4, p1 = 0.6;
  double mu0 = 0.0, mu1 = 1.0;
  double log_d_inv = 10.0;
  double d_over_c = 10.0;
  double pi0 = 0.5;
  double w0 = 1.0, w1 = 1.0;
  std::int64_t reps = 100000;
  std::uint64_t seed = 1;
  std::optional<std::int64_t> max_total_n;
  std::string family = "auto";
  std::int64_t k = 1;

  HypothesisPair pair() const;
  CostSpec cost() const;
  TestFamily test_family() const;
  /// Throws ConfigError when a value breaks an invariant.
  void validate() const;
};

/// Parses config text. Unknown keys, malformed lines and invalid values
/// raise ConfigError carrying the 1-based line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// One line of the CSV report.
struct ReportRow {
  std::string test_id;
  double d_over_c = 0.0;
  std::int64_t reps = 0;
  RiskReport risk;
  double second_order_over_d = 0.0;
  std::string m_star;
  double r_tilde_over_d = 0.0;
};

std::vector<std::string> report_columns();
void write_csv(std::ostream& out, const std::vector<ReportRow>& rows);
/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);

/// reps / 2 trials under each truth. Replication r draws from substream r
/// of `seed` (truth 0 takes r < reps / 2), so the result does not depend on
/// the worker count.
RiskReport run_replications(const TestSpec& spec, std::int64_t reps, std::uint64_t seed, int workers = 1,
                            std::optional<std::int64_t> max_total_n = std::nullopt);

std::string test_id(const TestFamily& family);
std::string m_star_label(const HypothesisPair& pair, const CostSpec& cost);

/// Runs the configured test and the one-at-a-time baseline it is scored against.
ReportRow simulate(const ExperimentConfig& config, int workers = 1);

struct KstarPoint {
  std::int64_t k = 0;
  double en = 0.0;
  double em = 0.0;
  double risk_over_d = 0.0;
  double risk_over_d_se = 0.0;
};

struct KstarResult {
  std::int64_t k_star = 0;
  std::vector<KstarPoint> curve;
};

/// Integrated risk of GROUP(k) over a grid of k, every k seeing the same
/// observation paths.
KstarResult kstar_search(const HypothesisPair& pair, const CostSpec& cost, const std::vector<std::int64_t>& ks,
                         std::int64_t reps, std::uint64_t seed, int workers = 1,
                         std::optional<std::int64_t> max_total_n = std::nullopt);

/// {1, 3, ..., up to ceil(1.5 en)}.
std::vector<std::int64_t> default_k_grid(double en);

struct Table1Block {
  double d_over_c = 0.0;
  std::int64_t first_stage = 0;
  KstarResult kstar;
  std::vector<ReportRow> rows;  // delta, group_1, then the derived k values and k*
};

struct Table1Options {
  std::int64_t reps = 100000;
  std::uint64_t seed = 1;
  int workers = 1;
  std::vector<double> d_over_c{5.0, 10.0, 25.0};
  double log_d_inv = 10.0;
  std::int64_t kstar_reps = 0;  // 0 means reps
};

std::vector<Table1Block> table1(const Table1Options& options);

/// Human-readable design: per-side boundary, drift, stage budget, quantile,
/// the stage schedule along the noiseless path, predicted risk.
std::string design_summary(const ExperimentConfig& config);

/// Stage sizes of side i when every stage sum equals its expectation.
std::vector<std::int64_t> zero_noise_schedule(const TestSpec& spec, int side);

}  // namespace seqstage
