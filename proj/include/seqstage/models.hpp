#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace seqstage {

/// Two simple hypotheses for i.i.d. observations. Log-likelihood ratios use
/// the f_0-numerator convention, so they drift upward under H_0.
class HypothesisPair {
 public:
  enum class Kind { bernoulli, normal_mean };

  static HypothesisPair bernoulli(double p0, double p1);
  static HypothesisPair normal_mean(double mu0, double mu1);

  Kind kind() const noexcept { return kind_; }
  /// p_i for Bernoulli, mean_i for Normal.
  double param(int i) const;
  double information(int i) const;
  double sigma(int i) const;
  /// Drift of the standardized increments under H_i, I_i / sigma_i.
  double drift(int i) const { return information(i) / sigma(i); }
  /// I_0 == I_1 and sigma_0 == sigma_1 (Case I).
  bool symmetric() const noexcept { return symmetric_; }

  double llr_increment(double x) const;
  double standardized_increment(int i, double x) const;
  /// Log-likelihood ratio of n observations with sum `total` (for
  /// Bernoulli, the number of ones). Bernoulli values are formed from the
  /// counts in one step so partial sums stay on the lattice.
  double llr(std::int64_t n, double total) const;
  /// E_truth of one log-likelihood-ratio increment.
  double mean_llr_increment(int truth) const;
  /// For a symmetric Bernoulli pair, the lattice step ln(p1 (1 - p0) / (p0 (1 - p1))) / 2.
  double lattice_step() const;

  std::string kind_name() const;

 private:
  Kind kind_ = Kind::bernoulli;
  std::array<double, 2> param_{};
  std::array<double, 2> info_{};
  std::array<double, 2> sigma_{};
  double log_one_ = 0.0;   // llr of x = 1 (Bernoulli)
  double log_zero_ = 0.0;  // llr of x = 0 (Bernoulli)
  bool symmetric_ = false;
};

/// Observations consumed a stage at a time. take(n) returns the sum of the
/// next n observations (the sufficient statistic for both families).
class ObservationSource {
 public:
  virtual ~ObservationSource() = default;
  virtual double take(std::int64_t n) = 0;
  virtual int truth() const = 0;
  std::int64_t position() const noexcept { return position_; }

 protected:
  std::int64_t position_ = 0;
};

/// Random observations under H_truth on the substream of one replication.
/// Stage sums are drawn directly from their exact distribution.
class SimulatedSource final : public ObservationSource {
 public:
  SimulatedSource(const HypothesisPair& pair, int truth, std::uint64_t seed,
                  std::uint64_t replication);
  double take(std::int64_t n) override;
  int truth() const override { return truth_; }

 private:
  HypothesisPair pair_;
  int truth_;
  std::mt19937_64 engine_;
};

/// Observation-by-observation path that can be rewound, so several tests
/// see the same realized data (common random numbers).
class PathSource final : public ObservationSource {
 public:
  PathSource(const HypothesisPair& pair, int truth, std::uint64_t seed, std::uint64_t replication);
  double take(std::int64_t n) override;
  int truth() const override { return truth_; }
  void rewind() noexcept { position_ = 0; }

 private:
  void extend(std::int64_t upto);

  HypothesisPair pair_;
  int truth_;
  std::mt19937_64 engine_;
  std::vector<double> prefix_{0.0};
};

/// Recorded observations. File format: header `# model=<kind> truth=<i>`,
/// then one observation per line (only 0 or 1 for Bernoulli).
class ReplaySource final : public ObservationSource {
 public:
  ReplaySource(std::vector<double> observations, int truth);
  static ReplaySource load(const std::filesystem::path& path, const HypothesisPair& pair);

  double take(std::int64_t n) override;
  int truth() const override { return truth_; }
  std::size_t size() const noexcept { return obs_.size(); }

 private:
  std::vector<double> obs_;
  int truth_;
};

}  // namespace seqstage
