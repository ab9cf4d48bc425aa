#include "seqstage/models.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "seqstage/error.hpp"
#include "seqstage/parallel.hpp"

namespace seqstage {

namespace {

void check_index(int i) {
  if (i != 0 && i != 1) throw DomainError("hypothesis index must be 0 or 1");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

HypothesisPair HypothesisPair::bernoulli(double p0, double p1) {
  if (!(p0 > 0.0 && p0 < 1.0) || !(p1 > 0.0 && p1 < 1.0))
    throw DomainError("bernoulli_pair: probabilities must lie in (0, 1)");
  if (p0 == p1) throw DomainError("bernoulli_pair: p0 must differ from p1");
  HypothesisPair h;
  h.kind_ = Kind::bernoulli;
  h.param_ = {p0, p1};
  h.log_one_ = std::log(p0 / p1);
  h.log_zero_ = std::log((1.0 - p0) / (1.0 - p1));
  h.symmetric_ = (p1 == 1.0 - p0);
  if (h.symmetric_) h.log_one_ = -h.log_zero_;
  const double spread = h.log_zero_ - h.log_one_;
  h.info_[0] = p0 * h.log_one_ + (1.0 - p0) * h.log_zero_;
  h.info_[1] = -(p1 * h.log_one_ + (1.0 - p1) * h.log_zero_);
  for (int i = 0; i < 2; ++i) h.sigma_[i] = std::sqrt(h.param_[i] * (1.0 - h.param_[i])) * std::abs(spread);
  if (h.symmetric_) {
    h.info_[1] = h.info_[0];
    h.sigma_[1] = h.sigma_[0];
  }
  return h;
}

HypothesisPair HypothesisPair::normal_mean(double mu0, double mu1) {
  if (!std::isfinite(mu0) || !std::isfinite(mu1)) throw DomainError("normal_mean_pair: non-finite mean");
  if (mu0 == mu1) throw DomainError("normal_mean_pair: mu0 must differ from mu1");
  HypothesisPair h;
  h.kind_ = Kind::normal_mean;
  h.param_ = {mu0, mu1};
  const double gap = mu1 - mu0;
  h.info_ = {0.5 * gap * gap, 0.5 * gap * gap};
  h.sigma_ = {std::abs(gap), std::abs(gap)};
  h.symmetric_ = true;
  return h;
}

double HypothesisPair::param(int i) const {
  check_index(i);
  return param_[i];
}

double HypothesisPair::information(int i) const {
  check_index(i);
  return info_[i];
}

double HypothesisPair::sigma(int i) const {
  check_index(i);
  return sigma_[i];
}

double HypothesisPair::llr_increment(double x) const {
  if (kind_ == Kind::bernoulli) {
    if (x == 1.0) return log_one_;
    if (x == 0.0) return log_zero_;
    throw DomainError("llr_increment: Bernoulli observation must be 0 or 1");
  }
  if (!std::isfinite(x)) throw DomainError("llr_increment: non-finite observation");
  const double m0 = param_[0], m1 = param_[1];
  return 0.5 * ((x - m1) * (x - m1) - (x - m0) * (x - m0));
}

double HypothesisPair::standardized_increment(int i, double x) const {
  check_index(i);
  const double l = llr_increment(x);
  return (i == 0 ? l : -l) / sigma_[i];
}

double HypothesisPair::llr(std::int64_t n, double total) const {
  if (kind_ == Kind::bernoulli) {
    const auto ones = static_cast<std::int64_t>(total);
    const std::int64_t zeros = n - ones;
    if (symmetric_) return static_cast<double>(zeros - ones) * log_zero_;
    return static_cast<double>(ones) * log_one_ + static_cast<double>(zeros) * log_zero_;
  }
  const double m0 = param_[0], m1 = param_[1];
  return (m0 - m1) * total + 0.5 * static_cast<double>(n) * (m1 * m1 - m0 * m0);
}

double HypothesisPair::mean_llr_increment(int truth) const {
  check_index(truth);
  return truth == 0 ? info_[0] : -info_[1];
}

double HypothesisPair::lattice_step() const {
  if (kind_ != Kind::bernoulli || !symmetric_)
    throw DomainError("lattice_step: requires a symmetric Bernoulli pair");
  return std::abs(log_zero_);
}

std::string HypothesisPair::kind_name() const {
  return kind_ == Kind::bernoulli ? "bernoulli" : "normal";
}

SimulatedSource::SimulatedSource(const HypothesisPair& pair, int truth, std::uint64_t seed,
                                 std::uint64_t replication)
    : pair_(pair), truth_(truth), engine_(replication_seed(seed, replication)) {
  check_index(truth);
}

double SimulatedSource::take(std::int64_t n) {
  if (n < 1) throw DomainError("take: n must be >= 1");
  position_ += n;
  const double theta = pair_.param(truth_);
  if (pair_.kind() == HypothesisPair::Kind::bernoulli) {
    std::binomial_distribution<std::int64_t> dist(n, theta);
    return static_cast<double>(dist(engine_));
  }
  const auto dn = static_cast<double>(n);
  std::normal_distribution<double> dist(dn * theta, std::sqrt(dn));
  return dist(engine_);
}

PathSource::PathSource(const HypothesisPair& pair, int truth, std::uint64_t seed,
                       std::uint64_t replication)
    : pair_(pair), truth_(truth), engine_(replication_seed(seed, replication)) {
  check_index(truth);
  prefix_.reserve(512);
}

void PathSource::extend(std::int64_t upto) {
  const double theta = pair_.param(truth_);
  const bool bern = pair_.kind() == HypothesisPair::Kind::bernoulli;
  std::bernoulli_distribution coin(bern ? theta : 0.5);
  std::normal_distribution<double> gauss(bern ? 0.0 : theta, 1.0);
  while (static_cast<std::int64_t>(prefix_.size()) <= upto) {
    const double x = bern ? (coin(engine_) ? 1.0 : 0.0) : gauss(engine_);
    prefix_.push_back(prefix_.back() + x);
  }
}

double PathSource::take(std::int64_t n) {
  if (n < 1) throw DomainError("take: n must be >= 1");
  const std::int64_t end = position_ + n;
  extend(end);
  const double sum = prefix_[static_cast<std::size_t>(end)] - prefix_[static_cast<std::size_t>(position_)];
  position_ = end;
  return sum;
}

ReplaySource::ReplaySource(std::vector<double> observations, int truth)
    : obs_(std::move(observations)), truth_(truth) {
  check_index(truth);
}

ReplaySource ReplaySource::load(const std::filesystem::path& path, const HypothesisPair& pair) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open replay file " + path.string());
  std::string line;
  int lineno = 0;
  int truth = -1;
  std::vector<double> obs;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      if (truth >= 0) continue;
      std::istringstream ss(t.substr(1));
      std::string tok, model;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
        if (key == "model") model = value;
        if (key == "truth") {
          if (value != "0" && value != "1") throw ConfigError("replay: truth must be 0 or 1", lineno);
          truth = value[0] - '0';
        }
      }
      if (model.empty() || truth < 0) throw ConfigError("replay: malformed header", lineno);
      if (model != pair.kind_name())
        throw ConfigError("replay: model " + model + " does not match " + pair.kind_name(), lineno);
      continue;
    }
    if (truth < 0) throw ConfigError("replay: header must precede observations", lineno);
    if (pair.kind() == HypothesisPair::Kind::bernoulli) {
      if (t != "0" && t != "1") throw ConfigError("replay: Bernoulli observation must be 0 or 1", lineno);
      obs.push_back(t == "1" ? 1.0 : 0.0);
    } else {
      std::size_t used = 0;
      double x = 0.0;
      try {
        x = std::stod(t, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != t.size() || !std::isfinite(x)) throw ConfigError("replay: bad observation", lineno);
      obs.push_back(x);
    }
  }
  if (truth < 0) throw ConfigError("replay: missing header");
  return ReplaySource(std::move(obs), truth);
}

double ReplaySource::take(std::int64_t n) {
  if (n < 1) throw DomainError("take: n must be >= 1");
  if (position_ + n > static_cast<std::int64_t>(obs_.size()))
    throw std::runtime_error("replay source exhausted");
  double sum = 0.0;
  for (std::int64_t j = 0; j < n; ++j) sum += obs_[static_cast<std::size_t>(position_ + j)];
  position_ += n;
  return sum;
}

}  // namespace seqstage
