#include "seqstage/oracle.hpp"

#include <cmath>
#include <map>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "seqstage/error.hpp"

namespace seqstage {

namespace {

// Mass below this is moved to the truncation account instead of swept on.
constexpr double kPruneFloor = 1e-18;

// Full sampler state of one lattice point. Stage sizes of the variable-stage
// tests depend on more than (net, stage, side) once bold sampling starts,
// so every field that next_stage_size reads is part of the key.
struct Key {
  std::int64_t obs = 0;
  std::int64_t ones = 0;
  int side = -1;  // -1 before the first stage resolves the side
  int stage = 0;
  int depth = 0;
  int phase = 0;
  std::int64_t bold_step = 0;
  int h_compositions = 0;

  auto tie() const { return std::tie(obs, ones, side, stage, depth, phase, bold_step, h_compositions); }
  bool operator<(const Key& o) const { return tie() < o.tie(); }
};

// Binomial(n, p) probabilities by the log-space ratio recurrence.
class BinomialTable {
 public:
  explicit BinomialTable(double p) : p_(p), log_odds_(std::log(p / (1.0 - p))), log_q_(std::log1p(-p)) {}

  const std::vector<double>& pmf(std::int64_t n) {
    auto it = cache_.find(n);
    if (it != cache_.end()) return it->second;
    std::vector<double> out(static_cast<std::size_t>(n + 1));
    double lp = static_cast<double>(n) * log_q_;
    for (std::int64_t b = 0; b <= n; ++b) {
      out[static_cast<std::size_t>(b)] = std::exp(lp);
      lp += std::log(static_cast<double>(n - b) / static_cast<double>(b + 1)) + log_odds_;
    }
    return cache_.emplace(n, std::move(out)).first->second;
  }

 private:
  double p_;
  double log_odds_;
  double log_q_;
  std::unordered_map<std::int64_t, std::vector<double>> cache_;
};

double clamped_total(const TestSpec& spec, int side, double llr) {
  const double t = spec.side_total(side, llr);
  const double a = spec.side[side].sampler->boundary;
  return t < a ? t : std::nextafter(a, 0.0);
}

SamplerState to_state(const TestSpec& spec, const Key& k) {
  SamplerState s;
  s.running_total = clamped_total(spec, k.side, spec.pair.llr(k.obs, static_cast<double>(k.ones)));
  s.remaining = spec.side[k.side].sampler->boundary - s.running_total;
  s.stage_index = k.stage;
  s.depth = k.depth;
  s.phase = static_cast<Phase>(k.phase);
  s.bold_step = k.bold_step;
  s.h_compositions = k.h_compositions;
  s.total_n = k.obs;
  return s;
}

Key to_key(const SamplerState& s, int side, std::int64_t ones) {
  Key k;
  k.obs = s.total_n;
  k.ones = ones;
  k.side = side;
  k.stage = s.stage_index;
  k.depth = s.depth;
  k.phase = static_cast<int>(s.phase);
  k.bold_step = s.bold_step;
  k.h_compositions = s.h_compositions;
  return k;
}

}  // namespace

OracleResult exact_characteristics(const TestSpec& spec, int truth, std::optional<std::int64_t> max_obs,
                                   double max_truncation) {
  if (spec.pair.kind() != HypothesisPair::Kind::bernoulli)
    throw DomainError("exact_characteristics: requires a Bernoulli pair");
  if (truth != 0 && truth != 1) throw DomainError("exact_characteristics: truth must be 0 or 1");
  const std::int64_t cap = max_obs ? *max_obs : spec.default_budget();
  const double bound = spec.log_d_inv();
  const bool group = spec.family.kind == TestKind::group;
  BinomialTable binom(spec.pair.param(truth));

  OracleResult out;
  double sum_n = 0.0, sum_m = 0.0, sum_llr = 0.0;
  std::map<Key, double> live;
  live[Key{}] = 1.0;

  while (!live.empty()) {
    std::map<Key, double> next;
    for (const auto& [key, prob] : live) {
      ++out.states_visited;
      std::optional<SamplerState> state;
      std::int64_t n = 0;
      if (group) {
        n = spec.family.k;
      } else if (key.side < 0) {
        n = spec.first_stage();
      } else {
        state = to_state(spec, key);
        n = next_stage_size(*spec.side[key.side].sampler, *state);
      }
      const std::vector<double>& pmf = binom.pmf(n);
      const std::int64_t obs = key.obs + n;
      for (std::int64_t b = 0; b <= n; ++b) {
        const double q = prob * pmf[static_cast<std::size_t>(b)];
        if (q == 0.0) continue;
        const std::int64_t ones = key.ones + b;
        const double llr = spec.pair.llr(obs, static_cast<double>(ones));
        if (llr >= bound || llr <= -bound) {
          const int d = llr >= bound ? 0 : 1;
          out.p_decide[d] += q;
          sum_n += q * static_cast<double>(obs);
          sum_m += q * (key.stage + 1);
          sum_llr += q * llr;
          continue;
        }
        if (obs > cap) {
          out.truncation_mass += q;
          continue;
        }
        Key nk;
        if (group) {
          nk.obs = obs;
          nk.ones = ones;
          nk.stage = key.stage + 1;
        } else {
          const int side = key.side < 0 ? spec.select_side(llr) : key.side;
          const SamplerSpec& sampler = *spec.side[side].sampler;
          const SamplerState from = key.side < 0 ? initial_state(sampler) : *state;
          const AdvanceResult r = advance_to_total(sampler, from, clamped_total(spec, side, llr), n);
          nk = to_key(std::get<SamplerState>(r), side, ones);
        }
        next[nk] += q;
      }
    }

    double live_mass = 0.0;
    for (const auto& kv : next) live_mass += kv.second;
    if (live_mass < kPruneFloor) {
      out.truncation_mass += live_mass;
      next.clear();
      live_mass = 0.0;
    }
    const double total = live_mass + out.p_decide[0] + out.p_decide[1] + out.truncation_mass;
    out.conservation_error = std::max(out.conservation_error, std::abs(total - 1.0));
    live = std::move(next);
  }

  out.absorbed = out.p_decide[0] + out.p_decide[1];
  if (out.truncation_mass > max_truncation)
    throw TruncationExcessive("exact_characteristics: unabsorbed mass exceeds tolerance", out.truncation_mass);
  out.en = sum_n / out.absorbed;
  out.em = sum_m / out.absorbed;
  out.err = out.p_decide[1 - truth];
  out.mean_terminal_llr = sum_llr / out.absorbed;
  const double expected = sum_n * spec.pair.mean_llr_increment(truth);
  out.wald_residual = (sum_llr - expected) / std::max(1.0, std::abs(sum_llr));
  return out;
}

bool wald_bound_check(const TestSpec& spec, double d, std::optional<std::int64_t> max_obs) {
  for (int truth = 0; truth < 2; ++truth) {
    const OracleResult r = exact_characteristics(spec, truth, max_obs);
    if (r.err + r.truncation_mass > d) return false;
  }
  return true;
}

}  // namespace seqstage
