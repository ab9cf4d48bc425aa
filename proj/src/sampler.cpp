#include "seqstage/sampler.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <type_traits>

#include "seqstage/error.hpp"
#include "seqstage/parallel.hpp"

namespace seqstage {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

int recursion_budget(const SamplerSpec& spec) {
  if (const auto* o = std::get_if<family::DeltaO>(&spec.family)) return o->m;
  if (const auto* p = std::get_if<family::DeltaPlus>(&spec.family)) return p->m;
  return 0;
}

// Phase a recursion enters once every nonfinal stage is spent.
Phase depth_zero_phase(const SamplerSpec& spec) {
  if (std::holds_alternative<family::DeltaO>(spec.family)) return Phase::bold_first;
  if (const auto* p = std::get_if<family::DeltaPlus>(&spec.family))
    return p->z.is_neg_inf() ? Phase::bold_first : Phase::staged;
  return Phase::staged;
}

double nonfinal_quantile(int depth, double x) {
  return std::sqrt((1.0 - std::ldexp(1.0, -depth)) * std::log1p(x));
}

std::int64_t ceil_sqrt(std::int64_t n) {
  auto r = static_cast<std::int64_t>(std::sqrt(static_cast<double>(n)));
  while (r * r < n) ++r;
  while (r > 1 && (r - 1) * (r - 1) >= n) --r;
  return r < 1 ? 1 : r;
}

class NormalIncrements final : public IncrementSource {
 public:
  NormalIncrements(double mu, std::uint64_t seed) : mu_(mu), engine_(seed) {}
  // Stage sums of N(mu, 1) increments are drawn directly as N(n mu, n).
  double stage_sum(std::int64_t n) override {
    const auto dn = static_cast<double>(n);
    std::normal_distribution<double> dist(dn * mu_, std::sqrt(dn));
    return dist(engine_);
  }

 private:
  double mu_;
  std::mt19937_64 engine_;
};

class BernoulliIncrements final : public IncrementSource {
 public:
  BernoulliIncrements(double p, std::uint64_t seed)
      : p_(p), scale_(1.0 / std::sqrt(p * (1.0 - p))), engine_(seed) {}
  double stage_sum(std::int64_t n) override {
    std::binomial_distribution<std::int64_t> dist(n, p_);
    return static_cast<double>(dist(engine_)) * scale_;
  }

 private:
  double p_;
  double scale_;
  std::mt19937_64 engine_;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& xs) {
  MeanSe out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  return out;
}

}  // namespace

CostRatio CostRatio::constant(double value) {
  if (!(value > 0.0) || !std::isfinite(value))
    throw DomainError("CostRatio::constant: value must be > 0");
  CostRatio h;
  h.value_ = value;
  return h;
}

CostRatio CostRatio::function(std::function<double(double)> fn) {
  if (!fn) throw DomainError("CostRatio::function: empty function");
  CostRatio h;
  h.fn_ = std::move(fn);
  return h;
}

double CostRatio::operator()(double x) const {
  if (!fn_) return value_;
  const double v = fn_(x);
  if (!(v > 0.0)) throw DomainError("CostRatio: h(x) must be > 0");
  return v;
}

void SamplerSpec::validate() const {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw DomainError("SamplerSpec: mu must be > 0");
  if (!(boundary > 0.0) || !std::isfinite(boundary))
    throw DomainError("SamplerSpec: boundary must be > 0");
  std::visit(overloaded{
                 [](const family::Bold& b) {
                   if (b.n < 1) throw DomainError("SamplerSpec: bold n must be >= 1");
                 },
                 [](const family::DeltaO& o) {
                   if (o.m < 1) throw DomainError("SamplerSpec: m must be >= 1");
                 },
                 [](const family::DeltaPlus& p) {
                   if (p.m < 1) throw DomainError("SamplerSpec: m must be >= 1");
                 },
                 [](const family::Group& g) {
                   if (g.k < 1) throw DomainError("SamplerSpec: k must be >= 1");
                 },
             },
             family);
}

std::int64_t SamplerSpec::default_budget() const {
  const double cap = std::ceil(100.0 * boundary / mu);
  return cap < 100.0 ? 100 : static_cast<std::int64_t>(std::min(cap, 9.0e15));
}

SamplerState initial_state(const SamplerSpec& spec) {
  spec.validate();
  SamplerState s;
  s.remaining = spec.boundary;
  const int m = recursion_budget(spec);
  if (m > 0) {
    s.depth = m - 1;
    s.phase = s.depth > 0 ? Phase::staged : depth_zero_phase(spec);
  } else if (std::holds_alternative<family::Bold>(spec.family)) {
    s.phase = Phase::bold_first;
  }
  return s;
}

double current_cost_ratio(const SamplerSpec& spec, const SamplerState& state, double x) {
  const auto* o = std::get_if<family::DeltaO>(&spec.family);
  if (!o) throw DomainError("current_cost_ratio: sampler has no cost ratio");
  if (o->h.is_constant()) return o->h(x);
  double y = x;
  for (int k = 0; k < state.h_compositions; ++k) y = f_inverse(y, spec.mu);
  return o->h(y);
}

double bold_quantile(double h_value, double x) {
  if (!(x > 0.0)) throw DomainError("bold_quantile: x must be > 0");
  if (!(h_value > 0.0)) throw DomainError("bold_quantile: h must be > 0");
  const double by_cost = std::sqrt(h_value) / std::pow(x, 0.25);
  const double cap = std::sqrt(1.5 * std::log1p(x));
  return -std::min(by_cost, cap);
}

std::int64_t next_stage_size(const SamplerSpec& spec, const SamplerState& state) {
  if (!(state.remaining > 0.0))
    throw DomainError("next_stage_size: boundary already crossed");
  const double x = state.remaining;
  const double mu = spec.mu;

  if (const auto* g = std::get_if<family::Group>(&spec.family)) return g->k;

  switch (state.phase) {
    case Phase::bold_repeat:
      return state.bold_step;
    case Phase::bold_first:
      return std::visit(
          overloaded{
              [](const family::Bold& b) -> std::int64_t { return b.n; },
              [&](const family::DeltaO&) -> std::int64_t {
                return stage_size(x, bold_quantile(current_cost_ratio(spec, state, x), x), mu);
              },
              [&](const family::DeltaPlus&) -> std::int64_t {
                return stage_size(x, -std::sqrt(std::log1p(x)), mu);
              },
              [](const family::Group& g) -> std::int64_t { return g.k; },
          },
          spec.family);
    case Phase::staged:
      break;
  }

  if (state.depth >= 1) return stage_size(x, nonfinal_quantile(state.depth, x), mu);
  const auto* p = std::get_if<family::DeltaPlus>(&spec.family);
  if (!p) throw std::logic_error("next_stage_size: staged phase at depth 0");
  return stage_size(x, p->z.value(), mu);
}

AdvanceResult advance_to_total(const SamplerSpec& spec, const SamplerState& state,
                               double new_total, std::optional<std::int64_t> taken) {
  const std::int64_t n = taken ? *taken : next_stage_size(spec, state);
  if (n < 1) throw DomainError("advance: stage size must be >= 1");

  SamplerState next = state;
  next.running_total = new_total;
  next.remaining = spec.boundary - new_total;
  next.stage_index += 1;
  next.total_n += n;
  next.stage_sizes.push_back(n);

  if (!(next.remaining > 0.0)) {
    CrossingResult out;
    out.total_n = next.total_n;
    out.stages = next.stage_index;
    out.overshoot = std::max(0.0, new_total - spec.boundary);
    out.stage_sizes = std::move(next.stage_sizes);
    return out;
  }

  if (std::holds_alternative<family::Group>(spec.family)) return next;

  switch (state.phase) {
    case Phase::bold_first:
      next.phase = Phase::bold_repeat;
      next.bold_step = ceil_sqrt(n);
      break;
    case Phase::bold_repeat:
      break;
    case Phase::staged:
      if (state.depth >= 1) {
        next.depth = state.depth - 1;
        if (std::holds_alternative<family::DeltaO>(spec.family)) next.h_compositions += 1;
        if (next.depth == 0) next.phase = depth_zero_phase(spec);
      } else {
        // The final z-targeted stage of delta+ hands over to bold sampling.
        next.phase = Phase::bold_first;
      }
      break;
  }
  return next;
}

AdvanceResult advance(const SamplerSpec& spec, const SamplerState& state, double stage_sum,
                      std::optional<std::int64_t> taken) {
  return advance_to_total(spec, state, state.running_total + stage_sum, taken);
}

CyclicIncrements::CyclicIncrements(std::vector<double> cycle) : cycle_(std::move(cycle)) {
  if (cycle_.empty()) throw DomainError("CyclicIncrements: empty cycle");
}

double CyclicIncrements::stage_sum(std::int64_t n) {
  double sum = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    sum += cycle_[pos_];
    pos_ = (pos_ + 1) % cycle_.size();
  }
  return sum;
}

IncrementModel IncrementModel::normal(double mu) {
  IncrementModel m;
  m.kind = Kind::normal;
  m.mu = mu;
  return m;
}

IncrementModel IncrementModel::bernoulli(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("IncrementModel::bernoulli: p must be in (0,1)");
  IncrementModel m;
  m.kind = Kind::bernoulli;
  m.p = p;
  return m;
}

double IncrementModel::mean() const {
  if (kind == Kind::normal) return mu;
  return p / std::sqrt(p * (1.0 - p));
}

std::unique_ptr<IncrementSource> IncrementModel::make_source(std::uint64_t seed,
                                                             std::uint64_t replication) const {
  const std::uint64_t s = replication_seed(seed, replication);
  if (kind == Kind::normal) return std::make_unique<NormalIncrements>(mu, s);
  return std::make_unique<BernoulliIncrements>(p, s);
}

CrossingResult run_to_crossing(const SamplerSpec& spec, IncrementSource& increments,
                               std::optional<std::int64_t> max_total_n) {
  const std::int64_t cap = max_total_n ? *max_total_n : spec.default_budget();
  SamplerState state = initial_state(spec);
  for (;;) {
    const std::int64_t n = next_stage_size(spec, state);
    if (state.total_n + n > cap)
      throw BudgetExceeded("run_to_crossing: observation budget exceeded", cap);
    AdvanceResult r = advance(spec, state, increments.stage_sum(n), n);
    if (auto* crossed = std::get_if<CrossingResult>(&r)) return std::move(*crossed);
    state = std::move(std::get<SamplerState>(r));
  }
}

SamplerRiskEstimate estimate_sampler_risk(const SamplerSpec& spec, double h_value,
                                          std::int64_t replications, std::uint64_t seed,
                                          const IncrementModel& model, int workers) {
  if (replications < 1) throw DomainError("estimate_sampler_risk: replications must be >= 1");
  if (!(h_value >= 0.0)) throw DomainError("estimate_sampler_risk: h must be >= 0");
  spec.validate();
  const double drift = model.mean();
  const auto count = static_cast<std::size_t>(replications);
  std::vector<double> risk(count), n(count), m(count), over(count), gap(count);

  parallel_for(replications, workers, [&](std::int64_t i) {
    auto src = model.make_source(seed, static_cast<std::uint64_t>(i));
    const CrossingResult r = run_to_crossing(spec, *src);
    const auto k = static_cast<std::size_t>(i);
    const auto total = static_cast<double>(r.total_n);
    n[k] = total;
    m[k] = r.stages;
    over[k] = r.overshoot;
    risk[k] = (total - spec.boundary / drift) + h_value * r.stages;
    gap[k] = total - (spec.boundary + r.overshoot) / drift;
  });

  SamplerRiskEstimate out;
  out.replications = replications;
  const MeanSe rs = mean_se(risk), ns = mean_se(n), ms = mean_se(m), gs = mean_se(gap);
  out.risk = rs.mean;
  out.risk_se = rs.se;
  out.mean_n = ns.mean;
  out.mean_n_se = ns.se;
  out.mean_m = ms.mean;
  out.mean_m_se = ms.se;
  out.mean_overshoot = mean_se(over).mean;
  out.wald_gap = gs.mean;
  out.wald_gap_se = gs.se;
  return out;
}

std::vector<double> schedule_thresholds(const SamplerSpec& spec, double a, const CostRatio& h) {
  const int m = recursion_budget(spec);
  if (m < 1) throw DomainError("schedule_thresholds: sampler must be delta_o or delta_plus");
  if (!(a > 0.0)) throw DomainError("schedule_thresholds: a must be > 0");
  const double y = h(a);
  std::vector<double> out;
  double x = a;
  for (int k = 1; k < m; ++k) {
    const double arg = x / (y * y);
    if (!(arg > 1.0)) throw DomainError("schedule_thresholds: log argument <= 1");
    x = std::sqrt(x * std::log(arg));
    out.push_back(std::pow(1.0 / spec.mu, 1.0 - std::ldexp(1.0, -k)) * x);
  }
  return out;
}

}  // namespace seqstage
