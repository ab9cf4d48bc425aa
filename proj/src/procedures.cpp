#include "seqstage/procedures.hpp"

#include <algorithm>
#include <limits>

#include "seqstage/error.hpp"

namespace seqstage {

namespace {

constexpr int kMaxStages = 64;

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

template <class Fn>
Moments moments(const std::vector<TrialRecord>& records, Fn&& value) {
  Moments out;
  if (records.empty()) return out;
  double sum = 0.0;
  for (const auto& r : records) sum += value(r);
  out.mean = sum / static_cast<double>(records.size());
  if (records.size() < 2) return out;
  double ss = 0.0;
  for (const auto& r : records) {
    const double dv = value(r) - out.mean;
    ss += dv * dv;
  }
  out.var = ss / static_cast<double>(records.size() - 1);
  return out;
}

}  // namespace

CostSpec CostSpec::from_ratio(double log_d_inv, double d_over_c) {
  if (!(log_d_inv > 0.0) || !std::isfinite(log_d_inv))
    throw DomainError("CostSpec: log d^-1 must be > 0");
  if (!(d_over_c > 0.0) || !std::isfinite(d_over_c)) throw DomainError("CostSpec: d/c must be > 0");
  CostSpec cost;
  cost.d = std::exp(-log_d_inv);
  cost.c = cost.d / d_over_c;
  cost.validate();
  return cost;
}

void CostSpec::validate() const {
  if (!(c > 0.0 && c < 1.0)) throw DomainError("CostSpec: c must lie in (0, 1)");
  if (!(d > 0.0 && d < 1.0)) throw DomainError("CostSpec: d must lie in (0, 1)");
  for (int i = 0; i < 2; ++i) {
    if (!(pi[i] >= 0.0 && pi[i] <= 1.0)) throw DomainError("CostSpec: priors must lie in [0, 1]");
    if (!(w[i] > 0.0) || !std::isfinite(w[i])) throw DomainError("CostSpec: losses must be > 0");
  }
  if (std::abs(pi[0] + pi[1] - 1.0) > 1e-12) throw DomainError("CostSpec: priors must sum to 1");
}

int m_star(const HypothesisPair& pair, int i, const CostSpec& cost) {
  cost.validate();
  const double mu = pair.drift(i);
  const double x = cost.log_d_inv() / pair.sigma(i) + 1.0;
  const double ratio = cost.d_over_c();
  for (int m = 1; m <= kMaxStages; ++m) {
    const double gap = kappa(m, mu) * critical_h(m, x) - kappa(m + 1, mu) * critical_h(m + 1, x);
    if (gap <= ratio) return m;
  }
  throw CapReached("m_star: no stage budget up to 64 satisfies the rule");
}

Quantile design_quantile(int m, double mu, double arg, double d_over_c) {
  if (!(d_over_c > 0.0)) throw DomainError("design_quantile: d/c must be > 0");
  if (std::isinf(d_over_c)) return Quantile::neg_inf();
  return inverse_mills_hazard(kappa(m, mu) * critical_h(m, arg) / d_over_c);
}

SamplerSpec power_one_spec(const HypothesisPair& pair, int i, const CostSpec& cost, TestKind kind,
                           bool case_two_switch) {
  SamplerSpec spec;
  spec.mu = pair.drift(i);
  spec.boundary = cost.log_d_inv() / pair.sigma(i);
  const int m = m_star(pair, i, cost);
  switch (kind) {
    case TestKind::auto_delta_o:
      spec.family = family::DeltaO{m, CostRatio::constant(cost.d_over_c())};
      break;
    case TestKind::delta_plus: {
      double arg = spec.boundary;
      if (case_two_switch) {
        if (i != 0) throw DomainError("power_one_spec: the switch applies to side 0 only");
        const double i0 = pair.information(0), i1 = pair.information(1);
        if (!(i0 < i1)) throw DomainError("power_one_spec: the switch requires I_0 < I_1");
        arg = (1.0 - i0 / i1) * cost.log_d_inv() / pair.sigma(0);
      }
      spec.family = family::DeltaPlus{m, design_quantile(m, spec.mu, arg, cost.d_over_c())};
      break;
    }
    case TestKind::group:
      throw DomainError("power_one_spec: group tests have no power-one sampler");
  }
  spec.validate();
  return spec;
}

TestSpec TestSpec::make(const HypothesisPair& pair, const CostSpec& cost, const TestFamily& fam) {
  cost.validate();
  if (fam.kind == TestKind::group && fam.k < 1) throw DomainError("TestSpec: k must be >= 1");
  TestSpec spec{pair, cost, fam, {}};
  bool switch0 = false;
  if (fam.kind == TestKind::delta_plus && !pair.symmetric()) {
    if (pair.information(0) > pair.information(1))
      throw DomainError("TestSpec: delta_plus expects I_0 <= I_1; relabel the hypotheses");
    switch0 = pair.information(0) < pair.information(1);
  }
  for (int i = 0; i < 2; ++i) {
    SideDesign& s = spec.side[i];
    s.sigma = pair.sigma(i);
    s.mu = pair.drift(i);
    s.a = cost.log_d_inv() / s.sigma;
    if (fam.kind == TestKind::group) continue;
    s.sampler = power_one_spec(pair, i, cost, fam.kind, i == 0 && switch0);
    if (const auto* p = std::get_if<family::DeltaPlus>(&s.sampler->family)) {
      s.m = p->m;
      s.z = p->z;
    } else {
      s.m = std::get<family::DeltaO>(s.sampler->family).m;
    }
  }
  return spec;
}

std::int64_t TestSpec::first_stage() const {
  if (family.kind == TestKind::group) return family.k;
  std::int64_t n = std::numeric_limits<std::int64_t>::max();
  for (const auto& s : side) n = std::min(n, next_stage_size(*s.sampler, initial_state(*s.sampler)));
  return n;
}

std::int64_t TestSpec::default_budget() const {
  std::int64_t cap = 0;
  for (const auto& s : side) {
    const double v = std::ceil(100.0 * s.a / s.mu);
    cap = std::max(cap, static_cast<std::int64_t>(std::min(v, 9.0e15)));
  }
  return std::max<std::int64_t>(cap, 100);
}

int TestSpec::select_side(double llr) const {
  if (family.kind == TestKind::delta_plus) return llr >= 0.0 ? 0 : 1;
  return llr > 0.0 ? 0 : 1;
}

double TestSpec::side_total(int i, double llr) const {
  return (i == 0 ? llr : -llr) / side[i].sigma;
}

TrialRecord run_trial(const TestSpec& spec, ObservationSource& source,
                      std::optional<std::int64_t> max_total_n) {
  const std::int64_t cap = max_total_n ? *max_total_n : spec.default_budget();
  const double bound = spec.log_d_inv();
  TrialRecord rec;
  rec.truth = source.truth();
  double total = 0.0;

  auto take = [&](std::int64_t n) {
    if (rec.n + n > cap) throw BudgetExceeded("run_trial: observation budget exceeded", cap);
    total += source.take(n);
    rec.n += n;
    rec.m += 1;
    rec.stage_sizes.push_back(n);
    rec.terminal_llr = spec.pair.llr(rec.n, total);
  };
  auto stopped = [&] {
    if (rec.terminal_llr >= bound) {
      rec.decision = 0;
      return true;
    }
    if (rec.terminal_llr <= -bound) {
      rec.decision = 1;
      return true;
    }
    return false;
  };

  if (spec.family.kind == TestKind::group) {
    do take(spec.family.k);
    while (!stopped());
    return rec;
  }

  const std::int64_t first = spec.first_stage();
  take(first);
  if (stopped()) return rec;
  rec.side = spec.select_side(rec.terminal_llr);
  const SamplerSpec& sampler = *spec.side[rec.side].sampler;

  // The sampler's own crossing coincides with the two-sided stop above; the
  // clamp keeps a rounding tie on the unstopped side.
  auto sampler_total = [&] {
    const double t = spec.side_total(rec.side, rec.terminal_llr);
    return t < sampler.boundary ? t : std::nextafter(sampler.boundary, 0.0);
  };
  SamplerState state =
      std::get<SamplerState>(advance_to_total(sampler, initial_state(sampler), sampler_total(), first));
  for (;;) {
    const std::int64_t n = next_stage_size(sampler, state);
    take(n);
    if (stopped()) return rec;
    state = std::get<SamplerState>(advance_to_total(sampler, state, sampler_total(), n));
  }
}

TruthSummary TruthSummary::from(const std::vector<TrialRecord>& records, int truth, const CostSpec& cost,
                                std::optional<double> llr_drift) {
  TruthSummary s;
  s.count = static_cast<std::int64_t>(records.size());
  const Moments n = moments(records, [](const TrialRecord& r) { return static_cast<double>(r.n); });
  const Moments m = moments(records, [](const TrialRecord& r) { return static_cast<double>(r.m); });
  const Moments e = moments(records, [&](const TrialRecord& r) { return r.decision == 1 - truth ? 1.0 : 0.0; });
  const Moments k = moments(records, [&](const TrialRecord& r) {
    return cost.c * static_cast<double>(r.n) + cost.d * r.m + (r.decision == 1 - truth ? cost.w[truth] : 0.0);
  });
  s.en = n.mean;
  s.en_var = n.var;
  s.em = m.mean;
  s.em_var = m.var;
  s.err = e.mean;
  s.err_var = e.var;
  s.risk = k.mean;
  s.risk_var = k.var;
  if (llr_drift) {
    const Moments w = moments(records, [&](const TrialRecord& r) {
      return r.terminal_llr - *llr_drift * static_cast<double>(r.n);
    });
    s.wald_gap = w.mean;
    s.wald_gap_var = w.var;
  }
  return s;
}

RiskReport integrated_risk(const std::array<TruthSummary, 2>& by_truth, const CostSpec& cost) {
  RiskReport r;
  r.by_truth = by_truth;
  double en_v = 0.0, em_v = 0.0, risk_v = 0.0;
  for (int i = 0; i < 2; ++i) {
    const TruthSummary& s = by_truth[i];
    const double p = cost.pi[i];
    if (p == 0.0) continue;
    if (s.count < 1) throw DomainError("integrated_risk: no records for a truth with positive prior");
    const double n = static_cast<double>(s.count);
    r.en += p * s.en;
    r.em += p * s.em;
    r.risk += p * s.risk;
    en_v += p * p * s.en_var / n;
    em_v += p * p * s.em_var / n;
    risk_v += p * p * s.risk_var / n;
  }
  r.en_se = std::sqrt(en_v);
  r.em_se = std::sqrt(em_v);
  r.risk_se = std::sqrt(risk_v);
  r.err0 = by_truth[0].err;
  r.err1 = by_truth[1].err;
  r.risk_over_d = r.risk / cost.d;
  return r;
}

RiskReport integrated_risk(const std::vector<TrialRecord>& truth0, const std::vector<TrialRecord>& truth1,
                           const CostSpec& cost) {
  return integrated_risk({TruthSummary::from(truth0, 0, cost), TruthSummary::from(truth1, 1, cost)}, cost);
}

double second_order_risk(const RiskReport& report, double baseline_en_group1, const CostSpec& cost) {
  return report.risk - cost.c * baseline_en_group1 - cost.d;
}

PredictedRisk predicted_risk(const HypothesisPair& pair, const CostSpec& cost) {
  PredictedRisk out;
  const double per_obs = cost.c / cost.d * cost.log_d_inv();
  for (int i = 0; i < 2; ++i) {
    out.m_star[i] = m_star(pair, i, cost);
    out.r_tilde_over_d += cost.pi[i] * (per_obs / pair.information(i) + out.m_star[i]);
  }
  return out;
}

}  // namespace seqstage
