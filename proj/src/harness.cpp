#include "seqstage/harness.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <system_error>

#include "seqstage/error.hpp"
#include "seqstage/parallel.hpp"

namespace seqstage {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_real(const std::string& v, int line) {
  double x = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x))
    throw ConfigError("expected a real number, got '" + v + "'", line);
  return x;
}

template <class Int>
Int parse_int(const std::string& v, int line) {
  Int x = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError("expected an integer, got '" + v + "'", line);
  return x;
}

// Replication-indexed compact outcome; stage lists are not kept.
struct Outcome {
  std::int64_t n = 0;
  int m = 0;
  int decision = 0;
  double terminal_llr = 0.0;
};

[[noreturn]] void rethrow_budget(const BudgetExceeded& e, std::int64_t rep, std::uint64_t seed) {
  throw BudgetExceeded(fmt::format("{} at replication {} (seed {}, substream seed {})", e.what(), rep, seed,
                                   replication_seed(seed, static_cast<std::uint64_t>(rep))),
                       e.cap());
}

// Reps per block in the k* search; blocks are reduced in index order.
constexpr std::int64_t kBlock = 2048;

}  // namespace

HypothesisPair ExperimentConfig::pair() const {
  if (model_kind == "bernoulli") return HypothesisPair::bernoulli(p0, p1);
  return HypothesisPair::normal_mean(mu0, mu1);
}

CostSpec ExperimentConfig::cost() const {
  CostSpec c = CostSpec::from_ratio(log_d_inv, d_over_c);
  c.pi = {pi0, 1.0 - pi0};
  c.w = {w0, w1};
  c.validate();
  return c;
}

TestFamily ExperimentConfig::test_family() const {
  if (family == "group") return TestFamily::group(k);
  if (family == "delta_plus") return TestFamily::delta_plus();
  return TestFamily::auto_delta_o();
}

void ExperimentConfig::validate() const {
  try {
    (void)pair();
    (void)cost();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (reps < 2 || reps % 2 != 0) throw ConfigError("sim.reps must be a positive even integer");
  if (model_kind != "bernoulli" && model_kind != "normal") throw ConfigError("model.kind must be bernoulli or normal");
  if (family != "auto" && family != "delta_plus" && family != "group")
    throw ConfigError("test.family must be auto, delta_plus or group");
  if (k < 1) throw ConfigError("test.k must be >= 1");
  if (max_total_n && *max_total_n < 1) throw ConfigError("sim.max_total_n must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::map<std::string, int> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(std::string_view(raw).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (value.empty()) throw ConfigError("missing value for " + key, line);
    if (seen.count(key)) throw ConfigError("duplicate key " + key, line);
    seen[key] = line;

    if (key == "model.kind") {
      if (value != "bernoulli" && value != "normal") throw ConfigError("model.kind must be bernoulli or normal", line);
      cfg.model_kind = value;
    } else if (key == "model.p0" || key == "model.p1") {
      const double p = parse_real(value, line);
      if (!(p > 0.0 && p < 1.0)) throw ConfigError(key + " must lie in (0, 1)", line);
      (key == "model.p0" ? cfg.p0 : cfg.p1) = p;
    } else if (key == "model.mu0") {
      cfg.mu0 = parse_real(value, line);
    } else if (key == "model.mu1") {
      cfg.mu1 = parse_real(value, line);
    } else if (key == "cost.log_d_inv") {
      cfg.log_d_inv = parse_real(value, line);
      if (!(cfg.log_d_inv > 0.0)) throw ConfigError("cost.log_d_inv must be > 0", line);
    } else if (key == "cost.d_over_c") {
      cfg.d_over_c = parse_real(value, line);
      if (!(cfg.d_over_c > 0.0)) throw ConfigError("cost.d_over_c must be > 0", line);
    } else if (key == "prior.pi0") {
      cfg.pi0 = parse_real(value, line);
      if (!(cfg.pi0 >= 0.0 && cfg.pi0 <= 1.0)) throw ConfigError("prior.pi0 must lie in [0, 1]", line);
    } else if (key == "loss.w0" || key == "loss.w1") {
      const double w = parse_real(value, line);
      if (!(w > 0.0)) throw ConfigError(key + " must be > 0", line);
      (key == "loss.w0" ? cfg.w0 : cfg.w1) = w;
    } else if (key == "sim.reps") {
      cfg.reps = parse_int<std::int64_t>(value, line);
      if (cfg.reps < 2 || cfg.reps % 2 != 0) throw ConfigError("sim.reps must be a positive even integer", line);
    } else if (key == "sim.seed") {
      cfg.seed = parse_int<std::uint64_t>(value, line);
    } else if (key == "sim.max_total_n") {
      cfg.max_total_n = parse_int<std::int64_t>(value, line);
      if (*cfg.max_total_n < 1) throw ConfigError("sim.max_total_n must be >= 1", line);
    } else if (key == "test.family") {
      if (value != "auto" && value != "delta_plus" && value != "group")
        throw ConfigError("test.family must be auto, delta_plus or group", line);
      cfg.family = value;
    } else if (key == "test.k") {
      cfg.k = parse_int<std::int64_t>(value, line);
      if (cfg.k < 1) throw ConfigError("test.k must be >= 1", line);
    } else {
      throw ConfigError("unknown key " + key, line);
    }
  }

  // Cross-key checks report the line of the later key involved.
  auto line_of = [&](std::initializer_list<const char*> keys) {
    int l = 0;
    for (const char* k : keys)
      if (auto it = seen.find(k); it != seen.end()) l = std::max(l, it->second);
    return l;
  };
  try {
    (void)cfg.pair();
  } catch (const DomainError& e) {
    throw ConfigError(e.what(), line_of({"model.kind", "model.p0", "model.p1", "model.mu0", "model.mu1"}));
  }
  try {
    (void)cfg.cost();
  } catch (const DomainError& e) {
    throw ConfigError(e.what(), line_of({"cost.log_d_inv", "cost.d_over_c", "prior.pi0", "loss.w0", "loss.w1"}));
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> report_columns() {
  return {"test_id", "d_over_c", "reps", "EN", "EN_se", "EM", "EM_se", "err0", "err1",
          "risk_over_d", "second_order_over_d", "m_star", "r_tilde_over_d"};
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_csv(std::ostream& out, const std::vector<ReportRow>& rows) {
  const auto cols = report_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\r\n";
  for (const auto& r : rows) {
    const RiskReport& k = r.risk;
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\r\n", csv_field(r.test_id), r.d_over_c, r.reps, k.en,
                       k.en_se, k.em, k.em_se, k.err0, k.err1, k.risk_over_d, r.second_order_over_d,
                       csv_field(r.m_star), r.r_tilde_over_d);
  }
}

RiskReport run_replications(const TestSpec& spec, std::int64_t reps, std::uint64_t seed, int workers,
                            std::optional<std::int64_t> max_total_n) {
  if (reps < 2 || reps % 2 != 0) throw ConfigError("replications must be a positive even integer");
  const std::int64_t half = reps / 2;
  std::vector<Outcome> out(static_cast<std::size_t>(reps));
  parallel_for(reps, workers, [&](std::int64_t r) {
    SimulatedSource src(spec.pair, r < half ? 0 : 1, seed, static_cast<std::uint64_t>(r));
    try {
      const TrialRecord t = run_trial(spec, src, max_total_n);
      out[static_cast<std::size_t>(r)] = {t.n, t.m, t.decision, t.terminal_llr};
    } catch (const BudgetExceeded& e) {
      rethrow_budget(e, r, seed);
    }
  });
  std::array<std::vector<TrialRecord>, 2> records;
  for (int truth = 0; truth < 2; ++truth) {
    records[truth].resize(static_cast<std::size_t>(half));
    for (std::int64_t j = 0; j < half; ++j) {
      const Outcome& o = out[static_cast<std::size_t>(truth * half + j)];
      TrialRecord& t = records[truth][static_cast<std::size_t>(j)];
      t.n = o.n;
      t.m = o.m;
      t.decision = o.decision;
      t.terminal_llr = o.terminal_llr;
      t.truth = truth;
    }
  }
  return integrated_risk({TruthSummary::from(records[0], 0, spec.cost, spec.pair.mean_llr_increment(0)),
                          TruthSummary::from(records[1], 1, spec.cost, spec.pair.mean_llr_increment(1))},
                         spec.cost);
}

std::string test_id(const TestFamily& family) {
  switch (family.kind) {
    case TestKind::auto_delta_o:
      return "delta";
    case TestKind::delta_plus:
      return "delta_plus";
    case TestKind::group:
      break;
  }
  return fmt::format("group_{}", family.k);
}

std::string m_star_label(const HypothesisPair& pair, const CostSpec& cost) {
  const PredictedRisk p = predicted_risk(pair, cost);
  if (p.m_star[0] == p.m_star[1]) return std::to_string(p.m_star[0]);
  return fmt::format("{}|{}", p.m_star[0], p.m_star[1]);
}

ReportRow simulate(const ExperimentConfig& config, int workers) {
  config.validate();
  const HypothesisPair pair = config.pair();
  const CostSpec cost = config.cost();
  const TestFamily fam = config.test_family();
  const TestSpec spec = TestSpec::make(pair, cost, fam);

  ReportRow row;
  row.test_id = test_id(fam);
  row.d_over_c = config.d_over_c;
  row.reps = config.reps;
  row.risk = run_replications(spec, config.reps, config.seed, workers, config.max_total_n);
  double baseline_en = row.risk.en;
  if (!(fam.kind == TestKind::group && fam.k == 1)) {
    const TestSpec one = TestSpec::make(pair, cost, TestFamily::group(1));
    baseline_en = run_replications(one, config.reps, config.seed, workers, config.max_total_n).en;
  }
  row.second_order_over_d = second_order_risk(row.risk, baseline_en, cost) / cost.d;
  row.m_star = m_star_label(pair, cost);
  row.r_tilde_over_d = predicted_risk(pair, cost).r_tilde_over_d;
  return row;
}

std::vector<std::int64_t> default_k_grid(double en) {
  const auto top = static_cast<std::int64_t>(std::ceil(1.5 * en));
  std::vector<std::int64_t> ks;
  for (std::int64_t k = 1; k <= std::max<std::int64_t>(top, 1); k += 2) ks.push_back(k);
  return ks;
}

KstarResult kstar_search(const HypothesisPair& pair, const CostSpec& cost, const std::vector<std::int64_t>& ks,
                         std::int64_t reps, std::uint64_t seed, int workers,
                         std::optional<std::int64_t> max_total_n) {
  if (ks.empty()) throw ConfigError("k grid is empty");
  if (reps < 2 || reps % 2 != 0) throw ConfigError("replications must be a positive even integer");
  std::vector<TestSpec> specs;
  for (std::int64_t k : ks) specs.push_back(TestSpec::make(pair, cost, TestFamily::group(k)));
  const std::int64_t half = reps / 2;
  const std::size_t nk = ks.size();

  // Per k and truth: sums of N, M, per-trial risk and squared risk.
  struct Acc {
    double n = 0.0, m = 0.0, r = 0.0, r2 = 0.0;
  };
  std::vector<std::array<Acc, 2>> acc(nk);
  std::vector<Outcome> block;

  for (std::int64_t lo = 0; lo < reps; lo += kBlock) {
    const std::int64_t count = std::min(kBlock, reps - lo);
    block.assign(static_cast<std::size_t>(count) * nk, Outcome{});
    parallel_for(count, workers, [&](std::int64_t j) {
      const std::int64_t r = lo + j;
      PathSource path(pair, r < half ? 0 : 1, seed, static_cast<std::uint64_t>(r));
      for (std::size_t q = 0; q < nk; ++q) {
        path.rewind();
        try {
          const TrialRecord t = run_trial(specs[q], path, max_total_n);
          block[static_cast<std::size_t>(j) * nk + q] = {t.n, t.m, t.decision};
        } catch (const BudgetExceeded& e) {
          rethrow_budget(e, r, seed);
        }
      }
    });
    for (std::int64_t j = 0; j < count; ++j) {
      const int truth = lo + j < half ? 0 : 1;
      for (std::size_t q = 0; q < nk; ++q) {
        const Outcome& o = block[static_cast<std::size_t>(j) * nk + q];
        const double risk = cost.c * static_cast<double>(o.n) + cost.d * o.m +
                            (o.decision == 1 - truth ? cost.w[truth] : 0.0);
        Acc& a = acc[q][truth];
        a.n += static_cast<double>(o.n);
        a.m += o.m;
        a.r += risk;
        a.r2 += risk * risk;
      }
    }
  }

  KstarResult out;
  const auto h = static_cast<double>(half);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t q = 0; q < nk; ++q) {
    KstarPoint p;
    p.k = ks[q];
    double var = 0.0;
    for (int truth = 0; truth < 2; ++truth) {
      const Acc& a = acc[q][truth];
      const double pi = cost.pi[truth];
      const double mean = a.r / h;
      p.en += pi * a.n / h;
      p.em += pi * a.m / h;
      p.risk_over_d += pi * mean / cost.d;
      const double v = half > 1 ? std::max(0.0, (a.r2 - h * mean * mean) / (h - 1.0)) : 0.0;
      var += pi * pi * v / h;
    }
    p.risk_over_d_se = std::sqrt(var) / cost.d;
    if (p.risk_over_d < best) {
      best = p.risk_over_d;
      out.k_star = p.k;
    }
    out.curve.push_back(p);
  }
  return out;
}

std::vector<Table1Block> table1(const Table1Options& opt) {
  if (opt.reps < 2 || opt.reps % 2 != 0) throw ConfigError("replications must be a positive even integer");
  const HypothesisPair pair = HypothesisPair::bernoulli(0.4, 0.6);
  std::vector<Table1Block> blocks;
  for (double ratio : opt.d_over_c) {
    const CostSpec cost = CostSpec::from_ratio(opt.log_d_inv, ratio);
    const PredictedRisk pred = predicted_risk(pair, cost);
    const std::string mlabel = m_star_label(pair, cost);
    Table1Block block;
    block.d_over_c = ratio;

    auto row_for = [&](const TestFamily& fam) {
      ReportRow row;
      row.test_id = test_id(fam);
      row.d_over_c = ratio;
      row.reps = opt.reps;
      row.risk = run_replications(TestSpec::make(pair, cost, fam), opt.reps, opt.seed, opt.workers);
      row.m_star = mlabel;
      row.r_tilde_over_d = pred.r_tilde_over_d;
      return row;
    };

    const TestSpec delta = TestSpec::make(pair, cost, TestFamily::auto_delta_o());
    block.first_stage = delta.first_stage();
    block.rows.push_back(row_for(TestFamily::auto_delta_o()));
    block.rows.push_back(row_for(TestFamily::group(1)));
    const RiskReport& d = block.rows[0].risk;
    const double en1 = block.rows[1].risk.en;

    std::vector<std::int64_t> ks{std::max<std::int64_t>(1, std::llround(d.en / d.em)), block.first_stage,
                                 std::max<std::int64_t>(1, std::llround(d.en))};
    block.kstar = kstar_search(pair, cost, default_k_grid(d.en), opt.kstar_reps > 0 ? opt.kstar_reps : opt.reps,
                               opt.seed, opt.workers);
    ks.push_back(block.kstar.k_star);
    std::set<std::int64_t> done{1};
    for (std::int64_t k : ks) {
      if (!done.insert(k).second) continue;
      block.rows.push_back(row_for(TestFamily::group(k)));
    }
    for (auto& row : block.rows) row.second_order_over_d = second_order_risk(row.risk, en1, cost) / cost.d;
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<std::int64_t> zero_noise_schedule(const TestSpec& spec, int side) {
  constexpr int kMaxPreview = 10000;
  const SideDesign& s = spec.side[side];
  std::vector<std::int64_t> out;
  if (spec.family.kind == TestKind::group) {
    double remaining = s.a;
    while (remaining > 0.0 && static_cast<int>(out.size()) < kMaxPreview) {
      out.push_back(spec.family.k);
      remaining -= static_cast<double>(spec.family.k) * s.mu;
    }
    return out;
  }
  const SamplerSpec& sampler = *s.sampler;
  std::int64_t n = spec.first_stage();
  AdvanceResult r = advance(sampler, initial_state(sampler), static_cast<double>(n) * s.mu, n);
  out.push_back(n);
  while (const auto* st = std::get_if<SamplerState>(&r)) {
    if (static_cast<int>(out.size()) >= kMaxPreview) break;
    n = next_stage_size(sampler, *st);
    out.push_back(n);
    r = advance(sampler, *st, static_cast<double>(n) * s.mu, n);
  }
  return out;
}

std::string design_summary(const ExperimentConfig& config) {
  config.validate();
  const HypothesisPair pair = config.pair();
  const CostSpec cost = config.cost();
  const TestSpec spec = TestSpec::make(pair, cost, config.test_family());
  const PredictedRisk pred = predicted_risk(pair, cost);
  std::string out;
  out += fmt::format("model       {} ({}, {})\n", pair.kind_name(), pair.param(0), pair.param(1));
  out += fmt::format("test        {}\n", test_id(spec.family));
  out += fmt::format("log d^-1    {}   d = {:.6g}   d/c = {}\n", cost.log_d_inv(), cost.d, cost.d_over_c());
  out += fmt::format("first stage {}\n", spec.first_stage());
  for (int i = 0; i < 2; ++i) {
    const SideDesign& s = spec.side[i];
    out += fmt::format("side {}: I = {:.6f}  sigma = {:.6f}  a = {:.6f}  mu = {:.6f}  m* = {}", i, pair.information(i),
                       s.sigma, s.a, s.mu, pred.m_star[i]);
    if (s.z) out += s.z->is_neg_inf() ? "  z* = -inf" : fmt::format("  z* = {:.6f}", s.z->value());
    out += "\n  noiseless schedule:";
    for (std::int64_t n : zero_noise_schedule(spec, i)) out += fmt::format(" {}", n);
    out += "\n";
  }
  out += fmt::format("predicted r~/d = {:.4f}\n", pred.r_tilde_over_d);
  out += fmt::format("error bound: P_i(D = 1 - i) <= d = {:.6g}\n", cost.d);
  return out;
}

}  // namespace seqstage
