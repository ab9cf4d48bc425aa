// Command-line front end.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include "seqstage/error.hpp"
#include "seqstage/harness.hpp"
#include "seqstage/oracle.hpp"

namespace fs = std::filesystem;
using namespace seqstage;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBudget = 3;

int default_workers() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// `-` selects standard output.
template <class Fn>
void with_output(const std::string& target, Fn&& fn) {
  if (target.empty() || target == "-") {
    fn(std::cout);
    return;
  }
  std::ofstream out(target, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + target);
  fn(out);
}

void print_table(const std::vector<Table1Block>& blocks) {
  for (const auto& b : blocks) {
    fmt::print("d/c = {}   m* = {}   r~/d = {:.2f}   first stage of delta = {}   k* = {}\n", b.d_over_c,
               b.rows.front().m_star, b.rows.front().r_tilde_over_d, b.first_stage, b.kstar.k_star);
    fmt::print("  {:<12} {:>9} {:>8} {:>9} {:>9} {:>10} {:>10}\n", "test", "EN", "EM", "err0", "err1", "r/d",
               "r'/d");
    for (const auto& r : b.rows)
      fmt::print("  {:<12} {:>9.2f} {:>8.3f} {:>9.2e} {:>9.2e} {:>10.3f} {:>10.3f}\n", r.test_id, r.risk.en,
                 r.risk.em, r.risk.err0, r.risk.err1, r.risk.risk_over_d, r.second_order_over_d);
  }
}

void write_curve(std::ostream& out, const KstarResult& k) {
  out << "k,EN,EM,risk_over_d,risk_over_d_se\r\n";
  for (const auto& p : k.curve)
    out << fmt::format("{},{},{},{},{}\r\n", p.k, p.en, p.em, p.risk_over_d, p.risk_over_d_se);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multistage sequential samplers and tests"};
  app.require_subcommand(1);
  int workers = default_workers();
  app.add_option("--workers", workers, "worker threads (results do not depend on this)")->check(CLI::PositiveNumber);

  std::string config_path, out_path;
  std::optional<std::int64_t> reps;
  std::optional<std::uint64_t> seed;

  auto* design = app.add_subcommand("design", "print the design of a configured test");
  design->add_option("config", config_path)->required();

  auto* simulate_cmd = app.add_subcommand("simulate", "Monte Carlo risk report for a configured test");
  simulate_cmd->add_option("config", config_path)->required();
  simulate_cmd->add_option("--reps", reps, "replications (even)");
  simulate_cmd->add_option("--seed", seed, "master seed");
  simulate_cmd->add_option("--out", out_path, "CSV file, - for stdout");

  std::int64_t t1_reps = 100000, kstar_reps = 0;
  std::uint64_t t1_seed = 1;
  std::string out_dir = ".";
  auto* table = app.add_subcommand("table1", "reproduce the binomial study p = 0.4 vs 0.6");
  table->add_option("--reps", t1_reps, "replications per row (even)");
  table->add_option("--seed", t1_seed, "master seed");
  table->add_option("--out", out_dir, "output directory, - for stdout");
  table->add_option("--kstar-reps", kstar_reps, "replications for the k* search (default: --reps)");

  std::optional<std::int64_t> max_obs;
  auto* oracle = app.add_subcommand("oracle", "exact characteristics of a Bernoulli test");
  oracle->add_option("config", config_path)->required();
  oracle->add_option("--max-obs", max_obs, "observation cap of the sweep");

  std::int64_t kmin = 1, kmax = 1, kstep = 1;
  auto* kstar = app.add_subcommand("kstar", "search the best constant stage size");
  kstar->add_option("config", config_path)->required();
  kstar->add_option("--kmin", kmin)->required()->check(CLI::PositiveNumber);
  kstar->add_option("--kmax", kmax)->required()->check(CLI::PositiveNumber);
  kstar->add_option("--kstep", kstep)->check(CLI::PositiveNumber);
  kstar->add_option("--reps", reps, "replications (even)");
  kstar->add_option("--seed", seed, "master seed");
  kstar->add_option("--out", out_path, "CSV file for the risk curve, - for stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    auto load = [&] {
      ExperimentConfig cfg = load_config(config_path);
      if (reps) cfg.reps = *reps;
      if (seed) cfg.seed = *seed;
      cfg.validate();
      return cfg;
    };

    if (*design) {
      fmt::print("{}", design_summary(load()));
    } else if (*simulate_cmd) {
      const ExperimentConfig cfg = load();
      const ReportRow row = simulate(cfg, workers);
      with_output(out_path, [&](std::ostream& os) { write_csv(os, {row}); });
    } else if (*table) {
      Table1Options opt;
      opt.reps = t1_reps;
      opt.seed = t1_seed;
      opt.workers = workers;
      opt.kstar_reps = kstar_reps;
      const auto blocks = table1(opt);
      std::vector<ReportRow> rows;
      for (const auto& b : blocks) rows.insert(rows.end(), b.rows.begin(), b.rows.end());
      if (out_dir == "-") {
        write_csv(std::cout, rows);
      } else {
        fs::create_directories(out_dir);
        with_output((fs::path(out_dir) / "table1.csv").string(), [&](std::ostream& os) { write_csv(os, rows); });
        for (const auto& b : blocks)
          with_output((fs::path(out_dir) / fmt::format("kstar_dc{}.csv", b.d_over_c)).string(),
                      [&](std::ostream& os) { write_curve(os, b.kstar); });
        print_table(blocks);
      }
    } else if (*oracle) {
      const ExperimentConfig cfg = load();
      const TestSpec spec = TestSpec::make(cfg.pair(), cfg.cost(), cfg.test_family());
      fmt::print("{:<6} {:>12} {:>10} {:>12} {:>12} {:>12} {:>12}\n", "truth", "EN", "EM", "err", "truncation",
                 "conserv", "wald_resid");
      for (int truth = 0; truth < 2; ++truth) {
        const OracleResult r = exact_characteristics(spec, truth, max_obs);
        fmt::print("{:<6} {:>12.6f} {:>10.6f} {:>12.4e} {:>12.2e} {:>12.2e} {:>12.2e}\n", truth, r.en, r.em, r.err,
                   r.truncation_mass, r.conservation_error, r.wald_residual);
      }
    } else if (*kstar) {
      if (kmax < kmin) throw ConfigError("--kmax must be >= --kmin");
      const ExperimentConfig cfg = load();
      std::vector<std::int64_t> ks;
      for (std::int64_t k = kmin; k <= kmax; k += kstep) ks.push_back(k);
      const KstarResult res = kstar_search(cfg.pair(), cfg.cost(), ks, cfg.reps, cfg.seed, workers, cfg.max_total_n);
      if (out_path.empty()) {
        fmt::print("k* = {}\n", res.k_star);
        write_curve(std::cout, res);
      } else {
        with_output(out_path, [&](std::ostream& os) { write_curve(os, res); });
        fmt::print("k* = {}\n", res.k_star);
      }
    }
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const BudgetExceeded& e) {
    fmt::print(stderr, "budget exceeded: {}\n", e.what());
    return kExitBudget;
  } catch (const TruncationExcessive& e) {
    fmt::print(stderr, "truncation excessive: {} (mass {:.3e})\n", e.what(), e.mass());
    return kExitBudget;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitOther;
  }
  return 0;
}
