// Command-line front end: seeded simulation, closed-form/oracle/simulation
// cross verification, parameter sweeps and one-dimensional optimization.
// CSV goesep to stdout or --out; run manifests make simulation output exactly
// reproducible. Exit codes: 0 success, 1 runtime or comparison failure,
// 2 argument errors.

#include "agemetrics/analytic.hpp"
#include "agemetrics/core.hpp"
#include "agemetrics/format.hpp"
#include "agemetrics/optimizer.hpp"
#include "agemetrics/oracle.hpp"
#include "agemetrics/parallel.hpp"
#include "agemetrics/simulator.hpp"
#include "agemetrics/verify.hpp"
#include "agemetrics/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;
using namespace agemetrics;

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open output file: " + path);
  os << text;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario = "inf-fcfs";
  double l1 = 0.0, l2 = 0.0;
  std::string horizon = "1e7";
  std::string warmup = "10000";
  std::uint64_t seed = 0;
  std::uint32_t batches = 32;
  std::uint32_t reps = 1;
  std::string queue_cap = "1000000";
  bool record_trace = false;
  std::string trace_out;
  std::string out;
  std::string from_manifest;
};

json manifest_of(const SimulateArgs& a, const SimConfig& cfg, std::uint32_t reps) {
  json m;
  m["command"] = "simulate";
  m["version"] = kVersion;
  m["timestamp"] = timestamp_utc();
  m["scenario"] = to_string(cfg.params.scenario);
  m["lambda1"] = cfg.params.lambda1;
  m["lambda2"] = cfg.params.lambda2;
  m["horizon"] = cfg.horizon;
  m["warmup"] = cfg.warmup;
  m["seed"] = cfg.seed;
  m["batches"] = cfg.batches;
  m["reps"] = reps;
  m["queue_cap"] = cfg.queue_cap;
  m["record_trace"] = cfg.record_trace;
  m["evaluator"] = "simulation";
  (void)a;
  return m;
}

SimConfig config_from_manifest(const json& m, std::uint32_t& reps) {
  SimConfig cfg;
  cfg.params.scenario = scenario_from_string(m.at("scenario").get<std::string>());
  cfg.params.lambda1 = m.at("lambda1").get<double>();
  cfg.params.lambda2 = m.at("lambda2").get<double>();
  cfg.horizon = m.at("horizon").get<std::uint64_t>();
  cfg.warmup = m.at("warmup").get<std::uint64_t>();
  cfg.seed = m.at("seed").get<std::uint64_t>();
  cfg.batches = m.at("batches").get<std::uint32_t>();
  cfg.queue_cap = m.at("queue_cap").get<std::uint64_t>();
  cfg.record_trace = m.value("record_trace", false);
  reps = m.value("reps", 1u);
  return cfg;
}

std::string stats_csv(const SimConfig& cfg, const AgeStats& st) {
  std::string out =
      "scenario,lambda1,lambda2,horizon,seed,mean_aoi,ci_aoi,mean_aoa,ci_aoa,"
      "mean_aoai,ci_aoai,actuation_rate,warmup,batches,reps,slots_counted,"
      "nonstationary\n";
  out += csv_join({to_string(cfg.params.scenario), fmt_double(cfg.params.lambda1),
                   fmt_double(cfg.params.lambda2), std::to_string(cfg.horizon),
                   std::to_string(cfg.seed), fmt_double(st.mean_aoi), fmt_double(st.ci_aoi),
                   fmt_double(st.mean_aoa), fmt_double(st.ci_aoa), fmt_double(st.mean_aoai),
                   fmt_double(st.ci_aoai), fmt_double(st.actuation_rate),
                   std::to_string(cfg.warmup), std::to_string(cfg.batches),
                   std::to_string(st.replications), std::to_string(st.slots_counted),
                   st.nonstationary ? "true" : "false"});
  return out;
}

std::string trace_csv(const std::vector<SlotRecord>& trace) {
  std::string out = "slot,arrival,opportunity,actuated,aoi,aoa,aoai,queue_len,battery\n";
  for (const SlotRecord& r : trace) {
    out += csv_join({std::to_string(r.slot), r.events.arrival ? "1" : "0",
                     r.events.opportunity ? "1" : "0", r.actuated ? "1" : "0",
                     std::to_string(r.ages.aoi), std::to_string(r.ages.aoa),
                     std::to_string(r.ages.aoai), std::to_string(r.queue_len),
                     r.battery < 0 ? std::string("NA(no-battery)")
                                   : std::to_string(r.battery)});
  }
  return out;
}

int run_simulate(const SimulateArgs& a) {
  SimConfig cfg;
  std::uint32_t reps = a.reps;
  if (!a.from_manifest.empty()) {
    std::ifstream is(a.from_manifest);
    if (!is) throw std::runtime_error("cannot read manifest: " + a.from_manifest);
    json m = json::parse(is);
    cfg = config_from_manifest(m, reps);
  } else {
    cfg.params.scenario = scenario_from_string(a.scenario);
    cfg.params.lambda1 = a.l1;
    cfg.params.lambda2 = a.l2;
    cfg.horizon = parse_slots(a.horizon);
    cfg.warmup = parse_slots(a.warmup) == 0 ? 0 : parse_slots(a.warmup);
    cfg.seed = a.seed;
    cfg.batches = a.batches;
    cfg.queue_cap = parse_slots(a.queue_cap);
    cfg.record_trace = a.record_trace;
  }
  cfg.validate();

  AgeStats stats;
  std::vector<SlotRecord> trace;
  if (reps <= 1) {
    SimResult r = simulate(cfg);
    stats = r.stats;
    trace = std::move(r.trace);
  } else {
    stats = replicate(cfg, reps);
  }

  write_text(a.out, stats_csv(cfg, stats));
  if (cfg.record_trace && !trace.empty()) write_text(a.trace_out, trace_csv(trace));

  const json manifest = manifest_of(a, cfg, reps);
  if (a.out.empty()) {
    std::cerr << manifest.dump() << "\n";
  } else {
    std::ofstream ms(a.out + ".manifest.json");
    ms << manifest.dump(2) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string grid = "0.1:0.9:0.2";
  std::string scenarios = "inf-fcfs,inf-lcfs,buffer-controller,buffer-battery";
  std::string metrics = "aoi,aoa,aoai";
  std::string horizon = "1e7";
  std::string warmup = "10000";
  std::uint64_t seed = 20240001;
  double rel_tol = 0.01;
  double oracle_tol = 1e-6;
  bool no_oracle = false;
  bool no_sim = false;
  std::string out;
  // head-of-line pattern mode
  bool theorem3 = false;
  double l1 = 0.2, l2 = 0.5;
  std::uint32_t hmax = 8;
  std::uint32_t ai_cap = 14;
};

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int run_verify_patterns(const VerifyArgs& a) {
  verify::PatternReport rep = verify::verify_patterns(a.l1, a.l2, a.hmax, a.ai_cap);
  std::string out = "check,value,threshold,pass\n";
  const auto row = [&](const char* name, double v, double thr, bool pass) {
    out += csv_join({name, fmt_double(v), fmt_double(thr), pass ? "1" : "0"});
  };
  verify::PatternTolerances tol;
  row("same_hl_spread", rep.max_same_hl_spread, tol.same_hl_spread, rep.pass_spread);
  row("vs_closed_form", rep.max_vs_closed_form, tol.vs_closed_form, rep.pass_closed_form);
  row("level_identity", rep.max_level_identity, tol.level_identity, rep.pass_level);
  row("queue_len_marginal", rep.max_queue_len_diff, tol.queue_len, rep.pass_queue_len);
  row("chain_cross_check", rep.max_chain_cross_check, rep.chain_cross_check_bound,
      rep.pass_chain_cross_check);
  write_text(a.out, out);
  return rep.all_pass() ? 0 : 1;
}

int run_verify(const VerifyArgs& a) {
  if (a.theorem3) return run_verify_patterns(a);

  verify::TriangleOptions opt;
  opt.grid = parse_grid(a.grid);
  opt.scenarios.clear();
  for (const auto& s : split_csv_list(a.scenarios))
    opt.scenarios.push_back(scenario_from_string(s));
  opt.metrics.clear();
  for (const auto& m : split_csv_list(a.metrics))
    opt.metrics.push_back(optim::metric_from_string(m));
  opt.post_warmup_slots = parse_slots(a.horizon);
  opt.warmup = parse_slots(a.warmup);
  opt.seed = a.seed;
  opt.sim_rel_tol = a.rel_tol;
  opt.oracle_extra_tol = a.oracle_tol;
  opt.with_oracle = !a.no_oracle;
  opt.with_sim = !a.no_sim;
  for (double g : opt.grid)
    if (!(g > 0.0 && g < 1.0)) throw CLI::ValidationError("grid", "grid must stay in (0,1)");

  const verify::TriangleReport rep = verify::run_triangle(opt);

  std::string out =
      "scenario,metric,lambda1,lambda2,analytic,oracle,oracle_bound,oracle_pass,sim,"
      "sim_ci,sim_in_ci,sim_pass,note\n";
  for (const auto& r : rep.rows) {
    out += csv_join(
        {to_string(r.scenario), optim::to_string(r.metric), fmt_double(r.lambda1),
         fmt_double(r.lambda2), fmt_double(r.analytic), fmt_or_na(r.oracle, "skipped"),
         r.oracle.has_value() ? fmt_double(r.oracle_bound) : "NA(skipped)",
         r.oracle_pass ? "1" : "0", fmt_or_na(r.sim, "skipped"),
         r.sim.has_value() ? fmt_double(r.sim_ci) : "NA(skipped)",
         r.sim_within_ci ? "1" : "0", r.sim_pass ? "1" : "0", r.note});
  }
  write_text(a.out, out);
  std::cerr << "verify: " << rep.rows.size() << " comparisons, all_pass="
            << (rep.all_pass ? "true" : "false");
  if (rep.sim_checks > 0)
    std::cerr << ", ci_coverage=" << rep.sim_ci_hits << "/" << rep.sim_checks;
  std::cerr << "\n";
  return rep.all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// sweep / optimize
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string scenario = "inf-fcfs";
  std::string metric = "aoai";
  std::string fix = "l2=0.5";
  std::string grid = "0.05:0.95:0.05";
  std::string evaluator = "analytic";
  std::string horizon = "1e6";
  std::uint64_t seed = 1;
  std::string out;
  double tol = 1e-6;  // optimize only
  std::string report;
};

optim::SweepSpec sweep_spec_from(const SweepArgs& a) {
  optim::SweepSpec spec;
  spec.scenario = scenario_from_string(a.scenario);
  spec.metric = optim::metric_from_string(a.metric);

  const auto eq = a.fix.find('=');
  if (eq == std::string::npos) throw CLI::ValidationError("fix", "expected l1=V or l2=V");
  const std::string which = a.fix.substr(0, eq);
  spec.fixed_value = std::stod(a.fix.substr(eq + 1));
  if (which == "l2")
    spec.fix_lambda2 = true;
  else if (which == "l1")
    spec.fix_lambda2 = false;
  else
    throw CLI::ValidationError("fix", "expected l1=V or l2=V");

  const std::vector<double> g = parse_grid(a.grid);
  if (g.empty()) throw CLI::ValidationError("grid", "empty grid");
  spec.grid_start = g.front();
  spec.grid_stop = g.back();
  const auto p2 = a.grid.rfind(':');
  spec.grid_step = std::stod(a.grid.substr(p2 + 1));

  if (a.evaluator == "analytic")
    spec.evaluator = optim::Evaluator::Analytic;
  else if (a.evaluator == "simulation")
    spec.evaluator = optim::Evaluator::Simulation;
  else if (a.evaluator == "oracle")
    spec.evaluator = optim::Evaluator::Oracle;
  else
    throw CLI::ValidationError("evaluator", "one of analytic|simulation|oracle");
  spec.sim_horizon = parse_slots(a.horizon);
  spec.sim_seed = a.seed;
  spec.validate();
  return spec;
}

std::string curve_csv(const std::vector<optim::SweepPoint>& curve) {
  std::string out = "param,value,ci,ok,error\n";
  for (const auto& p : curve) {
    out += csv_join({fmt_double(p.param),
                     p.ok ? fmt_double(p.value) : "NA(" + p.error + ")",
                     p.ok ? fmt_double(p.ci) : "NA(eval-failed)", p.ok ? "1" : "0",
                     p.error});
  }
  return out;
}

int run_sweep(const SweepArgs& a) {
  const auto curve = optim::sweep(sweep_spec_from(a));
  write_text(a.out, curve_csv(curve));
  return 0;
}

int run_optimize(const SweepArgs& a) {
  const optim::SweepSpec spec = sweep_spec_from(a);
  if (!spec.fix_lambda2)
    throw CLI::ValidationError("fix", "optimize searches lambda1; fix lambda2 (l2=V)");
  const optim::OptimumReport rep =
      optim::minimize_lambda1(spec.scenario, spec.metric, spec.fixed_value, a.tol);

  json j;
  j["command"] = "optimize";
  j["version"] = kVersion;
  j["scenario"] = to_string(spec.scenario);
  j["metric"] = optim::to_string(spec.metric);
  j["lambda2"] = spec.fixed_value;
  j["lambda_star"] = rep.lambda_star;
  j["value_star"] = rep.value_star;
  j["bracket"] = {rep.bracket_lo, rep.bracket_hi};
  j["is_interior"] = rep.is_interior;
  json curve = json::array();
  for (const auto& p : rep.curve) curve.push_back({{"param", p.param}, {"value", p.value}});
  j["curve"] = curve;

  if (!a.out.empty()) write_text(a.out, curve_csv(rep.curve));
  write_text(a.report, j.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// dump-chain
// ---------------------------------------------------------------------------

struct DumpArgs {
  std::string chain = "aoai-buffer";
  std::string scenario;
  double l1 = 0.3, l2 = 0.5;
  std::uint32_t age_max = 0;
  std::uint32_t queue_max = 0;
  std::uint32_t h_max = 0;
  bool with_stationary = false;
  std::string out;
};

int run_dump_chain(const DumpArgs& a) {
  oracle::ChainId id;
  ScenarioTag scenario = ScenarioTag::InfFcfs;
  if (a.chain == "aoa-inf") id = oracle::ChainId::AoaInf;
  else if (a.chain == "aoa-buffer") { id = oracle::ChainId::AoaBuffer; scenario = ScenarioTag::BufferController; }
  else if (a.chain == "aoa-battery") { id = oracle::ChainId::AoaBattery; scenario = ScenarioTag::BufferBattery; }
  else if (a.chain == "aoai-buffer") { id = oracle::ChainId::AoaiBuffer; scenario = ScenarioTag::BufferController; }
  else if (a.chain == "aoai-battery") { id = oracle::ChainId::AoaiBattery; scenario = ScenarioTag::BufferBattery; }
  else if (a.chain == "aoai-inf") id = oracle::ChainId::AoaiInf;
  else if (a.chain == "queue-pattern") id = oracle::ChainId::QueuePattern;
  else if (a.chain == "occupancy") id = oracle::ChainId::Occupancy;
  else throw CLI::ValidationError("chain", "unknown chain id");
  if (!a.scenario.empty()) scenario = scenario_from_string(a.scenario);

  oracle::ChainLimits lm;
  lm.age_max = a.age_max;
  lm.queue_max = a.queue_max;
  lm.h_max = a.h_max;
  const auto spec = oracle::build_chain(id, ScenarioParams{scenario, a.l1, a.l2}, lm);

  std::ostringstream os;
  oracle::dump_chain_csv(spec, os);
  if (a.with_stationary) {
    const auto res = oracle::stationary(spec);
    oracle::dump_stationary_csv(spec, res, os);
  }
  write_text(a.out, os.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"actuation-age metrics: simulation, closed forms, chain verification"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* c_sim = app.add_subcommand("simulate", "run one seeded simulation");
  c_sim->add_option("--scenario", sim.scenario,
                    "inf-fcfs|inf-lcfs|buffer-controller|buffer-battery");
  c_sim->add_option("--l1", sim.l1, "delivery probability (0,1)");
  c_sim->add_option("--l2", sim.l2, "permission/harvest probability (0,1)");
  c_sim->add_option("--horizon", sim.horizon, "slots, scientific ok (default 1e7)");
  c_sim->add_option("--warmup", sim.warmup, "discarded prefix slots (default 10000)");
  c_sim->add_option("--seed", sim.seed, "PRNG seed");
  c_sim->add_option("--batches", sim.batches, "batches for the 95% CI (default 32)");
  c_sim->add_option("--reps", sim.reps, "independent replications (default 1)");
  c_sim->add_option("--queue-cap", sim.queue_cap, "abort above this backlog");
  c_sim->add_flag("--record-trace", sim.record_trace, "emit per-slot trace CSV");
  c_sim->add_option("--trace-out", sim.trace_out, "trace output path (default stdout)");
  c_sim->add_option("--out", sim.out, "stats output path (default stdout)");
  c_sim->add_option("--from-manifest", sim.from_manifest, "re-run a recorded manifest");

  VerifyArgs ver;
  CLI::App* c_ver = app.add_subcommand("verify",
                                       "compare analytic, chain and simulated averages");
  c_ver->add_option("--grid", ver.grid, "rate grid start:stop:step (default 0.1:0.9:0.2)");
  c_ver->add_option("--scenarios", ver.scenarios, "comma list");
  c_ver->add_option("--metrics", ver.metrics, "comma list of aoi,aoa,aoai");
  c_ver->add_option("--horizon", ver.horizon, "post-warmup slots per cell (default 1e7)");
  c_ver->add_option("--warmup", ver.warmup, "warmup slots");
  c_ver->add_option("--seed", ver.seed, "base seed");
  c_ver->add_option("--rel-tol", ver.rel_tol, "relative tolerance vs analytic");
  c_ver->add_option("--oracle-tol", ver.oracle_tol,
                    "slack added to the chain truncation bound");
  c_ver->add_flag("--no-oracle", ver.no_oracle, "skip chain verification");
  c_ver->add_flag("--no-sim", ver.no_sim, "skip simulation");
  c_ver->add_option("--out", ver.out, "CSV output path (default stdout)");
  c_ver->add_flag("--theorem3", ver.theorem3,
                  "verify the head-of-line pattern distribution instead");
  c_ver->add_option("--l1", ver.l1, "pattern mode: lambda1");
  c_ver->add_option("--l2", ver.l2, "pattern mode: lambda2");
  c_ver->add_option("--hmax", ver.hmax, "pattern mode: largest head age (<=16)");
  c_ver->add_option("--ai-cap", ver.ai_cap, "pattern mode: chain truncation (<=22)");

  SweepArgs sw;
  CLI::App* c_sw = app.add_subcommand("sweep", "evaluate a metric across one rate");
  c_sw->add_option("--scenario", sw.scenario);
  c_sw->add_option("--metric", sw.metric, "aoi|aoa|aoai");
  c_sw->add_option("--fix", sw.fix, "the fixed rate, e.g. l2=0.5");
  c_sw->add_option("--grid", sw.grid, "free-rate grid start:stop:step");
  c_sw->add_option("--evaluator", sw.evaluator, "analytic|simulation|oracle");
  c_sw->add_option("--horizon", sw.horizon, "simulation evaluator slots");
  c_sw->add_option("--seed", sw.seed);
  c_sw->add_option("--out", sw.out, "CSV output path (default stdout)");

  SweepArgs og;
  CLI::App* c_opt = app.add_subcommand("optimize",
                                       "minimize a metric over lambda1 at fixed lambda2");
  c_opt->add_option("--scenario", og.scenario);
  c_opt->add_option("--metric", og.metric, "aoi|aoa|aoai");
  c_opt->add_option("--fix", og.fix, "l2=V");
  c_opt->add_option("--tol", og.tol, "bracket width target (default 1e-6)");
  c_opt->add_option("--out", og.out, "coarse-scan CSV path");
  c_opt->add_option("--report", og.report, "JSON report path (default stdout)");

  DumpArgs dm;
  CLI::App* c_dm = app.add_subcommand("dump-chain", "dump a truncated chain as CSV");
  c_dm->add_option("--chain", dm.chain,
                   "aoa-inf|aoa-buffer|aoa-battery|aoai-buffer|aoai-battery|aoai-inf|"
                   "queue-pattern|occupancy");
  c_dm->add_option("--scenario", dm.scenario, "occupancy chain scenario");
  c_dm->add_option("--l1", dm.l1);
  c_dm->add_option("--l2", dm.l2);
  c_dm->add_option("--age-max", dm.age_max, "age truncation (0 = automatic)");
  c_dm->add_option("--queue-max", dm.queue_max, "queue truncation (0 = automatic)");
  c_dm->add_option("--h-max", dm.h_max, "pattern head truncation (0 = automatic)");
  c_dm->add_flag("--stationary", dm.with_stationary, "also solve and dump probabilities");
  c_dm->add_option("--out", dm.out, "output path (default stdout)");

  // required rate options when no manifest is given
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_sim->parsed()) {
      if (sim.from_manifest.empty()) {
        if (c_sim->count("--l1") == 0 || c_sim->count("--l2") == 0) {
          std::cerr << "simulate: --l1 and --l2 are required (or --from-manifest)\n";
          return 2;
        }
      }
      return run_simulate(sim);
    }
    if (c_ver->parsed()) return run_verify(ver);
    if (c_sw->parsed()) return run_sweep(sw);
    if (c_opt->parsed()) return run_optimize(og);
    if (c_dm->parsed()) return run_dump_chain(dm);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "argument error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
