#pragma once

#include "agemetrics/analytic.hpp"
#include "agemetrics/core.hpp"
#include "agemetrics/optimizer.hpp"
#include "agemetrics/oracle.hpp"
#include "agemetrics/parallel.hpp"
#include "agemetrics/simulator.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

// The three-way comparison behind `verify`: analytic closed forms against the
// truncated-chain solves and against seeded simulation, per scenario, metric
// and grid point.

namespace agemetrics::verify {

struct TriangleOptions {
  std::vector<double> grid{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<ScenarioTag> scenarios{ScenarioTag::InfFcfs, ScenarioTag::InfLcfs,
                                     ScenarioTag::BufferController,
                                     ScenarioTag::BufferBattery};
  std::vector<optim::Metric> metrics{optim::Metric::Aoi, optim::Metric::Aoa,
                                     optim::Metric::Aoai};
  std::uint64_t post_warmup_slots = 10'000'000;
  std::uint64_t warmup = 10'000;
  std::uint64_t seed = 20240001;
  std::uint32_t batches = 32;
  std::uint64_t queue_cap = 30'000'000;
  double sim_rel_tol = 0.01;
  double oracle_extra_tol = 1e-6;
  bool with_oracle = true;
  bool with_sim = true;
  unsigned threads = 0;  // 0 = thread_budget()
};

struct TriangleRow {
  ScenarioTag scenario;
  optim::Metric metric;
  double lambda1, lambda2;
  double analytic = 0.0;
  std::optional<double> oracle;
  double oracle_bound = 0.0;
  std::optional<double> sim;
  double sim_ci = 0.0;
  bool oracle_pass = true;
  bool sim_pass = true;
  bool sim_within_ci = true;
  std::string note;
};

struct TriangleReport {
  std::vector<TriangleRow> rows;
  bool all_pass = true;
  std::size_t sim_checks = 0;
  std::size_t sim_ci_hits = 0;  // how often the analytic value fell inside the 95% CI
};

namespace detail {

/// Whether this (scenario, metric, point) carries a closed form to verify.
/// Infinite-queue actuated-information results exist only under stability.
inline bool has_closed_form(ScenarioTag s, optim::Metric m, double l1, double l2) {
  if (m == optim::Metric::Aoai && is_infinite_queue(s)) return l1 < l2;
  return true;
}

struct ChainKey {
  oracle::ChainId id;
  double l1, l2;
  bool operator<(const ChainKey& o) const {
    if (id != o.id) return id < o.id;
    if (l1 != o.l1) return l1 < o.l1;
    return l2 < o.l2;
  }
};

class ChainCache {
 public:
  struct Entry {
    oracle::ChainSpec spec;
    oracle::StationaryResult result;
  };

  const Entry& get(oracle::ChainId id, double l1, double l2, ScenarioTag scenario) {
    const ChainKey key{id, l1, l2};
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      Entry e;
      e.spec = oracle::build_chain(id, ScenarioParams{scenario, l1, l2});
      e.result = oracle::stationary(e.spec);
      it = cache_.emplace(key, std::move(e)).first;
    }
    return it->second;
  }

 private:
  std::map<ChainKey, Entry> cache_;
};

struct OracleValue {
  double mean;
  double bound;
};

inline std::optional<OracleValue> oracle_mean(ChainCache& cache, ScenarioTag s,
                                              optim::Metric m, double l1, double l2,
                                              std::string& note) {
  using oracle::ChainId;
  using oracle::Coord;
  ChainId id;
  Coord coord = Coord::Age;
  ScenarioTag chain_scenario = s;
  switch (m) {
    case optim::Metric::Aoi:
      // the information age has the same law in every scenario
      id = s == ScenarioTag::BufferBattery ? ChainId::AoaiBattery : ChainId::AoaiBuffer;
      if (id == ChainId::AoaiBuffer) chain_scenario = ScenarioTag::BufferController;
      coord = Coord::Info;
      break;
    case optim::Metric::Aoa:
      if (is_infinite_queue(s)) {
        if (!(l1 < l2)) {
          note = "oracle skipped: queue chain not positive recurrent";
          return std::nullopt;
        }
        id = ChainId::AoaInf;
      } else {
        id = s == ScenarioTag::BufferController ? ChainId::AoaBuffer : ChainId::AoaBattery;
      }
      break;
    case optim::Metric::Aoai:
      if (s == ScenarioTag::InfFcfs) {
        id = ChainId::AoaiInf;
      } else if (s == ScenarioTag::BufferBattery) {
        id = ChainId::AoaiBattery;
      } else {
        id = ChainId::AoaiBuffer;
        chain_scenario = ScenarioTag::BufferController;
      }
      break;
    default:
      return std::nullopt;
  }
  const auto& entry = cache.get(id, l1, l2, chain_scenario);
  const auto mb = oracle::mean_age(entry.spec, entry.result, coord);
  return OracleValue{mb.mean, mb.tail_bound};
}

}  // namespace detail

namespace detail {

inline SimConfig triangle_sim_config(const TriangleOptions& opt, ScenarioTag scenario,
                                     double l1, double l2) {
  SimConfig cfg;
  cfg.params = ScenarioParams{scenario, l1, l2};
  cfg.horizon = opt.post_warmup_slots + opt.warmup;
  cfg.warmup = opt.warmup;
  cfg.batches = opt.batches;
  cfg.queue_cap = opt.queue_cap;
  cfg.seed = substream_key(opt.seed, (std::uint64_t(scenario) << 16) ^
                                         std::uint64_t(l1 * 1000) * 1009 ^
                                         std::uint64_t(l2 * 1000));
  return cfg;
}

}  // namespace detail

/// Runs the full grid. One simulation per (scenario, point) feeds all three
/// metrics; chain solves are shared across scenarios through the cache.
/// Simulations may run in parallel; seeds are per-cell, so the report is
/// independent of scheduling.
inline TriangleReport run_triangle(const TriangleOptions& opt) {
  TriangleReport report;
  detail::ChainCache cache;

  struct SimJob {
    ScenarioTag scenario;
    double l1, l2;
    std::optional<AgeStats> stats;
    std::string error;
  };
  std::vector<SimJob> jobs;
  if (opt.with_sim) {
    for (const ScenarioTag scenario : opt.scenarios)
      for (const double l1 : opt.grid)
        for (const double l2 : opt.grid) {
          bool any = false;
          for (const auto m : opt.metrics)
            any = any || detail::has_closed_form(scenario, m, l1, l2);
          if (any) jobs.push_back({scenario, l1, l2, std::nullopt, {}});
        }
    const unsigned threads = opt.threads ? opt.threads : thread_budget();
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
      SimJob& j = jobs[i];
      try {
        j.stats = simulate(detail::triangle_sim_config(opt, j.scenario, j.l1, j.l2)).stats;
      } catch (const std::exception& e) {
        j.error = e.what();
      }
    });
  }
  auto find_job = [&](ScenarioTag s, double l1, double l2) -> const SimJob* {
    for (const auto& j : jobs)
      if (j.scenario == s && j.l1 == l1 && j.l2 == l2) return &j;
    return nullptr;
  };

  for (const ScenarioTag scenario : opt.scenarios) {
    for (const double l1 : opt.grid) {
      for (const double l2 : opt.grid) {
        std::optional<AgeStats> sim_stats;
        std::string sim_error;
        if (const SimJob* j = find_job(scenario, l1, l2)) {
          sim_stats = j->stats;
          sim_error = j->error;
        }

        for (const optim::Metric metric : opt.metrics) {
          if (!detail::has_closed_form(scenario, metric, l1, l2)) continue;
          TriangleRow row;
          row.scenario = scenario;
          row.metric = metric;
          row.lambda1 = l1;
          row.lambda2 = l2;
          row.analytic = optim::analytic_metric(scenario, metric, l1, l2);

          if (opt.with_oracle) {
            const auto ov = detail::oracle_mean(cache, scenario, metric, l1, l2, row.note);
            if (ov.has_value()) {
              row.oracle = ov->mean;
              row.oracle_bound = ov->bound;
              row.oracle_pass =
                  std::abs(ov->mean - row.analytic) <= ov->bound + opt.oracle_extra_tol;
            }
          }

          if (sim_stats.has_value()) {
            double mean = 0.0, ci = 0.0;
            switch (metric) {
              case optim::Metric::Aoi:
                mean = sim_stats->mean_aoi;
                ci = sim_stats->ci_aoi;
                break;
              case optim::Metric::Aoa:
                mean = sim_stats->mean_aoa;
                ci = sim_stats->ci_aoa;
                break;
              case optim::Metric::Aoai:
                mean = sim_stats->mean_aoai;
                ci = sim_stats->ci_aoai;
                break;
            }
            row.sim = mean;
            row.sim_ci = ci;
            const double err = std::abs(mean - row.analytic);
            row.sim_within_ci = err <= ci;
            // a 95% interval misses by design on a few cells of a large grid;
            // the relative tolerance is the acceptance bar, CI coverage is
            // tallied separately
            row.sim_pass = err <= std::max(ci, opt.sim_rel_tol * std::abs(row.analytic));
            ++report.sim_checks;
            if (row.sim_within_ci) ++report.sim_ci_hits;
          } else if (opt.with_sim) {
            row.sim_pass = false;
            row.note = row.note.empty() ? "simulation failed: " + sim_error : row.note;
          }

          report.all_pass = report.all_pass && row.oracle_pass && row.sim_pass;
          report.rows.push_back(std::move(row));
        }
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Head-of-line pattern distribution verification
// ---------------------------------------------------------------------------

struct PatternReport {
  double max_same_hl_spread = 0.0;   // across patterns sharing (h,l)
  double max_vs_closed_form = 0.0;   // exact engine vs the (h,l) closed form
  double max_level_identity = 0.0;   // combinatorial level sum vs its closed form
  double max_queue_len_diff = 0.0;   // numeric occupancy marginal vs closed form
  double max_chain_cross_check = 0.0;  // exact engine vs truncated-chain marginal
  double chain_cross_check_bound = 0.0;
  bool pass_spread = false;
  bool pass_closed_form = false;
  bool pass_level = false;
  bool pass_queue_len = false;
  bool pass_chain_cross_check = false;
  bool all_pass() const {
    return pass_spread && pass_closed_form && pass_level && pass_queue_len &&
           pass_chain_cross_check;
  }
};

struct PatternTolerances {
  double same_hl_spread = 1e-9;
  double vs_closed_form = 1e-7;
  double level_identity = 1e-12;
  double queue_len = 1e-8;
};

/// Checks every pattern with head age <= h_max at one parameter point:
/// same-(h,l) patterns must agree, every pattern must match the closed form,
/// the level sums must match their closed form, the occupancy marginal must
/// match the geometric law, and the full (AI, pattern) chain must agree
/// within its truncation bound.
inline PatternReport verify_patterns(double l1, double l2, std::uint32_t h_max,
                                     std::uint32_t chain_ai_max = 14,
                                     PatternTolerances tol = {}) {
  PatternReport rep;
  const ScenarioParams params{ScenarioTag::InfFcfs, l1, l2};
  const oracle::PatternDistribution dist = oracle::queue_pattern_stationary(params, h_max);

  std::map<std::pair<std::uint32_t, std::uint32_t>, std::pair<double, double>> extremes;
  for (const auto& [code, prob] : dist.prob) {
    if (code == 0) continue;
    const auto h = static_cast<std::uint32_t>(std::bit_width(code));
    const auto l = static_cast<std::uint32_t>(std::popcount(code));
    auto [it, fresh] = extremes.try_emplace({h, l}, std::pair{prob, prob});
    if (!fresh) {
      it->second.first = std::min(it->second.first, prob);
      it->second.second = std::max(it->second.second, prob);
    }
    rep.max_vs_closed_form = std::max(
        rep.max_vs_closed_form, std::abs(prob - analytic::gamma_state_prob(h, l, l1, l2)));
  }
  for (const auto& [hl, mm] : extremes)
    rep.max_same_hl_spread = std::max(rep.max_same_hl_spread, mm.second - mm.first);

  for (std::uint32_t h = 1; h <= h_max; ++h) {
    rep.max_level_identity =
        std::max(rep.max_level_identity,
                 std::abs(analytic::gamma_level_prob(h, l1, l2) -
                          analytic::gamma_level_prob_closed(h, l1, l2)));
  }

  for (std::size_t i = 0; i < dist.queue_len_dist.size(); ++i) {
    const double diff =
        std::abs(dist.queue_len_dist[i] - analytic::queue_length_dist(l1, l2, i));
    rep.max_queue_len_diff = std::max(rep.max_queue_len_diff, diff);
  }

  const oracle::PatternDistribution from_chain =
      oracle::queue_pattern_from_chain(params, std::min(h_max, chain_ai_max - 1),
                                       chain_ai_max);
  for (const auto& [code, prob] : from_chain.prob) {
    const auto it = dist.prob.find(code);
    if (it == dist.prob.end()) continue;
    rep.max_chain_cross_check =
        std::max(rep.max_chain_cross_check, std::abs(prob - it->second));
  }
  rep.chain_cross_check_bound = from_chain.tail_bound + 1e-6;

  rep.pass_spread = rep.max_same_hl_spread <= tol.same_hl_spread;
  rep.pass_closed_form = rep.max_vs_closed_form <= tol.vs_closed_form;
  rep.pass_level = rep.max_level_identity <= tol.level_identity;
  rep.pass_queue_len = rep.max_queue_len_diff <= tol.queue_len;
  rep.pass_chain_cross_check = rep.max_chain_cross_check <= rep.chain_cross_check_bound;
  return rep;
}

}  // namespace agemetrics::verify
