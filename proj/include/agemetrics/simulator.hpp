#pragma once

#include "agemetrics/core.hpp"
#include "agemetrics/prng.hpp"
#include "agemetrics/stats.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace agemetrics {

struct SimConfig {
  ScenarioParams params;
  std::uint64_t horizon = 10'000'000;  // total slots simulated
  std::uint64_t warmup = 10'000;       // leading slots excluded from averages
  std::uint64_t seed = 0;
  std::uint32_t batches = 32;          // contiguous blocks for the 95% CI
  bool record_trace = false;
  std::uint64_t trace_limit = 100'000;     // traces are capped to the first slots
  std::uint64_t queue_cap = 1'000'000;     // hard abort guard for unstable runs
  bool check_invariants = true;

  void validate() const {
    params.validate();
    if (horizon == 0) throw std::domain_error("horizon must be positive");
    if (warmup >= horizon) throw std::domain_error("warmup must be smaller than horizon");
    if (batches == 0) throw std::domain_error("batches must be positive");
    if (horizon - warmup < batches)
      throw std::domain_error("horizon - warmup must cover at least one slot per batch");
    if (queue_cap == 0) throw std::domain_error("queue_cap must be positive");
  }
};

struct AgeStats {
  double mean_aoi = 0.0;
  double mean_aoa = 0.0;
  double mean_aoai = 0.0;
  double ci_aoi = 0.0;   // 95% halfwidths
  double ci_aoa = 0.0;
  double ci_aoai = 0.0;
  double actuation_rate = 0.0;
  std::uint64_t slots_counted = 0;
  bool nonstationary = false;  // infinite-queue run with lambda1 >= lambda2
  std::uint32_t replications = 1;
};

struct SlotRecord {
  std::uint64_t slot = 0;
  SlotEvents events;
  bool actuated = false;
  AgeTriple ages;
  std::uint64_t queue_len = 0;
  int battery = -1;  // -1 when the scenario has no battery
};

struct StepOutcome {
  bool actuated = false;
  std::optional<std::uint64_t> actuated_packet_age;
};

/// Advances one slot in place. Order within the slot: events are realized,
/// actuation is decided from the previous slot's occupancy (plus a same-slot
/// arrival), the arrival is admitted, the actuated packet is removed, the
/// battery is settled, and the three ages are updated to end-of-slot values.
inline StepOutcome step_inplace(SystemState& s, SlotEvents ev, ScenarioTag scenario) {
  const std::uint64_t n = s.slot + 1;
  const bool queue_nonempty_prev = !s.queue.empty();
  const bool battery_scenario = scenario == ScenarioTag::BufferBattery;

  // For the battery scenario an opportunity is energy availability this slot:
  // a stored unit or one harvested now.
  SlotEvents decision_ev = ev;
  if (battery_scenario) decision_ev.opportunity = (s.battery == 1) || ev.opportunity;
  const bool actuated = actuation_decision(queue_nonempty_prev, decision_ev);

  if (ev.arrival) {
    if (!is_infinite_queue(scenario)) s.queue.clear();  // freshest packet replaces
    s.queue.push_back(n);
  }

  StepOutcome out;
  out.actuated = actuated;
  if (actuated) {
    std::uint64_t arrival_slot;
    if (scenario == ScenarioTag::InfFcfs) {
      arrival_slot = s.queue.front();
      s.queue.pop_front();
    } else {
      arrival_slot = s.queue.back();  // freshest for LCFS and the buffers
      s.queue.pop_back();
    }
    out.actuated_packet_age = n - arrival_slot + 1;
  }

  if (battery_scenario) {
    const int level = int(s.battery) + (ev.opportunity ? 1 : 0) - (actuated ? 1 : 0);
    s.battery = static_cast<std::uint8_t>(level > 1 ? 1 : level);
  }

  s.ages.aoi = evolve_aoi(s.ages.aoi, ev.arrival);
  s.ages.aoa = evolve_aoa(s.ages.aoa, actuated);
  s.ages.aoai = evolve_aoai(s.ages.aoai, actuated, out.actuated_packet_age);
  s.slot = n;
  return out;
}

/// Value-semantics wrapper around step_inplace.
inline std::tuple<SystemState, bool, std::optional<std::uint64_t>> step(SystemState state,
                                                                        SlotEvents ev,
                                                                        ScenarioTag scenario) {
  const StepOutcome out = step_inplace(state, ev, scenario);
  return {std::move(state), out.actuated, out.actuated_packet_age};
}

namespace detail {

inline void check_slot_invariants(const SystemState& s, ScenarioTag scenario) {
  const AgeTriple& a = s.ages;
  if (a.aoi < 1 || a.aoa < 1 || a.aoai < 1 || a.aoai < a.aoi || a.aoai < a.aoa)
    throw std::logic_error("age ordering violated");
  if (scenario == ScenarioTag::BufferBattery && s.battery == 1 && !s.queue.empty())
    throw std::logic_error("infeasible end-of-slot state: stored packet and full battery");
  if (!s.queue.empty() && s.queue.front() > s.queue.back())
    throw std::logic_error("queue order violated");
}

}  // namespace detail

struct SimResult {
  AgeStats stats;
  std::vector<SlotRecord> trace;
};

/// Seeded single run. Identical configs give bit-identical results.
inline SimResult simulate(const SimConfig& cfg) {
  cfg.validate();
  const ScenarioTag scenario = cfg.params.scenario;
  const BernoulliStream arrivals(cfg.seed, 0, cfg.params.lambda1);
  const BernoulliStream opportunities(cfg.seed, 1, cfg.params.lambda2);

  const std::uint64_t counted = cfg.horizon - cfg.warmup;
  const std::uint64_t batch_len = counted / cfg.batches;
  const std::uint64_t used = batch_len * cfg.batches;  // trailing remainder dropped

  std::vector<std::uint64_t> batch_aoi(cfg.batches, 0), batch_aoa(cfg.batches, 0),
      batch_aoai(cfg.batches, 0);
  std::uint64_t actuations = 0;

  SimResult result;
  if (cfg.record_trace) result.trace.reserve(std::min(cfg.horizon, cfg.trace_limit));

  SystemState state;
  for (std::uint64_t n = 1; n <= cfg.horizon; ++n) {
    const SlotEvents ev{arrivals.draw(n), opportunities.draw(n)};
    const StepOutcome out = step_inplace(state, ev, scenario);
    if (cfg.check_invariants) detail::check_slot_invariants(state, scenario);
    if (state.queue.size() > cfg.queue_cap)
      throw std::runtime_error("queue length exceeded queue_cap (" +
                               std::to_string(cfg.queue_cap) + "); raise the cap or pick "
                               "stable rates");

    if (cfg.record_trace && n <= cfg.trace_limit) {
      SlotRecord rec;
      rec.slot = n;
      rec.events = ev;
      rec.actuated = out.actuated;
      rec.ages = state.ages;
      rec.queue_len = state.queue_len();
      rec.battery = scenario == ScenarioTag::BufferBattery ? int(state.battery) : -1;
      result.trace.push_back(rec);
    }

    if (n > cfg.warmup) {
      const std::uint64_t k = n - cfg.warmup - 1;
      if (k < used) {
        const std::uint64_t b = k / batch_len;
        batch_aoi[b] += state.ages.aoi;
        batch_aoa[b] += state.ages.aoa;
        batch_aoai[b] += state.ages.aoai;
        if (out.actuated) ++actuations;
      }
    }
  }

  auto summarize = [&](const std::vector<std::uint64_t>& sums) {
    std::vector<double> means(cfg.batches);
    for (std::uint32_t b = 0; b < cfg.batches; ++b)
      means[b] = static_cast<double>(sums[b]) / static_cast<double>(batch_len);
    return mean_ci(means);
  };
  const MeanCi mi = summarize(batch_aoi);
  const MeanCi ma = summarize(batch_aoa);
  const MeanCi mai = summarize(batch_aoai);

  AgeStats& st = result.stats;
  st.mean_aoi = mi.mean;
  st.mean_aoa = ma.mean;
  st.mean_aoai = mai.mean;
  st.ci_aoi = mi.halfwidth;
  st.ci_aoa = ma.halfwidth;
  st.ci_aoai = mai.halfwidth;
  st.actuation_rate = static_cast<double>(actuations) / static_cast<double>(used);
  st.slots_counted = used;
  st.nonstationary = is_infinite_queue(scenario) && !cfg.params.stable();
  st.replications = 1;
  return result;
}

/// Seed of replication `rep` of a base seed; rep 0 is the base run itself.
inline std::uint64_t replication_seed(std::uint64_t base_seed, std::uint32_t rep) {
  if (rep == 0) return base_seed;
  return detail::mix64(substream_key(base_seed, 0xC0FFEEull + rep));
}

/// Independent replications; pooled means with across-replication CIs.
/// Results do not depend on any evaluation order.
inline AgeStats replicate(const SimConfig& cfg, std::uint32_t n_reps) {
  if (n_reps == 0) throw std::domain_error("n_reps must be positive");
  if (n_reps == 1) return simulate(cfg).stats;

  std::vector<double> mi(n_reps), ma(n_reps), mai(n_reps);
  double act = 0.0;
  std::uint64_t slots = 0;
  bool nonstationary = false;
  for (std::uint32_t r = 0; r < n_reps; ++r) {
    SimConfig c = cfg;
    c.seed = replication_seed(cfg.seed, r);
    c.record_trace = false;
    const AgeStats s = simulate(c).stats;
    mi[r] = s.mean_aoi;
    ma[r] = s.mean_aoa;
    mai[r] = s.mean_aoai;
    act += s.actuation_rate;
    slots += s.slots_counted;
    nonstationary = s.nonstationary;
  }
  const MeanCi ci_i = mean_ci(mi), ci_a = mean_ci(ma), ci_ai = mean_ci(mai);
  AgeStats out;
  out.mean_aoi = ci_i.mean;
  out.mean_aoa = ci_a.mean;
  out.mean_aoai = ci_ai.mean;
  out.ci_aoi = ci_i.halfwidth;
  out.ci_aoa = ci_a.halfwidth;
  out.ci_aoai = ci_ai.halfwidth;
  out.actuation_rate = act / n_reps;
  out.slots_counted = slots;
  out.nonstationary = nonstationary;
  out.replications = n_reps;
  return out;
}

}  // namespace agemetrics
