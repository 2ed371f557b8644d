#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>

namespace agemetrics {

/// The four actuation-constrained queueing scenarios.
enum class ScenarioTag {
  InfFcfs,           // infinite queue, oldest packet actuated first
  InfLcfs,           // infinite queue, freshest packet actuated first
  BufferController,  // single-packet buffer, permission-gated actuation
  BufferBattery,     // single-packet buffer, unit battery gates actuation
};

inline const char* to_string(ScenarioTag s) {
  switch (s) {
    case ScenarioTag::InfFcfs: return "inf-fcfs";
    case ScenarioTag::InfLcfs: return "inf-lcfs";
    case ScenarioTag::BufferController: return "buffer-controller";
    case ScenarioTag::BufferBattery: return "buffer-battery";
  }
  return "?";
}

inline ScenarioTag scenario_from_string(const std::string& s) {
  if (s == "inf-fcfs") return ScenarioTag::InfFcfs;
  if (s == "inf-lcfs") return ScenarioTag::InfLcfs;
  if (s == "buffer-controller") return ScenarioTag::BufferController;
  if (s == "buffer-battery") return ScenarioTag::BufferBattery;
  throw std::invalid_argument("unknown scenario: " + s);
}

inline bool is_infinite_queue(ScenarioTag s) {
  return s == ScenarioTag::InfFcfs || s == ScenarioTag::InfLcfs;
}

struct ScenarioParams {
  ScenarioTag scenario = ScenarioTag::InfFcfs;
  double lambda1 = 0.5;  // per-slot packet delivery probability
  double lambda2 = 0.5;  // per-slot permission / energy-harvest probability

  // Rates live on the open interval; boundary values make several of the
  // closed forms 0/0 and are rejected everywhere.
  void validate() const {
    if (!(lambda1 > 0.0 && lambda1 < 1.0))
      throw std::domain_error("lambda1 must lie in (0,1)");
    if (!(lambda2 > 0.0 && lambda2 < 1.0))
      throw std::domain_error("lambda2 must lie in (0,1)");
  }

  bool stable() const { return lambda1 < lambda2; }
};

/// Per-slot exogenous events.
struct SlotEvents {
  bool arrival = false;      // a packet was delivered this slot
  bool opportunity = false;  // permission granted / energy harvested this slot
};

/// End-of-slot ages, all at least 1.
struct AgeTriple {
  std::uint64_t aoi = 1;   // slots since generation of freshest delivered packet
  std::uint64_t aoa = 1;   // slots since last actuation
  std::uint64_t aoai = 1;  // slots since generation of freshest actuated packet
};

/// An actuation happens iff there is an opportunity and something to actuate:
/// a packet stored at the end of the previous slot or one arriving this slot
/// (a same-slot arrival is eligible immediately).
constexpr bool actuation_decision(bool queue_nonempty_prev, SlotEvents ev) noexcept {
  return ev.opportunity && (queue_nonempty_prev || ev.arrival);
}

constexpr std::uint64_t evolve_aoi(std::uint64_t prev_aoi, bool arrival) noexcept {
  return arrival ? 1 : prev_aoi + 1;
}

constexpr std::uint64_t evolve_aoa(std::uint64_t prev_aoa, bool actuated) noexcept {
  return actuated ? 1 : prev_aoa + 1;
}

/// On actuation the age of the actuated information becomes the smaller of the
/// aged previous value and the actuated packet's age; an actuated packet can
/// be older than the running value only when freshest-first removal has
/// already actuated a younger packet.
inline std::uint64_t evolve_aoai(std::uint64_t prev_aoai, bool actuated,
                                 std::optional<std::uint64_t> actuated_packet_age) {
  if (!actuated) {
    return prev_aoai + 1;
  }
  if (!actuated_packet_age.has_value())
    throw std::invalid_argument("evolve_aoai: actuation requires the actuated packet age");
  if (*actuated_packet_age < 1)
    throw std::invalid_argument("evolve_aoai: packet age must be positive");
  const std::uint64_t aged = prev_aoai + 1;
  return aged < *actuated_packet_age ? aged : *actuated_packet_age;
}

/// Full per-scenario slot state. Packets are identified by arrival slot; a
/// packet's age at the end of slot n is n - arrival_slot + 1. The store is
/// ordered oldest first, so arrival slots increase front to back.
struct SystemState {
  AgeTriple ages;
  std::deque<std::uint64_t> queue;  // arrival slots; front = oldest
  std::uint8_t battery = 0;         // meaningful for BufferBattery only
  std::uint64_t slot = 0;           // index of the last completed slot

  std::uint64_t queue_len() const { return queue.size(); }

  std::uint64_t packet_age(std::uint64_t arrival_slot) const {
    return slot - arrival_slot + 1;
  }
};

}  // namespace agemetrics
