#pragma once

#include "agemetrics/analytic.hpp"
#include "agemetrics/core.hpp"
#include "agemetrics/format.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

// Closed-form-free verification: finite truncations of the exact slot-level
// Markov chains are built from the scenario dynamics, solved numerically, and
// their marginal means compared against the analytic module.

namespace agemetrics::oracle {

enum class ChainId {
  AoaInf,        // (actuation age, queue length), infinite queue
  AoaBuffer,     // (actuation age, occupancy), single-packet buffer
  AoaBattery,    // (actuation age, occupancy, battery)
  AoaiBuffer,    // (actuated-information age, information age)
  AoaiBattery,   // (actuated-information age, information age, battery)
  AoaiInf,       // (actuated-information age, queue occupancy pattern)
  QueuePattern,  // queue occupancy pattern alone
  Occupancy,     // queue (and battery) occupancy alone
};

inline const char* to_string(ChainId id) {
  switch (id) {
    case ChainId::AoaInf: return "aoa-inf";
    case ChainId::AoaBuffer: return "aoa-buffer";
    case ChainId::AoaBattery: return "aoa-battery";
    case ChainId::AoaiBuffer: return "aoai-buffer";
    case ChainId::AoaiBattery: return "aoai-battery";
    case ChainId::AoaiInf: return "aoai-inf";
    case ChainId::QueuePattern: return "queue-pattern";
    case ChainId::Occupancy: return "occupancy";
  }
  return "?";
}

struct ChainLimits {
  std::uint32_t age_max = 0;    // A / AI cap; 0 derives a cap from the params
  std::uint32_t queue_max = 0;  // queue-length cap where the queue is infinite
  std::uint32_t h_max = 0;      // head-of-line age cap for pattern states
};

struct Transition {
  std::uint32_t from;
  std::uint32_t to;
  double prob;
};

/// Decoded state coordinates; which fields are meaningful depends on the chain.
struct StateView {
  std::uint32_t age = 0;      // A or AI
  std::uint32_t info = 0;     // I, or queue length for AoaInf / Occupancy
  std::uint32_t battery = 0;
  std::uint64_t bits = 0;     // queue pattern, bit i-1 <=> a packet of age i
};

namespace detail {

// Tuple states pack as (age, info, battery); pattern states as (age, bits).
inline std::uint64_t encode_tuple(std::uint32_t age, std::uint32_t info, std::uint32_t b) {
  return (std::uint64_t(age) << 24) | (std::uint64_t(info) << 4) | b;
}
inline std::uint64_t encode_pattern(std::uint32_t age, std::uint64_t bits) {
  return (std::uint64_t(age) << 32) | bits;
}

inline std::uint32_t pattern_head(std::uint64_t bits) {
  return static_cast<std::uint32_t>(std::bit_width(bits));
}

}  // namespace detail

inline StateView decode_state(ChainId id, std::uint64_t code) {
  StateView v;
  switch (id) {
    case ChainId::AoaiInf:
      v.age = static_cast<std::uint32_t>(code >> 32);
      v.bits = code & 0xFFFFFFFFull;
      v.info = static_cast<std::uint32_t>(std::popcount(v.bits));
      break;
    case ChainId::QueuePattern:
      v.bits = code;
      v.age = detail::pattern_head(v.bits);
      v.info = static_cast<std::uint32_t>(std::popcount(v.bits));
      break;
    default:
      v.age = static_cast<std::uint32_t>(code >> 24);
      v.info = static_cast<std::uint32_t>((code >> 4) & 0xFFFFF);
      v.battery = static_cast<std::uint32_t>(code & 0xF);
      break;
  }
  return v;
}

struct ChainSpec {
  ChainId id = ChainId::AoaBuffer;
  ScenarioParams params;
  ChainLimits limits;
  std::vector<std::uint64_t> states;      // sorted codes; position = row index
  std::vector<Transition> transitions;    // grouped by `from`
  std::vector<double> leak;               // per-row mass past the truncation

  std::size_t index_of(std::uint64_t code) const {
    const auto it = std::lower_bound(states.begin(), states.end(), code);
    if (it == states.end() || *it != code)
      throw std::out_of_range("state not present in chain");
    return static_cast<std::size_t>(it - states.begin());
  }

  bool contains(std::uint64_t code) const {
    const auto it = std::lower_bound(states.begin(), states.end(), code);
    return it != states.end() && *it == code;
  }

  /// Emitted outgoing mass per row, truncation leak included. Interior rows
  /// must sum to 1.
  std::vector<double> row_sums() const {
    std::vector<double> sums = leak;
    for (const Transition& t : transitions) sums[t.from] += t.prob;
    return sums;
  }
};

namespace detail {

inline std::uint32_t cap_from_ratio(double ratio, double tail_tol, std::uint32_t lo,
                                    std::uint32_t hi) {
  if (!(ratio > 0.0) || ratio >= 1.0) return hi;
  const double n = std::log(tail_tol) / std::log(ratio);
  const auto cap = static_cast<std::uint32_t>(std::ceil(n)) + 2;
  return std::clamp(cap, lo, hi);
}

/// Geometric decay rate of the age marginal, used for default caps and tail
/// bounds. The pattern-state chain also feels the head-of-line age tail,
/// whose ratio is (1-l2)/(1-l1) under stability.
inline double age_tail_ratio(ChainId id, const ScenarioParams& p) {
  const double r = std::max(1.0 - p.lambda1, 1.0 - p.lambda2);
  if (id == ChainId::AoaiInf || id == ChainId::QueuePattern)
    return std::max(r, (1.0 - p.lambda2) / (1.0 - p.lambda1));
  return r;
}

inline ChainLimits resolve_limits(ChainId id, const ScenarioParams& p, ChainLimits lm) {
  const double tail_tol = 1e-12;
  switch (id) {
    case ChainId::AoaInf:
      if (lm.age_max == 0) lm.age_max = cap_from_ratio(age_tail_ratio(id, p), tail_tol, 16, 1000);
      if (lm.queue_max == 0) {
        const auto c = analytic::RateConstants::from(p.lambda1, p.lambda2);
        lm.queue_max = cap_from_ratio(c.x / c.y, tail_tol, 8, 400);
      }
      break;
    case ChainId::AoaBuffer:
    case ChainId::AoaBattery:
    case ChainId::AoaiBuffer:
    case ChainId::AoaiBattery:
      if (lm.age_max == 0) lm.age_max = cap_from_ratio(age_tail_ratio(id, p), tail_tol, 16, 1000);
      break;
    case ChainId::AoaiInf:
      // Pattern states grow as 2^(AI-1); the cap trades tail mass for memory
      // and the reported bound stays honest either way.
      if (lm.age_max == 0)
        lm.age_max = cap_from_ratio(age_tail_ratio(id, p), 1e-10, 10, 18);
      if (lm.age_max > 22) throw std::domain_error("aoai-inf cap above 22 is not supported");
      break;
    case ChainId::QueuePattern:
      if (lm.h_max == 0) lm.h_max = cap_from_ratio(age_tail_ratio(id, p), 1e-10, 4, 16);
      if (lm.h_max > 24) throw std::domain_error("pattern head cap above 24 is not supported");
      break;
    case ChainId::Occupancy:
      if (lm.queue_max == 0 && is_infinite_queue(p.scenario)) {
        const auto c = analytic::RateConstants::from(p.lambda1, p.lambda2);
        lm.queue_max = cap_from_ratio(c.x / c.y, 1e-16, 16, 4096);
      }
      break;
  }
  return lm;
}

class ChainBuilder {
 public:
  ChainBuilder(ChainSpec& spec) : spec_(spec) {
    for (std::size_t i = 0; i < spec.states.size(); ++i) index_[spec.states[i]] = i;
    spec_.leak.assign(spec.states.size(), 0.0);
  }

  /// Adds one transition; a target outside the enumeration must be a
  /// truncation overflow, anything else is a construction bug.
  void add(std::uint64_t from, std::uint64_t to, double p, bool may_leak) {
    if (p == 0.0) return;
    const auto it = index_.find(to);
    const std::size_t row = index_.at(from);
    if (it == index_.end()) {
      if (!may_leak) throw std::logic_error("transition target missing from state space");
      spec_.leak[row] += p;
      return;
    }
    spec_.transitions.push_back({static_cast<std::uint32_t>(row),
                                 static_cast<std::uint32_t>(it->second), p});
  }

 private:
  ChainSpec& spec_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

}  // namespace detail

/// Enumerates the feasible truncated state space and the slot transitions for
/// one chain. Probabilities come from the four joint event outcomes.
inline ChainSpec build_chain(ChainId id, const ScenarioParams& params, ChainLimits limits = {}) {
  params.validate();
  const auto c = analytic::RateConstants::from(params.lambda1, params.lambda2);
  const double l1 = params.lambda1, l2 = params.lambda2;

  ChainSpec spec;
  spec.id = id;
  spec.params = params;

  const bool needs_stability =
      id == ChainId::AoaInf || id == ChainId::AoaiInf || id == ChainId::QueuePattern ||
      (id == ChainId::Occupancy && is_infinite_queue(params.scenario));
  if (needs_stability && !params.stable())
    throw analytic::unstable_error(
        "chain is not positive recurrent for lambda1 >= lambda2");

  spec.limits = detail::resolve_limits(id, params, limits);
  const std::uint32_t amax = spec.limits.age_max;
  const std::uint32_t qmax = spec.limits.queue_max;

  using detail::encode_pattern;
  using detail::encode_tuple;

  switch (id) {
    case ChainId::AoaInf: {
      for (std::uint32_t a = 1; a <= amax; ++a)
        for (std::uint32_t q = 0; q <= qmax; ++q)
          spec.states.push_back(encode_tuple(a, q, 0));
      std::sort(spec.states.begin(), spec.states.end());
      detail::ChainBuilder b(spec);
      for (std::uint32_t a = 1; a <= amax; ++a) {
        for (std::uint32_t q = 0; q <= qmax; ++q) {
          const std::uint64_t s = encode_tuple(a, q, 0);
          if (q == 0) {
            b.add(s, encode_tuple(1, 0, 0), c.w, false);
            b.add(s, encode_tuple(a + 1, 0, 0), c.y + c.z, true);
            b.add(s, encode_tuple(a + 1, 1, 0), c.x, true);
          } else {
            b.add(s, encode_tuple(1, q, 0), c.w, false);
            b.add(s, encode_tuple(1, q - 1, 0), c.y, false);
            b.add(s, encode_tuple(a + 1, q + 1, 0), c.x, true);
            b.add(s, encode_tuple(a + 1, q, 0), c.z, true);
          }
        }
      }
      break;
    }

    case ChainId::AoaBuffer: {
      spec.states.push_back(encode_tuple(1, 0, 0));  // age 1 implies an empty buffer
      for (std::uint32_t a = 2; a <= amax; ++a) {
        spec.states.push_back(encode_tuple(a, 0, 0));
        spec.states.push_back(encode_tuple(a, 1, 0));
      }
      std::sort(spec.states.begin(), spec.states.end());
      detail::ChainBuilder b(spec);
      for (const std::uint64_t s : spec.states) {
        const StateView v = decode_state(id, s);
        if (v.info == 0) {
          b.add(s, encode_tuple(1, 0, 0), c.w, false);
          b.add(s, encode_tuple(v.age + 1, 0, 0), c.y + c.z, true);
          b.add(s, encode_tuple(v.age + 1, 1, 0), c.x, true);
        } else {
          b.add(s, encode_tuple(1, 0, 0), l2, false);  // any opportunity actuates
          b.add(s, encode_tuple(v.age + 1, 1, 0), 1.0 - l2, true);
        }
      }
      break;
    }

    case ChainId::AoaBattery: {
      // (age,1,1) would mean a stored packet alongside stored energy and
      // (1,1,0) an actuation that left its packet behind; neither can happen.
      spec.states.push_back(encode_tuple(1, 0, 0));
      spec.states.push_back(encode_tuple(1, 0, 1));
      for (std::uint32_t a = 2; a <= amax; ++a) {
        spec.states.push_back(encode_tuple(a, 0, 0));
        spec.states.push_back(encode_tuple(a, 0, 1));
        spec.states.push_back(encode_tuple(a, 1, 0));
      }
      std::sort(spec.states.begin(), spec.states.end());
      detail::ChainBuilder b(spec);
      for (const std::uint64_t s : spec.states) {
        const StateView v = decode_state(id, s);
        if (v.info == 0 && v.battery == 0) {
          b.add(s, encode_tuple(1, 0, 0), c.w, false);
          b.add(s, encode_tuple(v.age + 1, 1, 0), c.x, true);
          b.add(s, encode_tuple(v.age + 1, 0, 1), c.y, true);
          b.add(s, encode_tuple(v.age + 1, 0, 0), c.z, true);
        } else if (v.info == 0 && v.battery == 1) {
          b.add(s, encode_tuple(1, 0, 1), c.w, false);  // spent unit re-harvested
          b.add(s, encode_tuple(1, 0, 0), c.x, false);
          b.add(s, encode_tuple(v.age + 1, 0, 1), c.y + c.z, true);
        } else {
          b.add(s, encode_tuple(1, 0, 0), l2, false);
          b.add(s, encode_tuple(v.age + 1, 1, 0), 1.0 - l2, true);
        }
      }
      break;
    }

    case ChainId::AoaiBuffer: {
      // The buffer holds the freshest packet exactly when AI > I.
      for (std::uint32_t ai = 1; ai <= amax; ++ai)
        for (std::uint32_t i = 1; i <= ai; ++i)
          spec.states.push_back(encode_tuple(ai, i, 0));
      std::sort(spec.states.begin(), spec.states.end());
      detail::ChainBuilder b(spec);
      for (const std::uint64_t s : spec.states) {
        const StateView v = decode_state(id, s);
        const std::uint32_t ai = v.age, i = v.info;
        if (ai == i) {
          b.add(s, encode_tuple(1, 1, 0), c.w, false);
          b.add(s, encode_tuple(ai + 1, 1, 0), c.x, true);
          b.add(s, encode_tuple(ai + 1, i + 1, 0), c.y + c.z, true);
        } else {
          b.add(s, encode_tuple(1, 1, 0), c.w, false);
          b.add(s, encode_tuple(i + 1, i + 1, 0), c.y, false);
          b.add(s, encode_tuple(ai + 1, 1, 0), c.x, true);
          b.add(s, encode_tuple(ai + 1, i + 1, 0), c.z, true);
        }
      }
      break;
    }

    case ChainId::AoaiBattery: {
      // AI < I is impossible, and a full battery forces AI = I.
      for (std::uint32_t ai = 1; ai <= amax; ++ai) {
        for (std::uint32_t i = 1; i <= ai; ++i) spec.states.push_back(encode_tuple(ai, i, 0));
        spec.states.push_back(encode_tuple(ai, ai, 1));
      }
      std::sort(spec.states.begin(), spec.states.end());
      detail::ChainBuilder b(spec);
      for (const std::uint64_t s : spec.states) {
        const StateView v = decode_state(id, s);
        const std::uint32_t ai = v.age, i = v.info;
        if (v.battery == 1) {
          b.add(s, encode_tuple(1, 1, 1), c.w, false);
          b.add(s, encode_tuple(1, 1, 0), c.x, false);
          b.add(s, encode_tuple(ai + 1, ai + 1, 1), c.y + c.z, true);
        } else if (ai == i) {
          b.add(s, encode_tuple(1, 1, 0), c.w, false);
          b.add(s, encode_tuple(ai + 1, 1, 0), c.x, true);
          b.add(s, encode_tuple(ai + 1, ai + 1, 1), c.y, true);
          b.add(s, encode_tuple(ai + 1, ai + 1, 0), c.z, true);
        } else {
          b.add(s, encode_tuple(1, 1, 0), c.w, false);
          b.add(s, encode_tuple(i + 1, i + 1, 0), c.y, false);
          b.add(s, encode_tuple(ai + 1, 1, 0), c.x, true);
          b.add(s, encode_tuple(ai + 1, i + 1, 0), c.z, true);
        }
      }
      break;
    }

    case ChainId::AoaiInf: {
      if (params.scenario != ScenarioTag::InfFcfs)
        throw std::domain_error("aoai-inf models the oldest-first infinite queue");
      // Stored packets are all younger than AI, so layer AI holds 2^(AI-1)
      // patterns over ages 1..AI-1.
      for (std::uint32_t ai = 1; ai <= amax; ++ai)
        for (std::uint64_t bits = 0; bits < (1ull << (ai - 1)); ++bits)
          spec.states.push_back(encode_pattern(ai, bits));
      std::sort(spec.states.begin(), spec.states.end());
      detail::ChainBuilder b(spec);
      for (const std::uint64_t s : spec.states) {
        const StateView v = decode_state(id, s);
        const std::uint32_t ai = v.age;
        const std::uint64_t bits = v.bits;
        if (bits == 0) {
          b.add(s, encode_pattern(1, 0), c.w, false);
          b.add(s, encode_pattern(ai + 1, 1), c.x, true);
          b.add(s, encode_pattern(ai + 1, 0), c.y + c.z, true);
        } else {
          const std::uint32_t h = detail::pattern_head(bits);
          const std::uint64_t rest = (bits ^ (1ull << (h - 1))) << 1;
          // actuating the head resets AI to the head's end-of-slot age h+1
          b.add(s, encode_pattern(h + 1, rest | 1), c.w, false);
          b.add(s, encode_pattern(h + 1, rest), c.y, false);
          b.add(s, encode_pattern(ai + 1, (bits << 1) | 1), c.x, true);
          b.add(s, encode_pattern(ai + 1, bits << 1), c.z, true);
        }
      }
      break;
    }

    case ChainId::QueuePattern: {
      if (!is_infinite_queue(params.scenario))
        throw std::domain_error("queue-pattern models the infinite queue");
      const std::uint32_t hmax = spec.limits.h_max;
      for (std::uint64_t bits = 0; bits < (1ull << hmax); ++bits)
        spec.states.push_back(bits);
      detail::ChainBuilder b(spec);
      for (const std::uint64_t bits : spec.states) {
        if (bits == 0) {
          b.add(bits, 0, c.w + c.y + c.z, false);
          b.add(bits, 1, c.x, false);
        } else {
          const std::uint32_t h = detail::pattern_head(bits);
          const std::uint64_t rest = (bits ^ (1ull << (h - 1))) << 1;
          b.add(bits, rest | 1, c.w, false);
          b.add(bits, rest, c.y, false);
          b.add(bits, (bits << 1) | 1, c.x, true);
          b.add(bits, bits << 1, c.z, true);
        }
      }
      break;
    }

    case ChainId::Occupancy: {
      switch (params.scenario) {
        case ScenarioTag::InfFcfs:
        case ScenarioTag::InfLcfs: {
          for (std::uint32_t q = 0; q <= spec.limits.queue_max; ++q)
            spec.states.push_back(encode_tuple(0, q, 0));
          detail::ChainBuilder b(spec);
          for (std::uint32_t q = 0; q <= spec.limits.queue_max; ++q) {
            const std::uint64_t s = encode_tuple(0, q, 0);
            if (q == 0) {
              b.add(s, encode_tuple(0, 0, 0), c.w + c.y + c.z, false);
              b.add(s, encode_tuple(0, 1, 0), c.x, true);
            } else {
              b.add(s, encode_tuple(0, q - 1, 0), c.y, false);
              b.add(s, encode_tuple(0, q + 1, 0), c.x, true);
              b.add(s, encode_tuple(0, q, 0), c.w + c.z, false);
            }
          }
          break;
        }
        case ScenarioTag::BufferController: {
          spec.states = {encode_tuple(0, 0, 0), encode_tuple(0, 1, 0)};
          detail::ChainBuilder b(spec);
          b.add(spec.states[0], spec.states[0], 1.0 - l1 + c.w, false);
          b.add(spec.states[0], spec.states[1], c.x, false);
          b.add(spec.states[1], spec.states[0], l2, false);
          b.add(spec.states[1], spec.states[1], 1.0 - l2, false);
          break;
        }
        case ScenarioTag::BufferBattery: {
          // feasible (queue, battery) states: (0,0), (0,1), (1,0)
          spec.states = {encode_tuple(0, 0, 0), encode_tuple(0, 0, 1), encode_tuple(0, 1, 0)};
          detail::ChainBuilder b(spec);
          const std::uint64_t s00 = spec.states[0], s01 = spec.states[1],
                              s10 = spec.states[2];
          b.add(s00, s00, c.w + c.z, false);
          b.add(s00, s01, c.y, false);
          b.add(s00, s10, c.x, false);
          b.add(s01, s00, c.x, false);
          b.add(s01, s01, c.w + c.y + c.z, false);
          b.add(s10, s00, l2, false);
          b.add(s10, s10, 1.0 - l2, false);
          break;
        }
      }
      break;
    }
  }

  std::sort(spec.transitions.begin(), spec.transitions.end(),
            [](const Transition& a, const Transition& b) {
              return a.from != b.from ? a.from < b.from : a.to < b.to;
            });
  return spec;
}

struct StationaryResult {
  std::vector<double> pi;   // normalized
  double residual = 0.0;    // L1 distance between successive normalized sweeps
  double leak_rate = 0.0;   // per-slot mass crossing the truncation boundary
  std::uint64_t iterations = 0;
};

/// Fixed-point sweeps of the (sub)stochastic transition matrix, renormalized
/// each pass. Throws when max_iters passes do not reach tol.
inline StationaryResult stationary(const ChainSpec& spec, double tol = 1e-12,
                                   std::uint64_t max_iters = 500000) {
  const std::size_t n = spec.states.size();
  if (n == 0) throw std::invalid_argument("empty chain");
  StationaryResult res;
  res.pi.assign(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);

  for (std::uint64_t it = 1; it <= max_iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (const Transition& t : spec.transitions) next[t.to] += res.pi[t.from] * t.prob;
    double mass = 0.0;
    for (double v : next) mass += v;
    double diff = 0.0;
    const double inv = 1.0 / mass;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] *= inv;
      diff += std::abs(next[i] - res.pi[i]);
    }
    res.pi.swap(next);
    res.residual = diff;
    res.iterations = it;
    if (diff < tol) {
      double leak = 0.0;
      for (std::size_t i = 0; i < n; ++i) leak += res.pi[i] * spec.leak[i];
      res.leak_rate = leak;
      return res;
    }
  }
  throw std::runtime_error("stationary solve did not converge within max_iters");
}

enum class Coord { Age, Info, QueueLen, Battery };

inline double coord_value(ChainId id, std::uint64_t code, Coord c) {
  const StateView v = decode_state(id, code);
  switch (c) {
    case Coord::Age:
      if (id == ChainId::QueuePattern || id == ChainId::Occupancy)
        throw std::invalid_argument("chain has no age coordinate");
      return v.age;
    case Coord::Info:
      if (id != ChainId::AoaiBuffer && id != ChainId::AoaiBattery)
        throw std::invalid_argument("chain has no information-age coordinate");
      return v.info;
    case Coord::QueueLen:
      if (id == ChainId::AoaiInf || id == ChainId::QueuePattern)
        return static_cast<double>(std::popcount(v.bits));
      if (id == ChainId::AoaiBuffer || id == ChainId::AoaiBattery)
        throw std::invalid_argument("chain has no queue-length coordinate");
      return v.info;
    case Coord::Battery:
      if (id != ChainId::AoaBattery && id != ChainId::AoaiBattery &&
          id != ChainId::Occupancy)
        throw std::invalid_argument("chain has no battery coordinate");
      return v.battery;
  }
  throw std::logic_error("unreachable");
}

struct MeanWithBound {
  double mean = 0.0;
  double tail_bound = 0.0;
};

/// First moment of one coordinate plus a geometric tail-correction bound.
/// The tail decay ratio is taken from interior layers (the outermost layers
/// of a truncated solve are depressed because inflow from above is cut), the
/// boundary layer is extrapolated from the interior, and a safety factor
/// covers the inflow the truncation removes from interior states.
inline MeanWithBound mean_age(const ChainSpec& spec, const StationaryResult& result,
                              Coord coord = Coord::Age) {
  if (result.pi.size() != spec.states.size())
    throw std::invalid_argument("result does not match chain");
  MeanWithBound out;
  std::uint32_t cap = 0;
  double ratio = 0.0;

  if (coord == Coord::Age) {
    cap = spec.limits.age_max;
    ratio = detail::age_tail_ratio(spec.id, spec.params);
  } else if (coord == Coord::QueueLen &&
             (spec.id == ChainId::AoaInf ||
              (spec.id == ChainId::Occupancy && is_infinite_queue(spec.params.scenario)))) {
    cap = spec.limits.queue_max;
    const auto c = analytic::RateConstants::from(spec.params.lambda1, spec.params.lambda2);
    ratio = c.x / c.y;
  }

  std::vector<double> layer(cap + 1, 0.0);
  for (std::size_t i = 0; i < spec.states.size(); ++i) {
    const double value = coord_value(spec.id, spec.states[i], coord);
    out.mean += value * result.pi[i];
    if (cap > 0 && value <= static_cast<double>(cap))
      layer[static_cast<std::size_t>(value)] += result.pi[i];
  }

  if (cap > 0) {
    const std::uint32_t skip = 2;  // truncation-depressed outer layers
    const std::uint32_t hi = cap > skip ? cap - skip : cap;
    const std::uint32_t lo = hi > 6 ? hi - 6 : 1;
    for (std::uint32_t i = lo + 1; i <= hi; ++i)
      if (layer[i - 1] > 0.0) ratio = std::max(ratio, layer[i] / layer[i - 1]);
    ratio = std::min(ratio, 1.0 - 1e-9);

    double boundary = layer[cap];
    if (hi >= 1 && hi < cap)
      boundary = std::max(boundary, layer[hi] * std::pow(ratio, double(cap - hi)));

    const double n = static_cast<double>(cap);
    const double geo = ratio / (1.0 - ratio);
    const double missing_mass = boundary * geo;
    const double safety = 8.0;
    out.tail_bound =
        safety * (missing_mass * out.mean +
                  boundary * (n * geo + ratio / ((1.0 - ratio) * (1.0 - ratio))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Queue-pattern stationary distribution
// ---------------------------------------------------------------------------

/// Per-pattern stationary probabilities of the oldest-first queue. Codes carry
/// the head bit (bit i-1 set <=> a packet of age i is stored); code 0 is the
/// empty queue.
struct PatternDistribution {
  std::map<std::uint64_t, double> prob;
  std::vector<double> queue_len_dist;  // numeric occupancy marginal
  double tail_bound = 0.0;             // per-pattern truncation bound (0 = tail-exact)

  double at(std::uint64_t code) const {
    const auto it = prob.find(code);
    if (it == prob.end()) throw std::out_of_range("pattern not computed");
    return it->second;
  }
};

inline std::uint64_t pattern_code(const analytic::QueuePattern& p) {
  p.validate();
  if (p.head_age == 0) return 0;
  return p.bits | (1ull << (p.head_age - 1));
}

/// Pattern probabilities with an exact tail: the inflow identities are closed
/// over the numeric occupancy marginal, so no pattern-space truncation enters
/// the values. Each pattern keeps its own recursion path; agreement of
/// same-(h,l) patterns is a result, not an input.
inline PatternDistribution queue_pattern_stationary(const ScenarioParams& params,
                                                    std::uint32_t h_max) {
  params.validate();
  if (!params.stable())
    throw analytic::unstable_error("pattern distribution requires lambda1 < lambda2");
  if (h_max < 1 || h_max > 24) throw std::domain_error("h_max must lie in [1,24]");

  ScenarioParams occ = params;
  occ.scenario = ScenarioTag::InfFcfs;
  const ChainSpec occ_chain = build_chain(ChainId::Occupancy, occ);
  const StationaryResult occ_res = stationary(occ_chain, 1e-14, 2'000'000);

  PatternDistribution out;
  out.queue_len_dist.assign(occ_chain.states.size(), 0.0);
  for (std::size_t i = 0; i < occ_chain.states.size(); ++i) {
    const StateView v = decode_state(ChainId::Occupancy, occ_chain.states[i]);
    out.queue_len_dist[v.info] = occ_res.pi[i];
  }

  const auto c = analytic::RateConstants::from(params.lambda1, params.lambda2);
  const auto D = [&](std::uint32_t i) -> double {
    return i < out.queue_len_dist.size() ? out.queue_len_dist[i] : 0.0;
  };

  // inflow weight of actuations that leave k packets queued behind the head
  std::vector<double> f(h_max + 2, 0.0);
  for (std::uint32_t k = 1; k <= h_max + 1; ++k) f[k] = c.x * D(k) + c.w * D(k + 1);

  out.prob[0] = D(0);
  const double g1 = (1.0 / (1.0 - c.w)) * (c.x * D(0) + c.w * c.z * D(1) + c.w * c.y * D(2));
  out.prob[1] = g1;

  // Balance recursion: appending a low bit b to pattern p gives
  //   prob(p.b) = (b ? x : z) prob(p) + (b ? w : y) g(p)
  // where g(p), the actuation inflow, is a combination of the f-weights whose
  // indices shift by one per appended bit.
  struct Node {
    std::uint64_t code;
    double prob;
    std::vector<double> g;  // g[k] multiplies f[k+1]
  };
  std::vector<Node> frontier;
  frontier.push_back({1, g1, {1.0}});
  for (std::uint32_t h = 1; h < h_max; ++h) {
    std::vector<Node> next;
    next.reserve(frontier.size() * 2);
    for (const Node& node : frontier) {
      double gval = 0.0;
      for (std::size_t k = 0; k < node.g.size(); ++k) gval += node.g[k] * f[k + 1];
      for (int bit = 0; bit <= 1; ++bit) {
        const double keep = bit ? c.x : c.z;
        const double fold = bit ? c.w : c.y;
        Node child;
        child.code = (node.code << 1) | std::uint64_t(bit);
        child.prob = keep * node.prob + fold * gval;
        child.g.assign(node.g.size() + 1, 0.0);
        for (std::size_t k = 0; k < node.g.size(); ++k) {
          child.g[k] += keep * node.g[k];
          child.g[k + 1] += fold * node.g[k];
        }
        out.prob[child.code] = child.prob;
        next.push_back(std::move(child));
      }
    }
    frontier.swap(next);
  }
  return out;
}

/// Pattern probabilities read off the full (AI, pattern) chain by summing the
/// age coordinate away, with the corresponding truncation bound.
inline PatternDistribution queue_pattern_from_chain(const ScenarioParams& params,
                                                    std::uint32_t h_max,
                                                    std::uint32_t ai_max = 0) {
  ScenarioParams p = params;
  p.scenario = ScenarioTag::InfFcfs;
  ChainLimits lm;
  lm.age_max = ai_max;
  const ChainSpec chain = build_chain(ChainId::AoaiInf, p, lm);
  if (h_max + 1 > chain.limits.age_max)
    throw std::domain_error("ai cap too small for the requested head age");
  const StationaryResult res = stationary(chain);

  PatternDistribution out;
  double boundary = 0.0, below = 0.0;
  for (std::size_t i = 0; i < chain.states.size(); ++i) {
    const StateView v = decode_state(ChainId::AoaiInf, chain.states[i]);
    if (v.age == chain.limits.age_max) boundary += res.pi[i];
    if (v.age == chain.limits.age_max - 1) below += res.pi[i];
    if (detail::pattern_head(v.bits) <= h_max) out.prob[v.bits] += res.pi[i];
  }
  double ratio = detail::age_tail_ratio(ChainId::AoaiInf, p);
  if (below > 0.0) ratio = std::max(ratio, boundary / below);
  ratio = std::min(ratio, 1.0 - 1e-9);
  out.tail_bound = 2.0 * boundary * ratio / (1.0 - ratio) + boundary;
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic CSV dumps for inspection
// ---------------------------------------------------------------------------

namespace detail {

inline std::string pattern_string(std::uint64_t bits) {
  if (bits == 0) return "empty";
  std::string s;
  for (std::uint32_t i = pattern_head(bits); i >= 1; --i)
    s.push_back((bits >> (i - 1)) & 1 ? '1' : '0');
  return s;
}

inline std::string state_label(ChainId id, std::uint64_t code) {
  const StateView v = decode_state(id, code);
  switch (id) {
    case ChainId::AoaiInf:
      return std::to_string(v.age) + "|" + pattern_string(v.bits);
    case ChainId::QueuePattern:
      return pattern_string(v.bits);
    case ChainId::AoaBattery:
    case ChainId::AoaiBattery:
      return std::to_string(v.age) + "|" + std::to_string(v.info) + "|" +
             std::to_string(v.battery);
    case ChainId::Occupancy:
      return std::to_string(v.info) + "|" + std::to_string(v.battery);
    default:
      return std::to_string(v.age) + "|" + std::to_string(v.info);
  }
}

}  // namespace detail

/// States and transitions, sorted by state code.
inline void dump_chain_csv(const ChainSpec& spec, std::ostream& os) {
  os << "from,to,prob\n";
  for (const Transition& t : spec.transitions) {
    os << detail::state_label(spec.id, spec.states[t.from]) << ','
       << detail::state_label(spec.id, spec.states[t.to]) << ',' << fmt_double(t.prob)
       << '\n';
  }
}

inline void dump_stationary_csv(const ChainSpec& spec, const StationaryResult& res,
                                std::ostream& os) {
  os << "state,prob\n";
  for (std::size_t i = 0; i < spec.states.size(); ++i)
    os << detail::state_label(spec.id, spec.states[i]) << ',' << fmt_double(res.pi[i])
       << '\n';
  os << "residual," << fmt_double(res.residual) << '\n';
  os << "leak_rate," << fmt_double(res.leak_rate) << '\n';
}

}  // namespace agemetrics::oracle
