#pragma once

#include "agemetrics/core.hpp"
#include "agemetrics/stats.hpp"

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace agemetrics::analytic {

/// Raised where a closed form only exists for lambda1 < lambda2.
class unstable_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The four joint slot-event probabilities.
struct RateConstants {
  double w;  // arrival and opportunity
  double x;  // arrival only
  double y;  // opportunity only
  double z;  // neither

  static RateConstants from(double lambda1, double lambda2) {
    return {lambda1 * lambda2, lambda1 * (1.0 - lambda2), (1.0 - lambda1) * lambda2,
            (1.0 - lambda1) * (1.0 - lambda2)};
  }
  double sum() const { return w + x + y + z; }
};

namespace detail {

inline void require_open_unit(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0))
    throw std::domain_error(std::string(name) + " must lie in (0,1)");
}

inline void require_rates(double lambda1, double lambda2) {
  require_open_unit(lambda1, "lambda1");
  require_open_unit(lambda2, "lambda2");
}

inline void require_stable(double lambda1, double lambda2) {
  if (!(lambda1 < lambda2))
    throw unstable_error("unstable: no closed form for lambda1 >= lambda2");
}

/// Exact binomial coefficient; n <= 64 keeps the value inside uint64_t.
inline double binom(unsigned n, unsigned k) {
  if (k > n) return 0.0;
  if (k > n - k) k = n - k;
  unsigned __int128 c = 1;
  for (unsigned i = 1; i <= k; ++i) {
    c = c * (n - k + i) / i;
  }
  return static_cast<double>(static_cast<std::uint64_t>(c));
}

inline double ipow(double b, unsigned e) {
  double r = 1.0;
  while (e) {
    if (e & 1u) r *= b;
    b *= b;
    e >>= 1;
  }
  return r;
}

}  // namespace detail

/// Long-run average information age; the same in every scenario.
inline double avg_aoi(double lambda1) {
  detail::require_open_unit(lambda1, "lambda1");
  return 1.0 / lambda1;
}

/// Long-run average actuation age.
inline double avg_aoa(const ScenarioParams& p) {
  p.validate();
  const double l1 = p.lambda1, l2 = p.lambda2;
  switch (p.scenario) {
    case ScenarioTag::InfFcfs:
    case ScenarioTag::InfLcfs:
      // 1/l1 under stability, 1/l2 past saturation.
      return std::max(1.0 / l1, 1.0 / l2);
    case ScenarioTag::BufferController:
      return ((l2 - 1.0) * (l1 * l1 + l1 * l2) - l2 * l2) /
             (l1 * l2 * (l1 * (l2 - 1.0) - l2));
    case ScenarioTag::BufferBattery: {
      const double num = detail::ipow(l1, 4) * detail::ipow(l2 - 1.0, 3) -
                         2.0 * detail::ipow(l1, 3) * l2 * detail::ipow(l2 - 1.0, 2) -
                         l1 * l1 * l2 * l2 * (2.0 * l2 * l2 - 3.0 * l2 + 1.0) +
                         l1 * detail::ipow(l2, 3) * (3.0 * l2 - 2.0) - detail::ipow(l2, 4);
      const double den = l1 * l2 * (l1 * (l2 - 1.0) - l2) *
                         (l1 * l1 * detail::ipow(l2 - 1.0, 2) + l1 * (l2 - 2.0 * l2 * l2) +
                          l2 * l2);
      return num / den;
    }
  }
  throw std::logic_error("unreachable");
}

/// True when the infinite-queue actuated-information average is evaluated so
/// close to lambda1 = lambda2 that the (lambda1 - lambda2) denominator
/// amplifies rounding.
inline bool near_instability(const ScenarioParams& p) {
  return is_infinite_queue(p.scenario) && p.lambda2 - p.lambda1 < 1e-6;
}

/// Long-run average actuated-information age. The oldest-first infinite-queue
/// form requires lambda1 < lambda2.
inline double avg_aoai(const ScenarioParams& p) {
  p.validate();
  const double l1 = p.lambda1, l2 = p.lambda2;
  switch (p.scenario) {
    case ScenarioTag::InfFcfs:
      detail::require_stable(l1, l2);
      return (l1 * l1 * (l2 - 1.0) * (l1 - l2) + detail::ipow(l2, 3) * (l1 - 1.0)) /
             (l1 * (l1 - l2) * l2 * l2);
    case ScenarioTag::InfLcfs:
    case ScenarioTag::BufferController:
      return 1.0 / l1 + 1.0 / l2 - 1.0;
    case ScenarioTag::BufferBattery: {
      const double m1 = l2 - 1.0;
      const double num = detail::ipow(l1, 4) * (l2 - 4.0) * detail::ipow(m1, 3) * l2 -
                         4.0 * detail::ipow(l1, 3) * detail::ipow(m1, 3) * l2 * l2 +
                         l1 * (3.0 - 4.0 * l2) * detail::ipow(l2, 4) + detail::ipow(l2, 5) +
                         detail::ipow(l1, 5) * detail::ipow(m1, 3) * (2.0 * l2 - 1.0) +
                         2.0 * l1 * l1 * detail::ipow(l2, 3) *
                             (2.0 - 5.0 * l2 + 3.0 * l2 * l2);
      const double den = l1 * l2 * detail::ipow(l1 + l2 - l1 * l2, 2) *
                         (l1 * l1 * m1 * m1 + l2 * l2 + l1 * (l2 - 2.0 * l2 * l2));
      return num / den;
    }
  }
  throw std::logic_error("unreachable");
}

/// Stationary probability of i packets in the stable infinite queue.
inline double queue_length_dist(double lambda1, double lambda2, std::uint64_t i) {
  detail::require_rates(lambda1, lambda2);
  detail::require_stable(lambda1, lambda2);
  const RateConstants c = RateConstants::from(lambda1, lambda2);
  const double r = c.x / c.y;
  return detail::ipow(r, static_cast<unsigned>(i)) * (1.0 - r);
}

/// Occupancy pattern of the stable oldest-first queue: which ages below the
/// head-of-line age h are present. The head itself is implicit; `bits` stores
/// ages 1..h-1 (bit i-1 set when a packet of age i is stored).
struct QueuePattern {
  std::uint64_t bits = 0;
  std::uint32_t head_age = 0;  // 0 encodes the empty queue

  std::uint32_t length() const {
    return head_age == 0 ? 0u : 1u + static_cast<std::uint32_t>(std::popcount(bits));
  }

  void validate() const {
    if (head_age == 0) {
      if (bits != 0) throw std::invalid_argument("empty pattern cannot store packets");
      return;
    }
    if (head_age > 64) throw std::invalid_argument("head age above 64 is not supported");
    if (head_age >= 2 && (bits >> (head_age - 1)) != 0)
      throw std::invalid_argument("stored ages must be below the head age");
    if (head_age == 1 && bits != 0)
      throw std::invalid_argument("stored ages must be below the head age");
  }

  /// Parses e.g. "101" (head first, down to age 1); "" is the empty queue.
  static QueuePattern parse(const std::string& s) {
    QueuePattern p;
    if (s.empty()) return p;
    if (s.front() != '1') throw std::invalid_argument("pattern must start with the head bit");
    p.head_age = static_cast<std::uint32_t>(s.size());
    // character k holds the bit for age (size - k)
    for (std::size_t k = 1; k < s.size(); ++k) {
      const char c = s[k];
      if (c != '0' && c != '1') throw std::invalid_argument("pattern must be binary");
      if (c == '1') p.bits |= 1ull << (s.size() - k - 1);
    }
    p.validate();
    return p;
  }
};

namespace detail {

inline double queue_ratio(double lambda1, double lambda2) {
  const RateConstants c = RateConstants::from(lambda1, lambda2);
  return c.x / c.y;
}

}  // namespace detail

/// Stationary weight shared by all inflows that leave i packets queued behind
/// a freshly actuated head.
inline double pattern_inflow_weight(std::uint64_t i, double lambda1, double lambda2) {
  detail::require_rates(lambda1, lambda2);
  detail::require_stable(lambda1, lambda2);
  if (i < 1) throw std::domain_error("inflow weight is defined for i >= 1");
  const RateConstants c = RateConstants::from(lambda1, lambda2);
  return c.x * queue_length_dist(lambda1, lambda2, i) +
         c.w * queue_length_dist(lambda1, lambda2, i + 1);
}

/// Stationary probability of the single-packet pattern with head age 1.
inline double gamma1(double lambda1, double lambda2) {
  detail::require_rates(lambda1, lambda2);
  detail::require_stable(lambda1, lambda2);
  const RateConstants c = RateConstants::from(lambda1, lambda2);
  const double d0 = queue_length_dist(lambda1, lambda2, 0);
  const double d1 = queue_length_dist(lambda1, lambda2, 1);
  const double d2 = queue_length_dist(lambda1, lambda2, 2);
  return (1.0 / (1.0 - c.w)) * (c.x * d0 + c.w * c.z * d1 + c.w * c.y * d2);
}

/// Stationary probability of any single pattern with head age h and length l.
/// The value depends on the pattern only through (h, l).
inline double gamma_state_prob(std::uint32_t h, std::uint32_t l, double lambda1,
                               double lambda2) {
  detail::require_rates(lambda1, lambda2);
  detail::require_stable(lambda1, lambda2);
  if (h < 1 || l < 1 || l > h) throw std::invalid_argument("need 1 <= l <= h");
  if (h > 64) throw std::invalid_argument("head age above 64 is not supported");
  const RateConstants c = RateConstants::from(lambda1, lambda2);
  const double g1 = gamma1(lambda1, lambda2);

  NeumaierSum total;
  total.add(detail::ipow(c.x, l - 1) * detail::ipow(c.z, h - l) * g1);
  for (std::uint32_t i = 1; i + 1 <= l; ++i) {
    for (std::uint32_t j = 0; j <= h - l; ++j) {
      total.add(detail::binom(l - 1, i) * detail::binom(h - l, j) * detail::ipow(c.w, i) *
                detail::ipow(c.x, l - i - 1) * detail::ipow(c.y, j) *
                detail::ipow(c.z, h - l - j) *
                pattern_inflow_weight(std::uint64_t(j) + i, lambda1, lambda2));
    }
  }
  for (std::uint32_t j = 1; j <= h - l; ++j) {
    total.add(detail::binom(h - l, j) * detail::ipow(c.x, l - 1) * detail::ipow(c.y, j) *
              detail::ipow(c.z, h - l - j) * pattern_inflow_weight(j, lambda1, lambda2));
  }
  return total.value();
}

inline double gamma_state_prob(const QueuePattern& p, double lambda1, double lambda2) {
  p.validate();
  if (p.head_age == 0) throw std::invalid_argument("empty pattern has no (h,l) form");
  return gamma_state_prob(p.head_age, p.length(), lambda1, lambda2);
}

/// Total probability that the head-of-line age equals h, obtained by counting
/// the patterns of every length.
inline double gamma_level_prob(std::uint32_t h, double lambda1, double lambda2) {
  if (h < 1) throw std::invalid_argument("head age must be positive");
  if (h > 64) throw std::invalid_argument("head age above 64 is not supported");
  NeumaierSum total;
  for (std::uint32_t l = 1; l <= h; ++l)
    total.add(detail::binom(h - 1, l - 1) * gamma_state_prob(h, l, lambda1, lambda2));
  return total.value();
}

/// Direct closed form for the same level probability; the combinatorial sum
/// above must reproduce it.
inline double gamma_level_prob_closed(std::uint32_t h, double lambda1, double lambda2) {
  detail::require_rates(lambda1, lambda2);
  detail::require_stable(lambda1, lambda2);
  if (h < 1) throw std::invalid_argument("head age must be positive");
  if (h > 64) throw std::invalid_argument("head age above 64 is not supported");
  const double lb2 = 1.0 - lambda2;
  NeumaierSum total;
  total.add(detail::ipow(lb2, h - 1) * gamma1(lambda1, lambda2));
  for (std::uint32_t j = 1; j <= h - 1; ++j) {
    total.add(detail::binom(h - 1, j) * detail::ipow(lambda2, j) *
              detail::ipow(lb2, h - 1 - j) * pattern_inflow_weight(j, lambda1, lambda2));
  }
  return total.value();
}

}  // namespace agemetrics::analytic
