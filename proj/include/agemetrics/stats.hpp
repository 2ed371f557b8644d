#pragma once

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace agemetrics {

/// Two-sided Student-t critical value for a 95% interval.
inline double t_critical_95(std::uint64_t df) {
  if (df == 0) return std::numeric_limits<double>::quiet_NaN();
  boost::math::students_t_distribution<double> dist(static_cast<double>(df));
  return boost::math::quantile(dist, 0.975);
}

struct MeanCi {
  double mean = 0.0;
  double halfwidth = std::numeric_limits<double>::quiet_NaN();
};

/// Mean and 95% halfwidth treating the entries as i.i.d. samples
/// (batch means of a long run, or per-replication means).
inline MeanCi mean_ci(std::span<const double> samples) {
  MeanCi out;
  const std::size_t n = samples.size();
  if (n == 0) return out;
  double sum = 0.0;
  for (double v : samples) sum += v;
  out.mean = sum / static_cast<double>(n);
  if (n < 2) return out;
  double ss = 0.0;
  for (double v : samples) {
    const double d = v - out.mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(n - 1);
  out.halfwidth = t_critical_95(n - 1) * std::sqrt(var / static_cast<double>(n));
  return out;
}

/// Compensated accumulation; keeps long positive sums accurate.
class NeumaierSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace agemetrics
