#pragma once

#include "agemetrics/analytic.hpp"
#include "agemetrics/core.hpp"
#include "agemetrics/oracle.hpp"
#include "agemetrics/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace agemetrics::optim {

enum class Metric { Aoi, Aoa, Aoai };
enum class Evaluator { Analytic, Simulation, Oracle };

inline const char* to_string(Metric m) {
  switch (m) {
    case Metric::Aoi: return "aoi";
    case Metric::Aoa: return "aoa";
    case Metric::Aoai: return "aoai";
  }
  return "?";
}

inline Metric metric_from_string(const std::string& s) {
  if (s == "aoi") return Metric::Aoi;
  if (s == "aoa") return Metric::Aoa;
  if (s == "aoai") return Metric::Aoai;
  throw std::invalid_argument("unknown metric: " + s);
}

inline double analytic_metric(ScenarioTag scenario, Metric metric, double l1, double l2) {
  const ScenarioParams p{scenario, l1, l2};
  switch (metric) {
    case Metric::Aoi: return analytic::avg_aoi(l1);
    case Metric::Aoa: return analytic::avg_aoa(p);
    case Metric::Aoai: return analytic::avg_aoai(p);
  }
  throw std::logic_error("unreachable");
}

struct SweepSpec {
  ScenarioTag scenario = ScenarioTag::InfFcfs;
  Metric metric = Metric::Aoai;
  bool fix_lambda2 = true;   // which rate is held fixed
  double fixed_value = 0.5;
  double grid_start = 0.05;
  double grid_stop = 0.95;
  double grid_step = 0.05;
  Evaluator evaluator = Evaluator::Analytic;
  // simulation evaluator settings
  std::uint64_t sim_horizon = 1'000'000;
  std::uint64_t sim_warmup = 10'000;
  std::uint64_t sim_seed = 1;
  std::uint32_t sim_batches = 32;
  std::uint64_t sim_queue_cap = 1'000'000;

  void validate() const {
    if (!(fixed_value > 0.0 && fixed_value < 1.0))
      throw std::domain_error("fixed rate must lie in (0,1)");
    if (!(grid_step > 0.0) || grid_stop < grid_start)
      throw std::domain_error("bad sweep grid");
    if (!(grid_start > 0.0 && grid_stop < 1.0))
      throw std::domain_error("sweep grid must stay inside (0,1)");
  }
};

struct SweepPoint {
  double param = 0.0;
  double value = 0.0;
  double ci = 0.0;  // simulation evaluator only
  bool ok = true;
  std::string error;
};

namespace detail {

inline ScenarioParams sweep_params(const SweepSpec& spec, double free_value) {
  ScenarioParams p;
  p.scenario = spec.scenario;
  p.lambda1 = spec.fix_lambda2 ? free_value : spec.fixed_value;
  p.lambda2 = spec.fix_lambda2 ? spec.fixed_value : free_value;
  return p;
}

inline double oracle_metric(const ScenarioParams& p, Metric metric) {
  using agemetrics::oracle::ChainId;
  ChainId id;
  oracle::Coord coord = oracle::Coord::Age;
  switch (metric) {
    case Metric::Aoi:
      id = p.scenario == ScenarioTag::BufferBattery ? ChainId::AoaiBattery
                                                    : ChainId::AoaiBuffer;
      coord = oracle::Coord::Info;
      break;
    case Metric::Aoa:
      id = is_infinite_queue(p.scenario) ? ChainId::AoaInf
           : p.scenario == ScenarioTag::BufferController ? ChainId::AoaBuffer
                                                         : ChainId::AoaBattery;
      break;
    case Metric::Aoai:
      id = p.scenario == ScenarioTag::InfFcfs          ? ChainId::AoaiInf
           : p.scenario == ScenarioTag::BufferBattery  ? ChainId::AoaiBattery
                                                       : ChainId::AoaiBuffer;
      break;
    default:
      throw std::logic_error("unreachable");
  }
  const auto chain = oracle::build_chain(id, p);
  const auto res = oracle::stationary(chain);
  return oracle::mean_age(chain, res, coord).mean;
}

}  // namespace detail

/// Evaluates the metric across the grid. Per-point evaluator failures are
/// recorded on the point, not raised.
inline std::vector<SweepPoint> sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<SweepPoint> curve;
  for (double v = spec.grid_start; v <= spec.grid_stop + spec.grid_step * 1e-9;
       v += spec.grid_step) {
    SweepPoint pt;
    pt.param = v;
    try {
      const ScenarioParams p = detail::sweep_params(spec, v);
      switch (spec.evaluator) {
        case Evaluator::Analytic:
          pt.value = analytic_metric(p.scenario, spec.metric, p.lambda1, p.lambda2);
          break;
        case Evaluator::Oracle:
          pt.value = detail::oracle_metric(p, spec.metric);
          break;
        case Evaluator::Simulation: {
          SimConfig cfg;
          cfg.params = p;
          cfg.horizon = spec.sim_horizon;
          cfg.warmup = spec.sim_warmup;
          cfg.seed = spec.sim_seed;
          cfg.batches = spec.sim_batches;
          cfg.queue_cap = spec.sim_queue_cap;
          const AgeStats st = simulate(cfg).stats;
          switch (spec.metric) {
            case Metric::Aoi: pt.value = st.mean_aoi; pt.ci = st.ci_aoi; break;
            case Metric::Aoa: pt.value = st.mean_aoa; pt.ci = st.ci_aoa; break;
            case Metric::Aoai: pt.value = st.mean_aoai; pt.ci = st.ci_aoai; break;
          }
          break;
        }
      }
    } catch (const std::exception& e) {
      pt.ok = false;
      pt.error = e.what();
    }
    curve.push_back(pt);
  }
  return curve;
}

struct Nonmonotonicity {
  bool nonmonotone = false;
  std::size_t argmin = 0;
};

/// True when the curve falls and then rises again by more than the noise
/// threshold (use the pooled CI halfwidth for simulated curves).
inline Nonmonotonicity detect_nonmonotonicity(const std::vector<SweepPoint>& curve,
                                              double noise_threshold = 0.0) {
  std::vector<const SweepPoint*> pts;
  for (const auto& p : curve)
    if (p.ok) pts.push_back(&p);
  if (pts.size() < 3) throw std::invalid_argument("need at least 3 evaluated points");

  std::size_t argmin = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i]->value < pts[argmin]->value) argmin = i;

  double max_before = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < argmin; ++i) max_before = std::max(max_before, pts[i]->value);
  double max_after = -std::numeric_limits<double>::infinity();
  for (std::size_t i = argmin + 1; i < pts.size(); ++i)
    max_after = std::max(max_after, pts[i]->value);

  Nonmonotonicity out;
  out.argmin = argmin;
  out.nonmonotone = max_before - pts[argmin]->value > noise_threshold &&
                    max_after - pts[argmin]->value > noise_threshold;
  return out;
}

struct OptimumReport {
  double lambda_star = 0.0;
  double value_star = 0.0;
  double bracket_lo = 0.0;
  double bracket_hi = 0.0;
  bool is_interior = false;
  std::vector<SweepPoint> curve;  // the coarse scan
};

/// Minimizes the analytic metric over the delivery rate at a fixed lambda2.
/// A global coarse scan brackets the minimum (no unimodality assumed), then
/// golden-section narrows the bracket below tol.
inline OptimumReport minimize_lambda1(ScenarioTag scenario, Metric metric, double lambda2,
                                      double tol = 1e-6) {
  if (!(lambda2 > 0.0 && lambda2 < 1.0))
    throw std::domain_error("lambda2 must lie in (0,1)");
  if (!(tol > 0.0)) throw std::domain_error("tol must be positive");

  // margin keeps the rational forms away from their boundary singularities
  const double eps = 1e-3;
  const double lo = eps;
  const double hi = (scenario == ScenarioTag::InfFcfs && metric == Metric::Aoai)
                        ? lambda2 - eps
                        : 1.0 - eps;
  if (hi <= lo) throw std::domain_error("empty search interval");

  const auto eval = [&](double l1) {
    return analytic_metric(scenario, metric, l1, lambda2);
  };

  OptimumReport report;
  const std::size_t n_scan = 201;
  std::size_t best = 0;
  for (std::size_t i = 0; i < n_scan; ++i) {
    const double v = lo + (hi - lo) * static_cast<double>(i) / (n_scan - 1);
    SweepPoint pt;
    pt.param = v;
    pt.value = eval(v);
    report.curve.push_back(pt);
    if (pt.value < report.curve[best].value) best = i;
  }

  double a = best == 0 ? lo : report.curve[best - 1].param;
  double b = best + 1 == n_scan ? hi : report.curve[best + 1].param;
  report.bracket_lo = a;
  report.bracket_hi = b;

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = eval(x1), f2 = eval(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = eval(x2);
    }
  }
  report.lambda_star = 0.5 * (a + b);
  report.value_star = eval(report.lambda_star);
  report.is_interior = report.lambda_star - lo > std::max(tol, 2.0 * eps) &&
                       hi - report.lambda_star > std::max(tol, 2.0 * eps);
  return report;
}

}  // namespace agemetrics::optim
