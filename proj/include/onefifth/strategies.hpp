#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onefifth/errors.hpp"
#include "onefifth/linalg.hpp"
#include "onefifth/objectives.hpp"
#include "onefifth/rng.hpp"

namespace onefifth {

/// log(1/alpha_down) / log(alpha_up/alpha_down): the success rate at which the
/// expected change of log(sigma) vanishes.
inline double target_success_probability(double alpha_up, double alpha_down) {
  if (!(alpha_up > 1.0 && alpha_down > 0.0 && alpha_down < 1.0))
    throw std::invalid_argument("step-size factors must satisfy alpha_up > 1 > alpha_down > 0");
  return -std::log(alpha_down) / std::log(alpha_up / alpha_down);
}

enum class CovarianceUpdate { none, rank_one };

struct StrategyParams {
  double alpha_up = std::exp(0.1);
  double alpha_down = std::exp(-0.025);
  double kappa = 1.0;
  CovarianceUpdate cov_update = CovarianceUpdate::none;
  /// Defaults to 2 / (d^2 + 6) when unset.
  std::optional<double> cov_learning_rate;

  /// alpha_up = exp(4/d), alpha_down = alpha_up^{-1/4}.
  static StrategyParams dimension_scaled(int d) {
    StrategyParams p;
    p.alpha_up = std::exp(4.0 / d);
    p.alpha_down = std::pow(p.alpha_up, -0.25);
    return p;
  }

  [[nodiscard]] double learning_rate(int d) const {
    if (cov_learning_rate) return *cov_learning_rate;
    const double dd = static_cast<double>(d);
    return 2.0 / (dd * dd + 6.0);
  }

  void validate() const {
    (void)target_success_probability(alpha_up, alpha_down);
    if (!(kappa >= 1.0)) throw std::invalid_argument("kappa must be >= 1");
    if (cov_learning_rate && !(*cov_learning_rate >= 0.0 && *cov_learning_rate <= 1.0))
      throw std::invalid_argument("cov_learning_rate must lie in [0, 1]");
  }
};

/// theta = (m, sigma, Sigma) plus counters. best_value caches f(mean).
struct StrategyState {
  Vector mean;
  double sigma = 1.0;
  Covariance cov = Covariance::identity(1);
  std::int64_t iteration = 0;
  std::int64_t evals = 0;
  double best_value = 0.0;

  /// Evaluates f(m0); this counts as the first evaluation.
  static StrategyState initial(const Objective& obj, const Vector& m0, double sigma0) {
    if (m0.size() != obj.dim) throw std::invalid_argument("initial mean has wrong dimension");
    if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw std::invalid_argument("sigma0 must be positive and finite");
    StrategyState s;
    s.mean = m0;
    s.sigma = sigma0;
    s.cov = Covariance::identity(obj.dim);
    s.best_value = obj(m0);
    s.evals = 1;
    return s;
  }
};

struct StepOutcome {
  bool accepted = false;
  Vector candidate;
  double candidate_value = 0.0;
  Vector z;
};

inline constexpr double kSigmaMin = 1e-300;
inline constexpr double kSigmaMax = 1e300;

namespace detail {

inline std::string scientific(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

inline void guard_sigma(double sigma, std::int64_t iteration) {
  if (!(sigma >= kSigmaMin && sigma <= kSigmaMax))
    throw NumericAbort("step size left [1e-300, 1e300] at iteration " + std::to_string(iteration) +
                       " (sigma = " + scientific(sigma) + ")");
}

}  // namespace detail

/// (1 - c) Sigma + c y y^T with y = A z on success; Sigma otherwise. The result
/// is not yet in S_kappa.
inline Matrix rank_one_cov_update(const Covariance& cov, const StepOutcome& outcome, const StrategyParams& params) {
  const double c = params.learning_rate(static_cast<int>(cov.dim()));
  if (params.cov_update == CovarianceUpdate::none || c == 0.0 || !outcome.accepted) return cov.matrix();
  const Vector y = cov.cholesky_factor() * outcome.z;
  return (1.0 - c) * cov.matrix() + c * (y * y.transpose());
}

/// One iteration of the (1+1)-ES driven by a given standard normal vector z.
inline StepOutcome es_step_with_sample(StrategyState& state, const StrategyParams& params, const Objective& obj,
                                       const Vector& z) {
  StepOutcome out;
  out.z = z;
  out.candidate = candidate_from_normal(state.mean, state.sigma, state.cov, z);
  out.candidate_value = obj(out.candidate);
  ++state.evals;
  out.accepted = out.candidate_value <= state.best_value;
  if (out.accepted) {
    state.mean = out.candidate;
    state.best_value = out.candidate_value;
    state.sigma *= params.alpha_up;
  } else {
    state.sigma *= params.alpha_down;
  }
  if (params.cov_update != CovarianceUpdate::none && out.accepted && params.learning_rate(obj.dim) > 0.0)
    state.cov = project_to_sk(rank_one_cov_update(state.cov, out, params), params.kappa);
  ++state.iteration;
  detail::guard_sigma(state.sigma, state.iteration);
  return out;
}

inline StepOutcome es_step(StrategyState& state, const StrategyParams& params, const Objective& obj,
                           RngStream& rng) {
  return es_step_with_sample(state, params, obj, rng.standard_normal(obj.dim));
}

// ---------------------------------------------------------------------------
// Simplified direct search

struct DirectSearchParams {
  double c = 0.1;
};

/// Polls +-e_i in random order and takes the first point with
/// f(x) <= f(m) - c sigma^2. sigma is kept on success and halved after a
/// complete unsuccessful sweep. At most max_evals evaluations are used; a sweep
/// cut short by the budget leaves sigma unchanged.
inline bool simplified_direct_search_step(StrategyState& state, const Objective& obj, const DirectSearchParams& p,
                                          RngStream& rng,
                                          std::int64_t max_evals = std::numeric_limits<std::int64_t>::max()) {
  if (!(p.c > 0.0)) throw std::invalid_argument("direct search constant c must be positive");
  const int d = obj.dim;
  std::vector<int> order(static_cast<std::size_t>(2 * d));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order.begin(), order.end());
  const double threshold = state.best_value - p.c * state.sigma * state.sigma;
  std::int64_t used = 0;
  bool accepted = false;
  for (int k : order) {
    if (used >= max_evals) break;
    Vector x = state.mean;
    x[k / 2] += (k % 2 == 0 ? state.sigma : -state.sigma);
    const double fx = obj(x);
    ++used;
    if (fx <= threshold) {
      state.mean = std::move(x);
      state.best_value = fx;
      accepted = true;
      break;
    }
  }
  state.evals += used;
  if (!accepted && used == 2 * d) state.sigma *= 0.5;
  ++state.iteration;
  detail::guard_sigma(state.sigma, state.iteration);
  return accepted;
}

// ---------------------------------------------------------------------------
// Random pursuit

struct LineSearchResult {
  double argmin = 0.0;
  double value = 0.0;
  std::int64_t evals = 0;
};

/// Golden-section search for a minimiser of fn on [lo, hi]; stops once the
/// bracket is narrower than tol or max_evals probes were used. Returns the best
/// probe.
inline LineSearchResult golden_section_search(const std::function<double(double)>& fn, double lo, double hi,
                                              double tol,
                                              std::int64_t max_evals = std::numeric_limits<std::int64_t>::max()) {
  if (!(hi > lo) || !(tol > 0.0)) throw std::invalid_argument("golden_section_search: bad interval or tolerance");
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  LineSearchResult best{0.0, std::numeric_limits<double>::infinity(), 0};
  if (max_evals < 1) return best;
  auto probe = [&](double t) {
    const double v = fn(t);
    ++best.evals;
    if (v < best.value) {
      best.value = v;
      best.argmin = t;
    }
    return v;
  };
  double a = lo;
  double b = hi;
  double x1 = b - inv_phi * (b - a);
  double f1 = probe(x1);
  if (best.evals >= max_evals) return best;
  double x2 = a + inv_phi * (b - a);
  double f2 = probe(x2);
  while (b - a > tol && best.evals < max_evals) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = probe(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = probe(x2);
    }
  }
  return best;
}

struct RandomPursuitParams {
  /// Lower bound on sigma, as a fraction of sigma0.
  double floor_fraction = 1e-6;
};

/// Golden-section line search along a uniform random direction over
/// [-2 sigma, 2 sigma] to precision sigma/2. The new point is taken only if it
/// improves f; sigma becomes the step length taken, or is halved when no
/// improvement was found.
inline bool random_pursuit_step(StrategyState& state, const Objective& obj, double sigma_floor, RngStream& rng,
                                std::int64_t max_evals = std::numeric_limits<std::int64_t>::max()) {
  if (!(state.sigma > 0.0)) throw std::invalid_argument("random pursuit needs sigma > 0");
  const Vector u = rng.unit_vector(obj.dim);
  const Vector m = state.mean;
  auto section = [&](double t) { return obj(m + t * u); };
  const double s = state.sigma;
  const LineSearchResult ls = golden_section_search(section, -2.0 * s, 2.0 * s, 0.5 * s, max_evals);
  state.evals += ls.evals;
  bool accepted = false;
  if (ls.evals > 0 && ls.value < state.best_value) {
    state.mean = m + ls.argmin * u;
    state.best_value = ls.value;
    state.sigma = std::max(std::abs(ls.argmin), sigma_floor);
    accepted = true;
  } else if (ls.evals > 0) {
    state.sigma = std::max(0.5 * s, sigma_floor);
  }
  ++state.iteration;
  detail::guard_sigma(state.sigma, state.iteration);
  return accepted;
}

// ---------------------------------------------------------------------------
// Gradientless descent

struct GradientlessParams {
  double target = 1e-10;
  double ratio = 2.0;
};

/// Geometric radii max, max/ratio, ... down to target (inclusive up to rounding).
inline std::vector<double> gradientless_radii(double max_radius, double target, double ratio) {
  if (!(max_radius > 0.0 && target > 0.0 && ratio > 1.0) || target > max_radius)
    throw std::invalid_argument("gradientless descent needs 0 < target <= max radius and ratio > 1");
  std::vector<double> radii;
  for (double r = max_radius; r >= target * (1.0 - 1e-12); r /= ratio) radii.push_back(r);
  return radii;
}

/// One candidate m + r u per radius r, u uniform on the sphere; moves to the
/// best candidate if it strictly improves f.
inline bool gradientless_descent_step(StrategyState& state, const Objective& obj, const std::vector<double>& radii,
                                      RngStream& rng,
                                      std::int64_t max_evals = std::numeric_limits<std::int64_t>::max()) {
  if (radii.empty()) throw std::invalid_argument("gradientless descent needs a non-empty radius grid");
  double best = state.best_value;
  std::optional<Vector> best_x;
  std::int64_t used = 0;
  for (double r : radii) {
    if (used >= max_evals) break;
    Vector x = state.mean + r * rng.unit_vector(obj.dim);
    const double fx = obj(x);
    ++used;
    if (fx < best) {
      best = fx;
      best_x = std::move(x);
    }
  }
  state.evals += used;
  if (best_x) {
    state.mean = std::move(*best_x);
    state.best_value = best;
  }
  ++state.iteration;
  return best_x.has_value();
}

// ---------------------------------------------------------------------------
// Runs and traces

enum class Metric { distance, f_mu };

inline std::string to_string(Metric m) { return m == Metric::distance ? "distance" : "f_mu"; }

struct TraceRow {
  std::int64_t t = 0;
  std::int64_t evals = 0;
  double f = 0.0;
  double dist = std::numeric_limits<double>::quiet_NaN();
  double f_mu = std::numeric_limits<double>::quiet_NaN();
  double sigma = 0.0;
  double sigma_bar = std::numeric_limits<double>::quiet_NaN();
  double potential = std::numeric_limits<double>::quiet_NaN();
  double cond_sigma = 1.0;
  bool accepted = false;
};

enum class StopReason { budget, target, numeric_abort };

struct Trace {
  std::string strategy;
  std::vector<TraceRow> rows;
  StrategyState final_state;
  StopReason stop = StopReason::budget;
  std::string abort_message;
  std::optional<std::int64_t> hit_iteration;
  std::optional<std::int64_t> hit_evals;
};

struct RunConfig {
  Vector m0;
  double sigma0 = 1.0;
  std::int64_t max_evals = 0;
  std::optional<std::int64_t> max_iterations;
  std::optional<double> target;
  Metric metric = Metric::distance;
  /// Record every k-th iteration (the initial and final rows are always kept).
  std::int64_t record_stride = 1;
  StrategyParams es;
  DirectSearchParams ds;
  RandomPursuitParams rp;
  GradientlessParams gld;
};

inline const std::vector<std::string>& strategy_ids() {
  static const std::vector<std::string> ids{"es", "es-kappa", "sds", "rp", "gld"};
  return ids;
}

namespace detail {

inline TraceRow make_row(const Objective& obj, const StrategyState& s, bool accepted, bool track_cond) {
  TraceRow row;
  row.t = s.iteration;
  row.evals = s.evals;
  row.f = s.best_value;
  if (obj.optimum) row.dist = (s.mean - *obj.optimum).norm();
  if (obj.mode == SuboptimalityMode::analytic) {
    row.f_mu = obj.analytic_f_mu(s.mean);
    if (row.f_mu > 0.0) row.sigma_bar = s.sigma / row.f_mu;
  }
  row.sigma = s.sigma;
  row.cond_sigma = track_cond ? condition_number(s.cov) : 1.0;
  row.accepted = accepted;
  return row;
}

inline double metric_value(const Objective& obj, const Vector& m, Metric metric) {
  if (metric == Metric::distance) return obj.distance_to_optimum(m);
  return f_mu(obj, m);
}

}  // namespace detail

/// Iterates one strategy from config.m0 until the evaluation budget, the
/// optional iteration budget or the optional target is reached. A numeric
/// abort ends the run with stop = numeric_abort and a diagnostic.
inline Trace run(const std::string& strategy_id, const Objective& obj, const RunConfig& config, RngStream& rng) {
  StrategyParams es_params = config.es;
  const bool is_es = strategy_id == "es" || strategy_id == "es-kappa";
  if (strategy_id == "es-kappa") {
    es_params.cov_update = CovarianceUpdate::rank_one;
    if (!(es_params.kappa > 1.0)) throw std::invalid_argument("es-kappa needs kappa > 1");
  } else if (strategy_id == "es") {
    es_params.cov_update = CovarianceUpdate::none;
    es_params.kappa = 1.0;
  } else if (strategy_id != "sds" && strategy_id != "rp" && strategy_id != "gld") {
    throw std::invalid_argument("unknown strategy '" + strategy_id + "'");
  }
  if (is_es) es_params.validate();
  if (config.record_stride < 1) throw std::invalid_argument("record_stride must be >= 1");
  if (config.max_evals < 0) throw std::invalid_argument("evaluation budget must be >= 0");

  Trace trace;
  trace.strategy = strategy_id;
  StrategyState state = StrategyState::initial(obj, config.m0, config.sigma0);
  const bool track_cond = is_es && es_params.cov_update != CovarianceUpdate::none;
  const double rp_floor = config.sigma0 * config.rp.floor_fraction;
  std::vector<double> radii;
  if (strategy_id == "gld") radii = gradientless_radii(config.sigma0, config.gld.target, config.gld.ratio);

  auto reached = [&]() {
    return config.target && detail::metric_value(obj, state.mean, config.metric) <= *config.target;
  };
  trace.rows.push_back(detail::make_row(obj, state, false, track_cond));
  if (reached()) {
    trace.stop = StopReason::target;
    trace.hit_iteration = 0;
    trace.hit_evals = state.evals;
    trace.final_state = state;
    return trace;
  }
  // f(m0) is not charged to the budget.
  const std::int64_t eval_limit = config.max_evals + 1;
  bool last_recorded = true;
  bool last_accepted = false;
  while (state.evals < eval_limit && (!config.max_iterations || state.iteration < *config.max_iterations)) {
    bool accepted = false;
    try {
      const std::int64_t remaining = eval_limit - state.evals;
      if (is_es) {
        accepted = es_step(state, es_params, obj, rng).accepted;
      } else if (strategy_id == "sds") {
        accepted = simplified_direct_search_step(state, obj, config.ds, rng, remaining);
      } else if (strategy_id == "rp") {
        accepted = random_pursuit_step(state, obj, rp_floor, rng, remaining);
      } else {
        accepted = gradientless_descent_step(state, obj, radii, rng, remaining);
      }
    } catch (const NumericAbort& e) {
      trace.stop = StopReason::numeric_abort;
      trace.abort_message = e.what();
      break;
    }
    last_accepted = accepted;
    const bool hit = reached();
    last_recorded = hit || state.iteration % config.record_stride == 0;
    if (last_recorded) trace.rows.push_back(detail::make_row(obj, state, accepted, track_cond));
    if (hit) {
      trace.stop = StopReason::target;
      trace.hit_iteration = state.iteration;
      trace.hit_evals = state.evals;
      break;
    }
  }
  if (!last_recorded) trace.rows.push_back(detail::make_row(obj, state, last_accepted, track_cond));
  trace.final_state = state;
  return trace;
}

}  // namespace onefifth
