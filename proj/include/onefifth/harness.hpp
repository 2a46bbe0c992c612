#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "onefifth/csv.hpp"
#include "onefifth/objectives.hpp"
#include "onefifth/rng.hpp"
#include "onefifth/strategies.hpp"
#include "onefifth/theory.hpp"

namespace onefifth {

/// Runs f(0), ..., f(n-1) on up to `threads` workers (0 = hardware
/// concurrency). Results must be written by index; the first exception is
/// rethrown after all workers finish.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& f) {
  unsigned workers = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < n; i = next++) f(i);
        } catch (...) {
          errors[w] = std::current_exception();
          next = n;
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// (1, ..., 1) / sqrt(d): unit distance from an optimum at the origin.
inline Vector default_start(int d) { return Vector::Constant(d, 1.0 / std::sqrt(static_cast<double>(d))); }

/// Stream of replicate `rep` in experiment cell `cell`.
inline RngStream replicate_stream(std::uint64_t master_seed, std::uint64_t cell, std::uint64_t rep) {
  return RngStream(master_seed, cell).split(rep);
}

struct ExperimentConfig {
  std::string objective = "sphere";
  int d = 10;
  std::string strategy = "es";
  /// m0 defaults to (1, ..., 1)/sqrt(d) shifted by the optimum when empty.
  RunConfig run;
  double epsilon = 1e-8;
  Metric metric = Metric::distance;
  int n_replicates = 20;
  std::uint64_t master_seed = 1;
  std::uint64_t cell = 0;
  unsigned threads = 0;

  void validate() const {
    if (n_replicates < 1) throw std::invalid_argument("need at least one replicate");
    if (run.max_evals <= 0) throw std::invalid_argument("budget must be positive");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (d < 1) throw std::invalid_argument("d must be >= 1");
  }

  [[nodiscard]] Vector start(const Objective& obj) const {
    if (run.m0.size() != 0) return run.m0;
    Vector m0 = default_start(obj.dim);
    if (obj.optimum) m0 += *obj.optimum;
    return m0;
  }
};

struct HittingTimeResult {
  int replicate = 0;
  double epsilon = 0.0;
  Metric metric = Metric::distance;
  std::optional<std::int64_t> hit_iteration;
  std::optional<std::int64_t> hit_evals;
  bool censored = true;
};

/// One run per replicate until metric(m_t) <= epsilon or the budget is spent.
inline std::vector<HittingTimeResult> measure_hitting_time(const ExperimentConfig& cfg) {
  cfg.validate();
  const Objective obj = parse_objective(cfg.objective, cfg.d);
  RunConfig rc = cfg.run;
  rc.m0 = cfg.start(obj);
  rc.target = cfg.epsilon;
  rc.metric = cfg.metric;
  rc.record_stride = std::numeric_limits<std::int64_t>::max();
  std::vector<HittingTimeResult> results(static_cast<std::size_t>(cfg.n_replicates));
  parallel_for(results.size(), cfg.threads, [&](std::size_t i) {
    RngStream rng = replicate_stream(cfg.master_seed, cfg.cell, i);
    const Trace tr = run(cfg.strategy, obj, rc, rng);
    HittingTimeResult& r = results[i];
    r.replicate = static_cast<int>(i);
    r.epsilon = cfg.epsilon;
    r.metric = cfg.metric;
    r.hit_iteration = tr.hit_iteration;
    r.hit_evals = tr.hit_evals;
    r.censored = !tr.hit_iteration.has_value();
  });
  return results;
}

/// Median with the midpoint convention for an even count.
inline double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Linear-interpolation quantile (q = 0.5 gives the median above).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Statistics of the uncensored hitting iterations; censored runs are only counted.
struct HittingTimeSummary {
  std::size_t runs = 0;
  std::size_t censored = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double min = std::numeric_limits<double>::quiet_NaN();
  double max = std::numeric_limits<double>::quiet_NaN();
};

inline HittingTimeSummary summarize(const std::vector<HittingTimeResult>& results) {
  HittingTimeSummary s;
  s.runs = results.size();
  std::vector<double> t;
  for (const auto& r : results) {
    if (r.censored)
      ++s.censored;
    else
      t.push_back(static_cast<double>(*r.hit_iteration));
  }
  if (t.empty()) return s;
  double sum = 0.0;
  for (double x : t) sum += x;
  s.mean = sum / static_cast<double>(t.size());
  s.median = median(t);
  s.min = *std::min_element(t.begin(), t.end());
  s.max = *std::max_element(t.begin(), t.end());
  return s;
}

inline void write_hitting_csv(std::ostream& out, const ExperimentConfig& cfg, double kappa_f,
                              const std::vector<HittingTimeResult>& results, csv::Header header = {}) {
  const HittingTimeSummary s = summarize(results);
  header.emplace_back("censored", std::to_string(s.censored));
  csv::write_header(out, header);
  out << "d,kappa_f,strategy,replicate,epsilon,metric,hit_evals,censored\n";
  for (const auto& r : results) {
    out << cfg.d << ',' << csv::format(kappa_f) << ',' << cfg.strategy << ',' << r.replicate << ','
        << csv::format(r.epsilon) << ',' << to_string(r.metric) << ',' << (r.hit_evals ? std::to_string(*r.hit_evals) : "")
        << ',' << (r.censored ? 1 : 0) << '\n';
  }
}

struct ScalingRow {
  int d = 0;
  double mean_T = 0.0;
  double ratio = 0.0;
  double lower_bound = 0.0;
  std::size_t censored = 0;
  double min_T = 0.0;
  std::vector<HittingTimeResult> results;
};

/// Hitting times per dimension with rho_d = mean T / (d log(||m0 - x*|| / epsilon)).
/// make_config(d) supplies the experiment for each dimension.
inline std::vector<ScalingRow> scaling_study(const std::vector<int>& dims,
                                             const std::function<ExperimentConfig(int)>& make_config,
                                             int n_replicates) {
  std::vector<ScalingRow> rows;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const int d = dims[k];
    if (d < 2) throw std::invalid_argument("scaling study needs d >= 2");
    ExperimentConfig cfg = make_config(d);
    cfg.d = d;
    cfg.n_replicates = n_replicates;
    cfg.cell = static_cast<std::uint64_t>(d);
    const Objective obj = parse_objective(cfg.objective, d);
    const double dist0 = obj.distance_to_optimum(cfg.start(obj));
    ScalingRow row;
    row.d = d;
    row.results = measure_hitting_time(cfg);
    const HittingTimeSummary s = summarize(row.results);
    row.mean_T = s.mean;
    row.min_T = s.min;
    row.censored = s.censored;
    row.ratio = s.mean / (d * std::log(dist0 / cfg.epsilon));
    row.lower_bound = hitting_time_lower_bound(d, 1.0, dist0, cfg.epsilon);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_scaling_csv(std::ostream& out, const std::vector<ScalingRow>& rows, csv::Header header = {}) {
  std::size_t censored = 0;
  for (const auto& r : rows) censored += r.censored;
  header.emplace_back("censored", std::to_string(censored));
  csv::write_header(out, header);
  out << "d,mean_T,ratio,lower_bound\n";
  for (const auto& r : rows)
    out << r.d << ',' << csv::format(r.mean_T) << ',' << csv::format(r.ratio) << ',' << csv::format(r.lower_bound)
        << '\n';
}

// ---------------------------------------------------------------------------
// Best-so-far curves

/// (evaluations, best f so far), strictly increasing in evaluations.
using Curve = std::vector<std::pair<std::int64_t, double>>;

inline Curve best_so_far(const Trace& trace) {
  Curve c;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : trace.rows) {
    best = std::min(best, row.f);
    if (!c.empty() && c.back().first == row.evals)
      c.back().second = best;
    else
      c.emplace_back(row.evals, best);
  }
  return c;
}

/// Step-function value of a curve at evaluation count e (its first value before it starts).
inline double curve_at(const Curve& c, std::int64_t e) {
  auto it = std::upper_bound(c.begin(), c.end(), e, [](std::int64_t x, const auto& p) { return x < p.first; });
  if (it == c.begin()) return c.front().second;
  return std::prev(it)->second;
}

struct Statistic {
  enum class Kind { median, mean, quantile } kind = Kind::median;
  double q = 0.5;
  static Statistic median() { return {Kind::median, 0.5}; }
  static Statistic mean() { return {Kind::mean, 0.0}; }
  static Statistic quantile(double level) { return {Kind::quantile, level}; }
};

/// Pointwise statistic of best-so-far step functions on the union of their
/// evaluation counts (or on the given grid).
inline Curve aggregate(const std::vector<Curve>& curves, Statistic stat,
                       std::optional<std::vector<std::int64_t>> grid = std::nullopt) {
  if (curves.empty()) throw std::invalid_argument("aggregate needs at least one curve");
  for (const auto& c : curves)
    if (c.empty()) throw std::invalid_argument("aggregate needs non-empty curves");
  std::vector<std::int64_t> xs;
  if (grid) {
    xs = *grid;
  } else {
    for (const auto& c : curves)
      for (const auto& p : c) xs.push_back(p.first);
  }
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  Curve out;
  out.reserve(xs.size());
  std::vector<double> vals(curves.size());
  for (std::int64_t e : xs) {
    for (std::size_t i = 0; i < curves.size(); ++i) vals[i] = curve_at(curves[i], e);
    double v = 0.0;
    switch (stat.kind) {
      case Statistic::Kind::median:
        v = median(vals);
        break;
      case Statistic::Kind::mean: {
        for (double x : vals) v += x;
        v /= static_cast<double>(vals.size());
        break;
      }
      case Statistic::Kind::quantile:
        v = quantile(vals, stat.q);
        break;
    }
    out.emplace_back(e, v);
  }
  return out;
}

/// Least-squares slope of log(dist) against t between the first rows with
/// dist <= upper and dist <= lower. Returns nullopt if the trace never reaches lower.
inline std::optional<double> log_distance_slope(const Trace& trace, double upper, double lower) {
  std::vector<double> t;
  std::vector<double> y;
  bool started = false;
  for (const auto& row : trace.rows) {
    if (!started && row.dist <= upper) started = true;
    if (!started) continue;
    t.push_back(static_cast<double>(row.t));
    y.push_back(std::log(row.dist));
    if (row.dist <= lower) return t.size() >= 2 ? std::optional(least_squares_slope(t, y)) : std::nullopt;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Figure reproduction

struct ReproduceOptions {
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::int64_t fig1_iterations = 20000;
  std::int64_t fig1_stride = 10;
  double fig1_kappa_cap = 1e6;
  std::int64_t fig2_iterations = 3000;
  int appendix_replicates = 5;
  std::vector<int> appendix_dims{10, 50};
  csv::Header header;
};

/// Initial mean of the fig2 runs: 10 (1, ..., 1).
inline Vector fig2_start(int d) { return Vector::Constant(d, 10.0); }

struct AppendixSetup {
  std::string name;
  std::string objective;
  double sigma0;
  int budget_per_dim;
};

inline const std::vector<AppendixSetup>& appendix_setups() {
  static const std::vector<AppendixSetup> setups{
      {"sphere_sigma1", "sphere", 1.0, 100},
      {"sphere_sigma1e-3", "sphere", 1e-3, 700},
      {"ellipsoid_sigma1", "ellipsoid:kappa=100", 1.0, 500},
  };
  return setups;
}

/// Per-strategy runs of one Appendix A cell: final curves indexed [strategy][replicate].
struct AppendixCell {
  std::vector<std::string> strategies;
  std::vector<std::vector<Curve>> curves;
  std::int64_t budget = 0;
};

inline RunConfig appendix_run_config(int d, double sigma0, std::int64_t budget) {
  RunConfig rc;
  rc.m0 = default_start(d);
  rc.sigma0 = sigma0;
  rc.max_evals = budget;
  rc.es = StrategyParams::dimension_scaled(d);
  rc.es.kappa = 1e6;
  return rc;
}

inline AppendixCell run_appendix_cell(const AppendixSetup& setup, int d, int replicates, std::uint64_t seed,
                                      unsigned threads, std::uint64_t cell_base) {
  AppendixCell cell;
  cell.strategies = strategy_ids();
  cell.budget = static_cast<std::int64_t>(setup.budget_per_dim) * d;
  const Objective obj = parse_objective(setup.objective, d);
  const RunConfig rc = appendix_run_config(d, setup.sigma0, cell.budget);
  const std::size_t ns = cell.strategies.size();
  cell.curves.assign(ns, std::vector<Curve>(static_cast<std::size_t>(replicates)));
  parallel_for(ns * static_cast<std::size_t>(replicates), threads, [&](std::size_t job) {
    const std::size_t s = job / static_cast<std::size_t>(replicates);
    const std::size_t rep = job % static_cast<std::size_t>(replicates);
    RngStream rng = replicate_stream(seed, cell_base + s, rep);
    cell.curves[s][rep] = best_so_far(run(cell.strategies[s], obj, rc, rng));
  });
  return cell;
}

inline std::vector<std::int64_t> log_grid(std::int64_t last, int points) {
  std::vector<std::int64_t> g;
  for (int i = 0; i < points; ++i) {
    const double e = std::pow(static_cast<double>(last), static_cast<double>(i) / (points - 1));
    g.push_back(std::max<std::int64_t>(1, std::llround(e)));
  }
  g.push_back(last);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

/// Writes the CSV files of one figure into out_dir and returns their paths.
inline std::vector<std::string> reproduce_figure(const std::string& figure_id, const std::string& out_dir,
                                                 const ReproduceOptions& opt = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> paths;
  auto header_with = [&](csv::Header extra) {
    csv::Header h = opt.header;
    h.emplace_back("figure", figure_id);
    h.emplace_back("seed", std::to_string(opt.seed));
    for (auto& kv : extra) h.push_back(std::move(kv));
    return h;
  };

  if (figure_id == "fig1") {
    const int d = 10;
    const std::vector<std::string> strategies{"es", "es-kappa"};
    std::vector<double> kappas;
    for (int e = 0; e <= 6; ++e) kappas.push_back(std::pow(10.0, e));
    std::vector<Trace> traces(strategies.size() * kappas.size());
    parallel_for(traces.size(), opt.threads, [&](std::size_t job) {
      const std::size_t s = job / kappas.size();
      const std::size_t k = job % kappas.size();
      const Objective obj = make_ellipsoid(d, kappas[k]);
      RunConfig rc;
      rc.m0 = default_start(d);
      rc.sigma0 = 1.0;
      rc.max_evals = opt.fig1_iterations;
      rc.record_stride = opt.fig1_stride;
      rc.es.kappa = strategies[s] == "es-kappa" ? opt.fig1_kappa_cap : 1.0;
      RngStream rng = replicate_stream(opt.seed, 100 + job, 0);
      traces[job] = run(strategies[s], obj, rc, rng);
    });
    for (std::size_t job = 0; job < traces.size(); ++job) {
      const std::string& s = strategies[job / kappas.size()];
      const double kf = kappas[job % kappas.size()];
      const std::string path =
          (fs::path(out_dir) / ("fig1_" + s + "_kappa1e" + std::to_string(static_cast<int>(std::lround(std::log10(kf)))) +
                                ".csv"))
              .string();
      auto out = csv::open(path);
      csv::write_trace(out, traces[job],
                       header_with({{"objective", "ellipsoid"},
                                    {"d", std::to_string(d)},
                                    {"kappa_f", csv::format(kf)},
                                    {"strategy", s},
                                    {"alpha_up", "e0.1"},
                                    {"alpha_down", "e-0.025"},
                                    {"kappa", csv::format(s == "es-kappa" ? opt.fig1_kappa_cap : 1.0)},
                                    {"sigma0", "1"}}));
      paths.push_back(path);
    }
    return paths;
  }

  if (figure_id == "fig2") {
    const int d = 10;
    const std::vector<std::pair<std::string, double>> sigmas{{"1e-4", 1e-4}, {"1", 1.0}, {"1e4", 1e4}};
    const Objective obj = make_sphere(d);
    const StrategyParams sp;
    const PotentialParams pp = PotentialParams::standard(d, sp.alpha_up, sp.alpha_down);
    std::vector<Trace> traces(sigmas.size());
    parallel_for(traces.size(), opt.threads, [&](std::size_t i) {
      RunConfig rc;
      rc.m0 = fig2_start(d);
      rc.sigma0 = sigmas[i].second;
      rc.max_evals = opt.fig2_iterations;
      RngStream rng = replicate_stream(opt.seed, 200 + i, 0);
      traces[i] = run("es", obj, rc, rng);
      annotate_potential(traces[i], pp, sp.alpha_up, sp.alpha_down);
    });
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const std::string path = (fs::path(out_dir) / ("fig2_sigma0_" + sigmas[i].first + ".csv")).string();
      auto out = csv::open(path);
      csv::write_trace(out, traces[i],
                       header_with({{"objective", "sphere"},
                                    {"d", std::to_string(d)},
                                    {"sigma0", sigmas[i].first},
                                    {"m0", "10*ones"},
                                    {"alpha_up", "e0.1"},
                                    {"alpha_down", "e-0.025"},
                                    {"potential_v", csv::format(pp.v)},
                                    {"potential_ell", csv::format(pp.ell)},
                                    {"potential_u", csv::format(pp.u)}}));
      paths.push_back(path);
    }
    return paths;
  }

  if (figure_id == "appendixA") {
    const auto& setups = appendix_setups();
    for (std::size_t si = 0; si < setups.size(); ++si) {
      for (int d : opt.appendix_dims) {
        const AppendixCell cell = run_appendix_cell(setups[si], d, opt.appendix_replicates, opt.seed, opt.threads,
                                                    1000 * (si + 1) + 10 * static_cast<std::uint64_t>(d));
        const std::string stem = "appendixA_" + setups[si].name + "_d" + std::to_string(d);
        const csv::Header h = header_with({{"setup", setups[si].name},
                                           {"objective", setups[si].objective},
                                           {"d", std::to_string(d)},
                                           {"sigma0", csv::format(setups[si].sigma0)},
                                           {"budget", std::to_string(cell.budget)},
                                           {"replicates", std::to_string(opt.appendix_replicates)}});
        const std::string runs_path = (fs::path(out_dir) / (stem + "_runs.csv")).string();
        {
          auto out = csv::open(runs_path);
          csv::write_header(out, h);
          out << "strategy,replicate,evals,best_f\n";
          for (std::size_t s = 0; s < cell.strategies.size(); ++s)
            for (std::size_t r = 0; r < cell.curves[s].size(); ++r)
              for (const auto& [e, f] : cell.curves[s][r])
                out << cell.strategies[s] << ',' << r << ',' << e << ',' << csv::format(f) << '\n';
        }
        const std::string median_path = (fs::path(out_dir) / (stem + "_median.csv")).string();
        {
          auto out = csv::open(median_path);
          csv::write_header(out, h);
          out << "strategy,evals,median_best_f\n";
          const auto grid = log_grid(cell.budget + 1, 200);
          for (std::size_t s = 0; s < cell.strategies.size(); ++s)
            for (const auto& [e, f] : aggregate(cell.curves[s], Statistic::median(), grid))
              out << cell.strategies[s] << ',' << e << ',' << csv::format(f) << '\n';
        }
        paths.push_back(runs_path);
        paths.push_back(median_path);
      }
    }
    return paths;
  }

  throw std::invalid_argument("unknown figure '" + figure_id + "' (expected fig1, fig2 or appendixA)");
}

}  // namespace onefifth
