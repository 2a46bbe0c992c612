#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "onefifth/csv.hpp"
#include "onefifth/errors.hpp"
#include "onefifth/harness.hpp"
#include "onefifth/objectives.hpp"
#include "onefifth/strategies.hpp"
#include "onefifth/theory.hpp"

namespace onefifth::cli {

/// Parses a real number; "eX" means exp(X).
inline double parse_real(const std::string& text) {
  if (text.size() > 1 && (text[0] == 'e' || text[0] == 'E')) return std::exp(detail::parse_double(text.substr(1)));
  return detail::parse_double(text);
}

inline std::int64_t parse_count(const std::string& text) {
  const double v = parse_real(text);
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e18) throw std::invalid_argument("not a count: '" + text + "'");
  return static_cast<std::int64_t>(v);
}

inline std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  for (const auto& part : detail::split(text, ',')) out.push_back(static_cast<int>(parse_count(part)));
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

/// Reads "key = value" lines ('#' starts a comment) and returns them as
/// "--key=value" arguments, with '_' in keys mapped to '-'.
inline std::vector<std::string> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::vector<std::string> args;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    for (char& c : key)
      if (c == '_') c = '-';
    args.push_back("--" + key + "=" + trim(line.substr(eq + 1)));
  }
  return args;
}

/// Flag values as strings, in declaration order; echoed into output headers.
struct Flags {
  std::map<std::string, std::string> values;
  std::vector<std::string> order;

  std::string& bind(const std::string& name, std::string default_value) {
    if (!values.count(name)) order.push_back(name);
    auto& slot = values[name];
    slot = std::move(default_value);
    return slot;
  }
  [[nodiscard]] const std::string& get(const std::string& name) const { return values.at(name); }
  [[nodiscard]] bool has(const std::string& name) const { return values.count(name) && !values.at(name).empty(); }

  [[nodiscard]] csv::Header header(const std::string& command) const {
    csv::Header h{{"command", command}};
    for (const auto& k : order) h.emplace_back(k, values.at(k).empty() ? "<default>" : values.at(k));
    return h;
  }
};

namespace detail {

struct Option {
  const char* name;
  const char* default_value;
  const char* help;
};

inline void add_options(CLI::App* app, Flags& flags, std::initializer_list<Option> options) {
  for (const auto& o : options) {
    std::string& slot = flags.bind(o.name, o.default_value);
    std::string help = o.help;
    if (*o.default_value) help += std::string(" [default: ") + o.default_value + "]";
    app->add_option(std::string("--") + o.name, slot, help);
  }
}

inline std::ostream& open_output(const Flags& f, std::ofstream& file, std::ostream& fallback) {
  if (!f.has("out") || f.get("out") == "-") return fallback;
  file.open(f.get("out"));
  if (!file) throw std::invalid_argument("cannot write '" + f.get("out") + "'");
  return file;
}

inline Vector parse_start(const Flags& f, const Objective& obj) {
  if (!f.has("m0")) {
    Vector m0 = default_start(obj.dim);
    if (obj.optimum) m0 += *obj.optimum;
    return m0;
  }
  const auto parts = onefifth::detail::split(f.get("m0"), ',');
  if (parts.size() == 1) return Vector::Constant(obj.dim, parse_real(parts[0]));
  if (static_cast<int>(parts.size()) != obj.dim)
    throw std::invalid_argument("--m0 needs 1 or d comma-separated values");
  Vector m0(obj.dim);
  for (int i = 0; i < obj.dim; ++i) m0[i] = parse_real(parts[static_cast<std::size_t>(i)]);
  return m0;
}

inline Metric parse_metric(const std::string& s) {
  if (s == "distance") return Metric::distance;
  if (s == "f_mu" || s == "f-mu") return Metric::f_mu;
  throw std::invalid_argument("unknown metric '" + s + "' (expected distance or f_mu)");
}

/// Strategy parameters from the flags; unset step-size factors fall back to
/// the given defaults.
inline StrategyParams parse_strategy_params(const Flags& f, const std::string& strategy, const StrategyParams& base) {
  StrategyParams p = base;
  if (f.has("alpha-up")) p.alpha_up = parse_real(f.get("alpha-up"));
  if (f.has("alpha-down")) p.alpha_down = parse_real(f.get("alpha-down"));
  p.kappa = f.has("kappa") ? parse_real(f.get("kappa")) : (strategy == "es-kappa" ? 1e6 : 1.0);
  if (f.has("cov-learning-rate")) p.cov_learning_rate = parse_real(f.get("cov-learning-rate"));
  p.validate();
  return p;
}

inline RunConfig parse_run_config(const Flags& f, const Objective& obj, const std::string& strategy,
                                  const StrategyParams& es_base) {
  RunConfig rc;
  rc.m0 = parse_start(f, obj);
  rc.sigma0 = parse_real(f.get("sigma0"));
  rc.es = parse_strategy_params(f, strategy, es_base);
  rc.ds.c = parse_real(f.get("ds-c"));
  rc.gld.target = parse_real(f.get("gld-target"));
  rc.gld.ratio = parse_real(f.get("gld-ratio"));
  return rc;
}

}  // namespace detail

inline constexpr detail::Option kObjectiveOptions[] = {
    {"obj", "sphere", "objective id: sphere | ellipsoid:kappa=<v> | quadratic:file=<path> | linf, wrappers |log1p |sqrt |rot=<seed>"},
    {"d", "10", "dimension"},
};

/// Entry point of the `es` tool. Exit status: 0 success, 1 usage or
/// configuration error, 2 numeric abort.
inline int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                              std::ostream& err = std::cerr) {
  // Config-file entries go right after the subcommand; later flags override them.
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  try {
    std::optional<std::string> config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        config_path = args[i + 1];
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
        break;
      }
      if (args[i].rfind("--config=", 0) == 0) {
        config_path = args[i].substr(9);
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        break;
      }
    }
    if (config_path) {
      const auto extra = read_config_file(*config_path);
      const std::size_t pos = args.empty() ? 0 : 1;
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos), extra.begin(), extra.end());
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  CLI::App app{"(1+1)-ES with success-based step-size control: runs, hitting times, theory and figure data"};
  app.name("es");
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.add_option("--config", "key=value file; keys are flag names, command-line flags take precedence");

  const detail::Option common[] = {
      {"seed", "1", "master seed; determines all randomness"},
      {"threads", "0", "worker threads for replicated experiments (0 = all cores)"},
  };
  const detail::Option strategy_opts[] = {
      {"strategy", "es", "es | es-kappa | sds | rp | gld"},
      {"sigma0", "1", "initial step size"},
      {"m0", "", "initial mean: one value for all coordinates or d comma-separated values [default: (1,...,1)/sqrt(d)]"},
      {"alpha-up", "", "step-size increase factor; 'eX' means exp(X) [default: e0.1, or exp(4/d) for scaling]"},
      {"alpha-down", "", "step-size decrease factor [default: e-0.025, or alpha_up^(-1/4) for scaling]"},
      {"kappa", "", "condition-number cap of the covariance [default: 1, or 1e6 for es-kappa]"},
      {"cov-learning-rate", "", "rank-one learning rate [default: 2/(d^2+6)]"},
      {"ds-c", "0.1", "direct-search sufficient-decrease constant"},
      {"gld-target", "1e-10", "smallest gradientless-descent radius"},
      {"gld-ratio", "2", "ratio between consecutive gradientless-descent radii"},
  };

  auto* run_cmd = app.add_subcommand("run", "single run; writes a trace CSV");
  auto* hit_cmd = app.add_subcommand("hit", "first-hitting-time study over replicates");
  auto* scaling_cmd = app.add_subcommand("scaling", "hitting time against dimension on the sphere");
  auto* theory_cmd = app.add_subcommand("theory", "computed bounds for a configuration");
  auto* drift_cmd = app.add_subcommand("drift-verify", "Monte Carlo checks of the additive drift theorems");
  auto* repro_cmd = app.add_subcommand("reproduce", "figure data as CSV files");

  // Each subcommand gets its own flag table; the active one is echoed.
  Flags run_f, hit_f, scaling_f, theory_f, drift_f, repro_f;
  auto add_all = [&](CLI::App* cmd, Flags& fl, std::initializer_list<detail::Option> extra, bool objective,
                     bool strategy) {
    for (const auto& o : common) detail::add_options(cmd, fl, {o});
    if (objective)
      for (const auto& o : kObjectiveOptions) detail::add_options(cmd, fl, {o});
    if (strategy)
      for (const auto& o : strategy_opts) detail::add_options(cmd, fl, {o});
    detail::add_options(cmd, fl, extra);
  };
  add_all(run_cmd, run_f,
          {{"iters", "", "iteration budget [default: 1000 when --evals is unset]"},
           {"evals", "", "evaluation budget"},
           {"epsilon", "", "stop once the metric reaches epsilon"},
           {"metric", "distance", "distance | f_mu"},
           {"potential", "on", "fill the potential column (v=4/d, ell=alpha_up^-10, u=alpha_down^-10): on | off"},
           {"stride", "1", "record every k-th iteration"},
           {"out", "", "output file [default: stdout]"}},
          true, true);
  add_all(hit_cmd, hit_f,
          {{"epsilon", "1e-8", "target"},
           {"metric", "distance", "distance | f_mu"},
           {"evals", "100000", "evaluation budget per replicate"},
           {"replicates", "20", "number of replicates"},
           {"out", "", "output file [default: stdout]"}},
          true, true);
  add_all(scaling_cmd, scaling_f,
          {{"dims", "2,5,10,20,40", "comma-separated dimensions"},
           {"epsilon", "1e-6", "target distance (relative to the unit initial distance)"},
           {"evals", "1000000", "evaluation budget per replicate"},
           {"replicates", "20", "number of replicates"},
           {"strategy", "es", "es | es-kappa | sds | rp | gld"},
           {"sigma0", "1", "initial step size"},
           {"alpha-up", "", "step-size increase factor [default: exp(4/d)]"},
           {"alpha-down", "", "step-size decrease factor [default: alpha_up^(-1/4)]"},
           {"out", "", "output file [default: stdout]"}},
          false, false);
  add_all(theory_cmd, theory_f,
          {{"epsilon", "1e-8", "target distance for the hitting-time bounds"},
           {"samples", "100000", "Monte Carlo samples per estimate"},
           {"format", "text", "text | csv"},
           {"out", "", "output file [default: stdout]"}},
          true, true);
  add_all(drift_cmd, drift_f, {{"runs", "10000", "simulated runs per process"}}, false, false);
  std::string figure;
  repro_cmd->add_option("figure", figure, "fig1 | fig2 | appendixA")->required();
  add_all(repro_cmd, repro_f,
          {{"out", "out", "output directory"},
           {"fig1-iters", "20000", "iterations per fig1 run"},
           {"fig2-iters", "3000", "iterations per fig2 run"},
           {"replicates", "5", "appendixA replicates"}},
          false, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) {
      const Flags& fl = run_f;
      const int d = static_cast<int>(parse_count(fl.get("d")));
      const Objective obj = parse_objective(fl.get("obj"), d);
      const std::string strategy = fl.get("strategy");
      RunConfig rc = detail::parse_run_config(fl, obj, strategy, StrategyParams{});
      if (fl.has("evals")) rc.max_evals = parse_count(fl.get("evals"));
      if (fl.has("iters")) rc.max_iterations = parse_count(fl.get("iters"));
      if (!fl.has("evals")) rc.max_evals = fl.has("iters") ? INT64_MAX - 1 : 1000;
      if (!fl.has("evals") && !fl.has("iters")) rc.max_iterations = 1000;
      if (fl.has("epsilon")) rc.target = parse_real(fl.get("epsilon"));
      rc.metric = detail::parse_metric(fl.get("metric"));
      rc.record_stride = parse_count(fl.get("stride"));
      RngStream rng(parse_count(fl.get("seed")), 0);
      Trace trace = run(strategy, obj, rc, rng);
      if (fl.get("potential") == "on" && obj.mode == SuboptimalityMode::analytic && (strategy == "es" || strategy == "es-kappa")) {
        const PotentialParams pp = PotentialParams::standard(d, rc.es.alpha_up, rc.es.alpha_down);
        annotate_potential(trace, pp, rc.es.alpha_up, rc.es.alpha_down);
      } else if (fl.get("potential") != "on" && fl.get("potential") != "off") {
        throw std::invalid_argument("--potential must be on or off");
      }
      std::ofstream file;
      std::ostream& o = detail::open_output(fl, file, out);
      csv::Header h = fl.header("run");
      h.emplace_back("stop", trace.stop == StopReason::budget   ? "budget"
                             : trace.stop == StopReason::target ? "target"
                                                                : "numeric_abort");
      csv::write_trace(o, trace, h);
      if (trace.stop == StopReason::numeric_abort) {
        err << "numeric abort: " << trace.abort_message << '\n';
        return 2;
      }
      return 0;
    }

    if (hit_cmd->parsed()) {
      const Flags& fl = hit_f;
      ExperimentConfig cfg;
      cfg.objective = fl.get("obj");
      cfg.d = static_cast<int>(parse_count(fl.get("d")));
      cfg.strategy = fl.get("strategy");
      const Objective obj = parse_objective(cfg.objective, cfg.d);
      cfg.run = detail::parse_run_config(fl, obj, cfg.strategy, StrategyParams{});
      cfg.run.max_evals = parse_count(fl.get("evals"));
      cfg.epsilon = parse_real(fl.get("epsilon"));
      cfg.metric = detail::parse_metric(fl.get("metric"));
      cfg.n_replicates = static_cast<int>(parse_count(fl.get("replicates")));
      cfg.master_seed = parse_count(fl.get("seed"));
      cfg.threads = static_cast<unsigned>(parse_count(fl.get("threads")));
      const auto results = measure_hitting_time(cfg);
      std::ofstream file;
      std::ostream& o = detail::open_output(fl, file, out);
      write_hitting_csv(o, cfg, obj.kappa_f, results, fl.header("hit"));
      return 0;
    }

    if (scaling_cmd->parsed()) {
      const Flags& fl = scaling_f;
      const auto dims = parse_int_list(fl.get("dims"));
      const std::string strategy = fl.get("strategy");
      const double eps = parse_real(fl.get("epsilon"));
      const std::int64_t budget = parse_count(fl.get("evals"));
      const double sigma0 = parse_real(fl.get("sigma0"));
      const std::uint64_t seed = parse_count(fl.get("seed"));
      const auto threads = static_cast<unsigned>(parse_count(fl.get("threads")));
      auto make = [&](int d) {
        ExperimentConfig c;
        c.objective = "sphere";
        c.d = d;
        c.strategy = strategy;
        c.run.sigma0 = sigma0;
        c.run.max_evals = budget;
        c.run.es = StrategyParams::dimension_scaled(d);
        if (fl.has("alpha-up")) {
          c.run.es.alpha_up = parse_real(fl.get("alpha-up"));
          c.run.es.alpha_down = std::pow(c.run.es.alpha_up, -0.25);
        }
        if (fl.has("alpha-down")) c.run.es.alpha_down = parse_real(fl.get("alpha-down"));
        if (strategy == "es-kappa") c.run.es.kappa = 1e6;
        c.epsilon = eps;
        c.master_seed = seed;
        c.threads = threads;
        return c;
      };
      const auto rows = scaling_study(dims, make, static_cast<int>(parse_count(fl.get("replicates"))));
      std::ofstream file;
      std::ostream& o = detail::open_output(fl, file, out);
      write_scaling_csv(o, rows, fl.header("scaling"));
      return 0;
    }

    if (theory_cmd->parsed()) {
      const Flags& fl = theory_f;
      const int d = static_cast<int>(parse_count(fl.get("d")));
      const Objective obj = parse_objective(fl.get("obj"), d);
      TheoryInputs in;
      in.params = detail::parse_strategy_params(fl, fl.get("strategy"), StrategyParams{});
      in.m0 = detail::parse_start(fl, obj);
      in.sigma0 = parse_real(fl.get("sigma0"));
      in.epsilon = parse_real(fl.get("epsilon"));
      in.samples = static_cast<std::size_t>(parse_count(fl.get("samples")));
      const TheoryReport rep = theory_report(obj, in, RngStream(parse_count(fl.get("seed")), 0));
      std::ofstream file;
      std::ostream& o = detail::open_output(fl, file, out);
      if (fl.get("format") == "csv") {
        csv::write_header(o, fl.header("theory"));
        o << rep.to_csv();
      } else if (fl.get("format") == "text") {
        o << rep.to_text();
      } else {
        throw std::invalid_argument("--format must be text or csv");
      }
      return 0;
    }

    if (drift_cmd->parsed()) {
      const Flags& fl = drift_f;
      const auto checks = builtin_drift_checks(static_cast<std::size_t>(parse_count(fl.get("runs"))),
                                               RngStream(parse_count(fl.get("seed")), 0));
      out.precision(6);
      bool all_ok = true;
      for (const auto& c : checks) {
        const auto& r = c.report;
        out << c.theorem << ' ' << c.name << ": ";
        if (!r.admissible) {
          out << "not admissible (truncated drift " << r.truncated_drift << ", untruncated " << r.untruncated_drift
              << ")";
          all_ok = all_ok && !c.expect_admissible;
        } else {
          out << "mean T " << r.mean << " 99% CI [" << r.ci_low << ", " << r.ci_high << "] bound " << r.bound
              << (r.passed ? " PASS" : " FAIL");
          all_ok = all_ok && c.expect_admissible && r.passed;
        }
        out << '\n';
      }
      out << (all_ok ? "all checks behave as expected\n" : "some checks did not behave as expected\n");
      return 0;
    }

    if (repro_cmd->parsed()) {
      const Flags& fl = repro_f;
      ReproduceOptions opt;
      opt.seed = parse_count(fl.get("seed"));
      opt.threads = static_cast<unsigned>(parse_count(fl.get("threads")));
      opt.fig1_iterations = parse_count(fl.get("fig1-iters"));
      opt.fig2_iterations = parse_count(fl.get("fig2-iters"));
      opt.appendix_replicates = static_cast<int>(parse_count(fl.get("replicates")));
      opt.header = fl.header("reproduce");
      for (const auto& p : reproduce_figure(figure, fl.get("out"), opt)) out << p << '\n';
      return 0;
    }
  } catch (const NumericAbort& e) {
    err << "numeric abort: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace onefifth::cli
