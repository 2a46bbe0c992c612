#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "onefifth/errors.hpp"
#include "onefifth/linalg.hpp"
#include "onefifth/rng.hpp"

namespace onefifth {

/// d-th root of the volume of the d-dimensional unit ball.
inline double unit_ball_root(int d) {
  if (d < 1) throw std::invalid_argument("unit_ball_root: d must be >= 1");
  const double dd = static_cast<double>(d);
  return std::sqrt(M_PI) * std::exp(-std::lgamma(0.5 * dd + 1.0) / dd);
}

/// Ball constants of an objective: B(x*, C_lower f_mu(x)) lies inside the
/// sublevel set of x, which in turn lies inside B(x*, C_upper f_mu(x)).
struct GeometryConstants {
  double C_lower = 0.0;
  double C_upper = 0.0;
  std::optional<double> L_lower;
  std::optional<double> L_upper;
  double unit_ball_root = 0.0;
};

enum class SuboptimalityMode { analytic, monte_carlo, unavailable };

/// Black-box objective with optional exact geometry.
///
/// Objectives are immutable after construction; copies share nothing mutable
/// and can be evaluated concurrently.
struct Objective {
  std::string name;
  int dim = 0;
  std::function<double(const Vector&)> evaluator;
  std::optional<Vector> optimum;
  SuboptimalityMode mode = SuboptimalityMode::unavailable;
  std::function<double(const Vector&)> analytic_f_mu;
  std::optional<GeometryConstants> geometry;
  /// Condition number of the underlying quadratic (1 for non-quadratics).
  double kappa_f = 1.0;
  /// Half-width multiplier for the Monte Carlo bounding box.
  double box_scale = 1.0;

  double operator()(const Vector& x) const { return evaluator(x); }

  [[nodiscard]] double distance_to_optimum(const Vector& x) const {
    if (!optimum) throw UnsupportedError("objective '" + name + "' has no known optimum");
    return (x - *optimum).norm();
  }
};

/// Symmetric positive-definite Hessian with its minimiser.
struct QuadraticSpec {
  Matrix hessian;
  Vector optimum;
};

namespace detail {

inline Vector default_optimum(int d, const std::optional<Vector>& x_star) {
  if (!x_star) return Vector::Zero(d);
  if (x_star->size() != d) throw std::invalid_argument("optimum has wrong dimension");
  return *x_star;
}

}  // namespace detail

/// f(x) = ||x - x*||^2 / 2.
inline Objective make_sphere(int d, std::optional<Vector> x_star = std::nullopt) {
  if (d < 1) throw std::invalid_argument("make_sphere: d must be >= 1");
  const Vector xs = detail::default_optimum(d, x_star);
  const double vd = unit_ball_root(d);
  Objective obj;
  obj.name = "sphere";
  obj.dim = d;
  obj.evaluator = [xs](const Vector& x) { return 0.5 * (x - xs).squaredNorm(); };
  obj.optimum = xs;
  obj.mode = SuboptimalityMode::analytic;
  obj.analytic_f_mu = [xs, vd](const Vector& x) { return vd * (x - xs).norm(); };
  obj.geometry = GeometryConstants{1.0 / vd, 1.0 / vd, 1.0, 1.0, vd};
  return obj;
}

/// f(x) = (x - x*)^T H (x - x*) / 2 with f_mu(x) = V_d (2 f(x) / det(H)^{1/d})^{1/2}.
inline Objective make_quadratic(const QuadraticSpec& spec) {
  const Matrix& h = spec.hessian;
  const auto d = static_cast<int>(h.rows());
  if (d < 1 || h.cols() != d) throw std::invalid_argument("make_quadratic: Hessian must be square");
  if (spec.optimum.size() != d) throw std::invalid_argument("make_quadratic: optimum has wrong dimension");
  const double scale = h.norm();
  if ((h - h.transpose()).norm() > 1e-12 * scale)
    throw std::invalid_argument("make_quadratic: Hessian must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(h, Eigen::EigenvaluesOnly);
  const Vector ev = es.eigenvalues();
  if (!(ev.minCoeff() > 0.0)) throw std::invalid_argument("make_quadratic: Hessian must be positive definite");

  const double lmin = ev.minCoeff();
  const double lmax = ev.maxCoeff();
  const double det_root = std::exp(ev.array().log().mean());  // det(H)^{1/d}
  const double vd = unit_ball_root(d);
  const Vector xs = spec.optimum;
  const bool diagonal = h.isDiagonal(0.0);
  const Vector hd = h.diagonal();

  Objective obj;
  obj.name = "quadratic";
  obj.dim = d;
  if (diagonal) {
    obj.evaluator = [xs, hd](const Vector& x) {
      const Vector y = x - xs;
      return 0.5 * y.dot(hd.cwiseProduct(y));
    };
  } else {
    const Matrix hm = h;
    obj.evaluator = [xs, hm](const Vector& x) {
      const Vector y = x - xs;
      return 0.5 * y.dot(hm * y);
    };
  }
  obj.optimum = xs;
  obj.mode = SuboptimalityMode::analytic;
  auto eval = obj.evaluator;
  obj.analytic_f_mu = [eval, vd, det_root](const Vector& x) {
    return vd * std::sqrt(std::max(0.0, 2.0 * eval(x) / det_root));
  };
  obj.geometry = GeometryConstants{std::sqrt(det_root / lmax) / vd, std::sqrt(det_root / lmin) / vd,
                                   lmin, lmax, vd};
  obj.kappa_f = lmax / lmin;
  obj.box_scale = std::sqrt(obj.kappa_f);
  return obj;
}

/// Axis-aligned ellipsoid with H = diag(kappa_f^{(i-1)/(d-1)}).
inline Objective make_ellipsoid(int d, double kappa_f, std::optional<Vector> x_star = std::nullopt) {
  if (d < 2) throw std::invalid_argument("make_ellipsoid: d must be >= 2");
  if (!(kappa_f >= 1.0)) throw std::invalid_argument("make_ellipsoid: kappa_f must be >= 1");
  Vector diag(d);
  for (int i = 0; i < d; ++i) diag[i] = std::pow(kappa_f, static_cast<double>(i) / (d - 1));
  Objective obj = make_quadratic({diag.asDiagonal().toDenseMatrix(), detail::default_optimum(d, x_star)});
  std::ostringstream name;
  name.precision(17);
  name << "ellipsoid:kappa=" << kappa_f;
  obj.name = name.str();
  return obj;
}

/// f(x) = ||x - x*||_inf with f_mu(x) = 2 ||x - x*||_inf.
inline Objective make_linf(int d, std::optional<Vector> x_star = std::nullopt) {
  if (d < 1) throw std::invalid_argument("make_linf: d must be >= 1");
  const Vector xs = detail::default_optimum(d, x_star);
  Objective obj;
  obj.name = "linf";
  obj.dim = d;
  obj.evaluator = [xs](const Vector& x) { return (x - xs).lpNorm<Eigen::Infinity>(); };
  obj.optimum = xs;
  obj.mode = SuboptimalityMode::analytic;
  obj.analytic_f_mu = [xs](const Vector& x) { return 2.0 * (x - xs).lpNorm<Eigen::Infinity>(); };
  // Sublevel set is the cube of half-side f_mu/2: inscribed ball radius f_mu/2,
  // circumscribed radius sqrt(d) f_mu/2.
  obj.geometry = GeometryConstants{0.5, 0.5 * std::sqrt(static_cast<double>(d)), std::nullopt, std::nullopt,
                                   unit_ball_root(d)};
  return obj;
}

/// g o f for a strictly increasing g. Sublevel sets, and hence f_mu, are unchanged.
inline Objective compose_monotone(Objective obj, std::function<double(double)> transform,
                                  const std::string& label) {
  auto inner = std::move(obj.evaluator);
  obj.evaluator = [inner, transform = std::move(transform)](const Vector& x) { return transform(inner(x)); };
  obj.name += "|" + label;
  return obj;
}

/// x -> obj(R x) for orthogonal R; the optimum moves to R^T x*.
inline Objective rotate(Objective obj, const Matrix& r, const std::string& label = "rot") {
  if (r.rows() != obj.dim || r.cols() != obj.dim) throw std::invalid_argument("rotate: matrix has wrong size");
  const Matrix gram = r.transpose() * r;
  if ((gram - Matrix::Identity(obj.dim, obj.dim)).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("rotate: matrix is not orthogonal");
  auto inner = std::move(obj.evaluator);
  obj.evaluator = [inner, r](const Vector& x) { return inner(r * x); };
  if (obj.analytic_f_mu) {
    auto f_mu = std::move(obj.analytic_f_mu);
    obj.analytic_f_mu = [f_mu, r](const Vector& x) { return f_mu(r * x); };
  }
  if (obj.optimum) obj.optimum = Vector(r.transpose() * *obj.optimum);
  obj.name += "|" + label;
  return obj;
}

/// Switches an objective to Monte Carlo volume estimation of f_mu.
inline Objective with_monte_carlo_suboptimality(Objective obj) {
  if (!obj.optimum) throw UnsupportedError("Monte Carlo suboptimality needs a known optimum");
  obj.mode = SuboptimalityMode::monte_carlo;
  return obj;
}

inline Objective without_suboptimality(Objective obj) {
  obj.mode = SuboptimalityMode::unavailable;
  obj.analytic_f_mu = nullptr;
  return obj;
}

struct SuboptimalityEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct MonteCarloOptions {
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
};

/// f_mu(x): exact in analytic mode; in Monte Carlo mode the sublevel-set volume
/// is estimated by uniform sampling in the box x* +- 2 ||x - x*|| box_scale.
inline SuboptimalityEstimate suboptimality(const Objective& obj, const Vector& x,
                                           const MonteCarloOptions& mc = {}) {
  switch (obj.mode) {
    case SuboptimalityMode::analytic:
      return {obj.analytic_f_mu(x), 0.0};
    case SuboptimalityMode::monte_carlo: {
      const Vector& xs = *obj.optimum;
      const double radius = (x - xs).norm();
      if (radius == 0.0) return {0.0, 0.0};
      const double half = 2.0 * radius * obj.box_scale;
      const double fx = obj(x);
      RngStream rng(mc.seed, 0x5ab0bb);
      std::size_t hits = 0;
      Vector y(obj.dim);
      for (std::size_t i = 0; i < mc.samples; ++i) {
        for (int j = 0; j < obj.dim; ++j) y[j] = xs[j] + half * (2.0 * rng.uniform() - 1.0);
        if (obj(y) <= fx) ++hits;
      }
      const double n = static_cast<double>(mc.samples);
      const double p = static_cast<double>(hits) / n;
      const double d = static_cast<double>(obj.dim);
      const double value = 2.0 * half * std::pow(p, 1.0 / d);
      const double se_p = std::sqrt(p * (1.0 - p) / n);
      const double se = p > 0.0 ? value * se_p / (d * p) : std::numeric_limits<double>::infinity();
      return {value, se};
    }
    case SuboptimalityMode::unavailable:
      break;
  }
  throw UnsupportedError("suboptimality is unavailable for objective '" + obj.name + "'");
}

/// Exact f_mu; throws unless the objective is in analytic mode.
inline double f_mu(const Objective& obj, const Vector& x) {
  if (obj.mode != SuboptimalityMode::analytic)
    throw UnsupportedError("analytic suboptimality is unavailable for objective '" + obj.name + "'");
  return obj.analytic_f_mu(x);
}

/// Reads "d" followed by d*d row-major entries.
inline Matrix read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open matrix file '" + path + "'");
  long d = 0;
  if (!(in >> d) || d < 1) throw std::invalid_argument("matrix file '" + path + "': bad dimension line");
  Matrix m(d, d);
  for (long i = 0; i < d; ++i)
    for (long j = 0; j < d; ++j)
      if (!(in >> m(i, j))) throw std::invalid_argument("matrix file '" + path + "': too few entries");
  double extra = 0.0;
  if (in >> extra) throw std::invalid_argument("matrix file '" + path + "': trailing entries");
  return m;
}

namespace detail {

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

inline std::string value_of(const std::string& token, const std::string& key) {
  const std::string prefix = key + "=";
  if (token.rfind(prefix, 0) != 0) throw std::invalid_argument("expected '" + prefix + "...' in '" + token + "'");
  return token.substr(prefix.size());
}

inline double parse_double(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("not a number: '" + s + "'");
  }
  if (pos != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

}  // namespace detail

/// Builds an objective from its string id, e.g. "ellipsoid:kappa=100|log1p|rot=3".
/// When optimum is given it replaces the default origin of the base objective.
inline Objective parse_objective(const std::string& id, int d, std::optional<Vector> x_star = std::nullopt) {
  const auto parts = detail::split(id, '|');
  if (parts.empty() || parts[0].empty()) throw std::invalid_argument("empty objective id");
  const std::string& base = parts[0];
  Objective obj;
  if (base == "sphere") {
    obj = make_sphere(d, x_star);
  } else if (base == "linf") {
    obj = make_linf(d, x_star);
  } else if (base.rfind("ellipsoid:", 0) == 0) {
    obj = make_ellipsoid(d, detail::parse_double(detail::value_of(base.substr(10), "kappa")), x_star);
  } else if (base == "ellipsoid") {
    throw std::invalid_argument("ellipsoid needs a condition number: 'ellipsoid:kappa=<v>'");
  } else if (base.rfind("quadratic:", 0) == 0) {
    Matrix h = read_matrix_file(detail::value_of(base.substr(10), "file"));
    if (h.rows() != d)
      throw std::invalid_argument("quadratic file dimension " + std::to_string(h.rows()) +
                                  " does not match d = " + std::to_string(d));
    obj = make_quadratic({std::move(h), detail::default_optimum(d, x_star)});
    obj.name = base;
  } else {
    throw std::invalid_argument("unknown objective '" + base + "'");
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::string& w = parts[i];
    if (w == "log1p") {
      obj = compose_monotone(std::move(obj), [](double t) { return std::log1p(t); }, "log1p");
    } else if (w == "sqrt") {
      obj = compose_monotone(std::move(obj), [](double t) { return std::sqrt(t); }, "sqrt");
    } else if (w.rfind("rot=", 0) == 0) {
      const auto seed = static_cast<std::uint64_t>(std::stoull(w.substr(4)));
      RngStream rng(seed, 0x707a7e);
      obj = rotate(std::move(obj), random_orthogonal(d, rng), w);
    } else {
      throw std::invalid_argument("unknown objective wrapper '" + w + "'");
    }
  }
  return obj;
}

}  // namespace onefifth
