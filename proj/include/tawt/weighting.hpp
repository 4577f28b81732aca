// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Task (or sample) weights on the probability simplex: initialization, the
// task-gradient estimators, the exponentiated mirror-descent step and the
// two-task matching construction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tawt/dataset.hpp"
#include "tawt/model.hpp"
#include "tawt/numerics.hpp"

namespace tawt {

inline constexpr double kSimplexTolerance = 1e-9;

/// Nonnegative weights summing to one. Immutable once built.
class SimplexWeights {
 public:
  SimplexWeights() = default;

  /// Validates nonnegativity and unit mass (within kSimplexTolerance).
  explicit SimplexWeights(Vector w) : w_(std::move(w)) {
    if (w_.empty()) throw ArgumentError("SimplexWeights: empty");
    double sum = 0.0;
    for (double x : w_) {
      if (!std::isfinite(x) || x < 0.0) throw ArgumentError("SimplexWeights: negative or non-finite entry");
      sum += x;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) throw ArgumentError("SimplexWeights: entries do not sum to 1");
  }

  /// Scales a nonnegative vector to unit mass.
  static SimplexWeights normalized(Vector w) {
    double sum = 0.0;
    for (double x : w) {
      if (!std::isfinite(x) || x < 0.0) throw ArgumentError("SimplexWeights: negative or non-finite entry");
      sum += x;
    }
    if (!(sum > 0.0)) throw DegenerateWeightsError("SimplexWeights: zero total mass");
    for (double& x : w) x /= sum;
    return SimplexWeights(std::move(w));
  }

  static SimplexWeights one_hot(std::size_t n, std::size_t at) {
    if (at >= n) throw IndexError("SimplexWeights::one_hot: index out of range");
    Vector w(n, 0.0);
    w[at] = 1.0;
    return SimplexWeights(std::move(w));
  }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const noexcept { return w_[i]; }
  std::span<const double> values() const noexcept { return w_; }

  friend bool operator==(const SimplexWeights&, const SimplexWeights&) = default;

 private:
  Vector w_;
};

enum class InitMode { proportional, uniform };

inline SimplexWeights init_weights(InitMode mode, std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw ArgumentError("init_weights: no tasks");
  for (std::size_t n : sizes)
    if (n == 0) throw ArgumentError("init_weights: task sizes must be positive");
  Vector w(sizes.size());
  if (mode == InitMode::uniform) {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(sizes.size()));
  } else {
    double total = 0.0;
    for (std::size_t n : sizes) total += static_cast<double>(n);
    for (std::size_t i = 0; i < sizes.size(); ++i) w[i] = static_cast<double>(sizes[i]) / total;
  }
  return SimplexWeights(std::move(w));
}

// ---------------------------------------------------------------------------
// Task-gradient estimators. A negative g_t means the source helps the target.

/// -c * cos(g0, gt).
inline double cosine_task_gradient(std::span<const double> g0, std::span<const double> gt, double c = 1.0) {
  if (g0.size() != gt.size()) throw DimensionError("cosine_task_gradient: length mismatch");
  if (!(c > 0.0)) throw ArgumentError("cosine_task_gradient: c must be positive");
  return -c * cosine_similarity(g0, gt);
}

inline constexpr double kDefaultIdentityHessianScale = 5.0;

/// Inverse Hessian replaced by const_scale * I: -const_scale * <g0, gt>.
inline double identity_hessian_task_gradient(std::span<const double> g0, std::span<const double> gt,
                                             double const_scale = kDefaultIdentityHessianScale) {
  if (g0.size() != gt.size()) throw DimensionError("identity_hessian_task_gradient: length mismatch");
  return -const_scale * dot(g0, gt);
}

namespace detail {

/// Solves A x = b by LU with partial pivoting. Returns false on a pivot below
/// `pivot_tol` or a non-finite solution.
inline bool lu_solve(std::vector<double> a, std::size_t n, Vector& b, double pivot_tol) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (!(std::abs(a[piv * n + col]) > pivot_tol)) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[piv * n + c], a[col * n + c]);
      std::swap(b[piv], b[col]);
    }
    const double d = a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / d;
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * b[c];
    b[i] = s / a[i * n + i];
  }
  return all_finite(b);
}

}  // namespace detail

struct HessianOptions {
  double fd_step = 1e-4;           // central-difference step on analytic gradients
  double relative_ridge = 1e-6;    // first ridge = relative_ridge * trace(H) / dim
  int max_escalations = 4;         // ridge *= 10 on each failed solve
  std::size_t max_params = 200;
};

using GradientFn = std::function<Vector(std::span<const double>)>;

/// g_t = -<grad L_0, (sum_t w_t Hess L_t + ridge I)^{-1} grad L_t> for every t,
/// with the Hessian assembled by central differences of the analytic gradients.
inline Vector hessian_task_gradient(std::span<const double> params, const GradientFn& target_grad,
                                    std::span<const GradientFn> task_grads, const SimplexWeights& w,
                                    const HessianOptions& opt = {}) {
  const std::size_t n = params.size();
  if (n == 0) throw DimensionError("hessian_task_gradient: no parameters");
  if (n > opt.max_params)
    throw CapacityError("hessian_task_gradient: " + std::to_string(n) + " parameters exceed cap " +
                        std::to_string(opt.max_params));
  if (task_grads.size() != w.size()) throw DimensionError("hessian_task_gradient: weights/tasks mismatch");

  const Vector g0 = target_grad(params);
  std::vector<Vector> gt;
  gt.reserve(task_grads.size());
  for (const auto& f : task_grads) gt.push_back(f(params));
  Vector result(task_grads.size(), 0.0);
  if (norm2(g0) == 0.0) return result;

  auto weighted_grad = [&](std::span<const double> p) {
    Vector s(n, 0.0);
    for (std::size_t t = 0; t < task_grads.size(); ++t) {
      if (w[t] == 0.0) continue;
      axpy(w[t], task_grads[t](p), s);
    }
    return s;
  };

  std::vector<double> hess(n * n, 0.0);
  Vector p(params.begin(), params.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double orig = p[i];
    p[i] = orig + opt.fd_step;
    const Vector gp = weighted_grad(p);
    p[i] = orig - opt.fd_step;
    const Vector gm = weighted_grad(p);
    p[i] = orig;
    for (std::size_t r = 0; r < n; ++r) hess[r * n + i] = (gp[r] - gm[r]) / (2.0 * opt.fd_step);
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = r + 1; c < n; ++c) {
      const double s = 0.5 * (hess[r * n + c] + hess[c * n + r]);
      hess[r * n + c] = hess[c * n + r] = s;
    }
  require_finite(hess, "hessian_task_gradient: Hessian");

  double trace = 0.0, max_abs = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += hess[i * n + i];
  for (double v : hess) max_abs = std::max(max_abs, std::abs(v));
  double ridge = opt.relative_ridge * std::abs(trace) / static_cast<double>(n);
  if (!(ridge > 0.0)) ridge = opt.relative_ridge * std::max(max_abs, 1e-12);
  const double pivot_tol = 1e-14 * std::max(max_abs, 1e-300);

  for (int attempt = 0; attempt <= opt.max_escalations; ++attempt, ridge *= 10.0) {
    std::vector<double> a = hess;
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] += ridge;
    bool ok = true;
    for (std::size_t t = 0; t < gt.size() && ok; ++t) {
      Vector x = gt[t];
      ok = detail::lu_solve(a, n, x, pivot_tol);
      if (ok) result[t] = -dot(g0, x);
    }
    if (ok) return result;
  }
  throw SingularityError("hessian_task_gradient: solve failed after ridge escalation");
}

/// Model-level wrapper: differentiates w.r.t. the representation with every
/// head held fixed. tasks[t] pairs with weights[t].
inline Vector hessian_task_gradient(const SharedModel& model, std::span<const Dataset* const> tasks,
                                    const SimplexWeights& weights, std::uint64_t target_head,
                                    const Dataset& target, const HessianOptions& opt = {}) {
  if (model.rep_param_count() > opt.max_params)
    throw CapacityError("hessian_task_gradient: representation has " +
                        std::to_string(model.rep_param_count()) + " parameters, cap is " +
                        std::to_string(opt.max_params));
  auto grad_for = [&model](std::uint64_t head, const Dataset& data) -> GradientFn {
    return [&model, head, &data](std::span<const double> p) {
      SharedModel probe = model;
      probe.rep.assign(p.begin(), p.end());
      return backward(probe, head, data).rep_grad;
    };
  };
  std::vector<GradientFn> fns;
  for (const Dataset* d : tasks) fns.push_back(grad_for(d->task_id(), *d));
  return hessian_task_gradient(model.rep, grad_for(target_head, target), fns, weights, opt);
}

// ---------------------------------------------------------------------------
// Mirror descent

/// w_t <- w_t exp(-eta g_t) / sum_t' w_t' exp(-eta g_t').
inline SimplexWeights mirror_descent_step(const SimplexWeights& w, std::span<const double> g,
                                          double eta = 1.0) {
  if (g.size() != w.size()) throw DimensionError("mirror_descent_step: length mismatch");
  if (!(eta >= 0.0)) throw ArgumentError("mirror_descent_step: eta must be >= 0");
  require_finite(g, "mirror_descent_step");
  if (eta == 0.0) return w;
  // Exponents shifted by their max over the support; entries already at zero stay zero.
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < g.size(); ++t)
    if (w[t] > 0.0) shift = std::max(shift, -eta * g[t]);
  Vector next(w.size(), 0.0);
  double sum = 0.0;
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (w[t] == 0.0) continue;
    next[t] = w[t] * std::exp(-eta * g[t] - shift);
    sum += next[t];
  }
  if (!(sum > 0.0) || !std::isfinite(sum))
    throw DegenerateWeightsError("mirror_descent_step: weights underflowed to zero");
  for (double& x : next) x /= sum;
  return SimplexWeights(std::move(next));
}

/// Raises every entry to at least `floor`, then renormalizes.
inline SimplexWeights apply_weight_floor(const SimplexWeights& w, double floor) {
  Vector v(w.values().begin(), w.values().end());
  for (double& x : v) x = std::max(x, floor);
  return SimplexWeights::normalized(std::move(v));
}

// ---------------------------------------------------------------------------
// Two-task matching: weights on a bracketing pair whose mixture risk equals
// the target risk.

inline SimplexWeights matching_weights(std::span<const double> source_risks, double target_risk) {
  if (source_risks.empty()) throw ArgumentError("matching_weights: no sources");
  require_finite(source_risks, "matching_weights");
  if (!std::isfinite(target_risk)) throw NumericError("matching_weights: non-finite target risk");
  const std::size_t T = source_risks.size();
  std::size_t lo = T, hi = T;
  for (std::size_t t = 0; t < T; ++t) {
    const double r = source_risks[t];
    if (r <= target_risk && (lo == T || r > source_risks[lo])) lo = t;
    if (r >= target_risk && (hi == T || r < source_risks[hi])) hi = t;
  }
  if (lo == T || hi == T)
    throw BracketingViolation("matching_weights: no source pair brackets the target risk");

  Vector w(T, 0.0);
  const double r1 = source_risks[lo], r2 = source_risks[hi];
  if (lo == hi || r1 == r2) {
    w[lo] = 1.0;
    return SimplexWeights(std::move(w));
  }
  auto mixture = [&](const Vector& v) {
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) s += v[t] * source_risks[t];
    return s;
  };
  auto at = [&](double v2) {
    Vector v(T, 0.0);
    v[lo] = 1.0 - v2;
    v[hi] = v2;
    return v;
  };
  // Closed form, then a few rounding-level corrections; keep the best mixture seen.
  double w2 = std::clamp((target_risk - r1) / (r2 - r1), 0.0, 1.0);
  w = at(w2);
  double best = std::abs(target_risk - mixture(w));
  for (int iter = 0; iter < 8 && best > 0.0; ++iter) {
    const double err = target_risk - mixture(at(w2));
    double cand = std::clamp(w2 + err / (r2 - r1), 0.0, 1.0);
    if (cand == w2) cand = std::nextafter(w2, err > 0.0 ? 2.0 : -1.0);
    if (cand < 0.0 || cand > 1.0) break;
    const Vector trial = at(cand);
    const double e = std::abs(target_risk - mixture(trial));
    w2 = cand;
    if (e < best) {
      best = e;
      w = trial;
    }
  }
  return SimplexWeights(std::move(w));
}

}  // namespace tawt
