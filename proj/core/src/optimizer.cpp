#include "sigvol/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "sigvol/errors.hpp"

namespace sigvol {

std::string to_string(OptimizerStatus s) {
  switch (s) {
    case OptimizerStatus::converged_ftol: return "converged_ftol";
    case OptimizerStatus::converged_gtol: return "converged_gtol";
    case OptimizerStatus::max_iterations: return "max_iterations";
    case OptimizerStatus::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void project(std::vector<double>& x, const BoxBounds& b) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], b.lower[i], b.upper[i]);
}

/// Max-norm of P(x - g) - x.
double projected_gradient_norm(const std::vector<double>& x, const std::vector<double>& g, const BoxBounds& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double moved = std::clamp(x[i] - g[i], b.lower[i], b.upper[i]);
    m = std::max(m, std::abs(moved - x[i]));
  }
  return m;
}

/// Variables pinned at a bound with the gradient pushing outwards.
std::vector<bool> active_set(const std::vector<double>& x, const std::vector<double>& g, const BoxBounds& b) {
  std::vector<bool> active(x.size(), false);
  for (std::size_t i = 0; i < x.size(); ++i) {
    active[i] = (x[i] <= b.lower[i] && g[i] > 0.0) || (x[i] >= b.upper[i] && g[i] < 0.0);
  }
  return active;
}

}  // namespace

OptimizerResult minimize_box(const Objective& f, std::vector<double> x, const BoxBounds& bounds,
                             const LbfgsOptions& opt) {
  const std::size_t n = x.size();
  if (bounds.lower.size() != n || bounds.upper.size() != n) throw DomainError("bounds do not match x");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(bounds.lower[i] <= bounds.upper[i])) throw DomainError("empty box");
  }
  project(x, bounds);

  OptimizerResult res;
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  double fx = f(x, g);
  ++res.evaluations;
  res.history.push_back(fx);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
    if (projected_gradient_norm(x, g, bounds) <= opt.gtol) {
      res.status = OptimizerStatus::converged_gtol;
      break;
    }
    const auto active = active_set(x, g, bounds);

    // two-loop recursion on the free variables
    std::vector<double> q = g;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i]) q[i] = 0.0;
    }
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * dot(s_hist[k], q);
      for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[k] * y_hist[k][i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
    for (auto& qi : q) qi *= gamma;
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], q);
      for (std::size_t i = 0; i < n; ++i) q[i] += s_hist[k][i] * (alpha[k] - beta);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = active[i] ? 0.0 : -q[i];

    if (dot(d, g) >= 0.0) {
      // not a descent direction: restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = active[i] ? 0.0 : -g[i];
    }
    if (s_hist.empty()) {
      // first step: keep the trial move modest relative to the box
      double dn = 0.0;
      for (double di : d) dn = std::max(dn, std::abs(di));
      if (dn > 0.0) {
        const double scale = std::min(1.0, 0.1 / dn);
        for (auto& di : d) di *= scale;
      }
    }

    // projected backtracking (Armijo on the actual move), extended by
    // doubling while a full step keeps improving
    double t = 1.0;
    bool accepted = false;
    double f_new = fx;
    for (int ls = 0; ls < opt.max_line_search; ++ls, t *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + t * d[i];
      project(x_new, bounds);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (x_new[i] - x[i]);
      if (decrease >= 0.0) continue;
      f_new = f(x_new, g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * decrease) {
        accepted = true;
        break;
      }
    }
    if (accepted && t == 1.0) {
      std::vector<double> x_try(n), g_try(n);
      for (int grow = 0; grow < 10; ++grow) {
        double slope = 0.0;
        for (std::size_t i = 0; i < n; ++i) slope += g_new[i] * d[i];
        // stop once the curvature condition holds
        double slope0 = 0.0;
        for (std::size_t i = 0; i < n; ++i) slope0 += g[i] * d[i];
        if (slope >= 0.9 * slope0) break;
        t *= 2.0;
        for (std::size_t i = 0; i < n; ++i) x_try[i] = x[i] + t * d[i];
        project(x_try, bounds);
        if (x_try == x_new) break;
        const double f_try = f(x_try, g_try);
        ++res.evaluations;
        if (!std::isfinite(f_try) || !(f_try < f_new)) break;
        x_new.swap(x_try);
        g_new.swap(g_try);
        f_new = f_try;
      }
    }
    if (!accepted) {
      if (!s_hist.empty()) {
        // retry once from steepest descent with a fresh memory
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        --res.iterations;
        continue;
      }
      res.status = OptimizerStatus::line_search_failed;
      break;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - x[i];
      y[i] = g_new[i] - g[i];
    }
    const double sy = dot(s, y);
    if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double rel = (fx - f_new) / std::max({std::abs(fx), std::abs(f_new), 1.0});
    x.swap(x_new);
    g.swap(g_new);
    fx = f_new;
    res.history.push_back(fx);
    if (rel <= opt.ftol) {
      ++res.iterations;
      res.status = OptimizerStatus::converged_ftol;
      break;
    }
  }
  res.x = std::move(x);
  res.f = fx;
  return res;
}

}  // namespace sigvol
