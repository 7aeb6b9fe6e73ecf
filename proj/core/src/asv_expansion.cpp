#include "sigvol/asv_expansion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "sigvol/errors.hpp"

namespace sigvol {

double iv_short_maturity(const HestonParams& p, double sigma0, double x_minus_k) {
  if (!(sigma0 > 0.0)) throw DomainError("sigma0 must be positive");
  const double rn = p.rho * p.nu;
  return sigma0 - rn / (4.0 * sigma0) * x_minus_k +
         p.nu * p.nu / (24.0 * sigma0 * sigma0 * sigma0) * x_minus_k * x_minus_k;
}

double iv_atm_slope(const HestonParams& p, double sigma0) {
  if (!(sigma0 > 0.0)) throw DomainError("sigma0 must be positive");
  const double s2 = sigma0 * sigma0;
  return (3.0 * s2 * p.rho * p.nu - 6.0 * p.kappa * (s2 - p.theta) - p.nu * p.nu) / (24.0 * sigma0);
}

double iv_atm_term(const HestonParams& p, double sigma0, double t) { return sigma0 + t * iv_atm_slope(p, sigma0); }

double iv_long_intercept(const HestonParams& p, double /*sigma0*/) {
  if (!(p.kappa > 0.0) || !(p.theta > 0.0)) throw DomainError("kappa and theta must be positive");
  const double k = p.kappa;
  return std::sqrt(p.theta) * (1.0 + p.nu * p.rho / (4.0 * k) - p.nu * p.nu / (32.0 * k * k));
}

double iv_long_slope(const HestonParams& p, double sigma0) {
  if (!(p.kappa > 0.0) || !(p.theta > 0.0)) throw DomainError("kappa and theta must be positive");
  const double k = p.kappa;
  const double th = p.theta;
  const double sq = std::sqrt(th);
  const double s2 = sigma0 * sigma0;
  return (s2 - th) / (2.0 * k * sq) + p.nu * p.rho * (s2 - 2.0 * th) / (4.0 * k * k * sq) -
         p.nu * p.nu * (s2 - 2.5 * th + 4.0 * k) / (32.0 * sq * k * k * k);
}

double iv_long_atm(const HestonParams& p, double sigma0, double t) {
  if (!(t > 0.0)) throw DomainError("maturity must be positive");
  return iv_long_intercept(p, sigma0) + iv_long_slope(p, sigma0) / t;
}

std::vector<double> polyfit(std::span<const std::pair<double, double>> points, int degree, double* rms) {
  const auto n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index cols = degree + 1;
  if (degree < 0 || n < std::max<Eigen::Index>(cols, 2)) {
    throw CalibrationError("not enough points for a degree-" + std::to_string(degree) + " fit");
  }
  Eigen::MatrixXd a(n, cols);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = points[static_cast<std::size_t>(i)].first;
    double pw = 1.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      a(i, j) = pw;
      pw *= x;
    }
    b(i) = points[static_cast<std::size_t>(i)].second;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-12);
  if (qr.rank() < cols) throw CalibrationError("regression abscissae are degenerate");
  const Eigen::VectorXd c = qr.solve(b);
  if (rms != nullptr) *rms = std::sqrt((a * c - b).squaredNorm() / static_cast<double>(n));
  return {c.data(), c.data() + c.size()};
}

namespace {

struct Targets {
  double sigma0;
  double rho_nu;
  double atm_slope;
  double long_intercept;
  double long_slope;
};

Eigen::Vector3d equations(const Eigen::Vector3d& x, const Targets& tg) {
  HestonParams p;
  p.nu = x(0);
  p.kappa = x(1);
  p.theta = x(2);
  // rho enters only through the product rho nu, which is fixed.
  p.rho = tg.rho_nu / p.nu;
  return {iv_atm_slope(p, tg.sigma0) - tg.atm_slope, iv_long_intercept(p, tg.sigma0) - tg.long_intercept,
          iv_long_slope(p, tg.sigma0) - tg.long_slope};
}

bool admissible(const Eigen::Vector3d& x) { return x(0) != 0.0 && x(1) > 0.0 && x(2) > 0.0 && x.allFinite(); }

struct NewtonOutcome {
  Eigen::Vector3d x;
  Eigen::Vector3d f;
  int iterations = 0;
  bool converged = false;
};

NewtonOutcome damped_newton(Eigen::Vector3d x, const Targets& tg) {
  NewtonOutcome out;
  Eigen::Vector3d f = equations(x, tg);
  for (int it = 0; it < 200; ++it) {
    out.iterations = it;
    if (f.lpNorm<Eigen::Infinity>() < 1e-15) {
      out.converged = true;
      break;
    }
    Eigen::Matrix3d jac;
    for (int j = 0; j < 3; ++j) {
      const double h = 1e-7 * std::max(std::abs(x(j)), 1e-3);
      Eigen::Vector3d xp = x;
      Eigen::Vector3d xm = x;
      xp(j) += h;
      xm(j) -= h;
      if (!admissible(xm)) {
        xm = x;
        jac.col(j) = (equations(xp, tg) - f) / h;
      } else {
        jac.col(j) = (equations(xp, tg) - equations(xm, tg)) / (2.0 * h);
      }
    }
    const Eigen::Vector3d step = jac.fullPivLu().solve(-f);
    if (!step.allFinite()) break;
    double t = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      const Eigen::Vector3d trial = x + t * step;
      if (!admissible(trial)) continue;
      const Eigen::Vector3d ft = equations(trial, tg);
      if (ft.allFinite() && ft.norm() < f.norm()) {
        x = trial;
        f = ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.converged = f.lpNorm<Eigen::Infinity>() < 1e-12;
      break;
    }
    if ((t * step).cwiseAbs().maxCoeff() <= 1e-15 * (1.0 + x.cwiseAbs().maxCoeff())) {
      out.converged = f.lpNorm<Eigen::Infinity>() < 1e-12;
      break;
    }
  }
  out.x = x;
  out.f = f;
  if (f.lpNorm<Eigen::Infinity>() < 1e-15) out.converged = true;
  return out;
}

}  // namespace

AsvResult calibrate_asv(const SurfaceSlice& slices, const AsvFitOptions& options) {
  AsvResult res;
  const auto atm = polyfit(slices.atm_term_structure, options.atm_degree, &res.fit_rms[0]);
  const auto smile = polyfit(slices.short_smile, options.smile_degree, &res.fit_rms[1]);
  const auto lng = polyfit(slices.long_atm, options.long_degree, &res.fit_rms[2]);
  res.sigma0 = atm[0];
  if (!(res.sigma0 > 0.0)) throw CalibrationError("fitted sigma0 is not positive");
  res.atm_slope = atm[1];
  res.rho_nu = -4.0 * res.sigma0 * smile[1];
  res.long_intercept = lng[0];
  res.long_slope = lng[1];
  const Targets tg{res.sigma0, res.rho_nu, res.atm_slope, res.long_intercept, res.long_slope};

  // The three relations can have several exact roots. The smile curvature
  // nu^2 / (24 sigma0^3), when fitted, picks between them.
  const bool has_curvature = options.smile_degree >= 2 && smile[2] > 0.0;
  const double nu2_curvature = has_curvature ? 24.0 * std::pow(res.sigma0, 3) * smile[2] : 0.0;
  std::vector<Eigen::Vector3d> starts;
  starts.emplace_back(std::clamp(std::abs(res.rho_nu), 0.1, 0.5), 1.0, res.sigma0 * res.sigma0);
  const double theta_guess = std::max(res.long_intercept * res.long_intercept, 1e-4);
  for (double kappa : {1.0, 3.0, 0.3, 10.0}) {
    for (double theta : {theta_guess, res.sigma0 * res.sigma0}) {
      for (double nu : {0.3, 1.0, 0.1}) starts.emplace_back(std::max(nu, std::abs(res.rho_nu) * 1.01), kappa, theta);
    }
  }
  if (has_curvature) {
    // the root basins are narrow in kappa
    const double nu = std::max(std::sqrt(nu2_curvature), std::abs(res.rho_nu) * 1.01);
    for (double kappa = 0.2; kappa < 20.0; kappa *= 1.1) {
      for (double theta : {theta_guess, res.sigma0 * res.sigma0}) starts.emplace_back(nu, kappa, theta);
    }
  }

  NewtonOutcome best;
  best.x = Eigen::Vector3d::Zero();
  best.f = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  bool have_root = false;
  double best_gap = std::numeric_limits<double>::infinity();
  for (const auto& x0 : starts) {
    ++res.newton_starts;
    const NewtonOutcome o = damped_newton(x0, tg);
    res.newton_iterations += o.iterations;
    const double rho = res.rho_nu / std::abs(o.x(0));
    const bool admissible = o.converged && std::abs(rho) <= 1.0 && o.x(1) > 0.0 && o.x(2) > 0.0;
    if (admissible) {
      const double gap = std::abs(o.x(0) * o.x(0) - nu2_curvature);
      if (!have_root || (has_curvature && gap < best_gap)) {
        best = o;
        best_gap = gap;
      }
      have_root = true;
      if (!has_curvature) break;
      continue;
    }
    if (!have_root && o.f.norm() < best.f.norm()) best = o;
  }
  res.equation_residuals = {best.f(0), best.f(1), best.f(2)};
  if (!(best.f.lpNorm<Eigen::Infinity>() < 1e-12)) {
    std::ostringstream os;
    os << "ASV root solve did not converge; residuals " << best.f(0) << ", " << best.f(1) << ", " << best.f(2)
       << " (fitted sigma0 " << res.sigma0 << ", ATM slope " << res.atm_slope << ", rho nu " << res.rho_nu
       << ", long intercept " << res.long_intercept << ", long slope " << res.long_slope << ")";
    throw CalibrationError(os.str());
  }
  res.params.nu = std::abs(best.x(0));
  res.params.kappa = best.x(1);
  res.params.theta = best.x(2);
  res.params.rho = res.rho_nu / res.params.nu;
  res.params.x0 = res.sigma0 * res.sigma0;
  return res;
}

SurfaceSlice build_slices(std::span<const IvPoint> surface, double s0, double r, const SliceSelection& sel) {
  SurfaceSlice out;
  auto is_atm = [&](const IvPoint& q) {
    return std::abs(std::log(s0 / q.strike) + r * q.maturity) < 1e-9;
  };
  double shortest = std::numeric_limits<double>::infinity();
  for (const auto& q : surface) {
    if (q.maturity <= sel.short_max_maturity) shortest = std::min(shortest, q.maturity);
  }
  for (const auto& q : surface) {
    if (is_atm(q) && q.maturity <= sel.atm_max_maturity) out.atm_term_structure.emplace_back(q.maturity, q.iv);
    if (is_atm(q) && q.maturity >= sel.long_min_maturity) out.long_atm.emplace_back(1.0 / q.maturity, q.iv);
    if (q.maturity == shortest) out.short_smile.emplace_back(std::log(s0 / q.strike) + r * q.maturity, q.iv);
  }
  auto by_x = [](const auto& a, const auto& b) { return a.first < b.first; };
  std::sort(out.atm_term_structure.begin(), out.atm_term_structure.end(), by_x);
  std::sort(out.short_smile.begin(), out.short_smile.end(), by_x);
  std::sort(out.long_atm.begin(), out.long_atm.end(), by_x);
  if (out.atm_term_structure.size() < 2) throw CalibrationError("surface has fewer than two ATM maturities");
  if (out.short_smile.size() < 2) throw CalibrationError("surface has no short-maturity smile");
  if (out.long_atm.size() < 2) throw CalibrationError("surface has fewer than two long ATM maturities");
  return out;
}

SurfaceSlice formula_slices(const HestonParams& p, double sigma0, std::span<const double> atm_maturities,
                            std::span<const double> smile_log_moneyness, std::span<const double> long_maturities) {
  SurfaceSlice out;
  for (double t : atm_maturities) out.atm_term_structure.emplace_back(t, iv_atm_term(p, sigma0, t));
  for (double x : smile_log_moneyness) out.short_smile.emplace_back(x, iv_short_maturity(p, sigma0, x));
  for (double t : long_maturities) out.long_atm.emplace_back(1.0 / t, iv_long_atm(p, sigma0, t));
  return out;
}

}  // namespace sigvol
