#pragma once

#include <array>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sigvol/process_sim.hpp"

namespace sigvol {

/// Short-maturity smile: sigma0 - rho nu / (4 sigma0) (x - k) + nu^2 / (24 sigma0^3) (x - k)^2
[[nodiscard]] double iv_short_maturity(const HestonParams& p, double sigma0, double x_minus_k);

/// At-the-money term structure to first order in T.
[[nodiscard]] double iv_atm_term(const HestonParams& p, double sigma0, double t);
[[nodiscard]] double iv_atm_slope(const HestonParams& p, double sigma0);

/// Long-maturity at-the-money level: intercept + slope / T.
[[nodiscard]] double iv_long_atm(const HestonParams& p, double sigma0, double t);
[[nodiscard]] double iv_long_intercept(const HestonParams& p, double sigma0);
[[nodiscard]] double iv_long_slope(const HestonParams& p, double sigma0);

/// The three regression inputs of the procedure.
struct SurfaceSlice {
  std::vector<std::pair<double, double>> atm_term_structure;  // (T, IV)
  std::vector<std::pair<double, double>> short_smile;         // (x - k, IV) at one short maturity
  std::vector<std::pair<double, double>> long_atm;            // (1 / T, IV)
};

/// Polynomial degrees of the three least-squares fits.
struct AsvFitOptions {
  int atm_degree = 1;
  int smile_degree = 2;
  int long_degree = 1;
};

struct AsvResult {
  double sigma0 = 0.0;
  HestonParams params;  // x0 = sigma0^2
  // fitted quantities
  double atm_slope = 0.0;
  double rho_nu = 0.0;
  double long_intercept = 0.0;
  double long_slope = 0.0;
  /// root-mean-square residual of each regression
  std::array<double, 3> fit_rms{};
  /// residuals of the three equations at the returned (nu, kappa, theta)
  std::array<double, 3> equation_residuals{};
  int newton_iterations = 0;
  int newton_starts = 0;
};

/// Least-squares fits of the three slices followed by a damped Newton solve
/// of the slope / intercept relations for (nu, kappa, theta).
[[nodiscard]] AsvResult calibrate_asv(const SurfaceSlice& slices, const AsvFitOptions& options = {});

/// One point of an implied-volatility surface.
struct IvPoint {
  double maturity;
  double strike;
  double iv;
};

/// Which surface points feed each regression.
struct SliceSelection {
  double short_max_maturity = 0.15;
  double long_min_maturity = 1.0;
  double atm_max_maturity = std::numeric_limits<double>::infinity();
};

/// ATM points are those with K = S0 e^{rT}; the short smile is taken at the
/// shortest maturity not above short_max_maturity.
[[nodiscard]] SurfaceSlice build_slices(std::span<const IvPoint> surface, double s0, double r,
                                        const SliceSelection& selection = {});

/// Slices evaluated from the expansion formulas themselves.
[[nodiscard]] SurfaceSlice formula_slices(const HestonParams& p, double sigma0, std::span<const double> atm_maturities,
                                          std::span<const double> smile_log_moneyness,
                                          std::span<const double> long_maturities);

/// Least-squares polynomial coefficients c_0 + c_1 x + ... ; CalibrationError
/// when the abscissae cannot determine the degree.
[[nodiscard]] std::vector<double> polyfit(std::span<const std::pair<double, double>> points, int degree,
                                          double* rms = nullptr);

}  // namespace sigvol
