#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sigvol/feature_cache.hpp"
#include "sigvol/optimizer.hpp"
#include "sigvol/pricing.hpp"

namespace sigvol {

struct CalibrationConfig {
  std::vector<double> maturities{0.1, 0.6, 1.1, 1.6};
  std::vector<double> strikes{90.0, 95.0, 100.0, 105.0, 110.0};
  double s0 = 100.0;
  double r = 0.0;
  int level = 3;
  /// |ell_w| <= bound_scale / |w|!
  double bound_scale = 5.0;
  /// Central-difference step, relative to max(1, |ell_i|).
  double fd_step = 1e-6;
  /// Extra optimizer runs from the best point with a fresh memory.
  int restarts = 1;
  /// Rescale model samples to mean S0 per maturity before pricing.
  bool martingale_correction = true;
  LbfgsOptions optimizer{};
};

struct ContractResult {
  double maturity = 0.0;
  double strike = 0.0;
  double market_price = 0.0;
  double model_price = 0.0;
  double model_std_error = 0.0;
  double market_iv = 0.0;
  double model_iv = 0.0;  // NaN when the model price cannot be inverted
  double iv_error = 0.0;
  double weight = 0.0;
};

struct CalibrationResult {
  std::vector<double> ell;
  double loss = 0.0;
  int iterations = 0;
  int evaluations = 0;
  OptimizerStatus status = OptimizerStatus::max_iterations;
  bool converged = false;
  std::vector<ContractResult> contracts;
  std::vector<double> loss_history;
  std::size_t excluded_paths = 0;
  std::size_t ridge_paths = 0;
  std::size_t clamped_quotes = 0;
  double seconds = 0.0;

  [[nodiscard]] double max_iv_error() const;
};

/// Recomputes implied vols from prices (clamping prices that breach the
/// no-arbitrage bounds) and returns how many prices were clamped.
std::size_t prepare_quotes(std::vector<OptionQuote>& quotes, double s0, double r);

/// gamma_i = 1 / vega_i, normalized so that sum gamma_i = number of quotes.
[[nodiscard]] std::vector<double> weights_inverse_vega(std::span<const OptionQuote> quotes, double s0, double r);

/// Monte Carlo prices of the signature model from cached features.
///
/// Sums run over fixed path blocks and are reduced in block order, so
/// results do not depend on the number of worker threads.
class SigPricer {
 public:
  /// With martingale_correction the samples of each maturity are rescaled
  /// so that their mean is exactly S0 before the payoffs are taken.
  SigPricer(const FeatureCache& cache, std::span<const OptionQuote> quotes, double s0, double r = 0.0,
            bool martingale_correction = true);

  [[nodiscard]] std::vector<McPrice> prices(std::span<const double> ell) const;
  /// sum gamma_i (C_mkt_i - C_i(ell))^2
  [[nodiscard]] double loss(std::span<const double> ell) const;
  /// Loss plus its central-difference gradient with steps h_i. All 2n
  /// perturbed losses come from one pass over the paths.
  double loss_and_gradient(std::span<const double> ell, std::span<const double> steps, std::span<double> grad) const;

  [[nodiscard]] std::size_t used_paths() const noexcept { return used_paths_; }

 private:
  struct Group {
    std::size_t maturity_slot;
    std::vector<std::size_t> quotes;
  };
  /// Per variant and quote: mean payoff (and, for variant 0, its standard
  /// error). Variant 0 is ell, 1 + 2i is ell + h_i e_i, 2 + 2i is ell - h_i e_i.
  void evaluate(std::span<const double> ell, std::span<const double> steps, std::vector<double>& mean,
                std::vector<double>& std_error) const;

  const FeatureCache& cache_;
  std::vector<OptionQuote> quotes_;
  double s0_;
  double r_;
  bool correction_;
  std::vector<Group> groups_;
  std::size_t used_paths_;
};

[[nodiscard]] double loss(std::span<const double> ell, std::span<const OptionQuote> quotes, const FeatureCache& cache,
                          double s0);

[[nodiscard]] BoxBounds factorial_box(int level, double scale);

/// Inverse-vega weighted least squares over all quotes. Quote prices are
/// authoritative; implied vols and weights are recomputed here.
[[nodiscard]] CalibrationResult calibrate(const CalibrationConfig& config, std::vector<OptionQuote> quotes,
                                          const FeatureCache& cache);

/// The same fit restricted to the quotes of one maturity.
[[nodiscard]] CalibrationResult smile_calibrate(const CalibrationConfig& config, double maturity,
                                                std::span<const OptionQuote> quotes, const FeatureCache& cache);

/// Euclidean norm of each level block of ell.
[[nodiscard]] std::vector<double> level_norms(std::span<const double> ell, int level);

}  // namespace sigvol
