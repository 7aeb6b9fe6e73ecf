#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace sigvol {

/// A European call quote. price is the discounted call price.
struct OptionQuote {
  double strike = 100.0;
  double maturity = 1.0;
  double price = 0.0;
  double implied_vol = 0.0;  // 0 when not yet inverted
  double weight = 1.0;
};

[[nodiscard]] double norm_cdf(double x);
[[nodiscard]] double norm_pdf(double x);

[[nodiscard]] double bs_price(double s0, double k, double t, double r, double sigma);
[[nodiscard]] double bs_vega(double s0, double k, double t, double r, double sigma);

/// Lower and upper no-arbitrage bounds of a discounted call price.
struct PriceBounds {
  double lower;
  double upper;
};
[[nodiscard]] PriceBounds call_bounds(double s0, double k, double t, double r);

/// Raised when a price is not strictly inside the no-arbitrage bounds.
class InversionError : public std::domain_error {
 public:
  InversionError(const std::string& what, double price, double bound)
      : std::domain_error(what), price_(price), bound_(bound) {}
  [[nodiscard]] double price() const noexcept { return price_; }
  /// The violated bound.
  [[nodiscard]] double bound() const noexcept { return bound_; }

 private:
  double price_;
  double bound_;
};

/// Bisection on [1e-6, 5] to 1e-4, then Newton with vega until the price
/// matches to 1e-10.
[[nodiscard]] double implied_vol(double price, double s0, double k, double t, double r);

/// Moves a price that breaches the no-arbitrage bounds to bound + 1e-10
/// (or bound - 1e-10 above). Returns true when the price was changed.
bool clamp_to_bounds(double& price, double s0, double k, double t, double r);

struct McPrice {
  double price = 0.0;
  double std_error = 0.0;
};

/// Mean and standard error of (S_T - e^{-rT} K)+ over discounted terminal prices.
[[nodiscard]] McPrice mc_call_price(std::span<const double> discounted_terminal, double k, double r, double t);

/// S0 / mean(samples): the factor that makes the sample mean of the
/// discounted terminal prices equal S0.
[[nodiscard]] double martingale_factor(std::span<const double> discounted_terminal, double s0);

/// mc_call_price on samples rescaled by martingale_factor. Put-call parity
/// then holds exactly on the sample, which removes most of the noise of
/// in-the-money calls.
[[nodiscard]] McPrice mc_call_price_corrected(std::span<const double> discounted_terminal, double s0, double k,
                                              double r, double t);

}  // namespace sigvol
