#include "sigvol/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sigvol/errors.hpp"

namespace sigvol {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_pdf(double x) { return std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2; }

namespace {

void check_inputs(double s0, double k, double t) {
  if (!(s0 > 0.0) || !(k > 0.0) || !(t > 0.0)) throw DomainError("S0, K and T must be positive");
}

}  // namespace

double bs_price(double s0, double k, double t, double r, double sigma) {
  check_inputs(s0, k, t);
  if (!(sigma >= 0.0)) throw DomainError("volatility must be non-negative");
  const double df_k = k * std::exp(-r * t);
  if (sigma == 0.0) return std::max(s0 - df_k, 0.0);
  const double sd = sigma * std::sqrt(t);
  const double d1 = (std::log(s0 / df_k) + 0.5 * sd * sd) / sd;
  const double d2 = d1 - sd;
  return s0 * norm_cdf(d1) - df_k * norm_cdf(d2);
}

double bs_vega(double s0, double k, double t, double r, double sigma) {
  check_inputs(s0, k, t);
  if (!(sigma > 0.0)) throw DomainError("volatility must be positive");
  const double sd = sigma * std::sqrt(t);
  const double d1 = (std::log(s0 / k) + r * t + 0.5 * sd * sd) / sd;
  return s0 * norm_pdf(d1) * std::sqrt(t);
}

PriceBounds call_bounds(double s0, double k, double t, double r) {
  return {std::max(s0 - k * std::exp(-r * t), 0.0), s0};
}

double implied_vol(double price, double s0, double k, double t, double r) {
  check_inputs(s0, k, t);
  const auto [lower, upper] = call_bounds(s0, k, t, r);
  if (!(price > lower)) {
    std::ostringstream os;
    os << "call price " << price << " is not above the lower bound " << lower;
    throw InversionError(os.str(), price, lower);
  }
  if (!(price < upper)) {
    std::ostringstream os;
    os << "call price " << price << " is not below the upper bound " << upper;
    throw InversionError(os.str(), price, upper);
  }
  double lo = 1e-6;
  double hi = 5.0;
  if (bs_price(s0, k, t, r, lo) >= price) return lo;
  if (bs_price(s0, k, t, r, hi) <= price) throw InversionError("implied volatility exceeds 5", price, upper);
  while (hi - lo > 1e-4) {
    const double mid = 0.5 * (lo + hi);
    if (bs_price(s0, k, t, r, mid) < price) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  double sigma = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double diff = bs_price(s0, k, t, r, sigma) - price;
    if (diff == 0.0) return sigma;
    const double vega = bs_vega(s0, k, t, r, sigma);
    double next = sigma - diff / vega;
    if (!(vega > 0.0) || !(next > lo - 1e-4 && next < hi + 1e-4)) {
      // Newton left the bracket: fall back to bisection steps.
      if (diff < 0.0) {
        lo = sigma;
      } else {
        hi = sigma;
      }
      next = 0.5 * (lo + hi);
    } else if (diff < 0.0) {
      lo = std::max(lo, sigma);
    } else {
      hi = std::min(hi, sigma);
    }
    if (std::abs(next - sigma) <= 1e-14 * sigma || hi - lo <= 1e-15 * hi) return next;
    sigma = next;
  }
  return sigma;
}

bool clamp_to_bounds(double& price, double s0, double k, double t, double r) {
  const auto [lower, upper] = call_bounds(s0, k, t, r);
  if (price <= lower) {
    price = lower + 1e-10;
    return true;
  }
  if (price >= upper) {
    price = upper - 1e-10;
    return true;
  }
  return false;
}

namespace {

McPrice sample_mean(std::span<const double> discounted_terminal, double strike, bool put) {
  // strike is already discounted
  if (discounted_terminal.empty()) throw DomainError("need at least one sample");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double s : discounted_terminal) {
    const double payoff = put ? std::max(strike - s, 0.0) : std::max(s - strike, 0.0);
    sum += payoff;
    sum_sq += payoff * payoff;
  }
  const auto n = static_cast<double>(discounted_terminal.size());
  McPrice out;
  out.price = sum / n;
  if (discounted_terminal.size() > 1) {
    const double var = std::max(sum_sq / n - out.price * out.price, 0.0) * n / (n - 1.0);
    out.std_error = std::sqrt(var / n);
  }
  return out;
}

}  // namespace

McPrice mc_call_price(std::span<const double> discounted_terminal, double k, double r, double t) {
  return sample_mean(discounted_terminal, std::exp(-r * t) * k, false);
}

double martingale_factor(std::span<const double> discounted_terminal, double s0) {
  if (discounted_terminal.empty()) throw DomainError("need at least one sample");
  double sum = 0.0;
  for (double s : discounted_terminal) sum += s;
  return s0 * static_cast<double>(discounted_terminal.size()) / sum;
}

McPrice mc_call_price_corrected(std::span<const double> discounted_terminal, double s0, double k, double r,
                                double t) {
  // (c S - K)+ = c (S - K / c)+
  const double c = martingale_factor(discounted_terminal, s0);
  McPrice p = sample_mean(discounted_terminal, std::exp(-r * t) * k / c, false);
  p.price *= c;
  p.std_error *= c;
  return p;
}

}  // namespace sigvol
