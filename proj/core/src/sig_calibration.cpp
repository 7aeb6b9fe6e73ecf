#include "sigvol/sig_calibration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "sigvol/errors.hpp"
#include "sigvol/parallel.hpp"
#include "sigvol/sig_model.hpp"
#include "sigvol/tensor_algebra.hpp"

namespace sigvol {

double CalibrationResult::max_iv_error() const {
  double m = 0.0;
  for (const auto& c : contracts) {
    if (!std::isfinite(c.iv_error)) return std::numeric_limits<double>::infinity();
    m = std::max(m, c.iv_error);
  }
  return m;
}

std::size_t prepare_quotes(std::vector<OptionQuote>& quotes, double s0, double r) {
  std::size_t clamped = 0;
  for (auto& q : quotes) {
    if (clamp_to_bounds(q.price, s0, q.strike, q.maturity, r)) ++clamped;
    q.implied_vol = implied_vol(q.price, s0, q.strike, q.maturity, r);
  }
  return clamped;
}

std::vector<double> weights_inverse_vega(std::span<const OptionQuote> quotes, double s0, double r) {
  std::vector<double> w;
  w.reserve(quotes.size());
  double total = 0.0;
  for (const auto& q : quotes) {
    if (!(q.implied_vol > 0.0)) throw DomainError("quote has no implied volatility");
    const double vega = std::max(bs_vega(s0, q.strike, q.maturity, r, q.implied_vol), 1e-8);
    w.push_back(1.0 / vega);
    total += w.back();
  }
  for (auto& x : w) x *= static_cast<double>(quotes.size()) / total;
  return w;
}

SigPricer::SigPricer(const FeatureCache& cache, std::span<const OptionQuote> quotes, double s0, double r,
                     bool martingale_correction)
    : cache_(cache), quotes_(quotes.begin(), quotes.end()), s0_(s0), r_(r), correction_(martingale_correction) {
  for (std::size_t i = 0; i < quotes_.size(); ++i) {
    const std::size_t slot = cache.maturity_index(quotes_[i].maturity);
    auto it = std::find_if(groups_.begin(), groups_.end(), [&](const Group& g) { return g.maturity_slot == slot; });
    if (it == groups_.end()) {
      groups_.push_back(Group{slot, {}});
      it = groups_.end() - 1;
    }
    it->quotes.push_back(i);
  }
  used_paths_ = cache.n_paths() - cache.excluded_count();
  if (used_paths_ == 0) throw NumericalError("every path of the feature cache is excluded");
}

void SigPricer::evaluate(std::span<const double> ell, std::span<const double> steps, std::vector<double>& mean,
                         std::vector<double>& std_error) const {
  const std::size_t n = cache_.basis_size();
  if (ell.size() != n) throw DomainError("ell length does not match the feature cache");
  if (!steps.empty() && steps.size() != n) throw DomainError("step count does not match ell");
  const std::size_t variants = steps.empty() ? 1 : 1 + 2 * n;
  const std::size_t nq = quotes_.size();
  const std::size_t n_paths = cache_.n_paths();
  const std::size_t blocks = block_count(n_paths);
  const auto m = static_cast<double>(used_paths_);

  mean.assign(variants * nq, 0.0);
  std_error.assign(nq, 0.0);
  // terminal prices of every path and variant for the current maturity
  std::vector<double> st(n_paths * variants);
  std::vector<double> block_sums(blocks * variants);
  std::vector<double> payoff_sums(blocks * (variants + 1) * nq);

  for (const auto& g : groups_) {
    // pass 1: terminal prices and their block sums
    parallel_for(blocks, [&](std::size_t b) {
      std::vector<double> u(n), cross(n), col_sq(n);
      double* bsum = block_sums.data() + b * variants;
      std::fill(bsum, bsum + variants, 0.0);
      const std::size_t lo = b * kPathsPerBlock;
      const std::size_t hi = std::min(lo + kPathsPerBlock, n_paths);
      for (std::size_t p = lo; p < hi; ++p) {
        double* out = st.data() + p * variants;
        if (cache_.excluded(p)) {
          std::fill(out, out + variants, 0.0);
          continue;
        }
        const auto pu = cache_.packed_u(g.maturity_slot, p);
        const auto v = cache_.v(g.maturity_slot, p);
        std::size_t k = 0;
        double quad = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          double row = 0.0;
          for (std::size_t j = i; j < n; ++j) row += pu[k++] * ell[j];
          u[i] = row;
          quad += row * row;
        }
        double drift = 0.0;
        for (std::size_t i = 0; i < n; ++i) drift += ell[i] * v[i];
        const double base = drift - quad;
        out[0] = s0_ * std::exp(base);
        if (variants > 1) {
          // ||U (ell + h e_i)||^2 = ||u||^2 + 2 h u . U e_i + h^2 ||U e_i||^2
          std::fill(cross.begin(), cross.end(), 0.0);
          std::fill(col_sq.begin(), col_sq.end(), 0.0);
          k = 0;
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i; j < n; ++j) {
              const double uij = pu[k++];
              cross[j] += u[i] * uij;
              col_sq[j] += uij * uij;
            }
          }
          for (std::size_t i = 0; i < n; ++i) {
            const double h = steps[i];
            const double sq = h * h * col_sq[i];
            out[1 + 2 * i] = s0_ * std::exp(base + h * v[i] - 2.0 * h * cross[i] - sq);
            out[2 + 2 * i] = s0_ * std::exp(base - h * v[i] + 2.0 * h * cross[i] - sq);
          }
        }
        for (std::size_t a = 0; a < variants; ++a) bsum[a] += out[a];
      }
    });
    std::vector<double> factor(variants, 1.0);
    if (correction_) {
      for (std::size_t a = 0; a < variants; ++a) {
        double total = 0.0;
        for (std::size_t b = 0; b < blocks; ++b) total += block_sums[b * variants + a];
        factor[a] = s0_ * m / total;
      }
    }
    // pass 2: payoffs on the corrected samples
    std::fill(payoff_sums.begin(), payoff_sums.end(), 0.0);
    parallel_for(blocks, [&](std::size_t b) {
      double* psum = payoff_sums.data() + b * (variants + 1) * nq;
      const std::size_t lo = b * kPathsPerBlock;
      const std::size_t hi = std::min(lo + kPathsPerBlock, n_paths);
      for (std::size_t qi : g.quotes) {
        const double strike = std::exp(-r_ * quotes_[qi].maturity) * quotes_[qi].strike;
        for (std::size_t p = lo; p < hi; ++p) {
          if (cache_.excluded(p)) continue;
          const double* s = st.data() + p * variants;
          const double pay0 = std::max(factor[0] * s[0] - strike, 0.0);
          psum[qi] += pay0;
          psum[variants * nq + qi] += pay0 * pay0;
          for (std::size_t a = 1; a < variants; ++a) psum[a * nq + qi] += std::max(factor[a] * s[a] - strike, 0.0);
        }
      }
    });
    for (std::size_t qi : g.quotes) {
      double sq = 0.0;
      for (std::size_t b = 0; b < blocks; ++b) {
        const double* psum = payoff_sums.data() + b * (variants + 1) * nq;
        for (std::size_t a = 0; a < variants; ++a) mean[a * nq + qi] += psum[a * nq + qi];
        sq += psum[variants * nq + qi];
      }
      for (std::size_t a = 0; a < variants; ++a) mean[a * nq + qi] /= m;
      if (used_paths_ > 1) {
        const double mu = mean[qi];
        const double var = std::max(sq / m - mu * mu, 0.0) * m / (m - 1.0);
        std_error[qi] = std::sqrt(var / m);
      }
    }
  }
}

std::vector<McPrice> SigPricer::prices(std::span<const double> ell) const {
  std::vector<double> mean, se;
  evaluate(ell, {}, mean, se);
  std::vector<McPrice> out(quotes_.size());
  for (std::size_t qi = 0; qi < quotes_.size(); ++qi) out[qi] = McPrice{mean[qi], se[qi]};
  return out;
}

double SigPricer::loss(std::span<const double> ell) const {
  const auto p = prices(ell);
  double total = 0.0;
  for (std::size_t i = 0; i < quotes_.size(); ++i) {
    const double diff = quotes_[i].price - p[i].price;
    total += quotes_[i].weight * diff * diff;
  }
  return total;
}

double SigPricer::loss_and_gradient(std::span<const double> ell, std::span<const double> steps,
                                    std::span<double> grad) const {
  const std::size_t n = cache_.basis_size();
  if (grad.size() != n || steps.size() != n) throw DomainError("gradient dimensions do not match");
  std::vector<double> mean, se;
  evaluate(ell, steps, mean, se);
  const std::size_t nq = quotes_.size();
  auto variant_loss = [&](std::size_t a) {
    double total = 0.0;
    for (std::size_t qi = 0; qi < nq; ++qi) {
      const double diff = quotes_[qi].price - mean[a * nq + qi];
      total += quotes_[qi].weight * diff * diff;
    }
    return total;
  };
  for (std::size_t i = 0; i < n; ++i) grad[i] = (variant_loss(1 + 2 * i) - variant_loss(2 + 2 * i)) / (2.0 * steps[i]);
  return variant_loss(0);
}

double loss(std::span<const double> ell, std::span<const OptionQuote> quotes, const FeatureCache& cache, double s0) {
  return SigPricer(cache, quotes, s0).loss(ell);
}

BoxBounds factorial_box(int level, double scale) {
  const Labeling lab(2, level);
  BoxBounds box;
  for (std::size_t i = 0; i < lab.dimension(); ++i) {
    double fact = 1.0;
    for (std::size_t k = 2; k <= lab.unlabel(i).size(); ++k) fact *= static_cast<double>(k);
    box.lower.push_back(-scale / fact);
    box.upper.push_back(scale / fact);
  }
  return box;
}

std::vector<double> level_norms(std::span<const double> ell, int level) {
  std::vector<double> out;
  for (int k = 0; k <= level; ++k) {
    const std::size_t lo = level_offset(2, k);
    const std::size_t hi = level_offset(2, k + 1);
    double s = 0.0;
    for (std::size_t i = lo; i < hi && i < ell.size(); ++i) s += ell[i] * ell[i];
    out.push_back(std::sqrt(s));
  }
  return out;
}

namespace {

std::vector<double> coordinate_scales(const FeatureCache& cache, const BoxBounds& box) {
  const std::size_t n = cache.basis_size();
  std::size_t last = 0;
  for (std::size_t m = 1; m < cache.n_maturities(); ++m) {
    if (cache.spec().maturities[m] > cache.spec().maturities[last]) last = m;
  }
  // -Q_ii = 1/2 int_0^T S_w^2 dt = sum_j U_ji^2
  std::vector<double> mean_sq(n, 0.0);
  std::size_t used = 0;
  for (std::size_t p = 0; p < cache.n_paths(); ++p) {
    if (cache.excluded(p)) continue;
    ++used;
    const auto u = cache.packed_u(last, p);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j, ++k) mean_sq[j] += u[k] * u[k];
    }
  }
  const double horizon = cache.spec().maturities[last];
  std::vector<double> scale(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rms = std::sqrt(2.0 * mean_sq[i] / (static_cast<double>(std::max<std::size_t>(used, 1)) * horizon));
    const double width = box.upper[i];
    scale[i] = rms > 0.0 ? std::min(1.0 / rms, width) : width;
  }
  return scale;
}

CalibrationResult run_calibration(const CalibrationConfig& config, std::vector<OptionQuote> quotes,
                                  const FeatureCache& cache) {
  const auto started = std::chrono::steady_clock::now();
  if (quotes.empty()) throw DomainError("no quotes to calibrate");
  if (cache.spec().level != config.level) throw DomainError("feature cache level differs from the configuration");
  CalibrationResult res;
  res.clamped_quotes = prepare_quotes(quotes, config.s0, config.r);
  const auto w = weights_inverse_vega(quotes, config.s0, config.r);
  for (std::size_t i = 0; i < quotes.size(); ++i) quotes[i].weight = w[i];

  const SigPricer pricer(cache, quotes, config.s0, config.r, config.martingale_correction);
  const std::size_t n = cache.basis_size();

  std::vector<double> x0(n, 0.0);
  double atm_sum = 0.0;
  int atm_count = 0;
  for (const auto& q : quotes) {
    if (std::abs(std::log(config.s0 / q.strike) + config.r * q.maturity) < 1e-9) {
      atm_sum += q.implied_vol;
      ++atm_count;
    }
  }
  if (atm_count == 0) {
    for (const auto& q : quotes) atm_sum += q.implied_vol;
    atm_count = static_cast<int>(quotes.size());
  }
  x0[0] = atm_sum / atm_count;

  const BoxBounds box = factorial_box(config.level, config.bound_scale);
  // The optimizer works on y = ell / scale, where scale is the inverse RMS
  // size of each signature coordinate (capped by the box), which evens out
  // the curvature across levels.
  const std::vector<double> scale = coordinate_scales(cache, box);
  BoxBounds ybox = box;
  for (std::size_t i = 0; i < n; ++i) {
    ybox.lower[i] = box.lower[i] / scale[i];
    ybox.upper[i] = box.upper[i] / scale[i];
  }
  std::vector<double> ell(n), steps(n), g(n);
  const Objective objective = [&](const std::vector<double>& y, std::vector<double>& gy) {
    for (std::size_t i = 0; i < n; ++i) {
      ell[i] = y[i] * scale[i];
      steps[i] = config.fd_step * std::max(1.0, std::abs(ell[i]));
    }
    const double f = pricer.loss_and_gradient(ell, steps, g);
    for (std::size_t i = 0; i < n; ++i) gy[i] = g[i] * scale[i];
    return f;
  };
  std::vector<double> y0(n);
  for (std::size_t i = 0; i < n; ++i) y0[i] = x0[i] / scale[i];

  OptimizerResult opt = minimize_box(objective, y0, ybox, config.optimizer);
  res.loss_history = opt.history;
  res.iterations = opt.iterations;
  res.evaluations = opt.evaluations;
  for (int k = 0; k < config.restarts; ++k) {
    OptimizerResult again = minimize_box(objective, opt.x, ybox, config.optimizer);
    res.iterations += again.iterations;
    res.evaluations += again.evaluations;
    res.loss_history.insert(res.loss_history.end(), again.history.begin() + 1, again.history.end());
    const bool improved = again.f < opt.f;
    if (improved || again.converged()) opt = std::move(again);
    if (!improved) break;
  }
  for (auto& xi : opt.x) xi *= scale[static_cast<std::size_t>(&xi - opt.x.data())];
  res.ell = opt.x;
  res.status = opt.status;
  res.converged = opt.converged();

  const auto model = pricer.prices(res.ell);
  res.loss = 0.0;
  for (std::size_t i = 0; i < quotes.size(); ++i) {
    ContractResult c;
    c.maturity = quotes[i].maturity;
    c.strike = quotes[i].strike;
    c.market_price = quotes[i].price;
    c.model_price = model[i].price;
    c.model_std_error = model[i].std_error;
    c.market_iv = quotes[i].implied_vol;
    c.weight = quotes[i].weight;
    try {
      c.model_iv = implied_vol(c.model_price, config.s0, c.strike, c.maturity, config.r);
      c.iv_error = std::abs(c.model_iv - c.market_iv);
    } catch (const InversionError&) {
      c.model_iv = std::numeric_limits<double>::quiet_NaN();
      c.iv_error = std::numeric_limits<double>::infinity();
    }
    const double diff = c.market_price - c.model_price;
    res.loss += c.weight * diff * diff;
    res.contracts.push_back(c);
  }
  res.excluded_paths = cache.excluded_count();
  res.ridge_paths = cache.ridge_count();
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

}  // namespace

CalibrationResult calibrate(const CalibrationConfig& config, std::vector<OptionQuote> quotes,
                            const FeatureCache& cache) {
  return run_calibration(config, std::move(quotes), cache);
}

CalibrationResult smile_calibrate(const CalibrationConfig& config, double maturity,
                                  std::span<const OptionQuote> quotes, const FeatureCache& cache) {
  std::vector<OptionQuote> subset;
  for (const auto& q : quotes) {
    if (std::abs(q.maturity - maturity) < 1e-9) subset.push_back(q);
  }
  if (subset.empty()) throw DomainError("no quotes at the requested maturity");
  return run_calibration(config, std::move(subset), cache);
}

}  // namespace sigvol
