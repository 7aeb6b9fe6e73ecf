#include "sigvol/process_sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "sigvol/errors.hpp"
#include "sigvol/parallel.hpp"

namespace sigvol {

void HestonParams::validate() const {
  if (!(kappa > 0.0)) throw DomainError("Heston kappa must be positive");
  if (!(nu >= 0.0)) throw DomainError("Heston nu must be non-negative");
  if (!(theta >= 0.0)) throw DomainError("Heston theta must be non-negative");
  if (!(x0 >= 0.0)) throw DomainError("Heston x0 must be non-negative");
  if (!(std::abs(rho) < 1.0)) throw DomainError("correlation must satisfy |rho| < 1");
}

void RoughBergomiParams::validate() const {
  if (!(hurst > 0.0 && hurst < 1.0)) throw DomainError("Hurst index must lie in (0, 1)");
  if (!(eta >= 0.0)) throw DomainError("rough Bergomi eta must be non-negative");
  if (!(sigma0 > 0.0)) throw DomainError("rough Bergomi sigma0 must be positive");
  if (!(std::abs(rho) < 1.0)) throw DomainError("correlation must satisfy |rho| < 1");
}

// ---------------------------------------------------------------- grid

TimeGrid::TimeGrid(double horizon, int n_steps) : horizon_(horizon), n_steps_(n_steps) {
  if (!(horizon > 0.0)) throw DomainError("grid horizon must be positive");
  if (n_steps < 1) throw DomainError("grid needs at least one step");
}

TimeGrid TimeGrid::with_step(double horizon, double dt) {
  if (!(dt > 0.0)) throw DomainError("grid step must be positive");
  const double steps = horizon / dt;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, steps)) {
    throw DomainError("horizon is not a multiple of the grid step");
  }
  return TimeGrid(horizon, static_cast<int>(rounded));
}

std::vector<double> TimeGrid::times() const {
  std::vector<double> t(static_cast<std::size_t>(n_steps_) + 1);
  for (int k = 0; k <= n_steps_; ++k) t[static_cast<std::size_t>(k)] = time(k);
  return t;
}

int TimeGrid::index_of(double t) const {
  const double pos = t / dt();
  const double k = std::round(pos);
  if (std::abs(pos - k) > 1e-7 || k < 0 || k > n_steps_) {
    std::ostringstream os;
    os << "time " << t << " is not on the grid (dt = " << dt() << ", horizon = " << horizon_ << ")";
    throw DomainError(os.str());
  }
  return static_cast<int>(k);
}

// ---------------------------------------------------------------- Brownian

std::span<const double> BrownianBatch::dW_path(std::size_t p) const {
  const auto n = static_cast<std::size_t>(n_steps);
  return std::span<const double>(dW).subspan(p * n, n);
}

std::span<const double> BrownianBatch::dB_path(std::size_t p) const {
  const auto n = static_cast<std::size_t>(n_steps);
  return std::span<const double>(dB).subspan(p * n, n);
}

PathNoise::PathNoise(std::uint64_t seed, std::size_t block, int n_steps, double dt, bool antithetic)
    : n_steps_(static_cast<std::size_t>(n_steps)), sqrt_dt_(std::sqrt(dt)), antithetic_(antithetic) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
                    0x53494756u};
  engine_.seed(seq);
  if (antithetic_) {
    last_w_.resize(n_steps_);
    last_b_.resize(n_steps_);
  }
}

void PathNoise::next_path(std::span<double> dw, std::span<double> db) {
  if (antithetic_ && mirror_) {
    for (std::size_t k = 0; k < n_steps_; ++k) {
      dw[k] = -last_w_[k];
      db[k] = -last_b_[k];
    }
    mirror_ = false;
    return;
  }
  for (std::size_t k = 0; k < n_steps_; ++k) dw[k] = normal_(engine_) * sqrt_dt_;
  for (std::size_t k = 0; k < n_steps_; ++k) db[k] = normal_(engine_) * sqrt_dt_;
  if (antithetic_) {
    std::copy(dw.begin(), dw.end(), last_w_.begin());
    std::copy(db.begin(), db.end(), last_b_.begin());
    mirror_ = true;
  }
}

BrownianBatch simulate_brownian(std::size_t n_paths, int n_steps, double horizon, std::uint64_t seed,
                                bool antithetic, std::size_t first_path) {
  if (n_paths < 1) throw DomainError("need at least one path");
  const TimeGrid grid(horizon, n_steps);
  BrownianBatch batch;
  batch.n_paths = n_paths;
  batch.n_steps = n_steps;
  batch.horizon = horizon;
  batch.seed = seed;
  const auto n = static_cast<std::size_t>(n_steps);
  batch.dW.resize(n_paths * n);
  batch.dB.resize(n_paths * n);

  const std::size_t last_path = first_path + n_paths;
  const std::size_t first_block = first_path / kPathsPerBlock;
  const std::size_t end_block = (last_path + kPathsPerBlock - 1) / kPathsPerBlock;
  parallel_for(end_block - first_block, [&](std::size_t b) {
    const std::size_t block = first_block + b;
    PathNoise noise(seed, block, n_steps, grid.dt(), antithetic);
    std::vector<double> w(n), z(n);
    const std::size_t lo = block * kPathsPerBlock;
    const std::size_t hi = std::min(lo + kPathsPerBlock, last_path);
    for (std::size_t p = lo; p < hi; ++p) {
      noise.next_path(w, z);
      if (p < first_path) continue;
      const std::size_t row = p - first_path;
      std::copy(w.begin(), w.end(), batch.dW.begin() + static_cast<std::ptrdiff_t>(row * n));
      std::copy(z.begin(), z.end(), batch.dB.begin() + static_cast<std::ptrdiff_t>(row * n));
    }
  });
  return batch;
}

void correlate_path(std::span<const double> dW, std::span<const double> dB, double rho, std::span<double> dZ) {
  const double rho_bar = std::sqrt(1.0 - rho * rho);
  for (std::size_t k = 0; k < dZ.size(); ++k) dZ[k] = rho * dW[k] + rho_bar * dB[k];
}

std::vector<double> correlate(const BrownianBatch& batch, double rho) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("correlation must satisfy |rho| < 1");
  std::vector<double> dz(batch.dW.size());
  correlate_path(batch.dW, batch.dB, rho, dz);
  return dz;
}

// ---------------------------------------------------------------- CIR

void euler_cir_path(const HestonParams& p, std::span<const double> dW, double dt, std::span<double> out) {
  double x = p.x0;
  out[0] = x;
  for (std::size_t k = 0; k < dW.size(); ++k) {
    const double xp = std::max(x, 0.0);
    x = x + p.kappa * (p.theta - xp) * dt + p.nu * std::sqrt(xp) * dW[k];
    out[k + 1] = x;
  }
}

std::vector<double> euler_cir(const HestonParams& p, const BrownianBatch& batch) {
  p.validate();
  const auto row = static_cast<std::size_t>(batch.n_steps) + 1;
  std::vector<double> out(batch.n_paths * row);
  for (std::size_t i = 0; i < batch.n_paths; ++i) {
    euler_cir_path(p, batch.dW_path(i), batch.dt(), std::span<double>(out).subspan(i * row, row));
  }
  return out;
}

// ---------------------------------------------------------------- Volterra

VolterraKernel::VolterraKernel(double hurst, const TimeGrid& grid) : hurst_(hurst), n_steps_(grid.n_steps()) {
  if (!(hurst > 0.0 && hurst < 1.0)) throw DomainError("Hurst index must lie in (0, 1)");
  const double dt = grid.dt();
  const double alpha = hurst - 0.5;
  const double scale = std::sqrt(2.0 * hurst);
  const auto n = static_cast<std::size_t>(n_steps_);
  lag_weight_.assign(n + 1, 0.0);
  // Diagonal cell: exact average of the kernel over [t_{k-1}, t_k].
  lag_weight_[1] = scale * std::pow(dt, alpha) / (alpha + 1.0);
  for (std::size_t m = 2; m <= n; ++m) lag_weight_[m] = scale * std::pow(static_cast<double>(m) * dt, alpha);

  row_scale_.assign(n + 1, 0.0);
  double sum_sq = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    sum_sq += lag_weight_[k] * lag_weight_[k];
    const double target = std::pow(grid.time(static_cast<int>(k)), 2.0 * hurst);
    row_scale_[k] = std::sqrt(target / (sum_sq * dt));
  }
}

double VolterraKernel::weight(int k, int j) const {
  if (j >= k || j < 0 || k > n_steps_) return 0.0;
  return row_scale_[static_cast<std::size_t>(k)] * lag_weight_[static_cast<std::size_t>(k - j)];
}

void VolterraKernel::apply(std::span<const double> dW, std::span<double> out) const {
  out[0] = 0.0;
  const auto n = static_cast<std::size_t>(n_steps_);
  for (std::size_t k = 1; k <= n; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += lag_weight_[k - j] * dW[j];
    out[k] = row_scale_[k] * s;
  }
}

std::vector<double> volterra_fbm(double hurst, const BrownianBatch& batch) {
  const VolterraKernel kernel(hurst, TimeGrid(batch.horizon, batch.n_steps));
  const auto row = static_cast<std::size_t>(batch.n_steps) + 1;
  std::vector<double> out(batch.n_paths * row);
  parallel_for(batch.n_paths, [&](std::size_t i) {
    kernel.apply(batch.dW_path(i), std::span<double>(out).subspan(i * row, row));
  });
  return out;
}

void rough_bergomi_vol_path(const RoughBergomiParams& p, std::span<const double> wh, const TimeGrid& grid,
                            std::span<double> out) {
  for (std::size_t k = 0; k < wh.size(); ++k) {
    const double t = grid.time(static_cast<int>(k));
    const double t2h = std::pow(t, 2.0 * p.hurst);
    out[k] = p.sigma0 * std::exp(0.5 * p.eta * wh[k] - 0.25 * p.eta * p.eta * t2h);
  }
}

std::vector<double> rough_bergomi_vol(const RoughBergomiParams& p, std::span<const double> wh, const TimeGrid& grid) {
  p.validate();
  const auto row = static_cast<std::size_t>(grid.n_steps()) + 1;
  if (wh.size() % row != 0) throw DomainError("fBM array does not match the grid");
  std::vector<double> out(wh.size());
  for (std::size_t i = 0; i < wh.size() / row; ++i) {
    rough_bergomi_vol_path(p, wh.subspan(i * row, row), grid, std::span<double>(out).subspan(i * row, row));
  }
  return out;
}

// ---------------------------------------------------------------- market

std::string to_string(MarketKind kind) { return kind == MarketKind::heston ? "heston" : "rough_bergomi"; }

MarketKind market_kind_from_string(const std::string& s) {
  if (s == "heston") return MarketKind::heston;
  if (s == "rough_bergomi" || s == "rbergomi") return MarketKind::rough_bergomi;
  throw DomainError("unknown market kind '" + s + "'");
}

namespace {

/// Simulates one path of the market and records discounted prices at the
/// snapshot indices. scratch must hold 2 (n + 1) doubles.
class MarketPathKernel {
 public:
  MarketPathKernel(const MarketModel& model, double s0, double r, std::span<const double> maturities,
                   const TimeGrid& grid)
      : model_(model), s0_(s0), r_(r), grid_(grid), maturities_(maturities.begin(), maturities.end()) {
    if (model.kind == MarketKind::heston) {
      model.heston.validate();
    } else {
      model.rough_bergomi.validate();
      kernel_.emplace_back(model.rough_bergomi.hurst, grid);
    }
    for (double t : maturities_) snapshot_index_.push_back(grid.index_of(t));
    n_ = static_cast<std::size_t>(grid.n_steps());
    vol_.resize(n_ + 1);
    aux_.resize(n_ + 1);
    dz_.resize(n_);
  }

  void run(std::span<const double> dW, std::span<const double> dB, std::size_t path, TerminalPrices& out) {
    const double dt = grid_.dt();
    if (model_.kind == MarketKind::heston) {
      euler_cir_path(model_.heston, dW, dt, aux_);
      for (std::size_t k = 0; k <= n_; ++k) vol_[k] = std::sqrt(std::max(aux_[k], 0.0));
    } else {
      kernel_.front().apply(dW, aux_);
      rough_bergomi_vol_path(model_.rough_bergomi, aux_, grid_, vol_);
    }
    correlate_path(dW, dB, model_.rho(), dz_);
    double log_s = std::log(s0_);
    std::size_t next = 0;
    for (std::size_t m = 0; m < snapshot_index_.size(); ++m) {
      if (snapshot_index_[m] == 0) out.discounted[m][path] = s0_;
    }
    for (std::size_t k = 0; k < n_; ++k) {
      const double v = vol_[k];
      log_s += (r_ - 0.5 * v * v) * dt + v * dz_[k];
      const int idx = static_cast<int>(k) + 1;
      for (next = 0; next < snapshot_index_.size(); ++next) {
        if (snapshot_index_[next] == idx) {
          out.discounted[next][path] = std::exp(log_s - r_ * maturities_[next]);
        }
      }
    }
  }

 private:
  const MarketModel& model_;
  double s0_;
  double r_;
  TimeGrid grid_;
  std::vector<double> maturities_;
  std::vector<int> snapshot_index_;
  std::vector<VolterraKernel> kernel_;
  std::size_t n_ = 0;
  std::vector<double> vol_;
  std::vector<double> aux_;
  std::vector<double> dz_;
};

TerminalPrices empty_prices(std::span<const double> maturities, std::size_t n_paths) {
  TerminalPrices out;
  out.maturities.assign(maturities.begin(), maturities.end());
  out.discounted.assign(maturities.size(), std::vector<double>(n_paths, 0.0));
  return out;
}

}  // namespace

TerminalPrices market_terminal_prices(const MarketModel& model, double s0, double r,
                                      std::span<const double> maturities, const BrownianBatch& batch) {
  const TimeGrid grid(batch.horizon, batch.n_steps);
  TerminalPrices out = empty_prices(maturities, batch.n_paths);
  MarketPathKernel kernel(model, s0, r, maturities, grid);
  for (std::size_t i = 0; i < batch.n_paths; ++i) kernel.run(batch.dW_path(i), batch.dB_path(i), i, out);
  return out;
}

TerminalPrices simulate_market(const MarketModel& model, double s0, double r, std::span<const double> maturities,
                               const TimeGrid& grid, std::size_t n_paths, std::uint64_t seed, bool antithetic) {
  if (n_paths < 1) throw DomainError("need at least one path");
  TerminalPrices out = empty_prices(maturities, n_paths);
  // Validate maturities before spawning workers.
  for (double t : maturities) (void)grid.index_of(t);
  const auto n = static_cast<std::size_t>(grid.n_steps());
  parallel_for(block_count(n_paths), [&](std::size_t block) {
    MarketPathKernel kernel(model, s0, r, maturities, grid);
    PathNoise noise(seed, block, grid.n_steps(), grid.dt(), antithetic);
    std::vector<double> w(n), z(n);
    const std::size_t lo = block * kPathsPerBlock;
    const std::size_t hi = std::min(lo + kPathsPerBlock, n_paths);
    for (std::size_t p = lo; p < hi; ++p) {
      noise.next_path(w, z);
      kernel.run(w, z, p, out);
    }
  });
  return out;
}

std::string paths_to_csv(std::span<const double> paths, std::size_t n_paths, const TimeGrid& grid) {
  const auto row = static_cast<std::size_t>(grid.n_steps()) + 1;
  if (paths.size() != n_paths * row) throw DomainError("path array does not match the grid");
  std::ostringstream os;
  os << std::setprecision(17) << "path_id,t,value\n";
  for (std::size_t i = 0; i < n_paths; ++i) {
    for (std::size_t k = 0; k < row; ++k) {
      os << i << ',' << grid.time(static_cast<int>(k)) << ',' << paths[i * row + k] << '\n';
    }
  }
  return os.str();
}

}  // namespace sigvol
