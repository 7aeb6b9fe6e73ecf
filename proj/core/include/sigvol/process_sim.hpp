#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sigvol {

/// CIR / Heston variance parameters: dX = kappa (theta - X) dt + nu sqrt(X) dW.
/// rho correlates the price noise Z = rho W + sqrt(1 - rho^2) B with W.
struct HestonParams {
  double x0 = 0.04;
  double kappa = 3.0;
  double theta = 0.09;
  double nu = 0.3;
  double rho = 0.0;

  void validate() const;
  /// 2 kappa theta >= nu^2
  [[nodiscard]] bool feller() const noexcept { return 2.0 * kappa * theta >= nu * nu; }

  bool operator==(const HestonParams&) const = default;
};

struct RoughBergomiParams {
  double sigma0 = 0.2;
  double eta = 0.5;
  double hurst = 0.1;
  double rho = 0.0;  // price / volatility driver correlation

  void validate() const;
};

/// Uniform grid 0 = t_0 < ... < t_n = horizon.
class TimeGrid {
 public:
  TimeGrid(double horizon, int n_steps);
  /// Grid with step dt; horizon must be an integer multiple of dt.
  static TimeGrid with_step(double horizon, double dt);

  [[nodiscard]] double horizon() const noexcept { return horizon_; }
  [[nodiscard]] int n_steps() const noexcept { return n_steps_; }
  [[nodiscard]] double dt() const noexcept { return horizon_ / n_steps_; }
  [[nodiscard]] double time(int k) const noexcept { return k * dt(); }
  [[nodiscard]] std::vector<double> times() const;
  /// Grid index of t; throws DomainError when t is not a grid point.
  [[nodiscard]] int index_of(double t) const;

 private:
  double horizon_;
  int n_steps_;
};

/// Independent Brownian increments dW, dB, row-major (path, step).
struct BrownianBatch {
  std::size_t n_paths = 0;
  int n_steps = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> dW;
  std::vector<double> dB;

  [[nodiscard]] double dt() const noexcept { return horizon / n_steps; }
  [[nodiscard]] std::span<const double> dW_path(std::size_t p) const;
  [[nodiscard]] std::span<const double> dB_path(std::size_t p) const;
};

/// Paths are generated in fixed blocks of this many paths; each block owns an
/// RNG stream keyed by (seed, block index).
inline constexpr std::size_t kPathsPerBlock = 1024;

[[nodiscard]] inline std::size_t block_count(std::size_t n_paths) {
  return (n_paths + kPathsPerBlock - 1) / kPathsPerBlock;
}

/// Sequential (dW, dB) draws for the paths of one block, in path order.
/// With antithetic sampling every odd path mirrors the preceding one.
class PathNoise {
 public:
  PathNoise(std::uint64_t seed, std::size_t block, int n_steps, double dt, bool antithetic);

  void next_path(std::span<double> dW, std::span<double> dB);

 private:
  std::size_t n_steps_;
  double sqrt_dt_;
  bool antithetic_;
  bool mirror_ = false;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::vector<double> last_w_;
  std::vector<double> last_b_;
};

/// Increments for paths [first_path, first_path + n_paths) of the stream.
[[nodiscard]] BrownianBatch simulate_brownian(std::size_t n_paths, int n_steps, double horizon,
                                              std::uint64_t seed, bool antithetic = false,
                                              std::size_t first_path = 0);

/// dZ = rho dW + sqrt(1 - rho^2) dB
[[nodiscard]] std::vector<double> correlate(const BrownianBatch& batch, double rho);
void correlate_path(std::span<const double> dW, std::span<const double> dB, double rho, std::span<double> dZ);

/// Full-truncation Euler CIR paths, (n_paths) x (n_steps + 1), row-major.
[[nodiscard]] std::vector<double> euler_cir(const HestonParams& p, const BrownianBatch& batch);
void euler_cir_path(const HestonParams& p, std::span<const double> dW, double dt, std::span<double> out);

/// Discretized Volterra kernel sqrt(2H) (t - s)^{H - 1/2}, with rows rescaled
/// so that Var(W^H_{t_k}) = t_k^{2H} on the grid.
class VolterraKernel {
 public:
  VolterraKernel(double hurst, const TimeGrid& grid);

  [[nodiscard]] double hurst() const noexcept { return hurst_; }
  [[nodiscard]] int n_steps() const noexcept { return n_steps_; }
  /// weight of increment j in W^H_{t_k}, j < k
  [[nodiscard]] double weight(int k, int j) const;
  /// out has n_steps + 1 entries, out[0] = 0.
  void apply(std::span<const double> dW, std::span<double> out) const;

 private:
  double hurst_;
  int n_steps_;
  std::vector<double> lag_weight_;  // lag m = k - j >= 1
  std::vector<double> row_scale_;   // per k
};

[[nodiscard]] std::vector<double> volterra_fbm(double hurst, const BrownianBatch& batch);

/// sigma_t = sigma0 exp(eta W^H_t / 2 - eta^2 t^{2H} / 4)
[[nodiscard]] std::vector<double> rough_bergomi_vol(const RoughBergomiParams& p, std::span<const double> wh,
                                                    const TimeGrid& grid);
void rough_bergomi_vol_path(const RoughBergomiParams& p, std::span<const double> wh, const TimeGrid& grid,
                            std::span<double> out);

enum class MarketKind { heston, rough_bergomi };

[[nodiscard]] std::string to_string(MarketKind kind);
[[nodiscard]] MarketKind market_kind_from_string(const std::string& s);

struct MarketModel {
  MarketKind kind = MarketKind::heston;
  HestonParams heston;            // x0 is the initial variance sigma0^2
  RoughBergomiParams rough_bergomi;

  [[nodiscard]] double rho() const noexcept {
    return kind == MarketKind::heston ? heston.rho : rough_bergomi.rho;
  }
};

/// Discounted terminal prices e^{-rT} S_T per maturity, one entry per path.
struct TerminalPrices {
  std::vector<double> maturities;
  std::vector<std::vector<double>> discounted;
};

/// Log-Euler market simulation on the supplied increments.
[[nodiscard]] TerminalPrices market_terminal_prices(const MarketModel& model, double s0, double r,
                                                    std::span<const double> maturities,
                                                    const BrownianBatch& batch);

/// Same scheme, generating increments block by block so that memory stays
/// proportional to the number of paths rather than paths x steps.
[[nodiscard]] TerminalPrices simulate_market(const MarketModel& model, double s0, double r,
                                             std::span<const double> maturities, const TimeGrid& grid,
                                             std::size_t n_paths, std::uint64_t seed, bool antithetic = false);

/// path_id,t,value rows for a (n_paths) x (n_steps + 1) array.
[[nodiscard]] std::string paths_to_csv(std::span<const double> paths, std::size_t n_paths, const TimeGrid& grid);

}  // namespace sigvol
