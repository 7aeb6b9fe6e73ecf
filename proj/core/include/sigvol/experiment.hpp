#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sigvol/asv_expansion.hpp"
#include "sigvol/feature_cache.hpp"
#include "sigvol/process_sim.hpp"
#include "sigvol/sig_calibration.hpp"

namespace sigvol {

/// Where the ASV regressions get their implied vols from.
enum class AsvSurfaceSource {
  dedicated,  // separate Heston surface with very short and very long maturities
  market      // the calibration grid itself
};

struct AsvSurfaceSpec {
  bool enabled = true;
  AsvSurfaceSource source = AsvSurfaceSource::dedicated;
  std::size_t n_paths = 100000;
  std::uint64_t seed = 3;
  std::vector<double> atm_maturities{0.01, 0.02, 0.03, 0.04, 0.05};
  double smile_maturity = 0.01;
  std::vector<double> smile_strikes{95.0, 97.5, 100.0, 102.5, 105.0};
  std::vector<double> long_maturities{5.0, 10.0, 15.0, 20.0};
  /// Time step of the short-maturity part; the long part uses the experiment's.
  int short_steps_per_year = 10000;
  AsvFitOptions fit{1, 2, 1};
  /// Used when source is market.
  SliceSelection selection;
};

/// One experiment: market, signature-model driver, contract grid, sample
/// sizes and seeds.
struct ExperimentSpec {
  std::string name = "experiment";
  MarketModel market;
  HestonParams primary{0.1, 2.0, 0.15, 0.2, 0.0};
  double s0 = 100.0;
  double r = 0.0;
  std::vector<double> maturities{0.1, 0.6, 1.1, 1.6};
  std::vector<double> strikes{90.0, 95.0, 100.0, 105.0, 110.0};
  int steps_per_year = 300;
  std::size_t n_mc_market = 100000;
  std::size_t n_mc_calib = 100000;
  std::uint64_t seed_market = 1;
  std::uint64_t seed_calib = 2;
  bool antithetic = false;
  /// Save the feature cache in the output directory and reuse it.
  bool cache_features = true;
  CalibrationConfig calibration;
  AsvSurfaceSpec asv;
  std::size_t workers = 0;  // 0: hardware concurrency

  /// DomainError on inconsistent settings.
  void validate() const;
  [[nodiscard]] TimeGrid market_grid() const;
  [[nodiscard]] FeatureSpec feature_spec() const;
  /// Calibration config with the grid and model settings of the spec.
  [[nodiscard]] CalibrationConfig calibration_config() const;
  /// Canonical "key = value" listing of every setting, sorted by key.
  [[nodiscard]] std::string manifest() const;
  /// 800,000 paths for both the market and the calibration.
  void use_paper_scale();
};

/// key = value lines; '#' starts a comment; lists are comma separated.
/// Unknown keys are errors.
[[nodiscard]] ExperimentSpec parse_experiment(const std::string& text);
[[nodiscard]] ExperimentSpec load_experiment(const std::string& file);

struct MarketQuote {
  double maturity = 0.0;
  double strike = 0.0;
  double price = 0.0;
  double std_error = 0.0;
  double iv = 0.0;  // NaN when the price cannot be inverted
};

/// Monte Carlo call prices of a market model on a maturity x strike grid.
/// Samples of each maturity are rescaled to mean S0 when correction is set.
/// contracts are (T, K) pairs; every T must lie on the grid of step
/// 1 / steps_per_year.
[[nodiscard]] std::vector<MarketQuote> simulate_quotes(const MarketModel& model, double s0, double r,
                                                       const std::vector<std::pair<double, double>>& contracts,
                                                       int steps_per_year, std::size_t n_paths, std::uint64_t seed,
                                                       bool antithetic, bool correction);

[[nodiscard]] std::vector<OptionQuote> to_option_quotes(const std::vector<MarketQuote>& quotes);

/// The quotes of the experiment's market on its grid.
[[nodiscard]] std::vector<MarketQuote> market_quotes(const ExperimentSpec& spec);

/// The surface the ASV regressions run on.
[[nodiscard]] std::vector<MarketQuote> asv_surface_quotes(const ExperimentSpec& spec);

/// ASV parameters from a surface, with the slices chosen per spec.asv.
[[nodiscard]] AsvResult fit_asv(const ExperimentSpec& spec, const std::vector<MarketQuote>& surface);

/// Prices on the experiment grid of a Heston market with the recovered
/// parameters, on the market's random numbers.
[[nodiscard]] std::vector<MarketQuote> asv_model_quotes(const ExperimentSpec& spec, const AsvResult& asv);

/// Loads the cached features when the stored spec matches, builds (and
/// saves, when cache_file is non-empty) otherwise. A cache file whose spec
/// differs is an IoError.
[[nodiscard]] FeatureCache load_or_build_features(const FeatureSpec& spec, const std::string& cache_file);

// Commands. Each writes its files into out_dir plus a manifest, and returns
// a short human-readable summary.

std::string cmd_generate_market(const ExperimentSpec& spec, const std::string& out_dir);
std::string cmd_calibrate_sig(const ExperimentSpec& spec, const std::string& out_dir, bool per_smile);
std::string cmd_calibrate_asv(const ExperimentSpec& spec, const std::string& out_dir);
std::string cmd_report(const std::string& out_dir);
/// Quick internal consistency checks; sets ok to false on any failure.
std::string cmd_selftest(bool& ok);

/// Per-contract comparison rows as written by cmd_report.
struct ComparisonRow {
  double maturity = 0.0;
  double strike = 0.0;
  double iv_mkt = 0.0;
  std::optional<double> iv_sig;
  std::optional<double> iv_asv;
  std::optional<double> e_sig;
  std::optional<double> e_asv;
};

/// Builds the comparison from the price files in out_dir.
[[nodiscard]] std::vector<ComparisonRow> comparison(const std::string& out_dir);

}  // namespace sigvol
