#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sigvol/process_sim.hpp"

namespace sigvol {

/// What a feature cache was built from. Two caches with equal specs hold
/// identical bytes.
struct FeatureSpec {
  HestonParams primary;  // driver X of the signature model; rho couples Z to W
  double horizon = 1.6;
  int n_steps = 480;
  std::vector<double> maturities{0.1, 0.6, 1.1, 1.6};
  std::size_t n_paths = 100000;
  std::uint64_t seed = 2;
  bool antithetic = false;
  int level = 3;

  bool operator==(const FeatureSpec&) const = default;
};

/// Per-path, per-maturity records [packed U(T) | v(T)] of the signature
/// model on the time-augmented primary path (t, X_t).
///
/// Records are stored maturity-major: all paths of the first maturity, then
/// the next maturity, so a loss evaluation streams through memory once.
class FeatureCache {
 public:
  explicit FeatureCache(FeatureSpec spec);

  [[nodiscard]] const FeatureSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] std::size_t n_paths() const noexcept { return spec_.n_paths; }
  [[nodiscard]] std::size_t n_maturities() const noexcept { return spec_.maturities.size(); }
  [[nodiscard]] std::size_t basis_size() const noexcept { return basis_; }
  [[nodiscard]] std::size_t packed_u_size() const noexcept { return basis_ * (basis_ + 1) / 2; }
  [[nodiscard]] std::size_t record_size() const noexcept { return packed_u_size() + basis_; }

  /// Index of maturity T; DomainError when T is not cached.
  [[nodiscard]] std::size_t maturity_index(double t) const;

  [[nodiscard]] std::span<const double> record(std::size_t m, std::size_t path) const;
  [[nodiscard]] std::span<double> record(std::size_t m, std::size_t path);
  [[nodiscard]] std::span<const double> packed_u(std::size_t m, std::size_t path) const;
  [[nodiscard]] std::span<const double> v(std::size_t m, std::size_t path) const;
  /// All records of maturity m, contiguous.
  [[nodiscard]] std::span<const double> maturity_block(std::size_t m) const;

  [[nodiscard]] bool excluded(std::size_t path) const { return excluded_[path] != 0; }
  void exclude(std::size_t path) { excluded_[path] = 1; }
  [[nodiscard]] std::size_t excluded_count() const;
  /// Paths whose -Q needed the ridge to factor.
  [[nodiscard]] std::size_t ridge_count() const noexcept { return ridge_count_; }
  void set_ridge_count(std::size_t n) noexcept { ridge_count_ = n; }

  /// Versioned little-endian binary file.
  void save(const std::string& file) const;
  [[nodiscard]] static FeatureCache load(const std::string& file);

  /// path_id,T,kind,index,value rows for the first max_paths paths.
  [[nodiscard]] std::string to_csv(std::size_t max_paths) const;

 private:
  FeatureSpec spec_;
  std::size_t basis_;
  std::vector<double> data_;
  std::vector<std::uint8_t> excluded_;
  std::size_t ridge_count_ = 0;
};

/// Simulates the primary, builds the cap-(2N+1) signature along every path
/// and stores the Cholesky factor of -Q(T) and v(T) at each maturity. Paths
/// whose factorization fails are excluded and counted.
[[nodiscard]] FeatureCache build_features(const FeatureSpec& spec);

}  // namespace sigvol
