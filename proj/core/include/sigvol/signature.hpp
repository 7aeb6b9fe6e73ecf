#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sigvol/tensor_algebra.hpp"

namespace sigvol {

/// A sampled path: strictly increasing times and one point of R^d per time.
/// Signatures are those of the piecewise-linear interpolant.
class SampledPath {
 public:
  /// values are row-major, (times.size()) x dim.
  SampledPath(std::vector<double> times, std::vector<double> values, int dim,
              bool time_augmented = false);

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] std::size_t n_points() const noexcept { return times_.size(); }
  [[nodiscard]] std::size_t n_segments() const noexcept { return times_.size() - 1; }
  [[nodiscard]] bool time_augmented() const noexcept { return time_augmented_; }

  [[nodiscard]] std::span<const double> times() const noexcept { return times_; }
  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] std::span<const double> point(std::size_t k) const;
  [[nodiscard]] double value(std::size_t k, int coord) const;

  /// Sub-path on [t_first, t_last] (inclusive sample indices).
  [[nodiscard]] SampledPath slice(std::size_t first, std::size_t last) const;

 private:
  std::vector<double> times_;
  std::vector<double> values_;
  int dim_;
  bool time_augmented_;
};

/// Signatures of every prefix [0, t_k] of a path at a fixed cap.
struct SignatureStream {
  std::vector<double> grid;
  std::vector<TruncatedTensor> sigs;

  /// t,coefficients... rows.
  [[nodiscard]] std::string to_csv() const;
};

/// (t, X_t). Refuses paths that already carry a time coordinate.
[[nodiscard]] SampledPath time_augment(const SampledPath& p);

/// exp_⊗(increment) truncated at cap: level k is increment^{⊗k} / k!.
[[nodiscard]] TruncatedTensor segment_exp(std::span<const double> increment, int cap);

/// sig <- sig ⊗ exp_⊗(increment), in place, at sig's own cap.
void extend_by_segment(TruncatedTensor& sig, std::span<const double> increment);

/// Chen fold of the segment exponentials of all consecutive increments.
[[nodiscard]] TruncatedTensor signature(const SampledPath& p, int cap);

[[nodiscard]] SignatureStream signature_stream(const SampledPath& p, int cap);

/// Euclidean norm of each level's coefficient block.
[[nodiscard]] std::vector<double> factorial_decay_profile(const TruncatedTensor& s);

/// Sum of Euclidean norms of the increments (1-variation of the interpolant).
[[nodiscard]] double one_variation(const SampledPath& p);

}  // namespace sigvol
