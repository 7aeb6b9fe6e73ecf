#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sigvol/signature.hpp"
#include "sigvol/tensor_algebra.hpp"

namespace sigvol {

/// Index pairs (label in cap 2N+1, multiplicity) of (I ⧢ J) ⊗ e_0 for every
/// pair of basis words I <= J of length <= N over a two-letter alphabet
/// {time, primary}.
class ShuffleTable {
 public:
  explicit ShuffleTable(int level, int alphabet_size = 2);

  /// Shared table for (level, alphabet_size); built once per process.
  static std::shared_ptr<const ShuffleTable> get(int level, int alphabet_size = 2);

  [[nodiscard]] int level() const noexcept { return level_; }
  [[nodiscard]] int alphabet_size() const noexcept { return d_; }
  /// Number of basis words d_N.
  [[nodiscard]] std::size_t basis_size() const noexcept { return basis_; }
  /// Cap of the signature that Q reads from: 2N + 1.
  [[nodiscard]] int signature_cap() const noexcept { return 2 * level_ + 1; }

  struct Term {
    std::uint32_t label;
    std::int64_t multiplicity;
  };
  /// Terms of entry (i, j), i <= j.
  [[nodiscard]] std::span<const Term> terms(std::size_t i, std::size_t j) const;

 private:
  int level_;
  int d_;
  std::size_t basis_;
  std::vector<std::size_t> start_;  // per packed pair, into terms_
  std::vector<Term> terms_;
};

/// Number of entries of a packed upper-triangular n x n matrix.
[[nodiscard]] constexpr std::size_t packed_size(std::size_t n) noexcept { return n * (n + 1) / 2; }

/// Q[L(I), L(J)] = -1/2 <(I ⧢ J) ⊗ e_0, sig> for |I|, |J| <= level.
/// sig must be a time-augmented signature with cap >= 2 level + 1.
[[nodiscard]] Eigen::MatrixXd q_matrix(const TruncatedTensor& sig, int level);
void q_matrix(const ShuffleTable& table, std::span<const double> sig, Eigen::MatrixXd& q);

struct NegQFactor {
  Eigen::MatrixXd u;  // upper triangular, u^T u = -Q (+ ridge)
  double ridge = 0.0;
};

/// Cholesky factor of -Q. A ridge of 1e-12 trace(-Q) / n is added only when
/// the plain factorization fails; throws NumericalError if that fails too.
[[nodiscard]] NegQFactor factor_neg_q(const Eigen::MatrixXd& q);

/// Row-major packed upper triangle of u.
void pack_upper(const Eigen::MatrixXd& u, std::span<double> out);
[[nodiscard]] Eigen::MatrixXd unpack_upper(std::span<const double> packed, std::size_t n);

/// v = sum_k vec(S_{t_k}) dZ_k over the stream (left point).
[[nodiscard]] std::vector<double> sig_stochastic_integral(const SignatureStream& stream, std::span<const double> dZ);

/// ||U ell||^2 with U packed upper triangular.
[[nodiscard]] double packed_quadratic(std::span<const double> packed_u, std::span<const double> ell);

/// S0 exp(-||U ell||^2 + ell . v)
[[nodiscard]] double terminal_price(std::span<const double> ell, std::span<const double> packed_u,
                                    std::span<const double> v, double s0);

/// sigma_t(ell) = <ell, S_t> along the stream.
[[nodiscard]] std::vector<double> sig_vol_path(std::span<const double> ell, const SignatureStream& stream);

/// Horner-form in-place extension sig <- sig ⊗ exp(increment) for a cap
/// fixed at construction. Avoids building the segment exponential.
class SignatureExtender {
 public:
  SignatureExtender(int alphabet_size, int cap);
  void extend(std::span<double> sig, std::span<const double> increment);

 private:
  int d_;
  int cap_;
  std::vector<std::size_t> offsets_;
  std::vector<double> work_a_;
  std::vector<double> work_b_;
};

}  // namespace sigvol
