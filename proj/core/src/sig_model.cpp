#include "sigvol/sig_model.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include "sigvol/errors.hpp"

namespace sigvol {

namespace {

std::size_t packed_index(std::size_t i, std::size_t j, std::size_t n) {
  // row i of the upper triangle starts after i rows of decreasing length
  return i * n - i * (i - 1) / 2 + (j - i);
}

}  // namespace

ShuffleTable::ShuffleTable(int level, int alphabet_size) : level_(level), d_(alphabet_size) {
  if (level < 0) throw DomainError("signature level must be non-negative");
  if (alphabet_size < 1) throw DomainError("alphabet size must be positive");
  const Labeling basis(alphabet_size, level);
  const Labeling big(alphabet_size, 2 * level + 1);
  basis_ = basis.dimension();
  const auto words = basis.words();
  start_.reserve(packed_size(basis_) + 1);
  for (std::size_t i = 0; i < basis_; ++i) {
    for (std::size_t j = i; j < basis_; ++j) {
      start_.push_back(terms_.size());
      const WordSum ws = shuffle_words(words[i], words[j]).append(0);
      for (const auto& [w, m] : ws.terms()) {
        terms_.push_back(Term{static_cast<std::uint32_t>(big.label(w)), m});
      }
    }
  }
  start_.push_back(terms_.size());
}

std::shared_ptr<const ShuffleTable> ShuffleTable::get(int level, int alphabet_size) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const ShuffleTable>> cache;
  const std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{level, alphabet_size}];
  if (!slot) slot = std::make_shared<const ShuffleTable>(level, alphabet_size);
  return slot;
}

std::span<const ShuffleTable::Term> ShuffleTable::terms(std::size_t i, std::size_t j) const {
  if (i > j) std::swap(i, j);
  const std::size_t p = packed_index(i, j, basis_);
  return std::span<const Term>(terms_).subspan(start_[p], start_[p + 1] - start_[p]);
}

void q_matrix(const ShuffleTable& table, std::span<const double> sig, Eigen::MatrixXd& q) {
  const std::size_t n = table.basis_size();
  if (sig.size() < tensor_dimension(table.alphabet_size(), table.signature_cap())) {
    throw DomainError("signature cap too small for Q");
  }
  q.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (const auto& t : table.terms(i, j)) s += static_cast<double>(t.multiplicity) * sig[t.label];
      const auto a = static_cast<Eigen::Index>(i);
      const auto b = static_cast<Eigen::Index>(j);
      q(a, b) = -0.5 * s;
      q(b, a) = q(a, b);
    }
  }
}

Eigen::MatrixXd q_matrix(const TruncatedTensor& sig, int level) {
  if (sig.cap() < 2 * level + 1) {
    std::ostringstream os;
    os << "Q at level " << level << " needs a signature of cap " << 2 * level + 1 << ", got " << sig.cap();
    throw DomainError(os.str());
  }
  const auto table = ShuffleTable::get(level, sig.alphabet_size());
  Eigen::MatrixXd q;
  q_matrix(*table, sig.coeffs(), q);
  return q;
}

NegQFactor factor_neg_q(const Eigen::MatrixXd& q) {
  if (q.rows() != q.cols()) throw DomainError("Q must be square");
  const Eigen::MatrixXd a = -q;
  NegQFactor out;
  if (a.isZero(0.0)) {
    out.u = Eigen::MatrixXd::Zero(a.rows(), a.cols());
    return out;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    out.ridge = 1e-12 * a.trace() / static_cast<double>(a.rows());
    if (!(out.ridge > 0.0)) throw NumericalError("-Q has non-positive trace");
    llt.compute(a + out.ridge * Eigen::MatrixXd::Identity(a.rows(), a.cols()));
    if (llt.info() != Eigen::Success) throw NumericalError("Cholesky factorization of -Q failed after ridge");
  }
  out.u = llt.matrixU();
  return out;
}

void pack_upper(const Eigen::MatrixXd& u, std::span<double> out) {
  const auto n = static_cast<std::size_t>(u.rows());
  if (out.size() != packed_size(n)) throw DomainError("packed buffer has the wrong size");
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) out[p++] = u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
}

Eigen::MatrixXd unpack_upper(std::span<const double> packed, std::size_t n) {
  if (packed.size() != packed_size(n)) throw DomainError("packed buffer has the wrong size");
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = packed[p++];
  }
  return u;
}

std::vector<double> sig_stochastic_integral(const SignatureStream& stream, std::span<const double> dZ) {
  if (stream.sigs.size() != dZ.size() + 1) throw DomainError("stream grid and dZ grid do not align");
  if (stream.sigs.empty()) return {};
  std::vector<double> v(stream.sigs.front().size(), 0.0);
  for (std::size_t k = 0; k < dZ.size(); ++k) {
    const auto s = stream.sigs[k].coeffs();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += s[i] * dZ[k];
  }
  return v;
}

double packed_quadratic(std::span<const double> packed_u, std::span<const double> ell) {
  const std::size_t n = ell.size();
  double total = 0.0;
  std::size_t p = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = i; j < n; ++j) row += packed_u[p++] * ell[j];
    total += row * row;
  }
  return total;
}

double terminal_price(std::span<const double> ell, std::span<const double> packed_u, std::span<const double> v,
                      double s0) {
  if (packed_u.size() != packed_size(ell.size()) || v.size() != ell.size()) {
    throw DomainError("feature dimensions do not match ell");
  }
  double drift = 0.0;
  for (std::size_t i = 0; i < ell.size(); ++i) drift += ell[i] * v[i];
  return s0 * std::exp(-packed_quadratic(packed_u, ell) + drift);
}

std::vector<double> sig_vol_path(std::span<const double> ell, const SignatureStream& stream) {
  std::vector<double> out;
  out.reserve(stream.sigs.size());
  for (const auto& s : stream.sigs) {
    if (s.size() != ell.size()) throw DomainError("ell length does not match the stream cap");
    double x = 0.0;
    for (std::size_t i = 0; i < ell.size(); ++i) x += ell[i] * s[i];
    out.push_back(x);
  }
  return out;
}

SignatureExtender::SignatureExtender(int alphabet_size, int cap) : d_(alphabet_size), cap_(cap) {
  if (alphabet_size < 1 || cap < 0) throw DomainError("invalid extender shape");
  for (int k = 0; k <= cap + 1; ++k) offsets_.push_back(level_offset(alphabet_size, k));
  const std::size_t top = offsets_.back() - offsets_[static_cast<std::size_t>(cap)];
  work_a_.resize(top);
  work_b_.resize(top);
}

void SignatureExtender::extend(std::span<double> sig, std::span<const double> inc) {
  const auto d = static_cast<std::size_t>(d_);
  for (int k = cap_; k >= 1; --k) {
    // acc_j = acc_{j-1} ⊗ inc / (k - j + 1) + S_j, acc_0 = S_0
    work_a_[0] = sig[0];
    std::size_t len = 1;
    for (int j = 1; j <= k; ++j) {
      const double scale = 1.0 / static_cast<double>(k - j + 1);
      const double* level = sig.data() + offsets_[static_cast<std::size_t>(j)];
      for (std::size_t w = 0; w < len; ++w) {
        const double a = work_a_[w] * scale;
        for (std::size_t c = 0; c < d; ++c) work_b_[w * d + c] = a * inc[c] + level[w * d + c];
      }
      len *= d;
      std::swap(work_a_, work_b_);
    }
    std::copy(work_a_.begin(), work_a_.begin() + static_cast<std::ptrdiff_t>(len),
              sig.begin() + static_cast<std::ptrdiff_t>(offsets_[static_cast<std::size_t>(k)]));
  }
}

}  // namespace sigvol
