#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sigvol {

/// A multi-index (i1, ..., in) over the alphabet {0, ..., d-1}.
///
/// Letter 0 is the time coordinate whenever the alphabet belongs to a
/// time-augmented path.
class Word {
 public:
  Word() = default;
  Word(std::initializer_list<int> letters);
  explicit Word(std::vector<int> letters);

  [[nodiscard]] std::size_t size() const noexcept { return letters_.size(); }
  [[nodiscard]] bool empty() const noexcept { return letters_.empty(); }
  [[nodiscard]] int operator[](std::size_t i) const { return letters_[i]; }
  [[nodiscard]] const std::vector<int>& letters() const noexcept { return letters_; }

  [[nodiscard]] Word append(int letter) const;
  [[nodiscard]] Word concat(const Word& other) const;
  /// Word without its last letter. Requires a non-empty word.
  [[nodiscard]] Word drop_last() const;
  [[nodiscard]] int last() const { return letters_.back(); }

  /// "e_0110" style text; the empty word prints as "e_()".
  [[nodiscard]] std::string to_string() const;

  auto operator<=>(const Word&) const = default;

 private:
  std::vector<int> letters_;
};

/// Finite linear combination of words with positive integer multiplicities.
class WordSum {
 public:
  WordSum() = default;
  WordSum(std::initializer_list<std::pair<const Word, std::int64_t>> terms);

  void add(const Word& w, std::int64_t multiplicity = 1);
  void add(const WordSum& other);

  [[nodiscard]] std::int64_t multiplicity(const Word& w) const;
  [[nodiscard]] std::int64_t total_multiplicity() const;
  [[nodiscard]] std::size_t size() const noexcept { return terms_.size(); }
  [[nodiscard]] const std::map<Word, std::int64_t>& terms() const noexcept { return terms_; }

  /// Right-concatenates a letter to every word: (sum c_w e_w) ⊗ e_letter.
  [[nodiscard]] WordSum append(int letter) const;

  bool operator==(const WordSum&) const = default;

 private:
  std::map<Word, std::int64_t> terms_;
};

/// Graded lexicographic bijection between words of length <= cap and
/// {0, ..., d_N - 1}: shorter words first, then base-d order within a level.
class Labeling {
 public:
  Labeling(int alphabet_size, int cap);

  [[nodiscard]] int alphabet_size() const noexcept { return d_; }
  [[nodiscard]] int cap() const noexcept { return cap_; }
  /// d_N = sum_{k=0}^{N} d^k
  [[nodiscard]] std::size_t dimension() const noexcept { return offsets_.back(); }
  [[nodiscard]] std::size_t level_offset(int level) const;
  [[nodiscard]] std::size_t level_size(int level) const;

  [[nodiscard]] std::size_t label(const Word& w) const;
  [[nodiscard]] Word unlabel(std::size_t index) const;

  /// All words in label order.
  [[nodiscard]] std::vector<Word> words() const;

  /// word,index rows for debugging dumps.
  [[nodiscard]] std::string to_csv() const;

 private:
  int d_;
  int cap_;
  std::vector<std::size_t> offsets_;  // offsets_[k] = first label of level k; size cap+2
};

/// Dense element of the truncated tensor algebra T^N(R^d), indexed by the
/// graded-lex labeling.
class TruncatedTensor {
 public:
  TruncatedTensor(int alphabet_size, int cap);
  TruncatedTensor(int alphabet_size, int cap, std::vector<double> coeffs);

  static TruncatedTensor unit(int alphabet_size, int cap);
  static TruncatedTensor basis(int alphabet_size, int cap, const Word& w);

  [[nodiscard]] int alphabet_size() const noexcept { return d_; }
  [[nodiscard]] int cap() const noexcept { return cap_; }
  [[nodiscard]] std::size_t size() const noexcept { return coeffs_.size(); }

  [[nodiscard]] double operator[](std::size_t i) const { return coeffs_[i]; }
  double& operator[](std::size_t i) { return coeffs_[i]; }
  [[nodiscard]] double at(const Word& w) const;
  double& at(const Word& w);

  [[nodiscard]] std::span<const double> coeffs() const noexcept { return coeffs_; }
  [[nodiscard]] std::span<double> coeffs() noexcept { return coeffs_; }
  [[nodiscard]] std::span<const double> level(int k) const;
  [[nodiscard]] std::span<double> level(int k);

  /// Projection onto T^{new_cap}; new_cap must not exceed cap().
  [[nodiscard]] TruncatedTensor truncated(int new_cap) const;

  [[nodiscard]] bool all_finite() const noexcept;

 private:
  int d_;
  int cap_;
  std::vector<double> coeffs_;
};

/// Number of words of length <= cap over a d-letter alphabet.
[[nodiscard]] std::size_t tensor_dimension(int alphabet_size, int cap);

/// Offset of level k inside a dense coefficient vector.
[[nodiscard]] std::size_t level_offset(int alphabet_size, int level);

/// Truncated tensor (concatenation) product a ⊗ b with words longer than cap dropped.
[[nodiscard]] TruncatedTensor concat_product(const TruncatedTensor& a, const TruncatedTensor& b, int cap);

/// Shuffle product e_I ⧢ e_J with exact integer multiplicities.
[[nodiscard]] WordSum shuffle_words(const Word& i, const Word& j);

/// <ell, a> over the common cap of both tensors.
[[nodiscard]] double pair(const TruncatedTensor& ell, const TruncatedTensor& a);

/// <sum c_w e_w, a>. Words longer than a.cap() are a domain error.
[[nodiscard]] double pair(const WordSum& ws, const TruncatedTensor& a);

/// max over word pairs (I, J) with |I| + |J| <= max_combined_degree of
/// |a_I a_J - <I ⧢ J, a>|. Zero for group-like elements.
[[nodiscard]] double group_like_defect(const TruncatedTensor& a, int max_combined_degree);

}  // namespace sigvol
