#include "sigvol/tensor_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <sstream>
#include <utility>

#include "sigvol/errors.hpp"

namespace sigvol {

// ---------------------------------------------------------------- Word

Word::Word(std::initializer_list<int> letters) : letters_(letters) {}

Word::Word(std::vector<int> letters) : letters_(std::move(letters)) {}

Word Word::append(int letter) const {
  Word out = *this;
  out.letters_.push_back(letter);
  return out;
}

Word Word::concat(const Word& other) const {
  Word out = *this;
  out.letters_.insert(out.letters_.end(), other.letters_.begin(), other.letters_.end());
  return out;
}

Word Word::drop_last() const {
  if (letters_.empty()) throw DomainError("drop_last on the empty word");
  Word out = *this;
  out.letters_.pop_back();
  return out;
}

std::string Word::to_string() const {
  if (letters_.empty()) return "e_()";
  std::ostringstream os;
  os << "e_";
  const bool wide = std::any_of(letters_.begin(), letters_.end(), [](int l) { return l > 9; });
  for (std::size_t i = 0; i < letters_.size(); ++i) {
    if (wide && i > 0) os << '.';
    os << letters_[i];
  }
  return os.str();
}

// ---------------------------------------------------------------- WordSum

WordSum::WordSum(std::initializer_list<std::pair<const Word, std::int64_t>> terms) {
  for (const auto& [w, m] : terms) add(w, m);
}

void WordSum::add(const Word& w, std::int64_t multiplicity) {
  if (multiplicity <= 0) throw DomainError("word multiplicities must be positive");
  terms_[w] += multiplicity;
}

void WordSum::add(const WordSum& other) {
  for (const auto& [w, m] : other.terms_) terms_[w] += m;
}

std::int64_t WordSum::multiplicity(const Word& w) const {
  const auto it = terms_.find(w);
  return it == terms_.end() ? 0 : it->second;
}

std::int64_t WordSum::total_multiplicity() const {
  std::int64_t total = 0;
  for (const auto& [w, m] : terms_) total += m;
  return total;
}

WordSum WordSum::append(int letter) const {
  WordSum out;
  for (const auto& [w, m] : terms_) out.terms_.emplace(w.append(letter), m);
  return out;
}

// ---------------------------------------------------------------- Labeling

std::size_t tensor_dimension(int alphabet_size, int cap) {
  return level_offset(alphabet_size, cap + 1);
}

std::size_t level_offset(int alphabet_size, int level) {
  std::size_t offset = 0;
  std::size_t block = 1;
  for (int k = 0; k < level; ++k) {
    offset += block;
    block *= static_cast<std::size_t>(alphabet_size);
  }
  return offset;
}

Labeling::Labeling(int alphabet_size, int cap) : d_(alphabet_size), cap_(cap) {
  if (alphabet_size < 1) throw DomainError("alphabet size must be positive");
  if (cap < 0) throw DomainError("cap must be non-negative");
  offsets_.reserve(static_cast<std::size_t>(cap) + 2);
  for (int k = 0; k <= cap + 1; ++k) offsets_.push_back(sigvol::level_offset(d_, k));
}

std::size_t Labeling::level_offset(int level) const {
  if (level < 0 || level > cap_ + 1) throw DomainError("level outside labeling");
  return offsets_[static_cast<std::size_t>(level)];
}

std::size_t Labeling::level_size(int level) const {
  return level_offset(level + 1) - level_offset(level);
}

std::size_t Labeling::label(const Word& w) const {
  if (static_cast<int>(w.size()) > cap_) {
    throw DomainError("word " + w.to_string() + " longer than cap " + std::to_string(cap_));
  }
  std::size_t index = 0;
  for (int letter : w.letters()) {
    if (letter < 0 || letter >= d_) {
      throw DomainError("letter " + std::to_string(letter) + " outside alphabet of size " +
                        std::to_string(d_));
    }
    index = index * static_cast<std::size_t>(d_) + static_cast<std::size_t>(letter);
  }
  return offsets_[w.size()] + index;
}

Word Labeling::unlabel(std::size_t index) const {
  if (index >= dimension()) throw DomainError("label out of range");
  int level = 0;
  while (offsets_[static_cast<std::size_t>(level) + 1] <= index) ++level;
  std::size_t rest = index - offsets_[static_cast<std::size_t>(level)];
  std::vector<int> letters(static_cast<std::size_t>(level));
  for (int i = level - 1; i >= 0; --i) {
    letters[static_cast<std::size_t>(i)] = static_cast<int>(rest % static_cast<std::size_t>(d_));
    rest /= static_cast<std::size_t>(d_);
  }
  return Word(std::move(letters));
}

std::vector<Word> Labeling::words() const {
  std::vector<Word> out;
  out.reserve(dimension());
  for (std::size_t i = 0; i < dimension(); ++i) out.push_back(unlabel(i));
  return out;
}

std::string Labeling::to_csv() const {
  std::ostringstream os;
  os << "word,index\n";
  for (std::size_t i = 0; i < dimension(); ++i) os << unlabel(i).to_string() << ',' << i << '\n';
  return os.str();
}

// ---------------------------------------------------------------- TruncatedTensor

TruncatedTensor::TruncatedTensor(int alphabet_size, int cap)
    : d_(alphabet_size), cap_(cap), coeffs_(tensor_dimension(alphabet_size, cap), 0.0) {
  if (alphabet_size < 1 || cap < 0) throw DomainError("invalid tensor shape");
}

TruncatedTensor::TruncatedTensor(int alphabet_size, int cap, std::vector<double> coeffs)
    : d_(alphabet_size), cap_(cap), coeffs_(std::move(coeffs)) {
  if (alphabet_size < 1 || cap < 0) throw DomainError("invalid tensor shape");
  if (coeffs_.size() != tensor_dimension(alphabet_size, cap)) {
    throw DomainError("coefficient vector length does not match d_N");
  }
}

TruncatedTensor TruncatedTensor::unit(int alphabet_size, int cap) {
  TruncatedTensor t(alphabet_size, cap);
  t.coeffs_[0] = 1.0;
  return t;
}

TruncatedTensor TruncatedTensor::basis(int alphabet_size, int cap, const Word& w) {
  TruncatedTensor t(alphabet_size, cap);
  t.at(w) = 1.0;
  return t;
}

double TruncatedTensor::at(const Word& w) const { return coeffs_[Labeling(d_, cap_).label(w)]; }

double& TruncatedTensor::at(const Word& w) { return coeffs_[Labeling(d_, cap_).label(w)]; }

std::span<const double> TruncatedTensor::level(int k) const {
  if (k < 0 || k > cap_) throw DomainError("level outside tensor cap");
  const auto lo = level_offset(d_, k);
  const auto hi = level_offset(d_, k + 1);
  return std::span<const double>(coeffs_).subspan(lo, hi - lo);
}

std::span<double> TruncatedTensor::level(int k) {
  if (k < 0 || k > cap_) throw DomainError("level outside tensor cap");
  const auto lo = level_offset(d_, k);
  const auto hi = level_offset(d_, k + 1);
  return std::span<double>(coeffs_).subspan(lo, hi - lo);
}

TruncatedTensor TruncatedTensor::truncated(int new_cap) const {
  if (new_cap > cap_ || new_cap < 0) throw DomainError("cannot truncate above the current cap");
  // Graded labels make the truncation a prefix of the coefficient vector.
  std::vector<double> head(coeffs_.begin(),
                           coeffs_.begin() + static_cast<std::ptrdiff_t>(tensor_dimension(d_, new_cap)));
  return TruncatedTensor(d_, new_cap, std::move(head));
}

bool TruncatedTensor::all_finite() const noexcept {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](double x) { return std::isfinite(x); });
}

// ---------------------------------------------------------------- products

TruncatedTensor concat_product(const TruncatedTensor& a, const TruncatedTensor& b, int cap) {
  if (a.alphabet_size() != b.alphabet_size()) throw DomainError("alphabet mismatch in tensor product");
  if (cap < 0) throw DomainError("negative cap");
  const int d = a.alphabet_size();
  TruncatedTensor out(d, cap);
  for (int n = 0; n <= cap; ++n) {
    auto dst = out.level(n);
    for (int k = 0; k <= n; ++k) {
      if (k > a.cap() || n - k > b.cap()) continue;
      const auto left = a.level(k);
      const auto right = b.level(n - k);
      // index(u.v) = index(u) * d^{|v|} + index(v) inside level n
      const std::size_t stride = right.size();
      for (std::size_t i = 0; i < left.size(); ++i) {
        const double ai = left[i];
        if (ai == 0.0) continue;
        double* row = dst.data() + i * stride;
        for (std::size_t j = 0; j < stride; ++j) row[j] += ai * right[j];
      }
    }
  }
  return out;
}

WordSum shuffle_words(const Word& i, const Word& j) {
  if (i.empty()) return WordSum{{j, 1}};
  if (j.empty()) return WordSum{{i, 1}};
  WordSum out = shuffle_words(i.drop_last(), j).append(i.last());
  out.add(shuffle_words(i, j.drop_last()).append(j.last()));
  return out;
}

double pair(const TruncatedTensor& ell, const TruncatedTensor& a) {
  if (ell.alphabet_size() != a.alphabet_size()) throw DomainError("alphabet mismatch in pairing");
  const std::size_t n = std::min(ell.size(), a.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += ell[i] * a[i];
  return s;
}

double pair(const WordSum& ws, const TruncatedTensor& a) {
  const Labeling lab(a.alphabet_size(), a.cap());
  double s = 0.0;
  for (const auto& [w, m] : ws.terms()) s += static_cast<double>(m) * a[lab.label(w)];
  return s;
}

namespace {

struct ShufflePair {
  std::size_t left;
  std::size_t right;
  std::vector<std::pair<std::size_t, double>> terms;  // (label, multiplicity)
};

// Shuffle expansions of every unordered word pair with |I| + |J| <= degree.
// Tables are immutable once built and shared between callers.
std::shared_ptr<const std::vector<ShufflePair>> shuffle_pair_table(int d, int degree) {
  static std::mutex mutex;
  static std::map<std::pair<int, int>, std::shared_ptr<const std::vector<ShufflePair>>> cache;
  const std::lock_guard<std::mutex> lock(mutex);
  auto& slot = cache[{d, degree}];
  if (slot) return slot;
  const Labeling lab(d, degree);
  auto table = std::make_shared<std::vector<ShufflePair>>();
  const std::size_t n_words = lab.dimension();
  for (std::size_t p = 0; p < n_words; ++p) {
    const Word wi = lab.unlabel(p);
    for (std::size_t q = p; q < n_words; ++q) {
      const Word wj = lab.unlabel(q);
      if (static_cast<int>(wi.size() + wj.size()) > degree) continue;
      ShufflePair entry{p, q, {}};
      const WordSum s = shuffle_words(wi, wj);
      for (const auto& [w, m] : s.terms()) {
        entry.terms.emplace_back(lab.label(w), static_cast<double>(m));
      }
      table->push_back(std::move(entry));
    }
  }
  slot = std::move(table);
  return slot;
}

}  // namespace

double group_like_defect(const TruncatedTensor& a, int max_combined_degree) {
  if (std::abs(a[0] - 1.0) > 1e-12) throw DomainError("group-like defect needs a zeroth coefficient of 1");
  if (max_combined_degree > a.cap()) throw DomainError("combined degree exceeds the tensor cap");
  if (max_combined_degree < 0) throw DomainError("negative combined degree");
  // Labels below the degree coincide for every cap, so the table indexes a directly.
  const auto table = shuffle_pair_table(a.alphabet_size(), max_combined_degree);
  double worst = 0.0;
  for (const auto& entry : *table) {
    double rhs = 0.0;
    for (const auto& [label, m] : entry.terms) rhs += m * a[label];
    worst = std::max(worst, std::abs(a[entry.left] * a[entry.right] - rhs));
  }
  return worst;
}

}  // namespace sigvol
