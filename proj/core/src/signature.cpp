#include "sigvol/signature.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "sigvol/errors.hpp"

namespace sigvol {

SampledPath::SampledPath(std::vector<double> times, std::vector<double> values, int dim,
                         bool time_augmented)
    : times_(std::move(times)), values_(std::move(values)), dim_(dim), time_augmented_(time_augmented) {
  if (dim_ < 1) throw DomainError("path dimension must be positive");
  if (times_.empty()) throw DomainError("path needs at least one sample");
  if (values_.size() != times_.size() * static_cast<std::size_t>(dim_)) {
    throw DomainError("path values do not match times x dim");
  }
  for (std::size_t k = 1; k < times_.size(); ++k) {
    if (!(times_[k] > times_[k - 1])) throw DomainError("path times must be strictly increasing");
  }
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); })) {
    throw DomainError("path values must be finite");
  }
}

std::span<const double> SampledPath::point(std::size_t k) const {
  return std::span<const double>(values_).subspan(k * static_cast<std::size_t>(dim_),
                                                  static_cast<std::size_t>(dim_));
}

double SampledPath::value(std::size_t k, int coord) const {
  return values_[k * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(coord)];
}

SampledPath SampledPath::slice(std::size_t first, std::size_t last) const {
  if (first > last || last >= times_.size()) throw DomainError("invalid path slice");
  std::vector<double> t(times_.begin() + static_cast<std::ptrdiff_t>(first),
                        times_.begin() + static_cast<std::ptrdiff_t>(last) + 1);
  const auto d = static_cast<std::size_t>(dim_);
  std::vector<double> v(values_.begin() + static_cast<std::ptrdiff_t>(first * d),
                        values_.begin() + static_cast<std::ptrdiff_t>((last + 1) * d));
  return SampledPath(std::move(t), std::move(v), dim_, time_augmented_);
}

std::string SignatureStream::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << 't';
  if (!sigs.empty()) {
    const Labeling lab(sigs.front().alphabet_size(), sigs.front().cap());
    for (std::size_t i = 0; i < lab.dimension(); ++i) os << ',' << lab.unlabel(i).to_string();
  }
  os << '\n';
  for (std::size_t k = 0; k < sigs.size(); ++k) {
    os << grid[k];
    for (double c : sigs[k].coeffs()) os << ',' << c;
    os << '\n';
  }
  return os.str();
}

SampledPath time_augment(const SampledPath& p) {
  if (p.time_augmented()) throw DomainError("path is already time-augmented");
  const int d = p.dim() + 1;
  std::vector<double> values;
  values.reserve(p.n_points() * static_cast<std::size_t>(d));
  for (std::size_t k = 0; k < p.n_points(); ++k) {
    values.push_back(p.times()[k]);
    const auto x = p.point(k);
    values.insert(values.end(), x.begin(), x.end());
  }
  return SampledPath(std::vector<double>(p.times().begin(), p.times().end()), std::move(values), d, true);
}

TruncatedTensor segment_exp(std::span<const double> increment, int cap) {
  const int d = static_cast<int>(increment.size());
  TruncatedTensor out = TruncatedTensor::unit(d, cap);
  for (int k = 1; k <= cap; ++k) {
    const auto prev = out.level(k - 1);
    auto cur = out.level(k);
    const double inv_k = 1.0 / k;
    for (std::size_t i = 0; i < prev.size(); ++i) {
      for (int j = 0; j < d; ++j) {
        cur[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] =
            prev[i] * increment[static_cast<std::size_t>(j)] * inv_k;
      }
    }
  }
  return out;
}

void extend_by_segment(TruncatedTensor& sig, std::span<const double> increment) {
  const int d = sig.alphabet_size();
  if (static_cast<int>(increment.size()) != d) throw DomainError("increment dimension mismatch");
  const int cap = sig.cap();
  const TruncatedTensor e = segment_exp(increment, cap);
  // Highest level first: level n only reads levels <= n of the old value.
  for (int n = cap; n >= 1; --n) {
    auto dst = sig.level(n);
    for (int k = 0; k < n; ++k) {
      const auto left = sig.level(k);
      const auto right = e.level(n - k);
      const std::size_t stride = right.size();
      for (std::size_t i = 0; i < left.size(); ++i) {
        const double ai = left[i];
        double* row = dst.data() + i * stride;
        for (std::size_t j = 0; j < stride; ++j) row[j] += ai * right[j];
      }
    }
  }
}

TruncatedTensor signature(const SampledPath& p, int cap) {
  if (p.n_points() < 2) throw DomainError("signature needs at least two samples");
  if (p.dim() == 1) {
    // a 1-d path is tree-like equivalent to its chord
    const double inc = p.value(p.n_points() - 1, 0) - p.value(0, 0);
    return segment_exp(std::span<const double>(&inc, 1), cap);
  }
  TruncatedTensor sig = TruncatedTensor::unit(p.dim(), cap);
  std::vector<double> inc(static_cast<std::size_t>(p.dim()));
  for (std::size_t k = 0; k + 1 < p.n_points(); ++k) {
    const auto a = p.point(k);
    const auto b = p.point(k + 1);
    for (std::size_t j = 0; j < inc.size(); ++j) inc[j] = b[j] - a[j];
    extend_by_segment(sig, inc);
  }
  return sig;
}

SignatureStream signature_stream(const SampledPath& p, int cap) {
  if (p.n_points() < 2) throw DomainError("signature stream needs at least two samples");
  SignatureStream out;
  out.grid.assign(p.times().begin(), p.times().end());
  out.sigs.reserve(p.n_points());
  out.sigs.push_back(TruncatedTensor::unit(p.dim(), cap));
  std::vector<double> inc(static_cast<std::size_t>(p.dim()));
  for (std::size_t k = 0; k + 1 < p.n_points(); ++k) {
    const auto a = p.point(k);
    const auto b = p.point(k + 1);
    for (std::size_t j = 0; j < inc.size(); ++j) inc[j] = b[j] - a[j];
    if (p.dim() == 1) {
      const double chord = p.value(k + 1, 0) - p.value(0, 0);
      out.sigs.push_back(segment_exp(std::span<const double>(&chord, 1), cap));
      continue;
    }
    TruncatedTensor next = out.sigs.back();
    extend_by_segment(next, inc);
    out.sigs.push_back(std::move(next));
  }
  return out;
}

std::vector<double> factorial_decay_profile(const TruncatedTensor& s) {
  std::vector<double> norms;
  norms.reserve(static_cast<std::size_t>(s.cap()) + 1);
  for (int k = 0; k <= s.cap(); ++k) {
    double sq = 0.0;
    for (double c : s.level(k)) sq += c * c;
    norms.push_back(std::sqrt(sq));
  }
  return norms;
}

double one_variation(const SampledPath& p) {
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < p.n_points(); ++k) {
    const auto a = p.point(k);
    const auto b = p.point(k + 1);
    double sq = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) sq += (b[j] - a[j]) * (b[j] - a[j]);
    total += std::sqrt(sq);
  }
  return total;
}

}  // namespace sigvol
