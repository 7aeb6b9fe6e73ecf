#include "sigvol/feature_cache.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sigvol/errors.hpp"
#include "sigvol/parallel.hpp"
#include "sigvol/sig_model.hpp"

namespace sigvol {

namespace {

constexpr char kMagic[8] = {'S', 'I', 'G', 'V', 'O', 'L', 'F', 'C'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "feature cache files are little-endian");

template <class T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw IoError("feature cache file is truncated");
  return value;
}

}  // namespace

FeatureCache::FeatureCache(FeatureSpec spec) : spec_(std::move(spec)) {
  if (spec_.level < 0 || spec_.level > 4) throw DomainError("feature level must lie in [0, 4]");
  if (spec_.n_paths < 1) throw DomainError("feature cache needs at least one path");
  if (spec_.maturities.empty()) throw DomainError("feature cache needs at least one maturity");
  const TimeGrid grid(spec_.horizon, spec_.n_steps);
  for (double t : spec_.maturities) (void)grid.index_of(t);
  basis_ = tensor_dimension(2, spec_.level);
  data_.assign(spec_.maturities.size() * spec_.n_paths * record_size(), 0.0);
  excluded_.assign(spec_.n_paths, 0);
}

std::size_t FeatureCache::maturity_index(double t) const {
  for (std::size_t m = 0; m < spec_.maturities.size(); ++m) {
    if (std::abs(spec_.maturities[m] - t) < 1e-9) return m;
  }
  std::ostringstream os;
  os << "maturity " << t << " is not in the feature cache";
  throw DomainError(os.str());
}

std::span<const double> FeatureCache::record(std::size_t m, std::size_t path) const {
  return std::span<const double>(data_).subspan((m * spec_.n_paths + path) * record_size(), record_size());
}

std::span<double> FeatureCache::record(std::size_t m, std::size_t path) {
  return std::span<double>(data_).subspan((m * spec_.n_paths + path) * record_size(), record_size());
}

std::span<const double> FeatureCache::packed_u(std::size_t m, std::size_t path) const {
  return record(m, path).first(packed_u_size());
}

std::span<const double> FeatureCache::v(std::size_t m, std::size_t path) const {
  return record(m, path).subspan(packed_u_size());
}

std::span<const double> FeatureCache::maturity_block(std::size_t m) const {
  const std::size_t len = spec_.n_paths * record_size();
  return std::span<const double>(data_).subspan(m * len, len);
}

std::size_t FeatureCache::excluded_count() const {
  return static_cast<std::size_t>(std::count(excluded_.begin(), excluded_.end(), std::uint8_t{1}));
}

void FeatureCache::save(const std::string& file) const {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw IoError("cannot open '" + file + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(spec_.level));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(spec_.maturities.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(spec_.n_steps));
  put<std::uint32_t>(os, spec_.antithetic ? 1u : 0u);
  put<std::uint64_t>(os, spec_.n_paths);
  put<std::uint64_t>(os, spec_.seed);
  put<double>(os, spec_.horizon);
  for (double x : {spec_.primary.x0, spec_.primary.kappa, spec_.primary.theta, spec_.primary.nu, spec_.primary.rho}) {
    put<double>(os, x);
  }
  for (double t : spec_.maturities) put<double>(os, t);
  put<std::uint64_t>(os, ridge_count_);
  os.write(reinterpret_cast<const char*>(excluded_.data()), static_cast<std::streamsize>(excluded_.size()));
  os.write(reinterpret_cast<const char*>(data_.data()), static_cast<std::streamsize>(data_.size() * sizeof(double)));
  if (!os) throw IoError("failed writing '" + file + "'");
}

FeatureCache FeatureCache::load(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot open '" + file + "'");
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("'" + file + "' is not a feature cache");
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) throw IoError("unsupported feature cache version " + std::to_string(version));
  FeatureSpec spec;
  spec.level = static_cast<int>(get<std::uint32_t>(is));
  const auto n_maturities = get<std::uint32_t>(is);
  spec.n_steps = static_cast<int>(get<std::uint32_t>(is));
  spec.antithetic = get<std::uint32_t>(is) != 0;
  spec.n_paths = get<std::uint64_t>(is);
  spec.seed = get<std::uint64_t>(is);
  spec.horizon = get<double>(is);
  spec.primary.x0 = get<double>(is);
  spec.primary.kappa = get<double>(is);
  spec.primary.theta = get<double>(is);
  spec.primary.nu = get<double>(is);
  spec.primary.rho = get<double>(is);
  spec.maturities.resize(n_maturities);
  for (auto& t : spec.maturities) t = get<double>(is);
  FeatureCache cache(std::move(spec));
  cache.ridge_count_ = get<std::uint64_t>(is);
  is.read(reinterpret_cast<char*>(cache.excluded_.data()), static_cast<std::streamsize>(cache.excluded_.size()));
  is.read(reinterpret_cast<char*>(cache.data_.data()),
          static_cast<std::streamsize>(cache.data_.size() * sizeof(double)));
  if (!is) throw IoError("feature cache file is truncated");
  return cache;
}

std::string FeatureCache::to_csv(std::size_t max_paths) const {
  std::ostringstream os;
  os << std::setprecision(17) << "path_id,T,kind,index,value\n";
  const std::size_t n = std::min(max_paths, spec_.n_paths);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t m = 0; m < n_maturities(); ++m) {
      const auto u = packed_u(m, p);
      for (std::size_t i = 0; i < u.size(); ++i) os << p << ',' << spec_.maturities[m] << ",U," << i << ',' << u[i] << '\n';
      const auto vv = v(m, p);
      for (std::size_t i = 0; i < vv.size(); ++i) os << p << ',' << spec_.maturities[m] << ",v," << i << ',' << vv[i] << '\n';
    }
  }
  return os.str();
}

FeatureCache build_features(const FeatureSpec& spec) {
  spec.primary.validate();
  FeatureCache cache(spec);
  const TimeGrid grid(spec.horizon, spec.n_steps);
  const auto n = static_cast<std::size_t>(spec.n_steps);
  const std::size_t basis = cache.basis_size();
  const auto table = ShuffleTable::get(spec.level, 2);
  const int big_cap = table->signature_cap();
  const std::size_t big_dim = tensor_dimension(2, big_cap);

  // snapshot[k] = maturity slot recorded after step k, or -1
  std::vector<int> snapshot(n + 1, -1);
  for (std::size_t m = 0; m < spec.maturities.size(); ++m) {
    snapshot[static_cast<std::size_t>(grid.index_of(spec.maturities[m]))] = static_cast<int>(m);
  }

  const std::size_t blocks = block_count(spec.n_paths);
  std::vector<std::size_t> ridges(blocks, 0);
  parallel_for(blocks, [&](std::size_t block) {
    PathNoise noise(spec.seed, block, spec.n_steps, grid.dt(), spec.antithetic);
    SignatureExtender extender(2, big_cap);
    std::vector<double> dw(n), db(n), dz(n), x(n + 1), sig(big_dim), v(basis);
    Eigen::MatrixXd q;
    const std::size_t lo = block * kPathsPerBlock;
    const std::size_t hi = std::min(lo + kPathsPerBlock, spec.n_paths);
    for (std::size_t p = lo; p < hi; ++p) {
      noise.next_path(dw, db);
      euler_cir_path(spec.primary, dw, grid.dt(), x);
      correlate_path(dw, db, spec.primary.rho, dz);
      std::fill(sig.begin(), sig.end(), 0.0);
      sig[0] = 1.0;
      std::fill(v.begin(), v.end(), 0.0);
      auto record_at = [&](std::size_t k) {
        const int m = snapshot[k];
        if (m < 0 || cache.excluded(p)) return;
        q_matrix(*table, sig, q);
        auto rec = cache.record(static_cast<std::size_t>(m), p);
        try {
          const NegQFactor f = factor_neg_q(q);
          if (f.ridge > 0.0) ++ridges[block];
          pack_upper(f.u, rec.first(cache.packed_u_size()));
        } catch (const NumericalError&) {
          cache.exclude(p);
          return;
        }
        std::copy(v.begin(), v.end(), rec.begin() + static_cast<std::ptrdiff_t>(cache.packed_u_size()));
      };
      record_at(0);
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < basis; ++i) v[i] += sig[i] * dz[k];
        const double inc[2] = {grid.dt(), x[k + 1] - x[k]};
        extender.extend(sig, inc);
        record_at(k + 1);
      }
    }
  });
  std::size_t total = 0;
  for (std::size_t r : ridges) total += r;
  cache.set_ridge_count(total);
  return cache;
}

}  // namespace sigvol
