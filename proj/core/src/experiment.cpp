#include "sigvol/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sigvol/csv.hpp"
#include "sigvol/errors.hpp"
#include "sigvol/pricing.hpp"
#include "sigvol/signature.hpp"
#include "sigvol/tensor_algebra.hpp"

namespace sigvol {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "sigvol 0.1.0";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw DomainError(key + ": '" + v + "' is not a number");
  return x;
}

template <class Int>
Int to_int(const std::string& key, const std::string& v) {
  Int x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw DomainError(key + ": '" + v + "' is not an integer");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw DomainError(key + ": '" + v + "' is not a boolean");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

std::string list_text(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + fmt(xs[i]);
  return s;
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string to_string(AsvSurfaceSource s) { return s == AsvSurfaceSource::dedicated ? "dedicated" : "market"; }

using Setter = std::function<void(ExperimentSpec&, const std::string& key, const std::string& value)>;
using Getter = std::function<std::string(const ExperimentSpec&)>;

struct Field {
  Setter set;
  Getter get;
};

template <class Ref>
Field real_field(Ref ref) {
  return {[ref](ExperimentSpec& s, const std::string& k, const std::string& v) { ref(s) = to_double(k, v); },
          [ref](const ExperimentSpec& s) { return fmt(ref(s)); }};
}

template <class Ref>
Field list_field(Ref ref) {
  return {[ref](ExperimentSpec& s, const std::string& k, const std::string& v) { ref(s) = to_list(k, v); },
          [ref](const ExperimentSpec& s) { return list_text(ref(s)); }};
}

template <class Ref>
Field bool_field(Ref ref) {
  return {[ref](ExperimentSpec& s, const std::string& k, const std::string& v) { ref(s) = to_bool(k, v); },
          [ref](const ExperimentSpec& s) { return bool_text(ref(s)); }};
}

template <class Int, class Ref>
Field int_field(Ref ref) {
  return {[ref](ExperimentSpec& s, const std::string& k, const std::string& v) { ref(s) = to_int<Int>(k, v); },
          [ref](const ExperimentSpec& s) { return std::to_string(ref(s)); }};
}

const std::map<std::string, Field>& fields() {
  using S = ExperimentSpec;
  static const std::map<std::string, Field> table = {
      {"name", {[](S& s, const std::string&, const std::string& v) { s.name = v; },
                [](const S& s) { return s.name; }}},
      {"market", {[](S& s, const std::string& k, const std::string& v) {
                    try {
                      s.market.kind = market_kind_from_string(v);
                    } catch (const DomainError&) {
                      throw DomainError(k + ": unknown market '" + v + "'");
                    }
                  },
                  [](const S& s) { return to_string(s.market.kind); }}},
      {"market.sigma0", {[](S& s, const std::string& k, const std::string& v) {
                           const double x = to_double(k, v);
                           s.market.heston.x0 = x * x;
                           s.market.rough_bergomi.sigma0 = x;
                         },
                         [](const S& s) {
                           return fmt(s.market.kind == MarketKind::heston ? std::sqrt(s.market.heston.x0)
                                                                          : s.market.rough_bergomi.sigma0);
                         }}},
      {"market.rho", {[](S& s, const std::string& k, const std::string& v) {
                        s.market.heston.rho = s.market.rough_bergomi.rho = to_double(k, v);
                      },
                      [](const S& s) { return fmt(s.market.rho()); }}},
      {"market.kappa", real_field([](auto& s) -> auto& { return s.market.heston.kappa; })},
      {"market.theta", real_field([](auto& s) -> auto& { return s.market.heston.theta; })},
      {"market.nu", real_field([](auto& s) -> auto& { return s.market.heston.nu; })},
      {"market.eta", real_field([](auto& s) -> auto& { return s.market.rough_bergomi.eta; })},
      {"market.hurst", real_field([](auto& s) -> auto& { return s.market.rough_bergomi.hurst; })},
      {"primary.x0", real_field([](auto& s) -> auto& { return s.primary.x0; })},
      {"primary.kappa", real_field([](auto& s) -> auto& { return s.primary.kappa; })},
      {"primary.theta", real_field([](auto& s) -> auto& { return s.primary.theta; })},
      {"primary.nu", real_field([](auto& s) -> auto& { return s.primary.nu; })},
      {"primary.rho", real_field([](auto& s) -> auto& { return s.primary.rho; })},
      {"s0", real_field([](auto& s) -> auto& { return s.s0; })},
      {"r", real_field([](auto& s) -> auto& { return s.r; })},
      {"maturities", list_field([](auto& s) -> auto& { return s.maturities; })},
      {"strikes", list_field([](auto& s) -> auto& { return s.strikes; })},
      {"steps_per_year", int_field<int>([](auto& s) -> auto& { return s.steps_per_year; })},
      {"n_mc_market", int_field<std::size_t>([](auto& s) -> auto& { return s.n_mc_market; })},
      {"n_mc_calib", int_field<std::size_t>([](auto& s) -> auto& { return s.n_mc_calib; })},
      {"seed_market", int_field<std::uint64_t>([](auto& s) -> auto& { return s.seed_market; })},
      {"seed_calib", int_field<std::uint64_t>([](auto& s) -> auto& { return s.seed_calib; })},
      {"antithetic", bool_field([](auto& s) -> auto& { return s.antithetic; })},
      {"cache_features", bool_field([](auto& s) -> auto& { return s.cache_features; })},
      {"workers", int_field<std::size_t>([](auto& s) -> auto& { return s.workers; })},
      {"sig.level", int_field<int>([](auto& s) -> auto& { return s.calibration.level; })},
      {"sig.bound_scale", real_field([](auto& s) -> auto& { return s.calibration.bound_scale; })},
      {"sig.fd_step", real_field([](auto& s) -> auto& { return s.calibration.fd_step; })},
      {"sig.restarts", int_field<int>([](auto& s) -> auto& { return s.calibration.restarts; })},
      {"sig.martingale_correction", bool_field([](auto& s) -> auto& { return s.calibration.martingale_correction; })},
      {"optimizer.max_iterations", int_field<int>([](auto& s) -> auto& { return s.calibration.optimizer.max_iterations; })},
      {"optimizer.memory", int_field<int>([](auto& s) -> auto& { return s.calibration.optimizer.memory; })},
      {"optimizer.ftol", real_field([](auto& s) -> auto& { return s.calibration.optimizer.ftol; })},
      {"optimizer.gtol", real_field([](auto& s) -> auto& { return s.calibration.optimizer.gtol; })},
      {"optimizer.max_line_search",
       int_field<int>([](auto& s) -> auto& { return s.calibration.optimizer.max_line_search; })},
      {"asv.enabled", bool_field([](auto& s) -> auto& { return s.asv.enabled; })},
      {"asv.surface", {[](S& s, const std::string& k, const std::string& v) {
                         if (v == "dedicated") {
                           s.asv.source = AsvSurfaceSource::dedicated;
                         } else if (v == "market") {
                           s.asv.source = AsvSurfaceSource::market;
                         } else {
                           throw DomainError(k + ": expected dedicated or market, got '" + v + "'");
                         }
                       },
                       [](const S& s) { return to_string(s.asv.source); }}},
      {"asv.n_paths", int_field<std::size_t>([](auto& s) -> auto& { return s.asv.n_paths; })},
      {"asv.seed", int_field<std::uint64_t>([](auto& s) -> auto& { return s.asv.seed; })},
      {"asv.atm_maturities", list_field([](auto& s) -> auto& { return s.asv.atm_maturities; })},
      {"asv.smile_maturity", real_field([](auto& s) -> auto& { return s.asv.smile_maturity; })},
      {"asv.smile_strikes", list_field([](auto& s) -> auto& { return s.asv.smile_strikes; })},
      {"asv.long_maturities", list_field([](auto& s) -> auto& { return s.asv.long_maturities; })},
      {"asv.short_steps_per_year", int_field<int>([](auto& s) -> auto& { return s.asv.short_steps_per_year; })},
      {"asv.atm_degree", int_field<int>([](auto& s) -> auto& { return s.asv.fit.atm_degree; })},
      {"asv.smile_degree", int_field<int>([](auto& s) -> auto& { return s.asv.fit.smile_degree; })},
      {"asv.long_degree", int_field<int>([](auto& s) -> auto& { return s.asv.fit.long_degree; })},
      {"asv.short_max_maturity", real_field([](auto& s) -> auto& { return s.asv.selection.short_max_maturity; })},
      {"asv.long_min_maturity", real_field([](auto& s) -> auto& { return s.asv.selection.long_min_maturity; })},
      {"asv.atm_max_maturity", real_field([](auto& s) -> auto& { return s.asv.selection.atm_max_maturity; })},
  };
  return table;
}

int grid_steps(double horizon, int steps_per_year) {
  const double n = horizon * steps_per_year;
  const double rounded = std::round(n);
  if (std::abs(n - rounded) > 1e-7 * std::max(1.0, n)) {
    throw DomainError("maturity " + fmt(horizon) + " is not a multiple of 1/" + std::to_string(steps_per_year));
  }
  return static_cast<int>(rounded);
}

void check_grid(const std::vector<double>& ts, int steps_per_year, const std::string& what) {
  if (ts.empty()) throw DomainError(what + " is empty");
  for (double t : ts) {
    if (!(t > 0.0)) throw DomainError(what + " must be positive");
    (void)grid_steps(t, steps_per_year);
  }
}

double safe_iv(double price, double s0, double k, double t, double r) {
  try {
    return implied_vol(price, s0, k, t, r);
  } catch (const InversionError&) {
    return kNaN;
  }
}

std::string path_in(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string manifest_text(const std::string& command, const ExperimentSpec& spec) {
  return "# " + std::string(kVersion) + "\n# command = " + command + "\n" + spec.manifest();
}

std::vector<MarketQuote> read_quotes(const std::string& file, const std::string& price_column,
                                     const std::string& se_column) {
  const CsvTable t = read_csv(file);
  const auto ct = t.column("T");
  const auto ck = t.column("K");
  const auto cp = t.column(price_column);
  const bool has_se = !se_column.empty() && t.has_column(se_column);
  std::vector<MarketQuote> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    MarketQuote q;
    q.maturity = t.number(i, ct);
    q.strike = t.number(i, ck);
    q.price = t.number(i, cp);
    q.std_error = has_se ? t.number(i, t.column(se_column)) : 0.0;
    q.iv = kNaN;
    out.push_back(q);
  }
  return out;
}

std::string smile_file(const std::string& prefix, double t) { return prefix + "_T" + fmt(t) + ".csv"; }

std::string quotes_csv(const std::vector<MarketQuote>& quotes, bool with_iv) {
  std::string s = with_iv ? "T,K,price,std_error,IV\n" : "T,K,price,std_error\n";
  for (const auto& q : quotes) {
    s += fmt(q.maturity) + "," + fmt(q.strike) + "," + fmt(q.price) + "," + fmt(q.std_error);
    if (with_iv) s += "," + fmt(q.iv);
    s += "\n";
  }
  return s;
}

std::string iv_csv(const std::vector<MarketQuote>& quotes) {
  std::string s = "T,K,IV\n";
  for (const auto& q : quotes) s += fmt(q.maturity) + "," + fmt(q.strike) + "," + fmt(q.iv) + "\n";
  return s;
}

json calibration_json(const CalibrationResult& r, int level) {
  json j;
  j["loss"] = r.loss;
  j["max_iv_error"] = r.max_iv_error();
  j["status"] = to_string(r.status);
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["evaluations"] = r.evaluations;
  j["ell"] = r.ell;
  j["level_norms"] = level_norms(r.ell, level);
  j["excluded_paths"] = r.excluded_paths;
  j["ridge_paths"] = r.ridge_paths;
  j["clamped_quotes"] = r.clamped_quotes;
  j["loss_history"] = r.loss_history;
  return j;
}

std::string contracts_csv(const std::vector<ContractResult>& cs) {
  std::string s = "T,K,price_mkt,price_SIG,std_error_SIG,IV_mkt,IV_SIG,error\n";
  for (const auto& c : cs) {
    s += fmt(c.maturity) + "," + fmt(c.strike) + "," + fmt(c.market_price) + "," + fmt(c.model_price) + "," +
         fmt(c.model_std_error) + "," + fmt(c.market_iv) + "," + fmt(c.model_iv) + "," + fmt(c.iv_error) + "\n";
  }
  return s;
}

std::string iv_table_csv(const std::vector<ContractResult>& cs) {
  std::string s = "T,K,IV_SIG,IV_mkt,error\n";
  for (const auto& c : cs) {
    s += fmt(c.maturity) + "," + fmt(c.strike) + "," + fmt(c.model_iv) + "," + fmt(c.market_iv) + "," +
         fmt(c.iv_error) + "\n";
  }
  return s;
}

// json has no NaN; such entries become null.
json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

void ExperimentSpec::validate() const {
  if (seed_market == seed_calib) throw DomainError("seed_market and seed_calib must differ");
  if (!(s0 > 0.0)) throw DomainError("s0 must be positive");
  if (steps_per_year < 1) throw DomainError("steps_per_year must be positive");
  check_grid(maturities, steps_per_year, "maturities");
  if (strikes.empty()) throw DomainError("strikes is empty");
  for (double k : strikes) {
    if (!(k > 0.0)) throw DomainError("strikes must be positive");
  }
  if (n_mc_market == 0 || n_mc_calib == 0) throw DomainError("path counts must be positive");
  if (calibration.level < 1) throw DomainError("sig.level must be at least 1");
  if (market.kind == MarketKind::heston) {
    market.heston.validate();
  } else {
    market.rough_bergomi.validate();
  }
  primary.validate();
  if (asv.enabled && market.kind == MarketKind::heston && asv.source == AsvSurfaceSource::dedicated) {
    if (asv.seed == seed_market || asv.seed == seed_calib) throw DomainError("asv.seed must differ from the other seeds");
    if (asv.short_steps_per_year < 1) throw DomainError("asv.short_steps_per_year must be positive");
    check_grid(asv.atm_maturities, asv.short_steps_per_year, "asv.atm_maturities");
    check_grid(asv.long_maturities, steps_per_year, "asv.long_maturities");
    check_grid({asv.smile_maturity}, asv.short_steps_per_year, "asv.smile_maturity");
    if (asv.smile_strikes.empty()) throw DomainError("asv.smile_strikes is empty");
    if (asv.n_paths == 0) throw DomainError("asv.n_paths must be positive");
  }
}

TimeGrid ExperimentSpec::market_grid() const {
  const double horizon = *std::max_element(maturities.begin(), maturities.end());
  return TimeGrid(horizon, grid_steps(horizon, steps_per_year));
}

FeatureSpec ExperimentSpec::feature_spec() const {
  FeatureSpec f;
  f.primary = primary;
  const TimeGrid g = market_grid();
  f.horizon = g.horizon();
  f.n_steps = g.n_steps();
  f.maturities = maturities;
  std::sort(f.maturities.begin(), f.maturities.end());
  f.n_paths = n_mc_calib;
  f.seed = seed_calib;
  f.antithetic = antithetic;
  f.level = calibration.level;
  return f;
}

CalibrationConfig ExperimentSpec::calibration_config() const {
  CalibrationConfig c = calibration;
  c.maturities = maturities;
  c.strikes = strikes;
  c.s0 = s0;
  c.r = r;
  return c;
}

std::string ExperimentSpec::manifest() const {
  std::string s;
  for (const auto& [key, field] : fields()) s += key + " = " + field.get(*this) + "\n";
  return s;
}

void ExperimentSpec::use_paper_scale() {
  n_mc_market = 800000;
  n_mc_calib = 800000;
}

ExperimentSpec parse_experiment(const std::string& text) {
  ExperimentSpec spec;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DomainError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw DomainError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    it->second.set(spec, key, value);
  }
  return spec;
}

ExperimentSpec load_experiment(const std::string& file) { return parse_experiment(read_text(file)); }

std::vector<MarketQuote> simulate_quotes(const MarketModel& model, double s0, double r,
                                         const std::vector<std::pair<double, double>>& contracts, int steps_per_year,
                                         std::size_t n_paths, std::uint64_t seed, bool antithetic, bool correction) {
  if (contracts.empty()) throw DomainError("no contracts to price");
  std::set<double> ts;
  for (const auto& c : contracts) ts.insert(c.first);
  const std::vector<double> maturities(ts.begin(), ts.end());
  const double horizon = maturities.back();
  const TimeGrid grid(horizon, grid_steps(horizon, steps_per_year));
  const TerminalPrices tp = simulate_market(model, s0, r, maturities, grid, n_paths, seed, antithetic);

  std::vector<MarketQuote> out;
  out.reserve(contracts.size());
  for (const auto& [t, k] : contracts) {
    const auto m = static_cast<std::size_t>(
        std::lower_bound(maturities.begin(), maturities.end(), t) - maturities.begin());
    const McPrice p = correction ? mc_call_price_corrected(tp.discounted[m], s0, k, r, t)
                                 : mc_call_price(tp.discounted[m], k, r, t);
    out.push_back({t, k, p.price, p.std_error, safe_iv(p.price, s0, k, t, r)});
  }
  return out;
}

std::vector<OptionQuote> to_option_quotes(const std::vector<MarketQuote>& quotes) {
  std::vector<OptionQuote> out;
  out.reserve(quotes.size());
  for (const auto& q : quotes) out.push_back({q.strike, q.maturity, q.price, 0.0, 1.0});
  return out;
}

std::vector<MarketQuote> market_quotes(const ExperimentSpec& spec) {
  std::vector<std::pair<double, double>> contracts;
  for (double t : spec.maturities) {
    for (double k : spec.strikes) contracts.emplace_back(t, k);
  }
  return simulate_quotes(spec.market, spec.s0, spec.r, contracts, spec.steps_per_year, spec.n_mc_market,
                         spec.seed_market, spec.antithetic, spec.calibration.martingale_correction);
}

std::vector<MarketQuote> asv_surface_quotes(const ExperimentSpec& spec) {
  if (spec.market.kind != MarketKind::heston) throw DomainError("the ASV procedure needs a Heston market");
  if (spec.asv.source == AsvSurfaceSource::market) return market_quotes(spec);
  const auto& a = spec.asv;
  std::vector<std::pair<double, double>> short_contracts;
  std::vector<std::pair<double, double>> long_contracts;
  auto atm = [&](double t) { return spec.s0 * std::exp(spec.r * t); };
  for (double k : a.smile_strikes) short_contracts.emplace_back(a.smile_maturity, k);
  for (double t : a.atm_maturities) short_contracts.emplace_back(t, atm(t));
  for (double t : a.long_maturities) long_contracts.emplace_back(t, atm(t));
  for (auto* c : {&short_contracts, &long_contracts}) {
    std::sort(c->begin(), c->end());
    c->erase(std::unique(c->begin(), c->end()), c->end());
  }
  // A handful of steps cannot resolve the vol-of-vol and leverage effects at
  // the shortest maturities, so that part runs on its own fine grid.
  auto out = simulate_quotes(spec.market, spec.s0, spec.r, short_contracts, a.short_steps_per_year, a.n_paths, a.seed,
                             spec.antithetic, spec.calibration.martingale_correction);
  const auto longs = simulate_quotes(spec.market, spec.s0, spec.r, long_contracts, spec.steps_per_year, a.n_paths,
                                     a.seed, spec.antithetic, spec.calibration.martingale_correction);
  out.insert(out.end(), longs.begin(), longs.end());
  return out;
}

AsvResult fit_asv(const ExperimentSpec& spec, const std::vector<MarketQuote>& surface) {
  std::vector<IvPoint> points;
  for (const auto& q : surface) {
    if (std::isfinite(q.iv)) points.push_back({q.maturity, q.strike, q.iv});
  }
  SliceSelection sel = spec.asv.selection;
  AsvFitOptions fit{1, 2, 1};
  if (spec.asv.source == AsvSurfaceSource::dedicated) {
    const auto& a = spec.asv;
    sel.short_max_maturity = a.smile_maturity;
    sel.atm_max_maturity = *std::max_element(a.atm_maturities.begin(), a.atm_maturities.end());
    sel.long_min_maturity = *std::min_element(a.long_maturities.begin(), a.long_maturities.end());
    fit = a.fit;
  }
  return calibrate_asv(build_slices(points, spec.s0, spec.r, sel), fit);
}

std::vector<MarketQuote> asv_model_quotes(const ExperimentSpec& spec, const AsvResult& asv) {
  MarketModel model;
  model.kind = MarketKind::heston;
  model.heston = asv.params;
  std::vector<std::pair<double, double>> contracts;
  for (double t : spec.maturities) {
    for (double k : spec.strikes) contracts.emplace_back(t, k);
  }
  return simulate_quotes(model, spec.s0, spec.r, contracts, spec.steps_per_year, spec.n_mc_market, spec.seed_market,
                         spec.antithetic, spec.calibration.martingale_correction);
}

FeatureCache load_or_build_features(const FeatureSpec& spec, const std::string& cache_file) {
  if (!cache_file.empty() && fs::exists(cache_file)) {
    FeatureCache cache = FeatureCache::load(cache_file);
    if (!(cache.spec() == spec)) {
      throw IoError("feature cache '" + cache_file +
                    "' was built from different settings; remove it or choose another output directory");
    }
    return cache;
  }
  FeatureCache cache = build_features(spec);
  if (!cache_file.empty()) cache.save(cache_file);
  return cache;
}

std::string cmd_generate_market(const ExperimentSpec& spec, const std::string& out_dir) {
  spec.validate();
  ensure_dir(out_dir);
  const auto quotes = market_quotes(spec);
  write_text(path_in(out_dir, "market_quotes.csv"), quotes_csv(quotes, false));
  write_text(path_in(out_dir, "market_iv.csv"), iv_csv(quotes));

  std::ostringstream summary;
  summary << "market: " << to_string(spec.market.kind) << ", " << quotes.size() << " quotes, "
          << spec.n_mc_market << " paths\n";
  for (const auto& q : quotes) {
    if (!std::isfinite(q.iv)) {
      summary << "  no implied vol for T=" << fmt(q.maturity) << " K=" << fmt(q.strike) << " price=" << fmt(q.price)
              << "\n";
    }
  }
  if (spec.asv.enabled && spec.market.kind == MarketKind::heston && spec.asv.source == AsvSurfaceSource::dedicated) {
    const auto surface = asv_surface_quotes(spec);
    write_text(path_in(out_dir, "asv_surface.csv"), quotes_csv(surface, true));
    summary << "asv surface: " << surface.size() << " quotes, " << spec.asv.n_paths << " paths\n";
  }
  write_text(path_in(out_dir, "market_manifest.txt"), manifest_text("generate-market", spec));
  return summary.str();
}

std::string cmd_calibrate_sig(const ExperimentSpec& spec, const std::string& out_dir, bool per_smile) {
  spec.validate();
  const auto quotes = read_quotes(path_in(out_dir, "market_quotes.csv"), "price", "std_error");
  const std::string cache_file = spec.cache_features ? path_in(out_dir, "features.bin") : std::string();
  const FeatureCache cache = load_or_build_features(spec.feature_spec(), cache_file);
  const CalibrationConfig config = spec.calibration_config();
  const auto option_quotes = to_option_quotes(quotes);

  const CalibrationResult result = calibrate(config, option_quotes, cache);
  json report;
  report["name"] = spec.name;
  report["calibration"] = calibration_json(result, config.level);
  write_text(path_in(out_dir, "sig_report.json"), report.dump(2) + "\n");
  write_text(path_in(out_dir, "sig_prices.csv"), contracts_csv(result.contracts));
  write_text(path_in(out_dir, "sig_iv_table.csv"), iv_table_csv(result.contracts));

  std::set<double> ts;
  for (const auto& c : result.contracts) ts.insert(c.maturity);
  for (double t : ts) {
    std::string s = "K,IV_mkt,IV_SIG\n";
    for (const auto& c : result.contracts) {
      if (c.maturity == t) s += fmt(c.strike) + "," + fmt(c.market_iv) + "," + fmt(c.model_iv) + "\n";
    }
    write_text(path_in(out_dir, smile_file("sig_smile", t)), s);
  }

  std::ostringstream summary;
  summary << "signature fit: loss " << result.loss << ", max IV error " << result.max_iv_error() << ", "
          << to_string(result.status) << " after " << result.iterations << " iterations ("
          << result.seconds << " s)\n";

  if (per_smile) {
    json fits = json::array();
    std::vector<ContractResult> all;
    for (double t : ts) {
      const CalibrationResult r = smile_calibrate(config, t, option_quotes, cache);
      json j = calibration_json(r, config.level);
      j["maturity"] = t;
      fits.push_back(j);
      all.insert(all.end(), r.contracts.begin(), r.contracts.end());
      summary << "  T=" << fmt(t) << ": loss " << r.loss << ", max IV error " << r.max_iv_error() << "\n";
    }
    write_text(path_in(out_dir, "sig_per_smile_report.json"), fits.dump(2) + "\n");
    write_text(path_in(out_dir, "sig_per_smile_prices.csv"), contracts_csv(all));
    write_text(path_in(out_dir, "sig_per_smile_iv_table.csv"), iv_table_csv(all));
  }
  write_text(path_in(out_dir, "sig_manifest.txt"),
             manifest_text(per_smile ? "calibrate-sig --per-smile" : "calibrate-sig", spec));
  return summary.str();
}

std::string cmd_calibrate_asv(const ExperimentSpec& spec, const std::string& out_dir) {
  spec.validate();
  if (spec.market.kind != MarketKind::heston) throw DomainError("the ASV procedure needs a Heston market");
  const std::string file = path_in(out_dir, spec.asv.source == AsvSurfaceSource::dedicated ? "asv_surface.csv"
                                                                                           : "market_iv.csv");
  const CsvTable t = read_csv(file);
  std::vector<MarketQuote> surface;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    MarketQuote q;
    q.maturity = t.number(i, t.column("T"));
    q.strike = t.number(i, t.column("K"));
    q.iv = t.number(i, t.column("IV"));
    surface.push_back(q);
  }
  AsvResult asv;
  try {
    asv = fit_asv(spec, surface);
  } catch (const CalibrationError& e) {
    json failed;
    failed["name"] = spec.name;
    failed["surface"] = to_string(spec.asv.source);
    failed["error"] = e.what();
    write_text(path_in(out_dir, "asv_report.json"), failed.dump(2) + "\n");
    fs::remove(path_in(out_dir, "asv_params.csv"));
    fs::remove(path_in(out_dir, "asv_prices.csv"));
    throw;
  }

  std::string params = "param,value\n";
  params += "sigma0," + fmt(asv.sigma0) + "\n";
  params += "nu," + fmt(asv.params.nu) + "\n";
  params += "kappa," + fmt(asv.params.kappa) + "\n";
  params += "theta," + fmt(asv.params.theta) + "\n";
  params += "rho," + fmt(asv.params.rho) + "\n";
  write_text(path_in(out_dir, "asv_params.csv"), params);

  json report;
  report["name"] = spec.name;
  report["surface"] = to_string(spec.asv.source);
  report["params"] = {{"sigma0", asv.sigma0},
                      {"nu", asv.params.nu},
                      {"kappa", asv.params.kappa},
                      {"theta", asv.params.theta},
                      {"rho", asv.params.rho}};
  report["atm_slope"] = asv.atm_slope;
  report["rho_nu"] = asv.rho_nu;
  report["long_intercept"] = asv.long_intercept;
  report["long_slope"] = asv.long_slope;
  report["fit_rms"] = {{"atm", asv.fit_rms[0]}, {"smile", asv.fit_rms[1]}, {"long", asv.fit_rms[2]}};
  report["equation_residuals"] = asv.equation_residuals;
  report["newton_iterations"] = asv.newton_iterations;
  report["newton_starts"] = asv.newton_starts;
  report["feller"] = asv.params.feller();
  write_text(path_in(out_dir, "asv_report.json"), report.dump(2) + "\n");

  const auto model = asv_model_quotes(spec, asv);
  std::string s = "T,K,price_ASV,std_error_ASV,IV_ASV\n";
  for (const auto& q : model) {
    s += fmt(q.maturity) + "," + fmt(q.strike) + "," + fmt(q.price) + "," + fmt(q.std_error) + "," + fmt(q.iv) + "\n";
  }
  write_text(path_in(out_dir, "asv_prices.csv"), s);
  write_text(path_in(out_dir, "asv_manifest.txt"), manifest_text("calibrate-asv", spec));

  std::ostringstream summary;
  summary << "asv: sigma0 " << asv.sigma0 << ", nu " << asv.params.nu << ", kappa " << asv.params.kappa << ", theta "
          << asv.params.theta << ", rho " << asv.params.rho << "\n";
  return summary.str();
}

std::vector<ComparisonRow> comparison(const std::string& out_dir) {
  const std::string mkt_file = path_in(out_dir, "market_quotes.csv");
  const std::string manifest_file = path_in(out_dir, "market_manifest.txt");
  const auto market = read_quotes(mkt_file, "price", "");
  const ExperimentSpec spec = parse_experiment(read_text(manifest_file));

  const bool has_sig = fs::exists(path_in(out_dir, "sig_prices.csv"));
  const bool has_asv = fs::exists(path_in(out_dir, "asv_prices.csv"));
  if (!has_sig && !has_asv) throw IoError("no calibration results in '" + out_dir + "'");

  std::map<std::pair<double, double>, double> sig_price;
  std::map<std::pair<double, double>, double> asv_price;
  if (has_sig) {
    for (const auto& q : read_quotes(path_in(out_dir, "sig_prices.csv"), "price_SIG", "")) {
      sig_price[{q.maturity, q.strike}] = q.price;
    }
  }
  if (has_asv) {
    for (const auto& q : read_quotes(path_in(out_dir, "asv_prices.csv"), "price_ASV", "")) {
      asv_price[{q.maturity, q.strike}] = q.price;
    }
  }

  std::vector<ComparisonRow> rows;
  for (const auto& q : market) {
    ComparisonRow row;
    row.maturity = q.maturity;
    row.strike = q.strike;
    double p = q.price;
    clamp_to_bounds(p, spec.s0, q.strike, q.maturity, spec.r);
    row.iv_mkt = safe_iv(p, spec.s0, q.strike, q.maturity, spec.r);
    const std::pair<double, double> key{q.maturity, q.strike};
    if (has_sig) {
      const auto it = sig_price.find(key);
      if (it == sig_price.end()) throw IoError("sig_prices.csv has no T=" + fmt(q.maturity) + " K=" + fmt(q.strike));
      row.iv_sig = safe_iv(it->second, spec.s0, q.strike, q.maturity, spec.r);
      row.e_sig = std::abs(*row.iv_sig - row.iv_mkt);
    }
    if (has_asv) {
      const auto it = asv_price.find(key);
      if (it == asv_price.end()) throw IoError("asv_prices.csv has no T=" + fmt(q.maturity) + " K=" + fmt(q.strike));
      row.iv_asv = safe_iv(it->second, spec.s0, q.strike, q.maturity, spec.r);
      row.e_asv = std::abs(*row.iv_asv - row.iv_mkt);
    }
    rows.push_back(row);
  }
  return rows;
}

std::string cmd_report(const std::string& out_dir) {
  const auto rows = comparison(out_dir);
  const bool has_sig = rows.front().iv_sig.has_value();
  const bool has_asv = rows.front().iv_asv.has_value();

  std::string s = "T,K";
  if (has_sig) s += ",IV_SIG";
  if (has_asv) s += ",IV_ASV";
  s += ",IV_mkt";
  if (has_sig) s += ",e_SIG";
  if (has_asv) s += ",e_ASV";
  s += "\n";
  for (const auto& r : rows) {
    s += fmt(r.maturity) + "," + fmt(r.strike);
    if (has_sig) s += "," + fmt(*r.iv_sig);
    if (has_asv) s += "," + fmt(*r.iv_asv);
    s += "," + fmt(r.iv_mkt);
    if (has_sig) s += "," + fmt(*r.e_sig);
    if (has_asv) s += "," + fmt(*r.e_asv);
    s += "\n";
  }
  write_text(path_in(out_dir, "comparison.csv"), s);

  std::set<double> ts;
  for (const auto& r : rows) ts.insert(r.maturity);
  for (double t : ts) {
    std::string smile = "K,IV_mkt";
    if (has_sig) smile += ",IV_SIG";
    if (has_asv) smile += ",IV_ASV";
    smile += "\n";
    for (const auto& r : rows) {
      if (r.maturity != t) continue;
      smile += fmt(r.strike) + "," + fmt(r.iv_mkt);
      if (has_sig) smile += "," + fmt(*r.iv_sig);
      if (has_asv) smile += "," + fmt(*r.iv_asv);
      smile += "\n";
    }
    write_text(path_in(out_dir, smile_file("smile", t)), smile);
  }

  double max_sig = 0.0;
  double max_asv = 0.0;
  std::size_t close = 0;
  for (const auto& r : rows) {
    if (has_sig) max_sig = std::max(max_sig, std::isfinite(*r.e_sig) ? *r.e_sig : std::numeric_limits<double>::infinity());
    if (has_asv) max_asv = std::max(max_asv, std::isfinite(*r.e_asv) ? *r.e_asv : std::numeric_limits<double>::infinity());
    if (has_sig && has_asv && std::abs(*r.e_sig - *r.e_asv) < 5e-4) ++close;
  }
  json j;
  j["contracts"] = rows.size();
  if (has_sig) j["max_error_sig"] = number_or_null(max_sig);
  if (has_asv) j["max_error_asv"] = number_or_null(max_asv);
  if (has_sig && has_asv) j["contracts_with_error_gap_below_5e-4"] = close;
  write_text(path_in(out_dir, "report.json"), j.dump(2) + "\n");

  std::ostringstream summary;
  summary << rows.size() << " contracts";
  if (has_sig) summary << ", max e_SIG " << max_sig;
  if (has_asv) summary << ", max e_ASV " << max_asv;
  if (has_sig && has_asv) summary << ", |e_SIG - e_ASV| < 5e-4 for " << close;
  summary << "\n";
  return summary.str();
}

std::string cmd_selftest(bool& ok) {
  ok = true;
  std::ostringstream out;
  auto check = [&](const std::string& name, bool pass) {
    out << (pass ? "ok    " : "FAIL  ") << name << "\n";
    ok = ok && pass;
  };

  {
    const WordSum s = shuffle_words(Word{1, 2}, Word{3, 4});
    const WordSum expected{{Word{1, 2, 3, 4}, 1}, {Word{1, 3, 2, 4}, 1}, {Word{1, 3, 4, 2}, 1},
                           {Word{3, 1, 2, 4}, 1}, {Word{3, 1, 4, 2}, 1}, {Word{3, 4, 1, 2}, 1}};
    check("shuffle e12 with e34", s == expected);
  }
  {
    const int n = 2001;
    std::vector<double> times(n);
    std::vector<double> values(n);
    for (int i = 0; i < n; ++i) {
      times[i] = 2.0 * i / (n - 1);
      values[i] = times[i] * times[i];
    }
    const TruncatedTensor s = signature(SampledPath(times, values, 1), 4);
    bool pass = true;
    double fact = 1.0;
    for (int k = 1; k <= 4; ++k) {
      fact *= k;
      pass = pass && std::abs(s.at(Word(std::vector<int>(k, 0))) - std::pow(4.0, k) / fact) < 1e-12 * std::pow(4.0, k);
    }
    check("one-dimensional signature (X_T - X_0)^k / k!", pass);
  }
  {
    const double sigma = implied_vol(bs_price(100.0, 105.0, 0.6, 0.0, 0.25), 100.0, 105.0, 0.6, 0.0);
    check("Black-Scholes inversion", std::abs(sigma - 0.25) < 1e-10);
  }
  {
    const HestonParams p{0.04, 3.0, 0.09, 0.3, -0.5};
    const std::vector<double> atm{0.01, 0.02, 0.05};
    const std::vector<double> smile{-0.05, 0.0, 0.05};
    const std::vector<double> longs{5.0, 10.0, 20.0};
    const AsvResult r = calibrate_asv(formula_slices(p, 0.2, atm, smile, longs));
    check("ASV round trip", std::abs(r.params.nu - 0.3) < 1e-6 && std::abs(r.params.kappa - 3.0) < 1e-6 &&
                                std::abs(r.params.theta - 0.09) < 1e-6 && std::abs(r.params.rho + 0.5) < 1e-6);
  }
  {
    ExperimentSpec spec;
    const ExperimentSpec back = parse_experiment(spec.manifest());
    check("config manifest round trip", back.manifest() == spec.manifest());
  }
  return out.str();
}

}  // namespace sigvol
