#pragma once

// Run configuration and its flat `key = value` text form.
//
//   # comment
//   d = 20
//   eta = auto          # 1 / (8 sigma_bar_max^2) measured from W*
//   algorithm = srpfl   # or fedrep_full
//
// Unknown keys and out-of-range values are rejected with the offending key in
// the message. Times are in abstract time units, rates per time unit.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "srpfl/error.hpp"
#include "srpfl/rng.hpp"
#include "srpfl/straggler.hpp"

namespace srpfl {

enum class Algorithm { Srpfl, FedRepFull };
enum class ResampleScope { PerStage, PerRound };
/// Where the stopping accuracy comes from.
enum class TargetMode { Analytic, Calibrated, Fixed };
/// Where the contraction factor a comes from.
enum class FactorMode { Oracle, Calibrated, Fixed };

struct RunConfig {
  std::size_t d = 20;
  std::size_t k = 2;
  std::size_t M = 64;  // client population
  std::size_t N = 64;  // clients sampled per stage (or round)
  std::size_t n0 = 4;
  std::size_t m = 100;
  double sigma = 0.1;
  std::optional<double> eta;  // empty: 1 / (8 sigma_bar_max^2)
  double c_hat = 1.2;

  SpeedKind speed = SpeedKind::Fixed;
  double lambda = 1.0;
  double comm_cost = 1.0;

  Algorithm algorithm = Algorithm::Srpfl;
  PlanMode plan_mode = PlanMode::AnalyticBudget;
  std::size_t fixed_budget = 50;
  ResampleScope resample_scope = ResampleScope::PerStage;

  TargetMode target_mode = TargetMode::Calibrated;
  double epsilon = 0.0;
  FactorMode factor_mode = FactorMode::Calibrated;
  double a = 0.05;
  std::size_t calibration_rounds = 400;
  std::size_t max_rounds = 10000;

  std::uint64_t seed = 1;
  std::size_t sweep_seeds = 1;

  void validate() const;
};

struct ConfigFile {
  RunConfig run;
  std::string out_dir = ".";
};

namespace config_detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] inline void fail(std::string_view key, const std::string& why) {
  throw Error(Errc::ConfigError, "field '" + std::string(key) + "': " + why);
}

inline std::size_t parse_count(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) fail(key, "expected a non-negative integer, got '" + std::string(v) + "'");
  return out;
}

inline std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) fail(key, "expected an unsigned integer, got '" + std::string(v) + "'");
  return out;
}

inline double parse_real(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
    fail(key, "expected a finite number, got '" + std::string(v) + "'");
  return out;
}

template <typename Enum>
struct EnumName {
  std::string_view name;
  Enum value;
};

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view key, std::string_view v, const EnumName<Enum> (&table)[N]) {
  for (const auto& e : table)
    if (e.name == v) return e.value;
  std::string allowed;
  for (const auto& e : table) allowed += (allowed.empty() ? "" : "|") + std::string(e.name);
  fail(key, "expected one of " + allowed + ", got '" + std::string(v) + "'");
}

template <typename Enum, std::size_t N>
std::string_view enum_name(Enum value, const EnumName<Enum> (&table)[N]) {
  for (const auto& e : table)
    if (e.value == value) return e.name;
  return "?";
}

inline constexpr EnumName<Algorithm> kAlgorithms[] = {{"srpfl", Algorithm::Srpfl},
                                                      {"fedrep_full", Algorithm::FedRepFull}};
inline constexpr EnumName<PlanMode> kPlanModes[] = {{"analytic", PlanMode::AnalyticBudget},
                                                    {"threshold", PlanMode::DistanceThreshold},
                                                    {"fixed", PlanMode::FixedBudget}};
inline constexpr EnumName<SpeedKind> kSpeeds[] = {
    {"fixed", SpeedKind::Fixed}, {"dynamic", SpeedKind::Dynamic}, {"stage_iid", SpeedKind::StageIid}};
inline constexpr EnumName<ResampleScope> kScopes[] = {{"per_stage", ResampleScope::PerStage},
                                                      {"per_round", ResampleScope::PerRound}};
inline constexpr EnumName<TargetMode> kTargets[] = {
    {"analytic", TargetMode::Analytic}, {"calibrated", TargetMode::Calibrated}, {"fixed", TargetMode::Fixed}};
inline constexpr EnumName<FactorMode> kFactors[] = {
    {"oracle", FactorMode::Oracle}, {"calibrated", FactorMode::Calibrated}, {"fixed", FactorMode::Fixed}};

inline std::string format_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace config_detail

/// Set one field from its text form. Throws ConfigError for unknown keys.
inline void apply_setting(ConfigFile& cfg, std::string_view key, std::string_view value) {
  using namespace config_detail;
  RunConfig& r = cfg.run;
  if (key == "d") r.d = parse_count(key, value);
  else if (key == "k") r.k = parse_count(key, value);
  else if (key == "M") r.M = parse_count(key, value);
  else if (key == "N") r.N = parse_count(key, value);
  else if (key == "n0") r.n0 = parse_count(key, value);
  else if (key == "m") r.m = parse_count(key, value);
  else if (key == "sigma") r.sigma = parse_real(key, value);
  else if (key == "eta") r.eta = value == "auto" ? std::nullopt : std::optional<double>(parse_real(key, value));
  else if (key == "c_hat") r.c_hat = parse_real(key, value);
  else if (key == "speed") r.speed = parse_enum(key, value, kSpeeds);
  else if (key == "lambda") r.lambda = parse_real(key, value);
  else if (key == "comm_cost") r.comm_cost = parse_real(key, value);
  else if (key == "algorithm") r.algorithm = parse_enum(key, value, kAlgorithms);
  else if (key == "plan_mode") r.plan_mode = parse_enum(key, value, kPlanModes);
  else if (key == "fixed_budget") r.fixed_budget = parse_count(key, value);
  else if (key == "resample_scope") r.resample_scope = parse_enum(key, value, kScopes);
  else if (key == "target_mode") r.target_mode = parse_enum(key, value, kTargets);
  else if (key == "epsilon") r.epsilon = parse_real(key, value);
  else if (key == "factor_mode") r.factor_mode = parse_enum(key, value, kFactors);
  else if (key == "a") r.a = parse_real(key, value);
  else if (key == "calibration_rounds") r.calibration_rounds = parse_count(key, value);
  else if (key == "max_rounds") r.max_rounds = parse_count(key, value);
  else if (key == "seed") r.seed = parse_u64(key, value);
  else if (key == "sweep_seeds") r.sweep_seeds = parse_count(key, value);
  else if (key == "out_dir") cfg.out_dir = std::string(value);
  else fail(key, "unknown key");
}

/// `key=value` as given to --override.
inline void apply_override(ConfigFile& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw Error(Errc::ConfigError, "override '" + std::string(assignment) + "' is not key=value");
  apply_setting(cfg, config_detail::trim(assignment.substr(0, eq)), config_detail::trim(assignment.substr(eq + 1)));
}

inline ConfigFile parse_config(std::istream& in) {
  ConfigFile cfg;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = config_detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key(config_detail::trim(view.substr(0, eq)));
    for (const auto& s : seen)
      if (s == key) throw Error(Errc::ConfigError, "field '" + key + "': duplicate key on line " + std::to_string(lineno));
    seen.push_back(key);
    apply_setting(cfg, key, config_detail::trim(view.substr(eq + 1)));
  }
  return cfg;
}

inline ConfigFile load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read config file '" + path + "'");
  return parse_config(in);
}

inline void RunConfig::validate() const {
  using config_detail::fail;
  if (k < 1) fail("k", "must be >= 1");
  if (d < k) fail("d", "must be >= k");
  if (m < 1) fail("m", "must be >= 1");
  if (n0 < 1) fail("n0", "must be >= 1");
  if (N < n0) fail("N", "must be >= n0");
  if (M < N) fail("M", "must be >= N");
  if (!(sigma >= 0.0)) fail("sigma", "must be >= 0");
  if (eta && !(*eta > 0.0)) fail("eta", "must be > 0");
  if (!(c_hat > 1.0 && c_hat < std::sqrt(2.0))) fail("c_hat", "must lie in (1, sqrt 2)");
  if (!(lambda > 0.0)) fail("lambda", "must be > 0");
  if (!(comm_cost >= 0.0)) fail("comm_cost", "must be >= 0");
  if (fixed_budget < 1) fail("fixed_budget", "must be >= 1");
  if (!(epsilon >= 0.0)) fail("epsilon", "must be >= 0");
  if (factor_mode == FactorMode::Fixed && !(a > 0.0 && a <= 0.25)) fail("a", "must lie in (0, 1/4]");
  if (calibration_rounds < 10) fail("calibration_rounds", "must be >= 10");
  if (max_rounds < 1) fail("max_rounds", "must be >= 1");
  if (sweep_seeds < 1) fail("sweep_seeds", "must be >= 1");
}

/// Every field in a fixed order; the digest of this text identifies a run.
inline std::string canonical_string(const RunConfig& r) {
  using namespace config_detail;
  std::ostringstream os;
  os << "d=" << r.d << "\nk=" << r.k << "\nM=" << r.M << "\nN=" << r.N << "\nn0=" << r.n0 << "\nm=" << r.m
     << "\nsigma=" << format_real(r.sigma) << "\neta=" << (r.eta ? format_real(*r.eta) : std::string("auto"))
     << "\nc_hat=" << format_real(r.c_hat) << "\nspeed=" << enum_name(r.speed, kSpeeds)
     << "\nlambda=" << format_real(r.lambda) << "\ncomm_cost=" << format_real(r.comm_cost)
     << "\nalgorithm=" << enum_name(r.algorithm, kAlgorithms) << "\nplan_mode=" << enum_name(r.plan_mode, kPlanModes)
     << "\nfixed_budget=" << r.fixed_budget << "\nresample_scope=" << enum_name(r.resample_scope, kScopes)
     << "\ntarget_mode=" << enum_name(r.target_mode, kTargets) << "\nepsilon=" << format_real(r.epsilon)
     << "\nfactor_mode=" << enum_name(r.factor_mode, kFactors) << "\na=" << format_real(r.a)
     << "\ncalibration_rounds=" << r.calibration_rounds << "\nmax_rounds=" << r.max_rounds << "\nseed=" << r.seed
     << "\nsweep_seeds=" << r.sweep_seeds << "\n";
  return os.str();
}

inline std::string config_digest(const RunConfig& r) {
  const std::string text = canonical_string(r);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) h = rng::mix64(h ^ c);
  char buf[17];
  auto [p, ec] = std::to_chars(buf, buf + 16, h, 16);
  std::string hex(buf, p);
  return std::string(16 - hex.size(), '0') + hex;
}

}  // namespace srpfl
