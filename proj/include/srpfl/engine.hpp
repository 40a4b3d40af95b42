#pragma once

// Full runs of the doubling scheme (and of the full-participation baseline),
// wall-clock accounting, and the checks built on top of a run: the per-round
// contraction inequality, measured completion-time speedup, and the
// closed-form wall-clock bounds.
//
// The simulator has oracle access to B*: the stopping rule and every reported
// distance use the true principal-angle distance.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "srpfl/config.hpp"
#include "srpfl/error.hpp"
#include "srpfl/fedrep.hpp"
#include "srpfl/linalg.hpp"
#include "srpfl/rng.hpp"
#include "srpfl/straggler.hpp"
#include "srpfl/synthesis.hpp"

namespace srpfl {

struct RoundRecord {
  std::size_t stage = 0;
  std::size_t round = 0;
  std::size_t n = 0;
  double round_time = 0.0;
  double cumulative_time = 0.0;
  double dist = 0.0;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct RunTrace {
  std::vector<RoundRecord> records;
  std::vector<std::vector<std::size_t>> participants;  // client ids per record
  std::string config_digest;
  double init_dist = 1.0;
  double final_dist = 1.0;
  double e0 = 0.0;  // 1 - dist^2(B^0, B*)
  double eta = 0.0;
  double a = 0.0;
  double epsilon = 0.0;
  bool reached_target = false;
  bool init_gap_degenerate = false;

  double total_time() const noexcept { return records.empty() ? 0.0 : records.back().cumulative_time; }
};

/// Noise floor and contraction rate measured from a long full-participation run.
struct Calibration {
  double floor = 0.0;  // mean dist over the second half of the run
  double rate = 1.0;   // fitted per-round contraction rho of the transient
  double a = 0.0;      // 1 - rho^2, clamped to [1e-6, 1/4]
  std::size_t rounds = 0;
};

// ---------------------------------------------------------------------------
// Head-matrix spectra over client subsets

/// Largest sigma_max^2((1/sqrt n) W_I) over subsets with |I| >= n_min. The
/// maximum is attained at |I| = n_min; for a direction v the best subset is
/// the n_min rows with largest (w_i^T v)^2, so alternating (subset, top
/// eigenvector) ascent from every row direction is used. The value returned
/// is attained by an actual subset.
inline double max_subset_gram_eig(const Matrix& w, std::size_t n_min) {
  const auto rows = static_cast<std::size_t>(w.rows());
  if (n_min < 1 || n_min > rows) throw Error(Errc::InvalidArgument, "subset size outside [1, rows]");
  const auto n = static_cast<Eigen::Index>(n_min);
  double best = 0.0;
  std::vector<std::size_t> idx(rows);
  for (Eigen::Index start = 0; start < w.rows(); ++start) {
    Vector v = w.row(start).transpose();
    if (!(v.norm() > 0.0)) continue;
    v.normalize();
    double value = -1.0;
    for (int iter = 0; iter < 100; ++iter) {
      const Vector score = (w * v).array().square();
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      std::partial_sort(idx.begin(), idx.begin() + n, idx.end(),
                        [&](std::size_t a, std::size_t b) { return score(a) > score(b) || (score(a) == score(b) && a < b); });
      Matrix gram = Matrix::Zero(w.cols(), w.cols());
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto row = w.row(static_cast<Eigen::Index>(idx[j]));
        gram += row.transpose() * row;
      }
      gram /= static_cast<double>(n_min);
      Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
      const double top = es.eigenvalues()(w.cols() - 1);
      if (top <= value * (1.0 + 1e-14)) break;
      value = top;
      v = es.eigenvectors().col(w.cols() - 1);
    }
    best = std::max(best, value);
  }
  return best;
}

/// sigma_min((1/sqrt n) W_I) for one realized participant set.
inline double realized_sigma_min(const Matrix& w, std::span<const std::size_t> ids) {
  if (ids.empty()) throw Error(Errc::EmptyParticipants, "empty participant set");
  Matrix sub(static_cast<Eigen::Index>(ids.size()), w.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) sub.row(static_cast<Eigen::Index>(i)) = w.row(static_cast<Eigen::Index>(ids[i]));
  if (sub.rows() < sub.cols()) return 0.0;
  return sigma_min(sub / std::sqrt(static_cast<double>(ids.size())));
}

/// eta = 1 / (8 sigma_bar_max^2).
inline double auto_step_size(const Matrix& w_star, std::size_t n0) {
  return 1.0 / (8.0 * max_subset_gram_eig(w_star, n0));
}

// ---------------------------------------------------------------------------

inline GroundTruthModel ground_truth_for(const RunConfig& cfg) {
  return gen_ground_truth(static_cast<Eigen::Index>(cfg.d), static_cast<Eigen::Index>(cfg.k),
                          static_cast<Eigen::Index>(cfg.M), cfg.sigma, cfg.seed);
}

namespace engine_detail {

/// Clients sampled from [M] for a scope index (stage or round); sorted ascending.
inline std::vector<std::size_t> sample_clients(const RunConfig& cfg, std::uint64_t scope_index) {
  std::vector<std::size_t> ids(cfg.M);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (cfg.N == cfg.M) return ids;
  rng::CounterRng gen(cfg.seed, rng::Stream::ClientSample, {scope_index});
  for (std::size_t i = 0; i < cfg.N; ++i) {
    const std::uint64_t span = cfg.M - i;
    const std::size_t j = i + static_cast<std::size_t>(gen() % span);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(cfg.N);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::vector<std::size_t> clients_for(const RunConfig& cfg, std::size_t stage, std::size_t round) {
  return sample_clients(cfg, cfg.resample_scope == ResampleScope::PerStage ? stage : round);
}

struct Setup {
  GroundTruthModel gt;
  SpeedModel speed;
  double eta = 0.0;
  std::uint64_t data_seed = 0;
};

inline Setup make_setup(const RunConfig& cfg, std::uint64_t data_seed) {
  Setup s{ground_truth_for(cfg),
          make_speed_model(cfg.speed, cfg.lambda, cfg.comm_cost, cfg.M, cfg.N, cfg.seed), 0.0, data_seed};
  s.eta = cfg.eta ? *cfg.eta : auto_step_size(s.gt.w_star, cfg.n0);
  return s;
}

/// a = eta E0 sigma_min^2 / 2, with sigma_min the smallest over the ladder of
/// participant sets realized by the first round's timing draw.
inline double oracle_factor(const RunConfig& cfg, const Setup& s, double e0) {
  double smin = std::numeric_limits<double>::infinity();
  const auto ladder = participant_ladder(cfg.N, cfg.n0);
  for (std::size_t r = 0; r < ladder.size(); ++r) {
    const auto clients = clients_for(cfg, r, 1);
    const auto times = draw_client_times(s.speed, r, 1, clients);
    const auto pos = select_fastest(times, ladder[r]);
    std::vector<std::size_t> ids;
    for (std::size_t p : pos) ids.push_back(clients[p]);
    smin = std::min(smin, realized_sigma_min(s.gt.w_star, ids));
  }
  return 0.5 * s.eta * e0 * smin * smin;
}

inline RunTrace simulate(const RunConfig& cfg, const Setup& s, const Calibration* calib) {
  RunTrace trace;
  trace.config_digest = config_digest(cfg);
  trace.eta = s.eta;

  const auto init_clients = clients_for(cfg, 0, 1);
  EigResult init = method_of_moments_init(s.gt, init_clients, static_cast<Eigen::Index>(cfg.m), s.data_seed);
  trace.init_gap_degenerate = init.gap_degenerate;
  LearningState state{init.basis, Matrix::Zero(s.gt.num_clients(), s.gt.k()), 0};
  trace.init_dist = principal_angle_dist(state.b, s.gt.b_star);
  trace.final_dist = trace.init_dist;
  trace.e0 = 1.0 - trace.init_dist * trace.init_dist;

  const bool needs_calibration =
      cfg.target_mode == TargetMode::Calibrated || cfg.factor_mode == FactorMode::Calibrated;
  if (needs_calibration && calib == nullptr)
    throw Error(Errc::InvalidArgument, "calibrated target or factor requested without a calibration");

  switch (cfg.factor_mode) {
    case FactorMode::Oracle: trace.a = oracle_factor(cfg, s, trace.e0); break;
    case FactorMode::Calibrated: trace.a = calib->a; break;
    case FactorMode::Fixed: trace.a = cfg.a; break;
  }
  switch (cfg.target_mode) {
    case TargetMode::Analytic: trace.epsilon = target_accuracy(trace.a, cfg.N, cfg.n0, cfg.c_hat); break;
    case TargetMode::Calibrated: trace.epsilon = cfg.c_hat * calib->floor; break;
    case TargetMode::Fixed: trace.epsilon = cfg.epsilon; break;
  }

  StagePlan plan;
  if (cfg.algorithm == Algorithm::Srpfl) {
    plan = build_stage_plan(cfg.N, cfg.n0, trace.a, s.speed, cfg.c_hat, cfg.plan_mode, cfg.fixed_budget);
  } else {
    plan.n0 = cfg.N;
    plan.mode = cfg.plan_mode;
    plan.stages.push_back({cfg.N, cfg.plan_mode == PlanMode::FixedBudget ? cfg.fixed_budget : 0, 0.0});
  }

  if (trace.init_dist <= trace.epsilon) {
    trace.reached_target = true;
    return trace;
  }

  const auto m = static_cast<Eigen::Index>(cfg.m);
  double cumulative = 0.0;
  std::size_t round = 0;
  const std::size_t last = plan.stages.size() - 1;
  for (std::size_t r = 0; r <= last; ++r) {
    const Stage& stage = plan.stages[r];
    const bool is_last = r == last;
    for (std::size_t local = 1;; ++local) {
      if (round >= cfg.max_rounds) return trace;
      ++round;
      const auto clients = clients_for(cfg, r, round);
      const auto times = draw_client_times(s.speed, r, round, clients);
      const auto pos = select_fastest(times, stage.participants);
      std::vector<std::size_t> ids;
      std::vector<double> chosen_times;
      ids.reserve(pos.size());
      chosen_times.reserve(pos.size());
      for (std::size_t p : pos) {
        ids.push_back(clients[p]);
        chosen_times.push_back(times[p]);
      }
      try {
        state = fedrep_round(state, s.gt, ids, m, s.eta, s.data_seed);
      } catch (const Error& e) {
        e.rethrow_with("stage " + std::to_string(r) + ", round " + std::to_string(round));
      }
      const double rt = round_time(chosen_times, s.speed.comm_cost);
      cumulative += rt;
      const double dist = principal_angle_dist(state.b, s.gt.b_star);
      trace.records.push_back({r, round, stage.participants, rt, cumulative, dist});
      std::sort(ids.begin(), ids.end());
      trace.participants.push_back(std::move(ids));
      trace.final_dist = dist;
      if (dist <= trace.epsilon) {
        trace.reached_target = true;
        return trace;
      }
      bool leave = false;
      switch (plan.mode) {
        case PlanMode::FixedBudget: leave = stage.budget > 0 && local >= stage.budget; break;
        case PlanMode::AnalyticBudget: leave = !is_last && local >= stage.budget; break;
        case PlanMode::DistanceThreshold: leave = !is_last && dist <= stage.exit_distance; break;
      }
      if (leave) break;
    }
  }
  return trace;
}

}  // namespace engine_detail

/// Long full-participation run with an independent data stream; measures the
/// N-client noise floor and the transient contraction rate.
inline Calibration calibrate(const RunConfig& cfg) {
  cfg.validate();
  RunConfig probe = cfg;
  probe.algorithm = Algorithm::FedRepFull;
  probe.plan_mode = PlanMode::FixedBudget;
  probe.fixed_budget = cfg.calibration_rounds;
  probe.max_rounds = cfg.calibration_rounds;
  probe.target_mode = TargetMode::Fixed;
  probe.epsilon = 0.0;
  probe.factor_mode = FactorMode::Fixed;
  probe.a = 0.25;
  const auto setup = engine_detail::make_setup(probe, rng::stream_key(cfg.seed, rng::Stream::Calibration));
  const RunTrace t = engine_detail::simulate(probe, setup, nullptr);

  Calibration c;
  c.rounds = t.records.size();
  const std::size_t half = t.records.size() / 2;
  double tail = 0.0;
  for (std::size_t i = half; i < t.records.size(); ++i) tail += t.records[i].dist;
  c.floor = tail / static_cast<double>(t.records.size() - half);

  // Transient: from the start until dist first drops to twice the floor.
  std::vector<double> xs{0.0}, ys{std::log(std::max(t.init_dist, 1e-300))};
  for (const auto& rec : t.records) {
    if (rec.dist <= 2.0 * c.floor && xs.size() >= 3) break;
    xs.push_back(static_cast<double>(rec.round));
    ys.push_back(std::log(std::max(rec.dist, 1e-300)));
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
  c.rate = std::exp(std::min(slope, 0.0));
  c.a = std::clamp(1.0 - c.rate * c.rate, 1e-6, 0.25);
  return c;
}

/// Run one configuration. Calibrated target/factor modes use `calib` when
/// given, otherwise calibrate first.
inline RunTrace run(const RunConfig& cfg, const Calibration* calib = nullptr) {
  cfg.validate();
  std::optional<Calibration> own;
  const bool needs_calibration =
      cfg.target_mode == TargetMode::Calibrated || cfg.factor_mode == FactorMode::Calibrated;
  if (needs_calibration && calib == nullptr) {
    own = calibrate(cfg);
    calib = &*own;
  }
  const auto setup = engine_detail::make_setup(cfg, cfg.seed);
  return engine_detail::simulate(cfg, setup, calib);
}

inline void require_target(const RunTrace& trace, const std::string& name) {
  if (!trace.reached_target) {
    std::ostringstream os;
    os << name << " ended after " << trace.records.size() << " rounds at dist " << trace.final_dist
       << " > epsilon " << trace.epsilon;
    throw Error(Errc::NonConvergence, os.str());
  }
}

// ---------------------------------------------------------------------------
// Contraction inequality

struct ContractionEntry {
  std::size_t round = 0;
  std::size_t n = 0;
  double a = 0.0;
  double lhs = 0.0;  // dist^{t+1}
  double rhs = 0.0;  // dist^t sqrt(1-a) + a / sqrt((n/n0)(1-a))
  bool satisfied = false;
};

struct ContractionReport {
  std::vector<ContractionEntry> entries;
  double satisfied_fraction = 1.0;
  double worst_violation = 0.0;  // max(0, lhs - rhs)
};

/// Per-round check of dist^{t+1} <= dist^t sqrt(1-a_t) + a_t / sqrt((n/n0)(1-a_t))
/// with a_t = eta E0 sigma_min^2((1/sqrt n) W*_I) / 2 on the realized set I.
inline ContractionReport verify_contraction(const RunTrace& trace, const GroundTruthModel& gt, double eta,
                                            std::size_t n0) {
  if (trace.participants.size() != trace.records.size())
    throw Error(Errc::InvalidArgument, "trace lacks participant sets");
  ContractionReport report;
  std::size_t ok = 0;
  double prev = trace.init_dist;
  for (std::size_t t = 0; t < trace.records.size(); ++t) {
    const auto& rec = trace.records[t];
    const auto& ids = trace.participants[t];
    const double smin = realized_sigma_min(gt.w_star, ids);
    const double a = 0.5 * eta * trace.e0 * smin * smin;
    const double ratio = static_cast<double>(ids.size()) / static_cast<double>(n0);
    const double rhs = prev * std::sqrt(1.0 - a) + a / std::sqrt(ratio * (1.0 - a));
    const bool sat = rec.dist <= rhs;
    ok += sat ? 1 : 0;
    report.worst_violation = std::max(report.worst_violation, rec.dist - rhs);
    report.entries.push_back({rec.round, ids.size(), a, rec.dist, rhs, sat});
    prev = rec.dist;
  }
  if (!trace.records.empty())
    report.satisfied_fraction = static_cast<double>(ok) / static_cast<double>(trace.records.size());
  return report;
}

// ---------------------------------------------------------------------------
// Wall-clock comparison

struct SpeedupReport {
  double t_srpfl = 0.0;
  double t_baseline = 0.0;
  double ratio = 1.0;
};

/// First cumulative time at which the trace reaches dist <= epsilon (0 if the
/// initial representation already does).
inline double time_to_target(const RunTrace& trace, double epsilon, const std::string& name) {
  if (trace.init_dist <= epsilon) return 0.0;
  for (const auto& rec : trace.records)
    if (rec.dist <= epsilon) return rec.cumulative_time;
  throw Error(Errc::TargetNotReached, name + " never reaches epsilon = " + std::to_string(epsilon));
}

inline SpeedupReport speedup_report(const RunTrace& srpfl, const RunTrace& baseline, double epsilon) {
  SpeedupReport r;
  r.t_srpfl = time_to_target(srpfl, epsilon, "srpfl trace");
  r.t_baseline = time_to_target(baseline, epsilon, "baseline trace");
  if (r.t_baseline > 0.0) r.ratio = r.t_srpfl / r.t_baseline;
  else r.ratio = r.t_srpfl == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  return r;
}

struct SpeedupBound {
  double upper_srpfl = 0.0;   // in units of 1/lambda
  double lower_fedrep = 0.0;  // in units of 1/lambda
  double ratio_bound = 0.0;
};

/// E[T_SRPFL]   <= log N (6(c+1) + 4 log(1/(c_hat-1))) / log(1/(1-a)) / lambda
/// E[T_FedRep]  >= log N (log N + 2 log(1/(c_hat-1))) / log(1/(1-a)) / lambda
inline SpeedupBound analytic_speedup_bound(std::size_t n_total, std::size_t n0, double c_hat, double a, double c) {
  check_c_hat(c_hat);
  detail::check_contraction_factor(a);
  if (n0 < 1 || n0 > n_total) throw Error(Errc::InvalidArgument, "need 1 <= n0 <= N");
  if (!(c >= 0.0)) throw Error(Errc::InvalidArgument, "communication constant c must be >= 0");
  const double log_n = std::log(static_cast<double>(n_total));
  const double hard = std::log(1.0 / (c_hat - 1.0));
  const double rate = std::log(1.0 / (1.0 - a));
  SpeedupBound b;
  b.upper_srpfl = log_n * (6.0 * (c + 1.0) + 4.0 * hard) / rate;
  b.lower_fedrep = log_n * (log_n + 2.0 * hard) / rate;
  b.ratio_bound = (6.0 * (c + 1.0) + 4.0 * hard) / (log_n + 2.0 * hard);
  return b;
}

// ---------------------------------------------------------------------------
// Seed sweeps

struct SeedOutcome {
  std::uint64_t seed = 0;
  double t_srpfl = 0.0;
  double t_fedrep = 0.0;
  double ratio = 1.0;
  double a = 0.0;
  double epsilon = 0.0;
  std::size_t rounds_srpfl = 0;
  std::size_t rounds_fedrep = 0;
};

/// Both algorithms on the same seed with one shared calibration, so they chase
/// the same epsilon.
inline SeedOutcome compare_seed(const RunConfig& base) {
  RunConfig s = base;
  s.algorithm = Algorithm::Srpfl;
  RunConfig f = base;
  f.algorithm = Algorithm::FedRepFull;
  std::optional<Calibration> calib;
  if (base.target_mode == TargetMode::Calibrated || base.factor_mode == FactorMode::Calibrated)
    calib = calibrate(base);
  const Calibration* cp = calib ? &*calib : nullptr;
  const RunTrace ts = run(s, cp);
  const RunTrace tf = run(f, cp);
  const double eps = ts.epsilon;
  const auto rep = speedup_report(ts, tf, eps);
  return {base.seed, rep.t_srpfl, rep.t_baseline, rep.ratio, ts.a, eps, ts.records.size(), tf.records.size()};
}

/// Worker count from SRPFL_THREADS (default: hardware concurrency), at least 1.
inline std::size_t sweep_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SRPFL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v >= 1) n = static_cast<std::size_t>(v);
  }
  return n;
}

/// Apply `job` to every element of `inputs` on up to `threads` workers.
/// Results land at their input's index, so output order never depends on
/// scheduling. The first failing index's exception is rethrown.
template <typename In, typename Job>
auto parallel_map(const std::vector<In>& inputs, std::size_t threads, Job job) {
  using Out = decltype(job(inputs.front()));
  std::vector<Out> out(inputs.size());
  std::vector<std::exception_ptr> errors(inputs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < inputs.size(); i = next++) {
      try {
        out[i] = job(inputs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, inputs.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// compare_seed for seeds base.seed, base.seed + 1, ...
inline std::vector<SeedOutcome> compare_sweep(const RunConfig& base, std::size_t count, std::size_t threads) {
  std::vector<RunConfig> configs;
  for (std::size_t i = 0; i < count; ++i) {
    RunConfig c = base;
    c.seed = base.seed + i;
    configs.push_back(c);
  }
  return parallel_map(configs, threads, [](const RunConfig& c) { return compare_seed(c); });
}

}  // namespace srpfl
