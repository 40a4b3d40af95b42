#pragma once

// Client timing models, fastest-n selection, round timing, and the closed-form
// scheduling quantities for exponential computation times: order-statistic
// means, optimal doubling points, per-stage round budgets, target accuracy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <vector>

#include "srpfl/error.hpp"
#include "srpfl/rng.hpp"

namespace srpfl {

enum class SpeedKind {
  Fixed,     // one Exp(lambda) value per client, reused every round
  Dynamic,   // fresh Exp(lambda_i) each round, lambda_i ~ U[1/N, 1] drawn once
  StageIid,  // fresh Exp(lambda) per client at the start of every stage
};

struct SpeedModel {
  SpeedKind kind = SpeedKind::Fixed;
  double lambda = 1.0;
  std::vector<double> per_client_rates;  // Dynamic only, size M
  double comm_cost = 0.0;
  std::uint64_t seed = 0;
};

inline SpeedModel make_speed_model(SpeedKind kind, double lambda, double comm_cost, std::size_t num_clients,
                                   std::size_t n_sampled, std::uint64_t seed) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw Error(Errc::InvalidArgument, "lambda must be > 0");
  if (!(comm_cost >= 0.0) || !std::isfinite(comm_cost)) throw Error(Errc::InvalidArgument, "comm_cost must be >= 0");
  SpeedModel model{kind, lambda, {}, comm_cost, seed};
  if (kind == SpeedKind::Dynamic) {
    if (n_sampled < 1) throw Error(Errc::InvalidArgument, "N must be >= 1");
    rng::CounterRng gen(seed, rng::Stream::SpeedRates);
    std::uniform_real_distribution<double> uni(1.0 / static_cast<double>(n_sampled), 1.0);
    model.per_client_rates.resize(num_clients);
    for (double& r : model.per_client_rates) {
      r = uni(gen);
      if (!(r > 0.0)) r = 1.0 / static_cast<double>(n_sampled);
    }
  }
  return model;
}

/// Computation times of the given clients in (stage, round).
inline std::vector<double> draw_client_times(const SpeedModel& model, std::uint64_t stage, std::uint64_t round,
                                             std::span<const std::size_t> clients) {
  std::vector<double> times;
  times.reserve(clients.size());
  for (std::size_t c : clients) {
    const auto cid = static_cast<std::uint64_t>(c);
    double rate = model.lambda;
    std::optional<rng::CounterRng> gen;
    switch (model.kind) {
      case SpeedKind::Fixed:
        gen.emplace(model.seed, rng::Stream::Speed, std::initializer_list<std::uint64_t>{cid});
        break;
      case SpeedKind::Dynamic:
        if (c >= model.per_client_rates.size())
          throw Error(Errc::ClientOutOfRange, "no rate for client " + std::to_string(c));
        rate = model.per_client_rates[c];
        gen.emplace(model.seed, rng::Stream::Speed, std::initializer_list<std::uint64_t>{1, round, cid});
        break;
      case SpeedKind::StageIid:
        gen.emplace(model.seed, rng::Stream::Speed, std::initializer_list<std::uint64_t>{2, stage, cid});
        break;
    }
    std::exponential_distribution<double> expo(rate);
    double t = expo(*gen);
    // Exp draws of exactly 0 are possible in principle; times must stay positive.
    if (!(t > 0.0)) t = std::numeric_limits<double>::min();
    times.push_back(t);
  }
  return times;
}

/// Times for clients 0..N-1 in a given round (stage 0).
inline std::vector<double> draw_round_times(const SpeedModel& model, std::uint64_t round, std::size_t n_clients) {
  std::vector<std::size_t> ids(n_clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return draw_client_times(model, 0, round, ids);
}

/// Positions of the n smallest times, fastest first; ties go to the lower index.
inline std::vector<std::size_t> select_fastest(std::span<const double> times, std::size_t n) {
  if (n < 1 || n > times.size()) {
    std::ostringstream os;
    os << "n = " << n << " with " << times.size() << " candidates";
    throw Error(Errc::NTooLarge, os.str());
  }
  std::vector<std::size_t> idx(times.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto by_time = [&](std::size_t a, std::size_t b) {
    return times[a] < times[b] || (times[a] == times[b] && a < b);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(), by_time);
  idx.resize(n);
  return idx;
}

/// The server waits for the slowest participant, then pays communication.
inline double round_time(std::span<const double> participant_times, double comm_cost) {
  if (participant_times.empty()) throw Error(Errc::EmptyParticipants, "round_time needs participants");
  return *std::max_element(participant_times.begin(), participant_times.end()) + comm_cost;
}

/// Mean of the j-th smallest of N i.i.d. Exp(lambda): (1/lambda) sum_{i=N-j+1}^{N} 1/i.
inline double expected_order_stat(std::size_t n_total, std::size_t j, double lambda) {
  if (j < 1 || j > n_total) {
    std::ostringstream os;
    os << "order statistic j = " << j << " outside [1, " << n_total << "]";
    throw Error(Errc::IndexOutOfRange, os.str());
  }
  if (!(lambda > 0.0)) throw Error(Errc::InvalidArgument, "lambda must be > 0");
  double sum = 0.0;
  // Smallest terms first.
  for (std::size_t i = n_total; i >= n_total - j + 1; --i) sum += 1.0 / static_cast<double>(i);
  return sum / lambda;
}

namespace detail {

inline void check_contraction_factor(double a) {
  if (!(a > 0.0 && a <= 0.25)) {
    std::ostringstream os;
    os << "contraction factor a = " << a << " outside (0, 1/4]";
    throw Error(Errc::InvalidArgument, os.str());
  }
}

/// E[T_{min(N, n0 2^r)}] under the model's rate.
inline double ladder_time(std::size_t r, std::size_t n0, const SpeedModel& model, std::size_t n_total) {
  const double n = std::ldexp(static_cast<double>(n0), static_cast<int>(r));
  const std::size_t j = n >= static_cast<double>(n_total) ? n_total : static_cast<std::size_t>(n);
  return expected_order_stat(n_total, j, model.lambda);
}

inline bool ladder_fits(std::size_t r, std::size_t n0, std::size_t n_total) {
  return std::ldexp(static_cast<double>(n0), static_cast<int>(r)) <= static_cast<double>(n_total);
}

/// Limit of the contraction recursion with n/n0 = ratio: a / (sqrt(ratio (1-a)) (1 - sqrt(1-a))).
inline double noise_floor(double a, double ratio) {
  return a / (std::sqrt(ratio * (1.0 - a)) * (1.0 - std::sqrt(1.0 - a)));
}

inline void check_gap(double gap, double scale) {
  if (!(gap > std::numeric_limits<double>::epsilon() * std::max(1.0, scale)))
    throw Error(Errc::ZeroGap, "order-statistic gap underflows");
}

/// X_{r+1} from the expected times of rungs r and r+1.
inline double doubling_point_from_times(double a, std::size_t r, double t_r, double t_next, double comm_cost) {
  const double gap = t_next - t_r;
  check_gap(gap, t_next);
  const double floor_r = noise_floor(a, std::ldexp(1.0, static_cast<int>(r)));
  return floor_r * (1.0 + (t_r + comm_cost) * (1.0 - 1.0 / std::sqrt(2.0)) / gap);
}

/// t^r from the expected times of rungs r-1, r, r+1.
inline std::size_t budget_from_times(double a, double t_prev, double t_r, double t_next) {
  const double lower_gap = t_r - t_prev;
  const double upper_gap = t_next - t_r;
  check_gap(lower_gap, t_next);
  check_gap(upper_gap, t_next);
  const double arg = std::sqrt(2.0) * upper_gap / lower_gap;
  if (arg <= 1.0) return 1;
  const double t = 2.0 * std::log(arg) / std::log(1.0 / (1.0 - a));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t)));
}

}  // namespace detail

/// X_i: the largest distance at which n0 * 2^i participants is optimal.
/// X_0 = +inf; for i >= 1 with r = i - 1,
///   X_{r+1} = floor_r * (1 + (E[T_{n0 2^r}] + C)(1 - 1/sqrt2) / (E[T_{n0 2^{r+1}}] - E[T_{n0 2^r}])).
inline double optimal_doubling_point(std::size_t i, double a, std::size_t n0, const SpeedModel& model,
                                     std::size_t n_total) {
  if (i == 0) return std::numeric_limits<double>::infinity();
  detail::check_contraction_factor(a);
  if (n0 < 1 || !detail::ladder_fits(i, n0, n_total))
    throw Error(Errc::InvalidArgument, "doubling point needs n0 * 2^i <= N");
  const std::size_t r = i - 1;
  return detail::doubling_point_from_times(a, r, detail::ladder_time(r, n0, model, n_total),
                                           detail::ladder_time(r + 1, n0, model, n_total), model.comm_cost);
}

/// Round budget t^r of stage r >= 1:
///   ceil( 2 log( sqrt2 (E[T_{n0 2^{r+1}}] - E[T_{n0 2^r}]) / (E[T_{n0 2^r}] - E[T_{n0 2^{r-1}}]) ) / log(1/(1-a)) ),
/// never below 1.
inline std::size_t rounds_per_stage(std::size_t r, double a, std::size_t n0, const SpeedModel& model,
                                    std::size_t n_total) {
  if (r < 1) throw Error(Errc::InvalidArgument, "rounds_per_stage needs r >= 1");
  detail::check_contraction_factor(a);
  if (n0 < 1 || !detail::ladder_fits(r + 1, n0, n_total))
    throw Error(Errc::InvalidArgument, "rounds_per_stage needs n0 * 2^(r+1) <= N");
  return detail::budget_from_times(a, detail::ladder_time(r - 1, n0, model, n_total),
                                   detail::ladder_time(r, n0, model, n_total),
                                   detail::ladder_time(r + 1, n0, model, n_total));
}

inline void check_c_hat(double c_hat) {
  if (!(c_hat > 1.0 && c_hat < std::sqrt(2.0))) {
    std::ostringstream os;
    os << "c_hat = " << c_hat << " outside (1, sqrt 2)";
    throw Error(Errc::CHatOutOfRange, os.str());
  }
}

/// epsilon = c_hat * a / (sqrt((N/n0)(1-a)) (1 - sqrt(1-a))): c_hat times the
/// N-participant noise floor of the contraction recursion.
inline double target_accuracy(double a, std::size_t n_total, std::size_t n0, double c_hat) {
  check_c_hat(c_hat);
  detail::check_contraction_factor(a);
  if (n0 < 1 || n0 > n_total) throw Error(Errc::InvalidArgument, "need 1 <= n0 <= N");
  return c_hat * detail::noise_floor(a, static_cast<double>(n_total) / static_cast<double>(n0));
}

/// Final-stage round count ceil(2 log(1/(c_hat-1)) / log(1/(1-a))).
inline std::size_t final_stage_rounds(double a, double c_hat) {
  check_c_hat(c_hat);
  detail::check_contraction_factor(a);
  const double t = 2.0 * std::log(1.0 / (c_hat - 1.0)) / std::log(1.0 / (1.0 - a));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(t)));
}

enum class PlanMode { AnalyticBudget, DistanceThreshold, FixedBudget };

struct Stage {
  std::size_t participants = 0;  // n_r
  std::size_t budget = 0;        // tau_r; 0 means open-ended
  double exit_distance = 0.0;    // DistanceThreshold: leave the stage once dist <= X_{r+1}
};

struct StagePlan {
  std::size_t n0 = 0;
  std::vector<Stage> stages;
  PlanMode mode = PlanMode::AnalyticBudget;
};

/// Participant ladder n_r = min(N, n0 2^r), r = 0..ceil(log2(N/n0)).
inline std::vector<std::size_t> participant_ladder(std::size_t n_total, std::size_t n0) {
  if (n0 < 1 || n0 > n_total) throw Error(Errc::InvalidArgument, "need 1 <= n0 <= N");
  std::vector<std::size_t> ladder{n0};
  while (ladder.back() < n_total) ladder.push_back(std::min(n_total, ladder.back() * 2));
  return ladder;
}

/// `fixed_budget` is used by FixedBudget mode only.
inline StagePlan build_stage_plan(std::size_t n_total, std::size_t n0, double a, const SpeedModel& model,
                                  double c_hat, PlanMode mode, std::size_t fixed_budget = 1) {
  const auto ladder = participant_ladder(n_total, n0);
  StagePlan plan{n0, {}, mode};
  const std::size_t last = ladder.size() - 1;
  for (std::size_t n : ladder) plan.stages.push_back({n, 0, 0.0});

  switch (mode) {
    case PlanMode::FixedBudget:
      if (fixed_budget < 1) throw Error(Errc::InvalidArgument, "fixed budget must be >= 1");
      for (auto& s : plan.stages) s.budget = fixed_budget;
      break;
    case PlanMode::AnalyticBudget: {
      // ladder_time clamps at N, so a short last rung uses E[T_N] in place of
      // E[T_{n0 2^(r+1)}].
      plan.stages[last].budget = final_stage_rounds(a, c_hat);
      for (std::size_t r = 1; r < last; ++r)
        plan.stages[r].budget = detail::budget_from_times(a, detail::ladder_time(r - 1, n0, model, n_total),
                                                          detail::ladder_time(r, n0, model, n_total),
                                                          detail::ladder_time(r + 1, n0, model, n_total));
      if (last >= 1) plan.stages[0].budget = last >= 2 ? plan.stages[1].budget : plan.stages[last].budget;
      break;
    }
    case PlanMode::DistanceThreshold:
      detail::check_contraction_factor(a);
      for (std::size_t r = 0; r < last; ++r)
        plan.stages[r].exit_distance =
            detail::doubling_point_from_times(a, r, detail::ladder_time(r, n0, model, n_total),
                                              detail::ladder_time(r + 1, n0, model, n_total), model.comm_cost);
      break;
  }
  return plan;
}

}  // namespace srpfl
