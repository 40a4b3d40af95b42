#pragma once

// Subcommands behind the `srpfl` executable. Each returns the process exit
// code: 0 success, 1 configuration error, 2 non-convergence, 3 failed
// verification.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "srpfl/config.hpp"
#include "srpfl/engine.hpp"
#include "srpfl/error.hpp"
#include "srpfl/linalg.hpp"
#include "srpfl/rng.hpp"
#include "srpfl/straggler.hpp"
#include "srpfl/trace_io.hpp"

namespace srpfl::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kNonConvergence = 2, kVerifyFailed = 3 };

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::vector<std::string> overrides;
};

inline ConfigFile resolve_config(const Options& opt) {
  ConfigFile cfg = opt.config_path.empty() ? ConfigFile{} : load_config(opt.config_path);
  for (const auto& o : opt.overrides) apply_override(cfg, o);
  if (opt.seed) cfg.run.seed = *opt.seed;
  if (opt.out_dir) cfg.out_dir = *opt.out_dir;
  cfg.run.validate();
  return cfg;
}

inline std::ofstream open_output(const ConfigFile& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.out_dir);
  const auto path = std::filesystem::path(cfg.out_dir) / name;
  // Binary mode keeps LF line endings on every platform.
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::ConfigError, "cannot write '" + path.string() + "'");
  return out;
}

/// Maps library errors to exit codes and prints the diagnostic.
template <typename Body>
int guarded(std::ostream& err, Body body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "srpfl: " << e.what() << '\n';
    switch (e.code()) {
      case Errc::NonConvergence:
      case Errc::TargetNotReached: return kNonConvergence;
      default: return kConfigError;
    }
  } catch (const std::exception& e) {
    err << "srpfl: " << e.what() << '\n';
    return kConfigError;
  }
}

inline int cmd_run(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ConfigFile cfg = resolve_config(opt);
    const RunTrace trace = run(cfg.run);
    {
      auto csv = open_output(cfg, "trace.csv");
      write_trace_csv(csv, trace);
      auto summary = open_output(cfg, "summary.txt");
      write_summary(summary, trace);
    }
    write_summary(out, trace);
    // A zero target means a fixed-length run.
    if (trace.epsilon > 0.0) require_target(trace, "run");
    return static_cast<int>(kOk);
  });
}

inline int cmd_compare(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ConfigFile cfg = resolve_config(opt);
    const auto rows = compare_sweep(cfg.run, cfg.run.sweep_seeds, sweep_threads());
    double ts = 0.0, tf = 0.0, a = 0.0;
    auto csv = open_output(cfg, "compare.csv");
    csv << "seed,t_srpfl,t_fedrep,ratio,a,epsilon,rounds_srpfl,rounds_fedrep\n";
    out << "seed        t_srpfl        t_fedrep       ratio\n";
    for (const auto& r : rows) {
      csv << r.seed << ',' << format_sig(r.t_srpfl) << ',' << format_sig(r.t_fedrep) << ',' << format_sig(r.ratio)
          << ',' << format_sig(r.a) << ',' << format_sig(r.epsilon) << ',' << r.rounds_srpfl << ','
          << r.rounds_fedrep << '\n';
      out << std::left << std::setw(12) << r.seed << std::setw(15) << format_sig(r.t_srpfl, 6) << std::setw(15)
          << format_sig(r.t_fedrep, 6) << format_sig(r.ratio, 6) << '\n';
      ts += r.t_srpfl;
      tf += r.t_fedrep;
      a += r.a;
    }
    const double n = static_cast<double>(rows.size());
    ts /= n;
    tf /= n;
    a /= n;
    const double ratio = tf > 0.0 ? ts / tf : 1.0;
    out << "mean_t_srpfl    " << format_sig(ts) << '\n'
        << "mean_t_fedrep   " << format_sig(tf) << '\n'
        << "ratio           " << format_sig(ratio) << '\n';
    // C = c / lambda.
    const auto b = analytic_speedup_bound(cfg.run.N, cfg.run.n0, cfg.run.c_hat, a,
                                          cfg.run.comm_cost * cfg.run.lambda);
    out << "mean_a          " << format_sig(a) << '\n'
        << "bound_srpfl     " << format_sig(b.upper_srpfl / cfg.run.lambda) << "  (upper)\n"
        << "bound_fedrep    " << format_sig(b.lower_fedrep / cfg.run.lambda) << "  (lower)\n"
        << "bound_ratio     " << format_sig(b.ratio_bound) << '\n';
    return static_cast<int>(kOk);
  });
}

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Mean of the j-th smallest of N Exp(lambda) draws over `trials` trials.
inline double monte_carlo_order_stat(std::size_t n_total, std::size_t j, double lambda, std::size_t trials,
                                     std::uint64_t seed) {
  rng::CounterRng gen(seed, rng::Stream::Oracle, {n_total, j});
  std::exponential_distribution<double> expo(lambda);
  std::vector<double> draws(n_total);
  double sum = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& x : draws) x = expo(gen);
    std::nth_element(draws.begin(), draws.begin() + static_cast<std::ptrdiff_t>(j - 1), draws.end());
    sum += draws[j - 1];
  }
  return sum / static_cast<double>(trials);
}

inline std::vector<CheckResult> kernel_checks(std::uint64_t seed) {
  std::vector<CheckResult> out;
  rng::CounterRng gen(seed, rng::Stream::Oracle, {7});
  std::normal_distribution<double> normal;
  auto gaussian = [&](Eigen::Index r, Eigen::Index c) {
    Matrix a(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) a(i, j) = normal(gen);
    return a;
  };
  double recon = 0.0, ortho = 0.0, self = 0.0, rot = 0.0;
  bool in_range = true;
  for (int t = 0; t < 50; ++t) {
    const Matrix a = gaussian(12, 3);
    const auto qr = thin_qr(a);
    recon = std::max(recon, (qr.q.matrix() * qr.r - a).norm() / a.norm());
    ortho = std::max(ortho, linalg::orthonormality_defect(qr.q.matrix()));
    const auto other = thin_qr(gaussian(12, 3)).q;
    const auto rotation = thin_qr(gaussian(3, 3)).q.matrix();
    const double dd = principal_angle_dist(qr.q, other);
    in_range = in_range && dd >= 0.0 && dd <= 1.0;
    self = std::max(self, principal_angle_dist(qr.q, qr.q));
    rot = std::max(rot, std::abs(principal_angle_dist(OrthonormalBasis(qr.q.matrix() * rotation, 1e-9), other) - dd));
  }
  out.push_back({"qr_reconstruction", recon <= 1e-9, "max rel err " + format_sig(recon, 3)});
  out.push_back({"qr_orthonormality", ortho <= 1e-10, "max defect " + format_sig(ortho, 3)});
  out.push_back({"dist_self_zero", self <= 1e-10, "max dist(b,b) " + format_sig(self, 3)});
  out.push_back({"dist_range", in_range, "dist in [0,1]"});
  out.push_back({"dist_rotation_invariance", rot <= 1e-10, "max change " + format_sig(rot, 3)});
  return out;
}

inline int cmd_verify(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ConfigFile cfg = resolve_config(opt);
    std::vector<CheckResult> checks;

    const RunTrace trace = run(cfg.run);
    const auto gt = ground_truth_for(cfg.run);
    const auto report = verify_contraction(trace, gt, trace.eta, cfg.run.n0);
    checks.push_back({"contraction", report.satisfied_fraction >= 0.95 && report.worst_violation <= 0.05,
                      "satisfied " + format_sig(report.satisfied_fraction, 4) + " worst violation " +
                          format_sig(report.worst_violation, 3) + " over " +
                          std::to_string(report.entries.size()) + " rounds"});

    const double mc = monte_carlo_order_stat(64, 32, 1.0, 100000, cfg.run.seed);
    const double exact = expected_order_stat(64, 32, 1.0);
    const double rel = std::abs(mc - exact) / exact;
    checks.push_back({"order_statistic", rel <= 0.02,
                      "N=64 j=32 mc " + format_sig(mc, 6) + " exact " + format_sig(exact, 6)});

    for (auto& c : kernel_checks(cfg.run.seed)) checks.push_back(std::move(c));

    bool all = true;
    for (const auto& c : checks) {
      out << (c.pass ? "PASS " : "FAIL ") << c.name << "  " << c.detail << '\n';
      all = all && c.pass;
    }
    if (!all) {
      for (const auto& c : checks)
        if (!c.pass) err << "srpfl: verification failed: " << c.name << '\n';
      return static_cast<int>(kVerifyFailed);
    }
    return static_cast<int>(kOk);
  });
}

inline int cmd_gen(const Options& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ConfigFile cfg = resolve_config(opt);
    const auto gt = ground_truth_for(cfg.run);
    auto file = open_output(cfg, "ground_truth.txt");
    write_ground_truth(file, gt);
    out << "wrote " << (std::filesystem::path(cfg.out_dir) / "ground_truth.txt").string() << '\n';
    return static_cast<int>(kOk);
  });
}

}  // namespace srpfl::cli
