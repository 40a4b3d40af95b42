#pragma once

// Text formats.
//
// Trace CSV (LF line endings, '.' decimal separator, 12 significant digits):
//   stage,round,n,round_time,cumulative_time,dist
//   0,1,4,1.73514218203,1.73514218203,0.284651231907
//
// Ground-truth file: a `srpfl-ground-truth 1` line, then `d k M`, `sigma`,
// `seed`, then d rows of B* and M rows of W*, all at 17 significant digits so
// a reload is exact.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "srpfl/engine.hpp"
#include "srpfl/error.hpp"
#include "srpfl/synthesis.hpp"

namespace srpfl {

inline constexpr std::string_view kTraceHeader = "stage,round,n,round_time,cumulative_time,dist";

/// printf("%.{digits}g") without locale dependence.
inline std::string format_sig(double v, int digits = 12) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, digits);
  if (ec != std::errc()) throw Error(Errc::InvalidArgument, "cannot format value");
  return std::string(buf, p);
}

inline void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << kTraceHeader << '\n';
  for (const auto& r : trace.records)
    out << r.stage << ',' << r.round << ',' << r.n << ',' << format_sig(r.round_time) << ','
        << format_sig(r.cumulative_time) << ',' << format_sig(r.dist) << '\n';
}

inline std::string trace_csv(const RunTrace& trace) {
  std::ostringstream os;
  write_trace_csv(os, trace);
  return os.str();
}

namespace io_detail {

template <typename T>
T parse_field(std::string_view text, std::size_t line, const char* name) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size())
    throw Error(Errc::InvalidArgument,
                "trace line " + std::to_string(line) + ": bad " + name + " '" + std::string(text) + "'");
  return v;
}

}  // namespace io_detail

inline std::vector<RoundRecord> parse_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw Error(Errc::InvalidArgument, "trace CSV header mismatch");
  std::vector<RoundRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != 6)
      throw Error(Errc::InvalidArgument, "trace line " + std::to_string(lineno) + ": expected 6 fields");
    using io_detail::parse_field;
    records.push_back({parse_field<std::size_t>(cells[0], lineno, "stage"),
                       parse_field<std::size_t>(cells[1], lineno, "round"),
                       parse_field<std::size_t>(cells[2], lineno, "n"),
                       parse_field<double>(cells[3], lineno, "round_time"),
                       parse_field<double>(cells[4], lineno, "cumulative_time"),
                       parse_field<double>(cells[5], lineno, "dist")});
  }
  return records;
}

inline void write_summary(std::ostream& out, const RunTrace& trace) {
  out << "config_digest   " << trace.config_digest << '\n'
      << "rounds          " << trace.records.size() << '\n'
      << "initial_dist    " << format_sig(trace.init_dist) << '\n'
      << "final_dist      " << format_sig(trace.final_dist) << '\n'
      << "total_time      " << format_sig(trace.total_time()) << '\n'
      << "epsilon         " << format_sig(trace.epsilon) << '\n'
      << "a               " << format_sig(trace.a) << '\n'
      << "eta             " << format_sig(trace.eta) << '\n'
      << "reached_target  " << (trace.reached_target ? "yes" : "no") << '\n';
  if (trace.init_gap_degenerate) out << "warning         initial eigengap degenerate\n";
}

inline void write_ground_truth(std::ostream& out, const GroundTruthModel& gt) {
  out << "srpfl-ground-truth 1\n" << gt.d() << ' ' << gt.k() << ' ' << gt.num_clients() << '\n'
      << format_sig(gt.sigma, 17) << '\n' << gt.seed << '\n';
  auto rows = [&](const Matrix& a) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) out << (j ? " " : "") << format_sig(a(i, j), 17);
      out << '\n';
    }
  };
  rows(gt.b_star.matrix());
  rows(gt.w_star);
}

inline GroundTruthModel read_ground_truth(std::istream& in) {
  std::string magic;
  int version = 0;
  Eigen::Index d = 0, k = 0, m = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  if (!(in >> magic >> version) || magic != "srpfl-ground-truth" || version != 1)
    throw Error(Errc::InvalidArgument, "not a ground-truth file");
  if (!(in >> d >> k >> m >> sigma >> seed) || d < 1 || k < 1 || k > d || m < 1)
    throw Error(Errc::InvalidArgument, "ground-truth file: bad header");
  Matrix b(d, k), w(m, k);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      if (!(in >> b(i, j))) throw Error(Errc::InvalidArgument, "ground-truth file: truncated B*");
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      if (!(in >> w(i, j))) throw Error(Errc::InvalidArgument, "ground-truth file: truncated W*");
  return {OrthonormalBasis(std::move(b)), std::move(w), sigma, seed};
}

}  // namespace srpfl
