#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onefifth/strategies.hpp"

namespace onefifth::csv {

/// 17 significant digits; nan/inf spelled as such.
inline std::string format(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// "# key=value" lines that make an output file self-describing.
using Header = std::vector<std::pair<std::string, std::string>>;

inline void write_header(std::ostream& out, const Header& header) {
  for (const auto& [k, v] : header) out << "# " << k << '=' << v << '\n';
}

inline constexpr const char* kTraceColumns = "t,evals,f,dist,f_mu,sigma,sigma_bar,potential,cond_sigma,accepted";

inline void write_trace_row(std::ostream& out, const TraceRow& r) {
  out << r.t << ',' << r.evals << ',' << format(r.f) << ',' << format(r.dist) << ',' << format(r.f_mu) << ','
      << format(r.sigma) << ',' << format(r.sigma_bar) << ',' << format(r.potential) << ',' << format(r.cond_sigma)
      << ',' << (r.accepted ? 1 : 0) << '\n';
}

inline void write_trace(std::ostream& out, const Trace& trace, const Header& header = {}) {
  write_header(out, header);
  out << kTraceColumns << '\n';
  for (const auto& row : trace.rows) write_trace_row(out, row);
}

inline std::ofstream open(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

}  // namespace onefifth::csv
