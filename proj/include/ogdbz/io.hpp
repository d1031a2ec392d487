#pragma once

#include "ogdbz/constraints.hpp"
#include "ogdbz/ogd_bz.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ogdbz {

/// Raised on malformed input files; the message names the line.
class ParseError : public Error {
public:
  using Error::Error;
};

/// First-line tags of the CSV files. Bump the version when columns change.
inline constexpr const char* kTraceSchema = "ogdbz-trace/1";
inline constexpr const char* kMarginSchema = "ogdbz-margins/1";

/// Trace CSV in working coordinates:
///   # ogdbz-trace/1 n=<n> m=<m> H=<H>
///   t,x_0..,u_0..,w_0..,cost,proj_path,proj_kkt,proj_infeasibility,motion,motion_ok,M_0..
/// Rows t = 0..T, then a row t = T+1 carrying only x_{T+1}. H = 0 for traces without policies.
void write_trace_csv(std::ostream& os, const RolloutTrace& trace);
RolloutTrace read_trace_csv(std::istream& is);
std::string trace_csv_header(int n, int m, int H);

/// # ogdbz-margins/1, then t,x_margin_0..,u_margin_0.. for every stage.
void write_margins_csv(std::ostream& os, const MarginTrace& margins);

/// Columns of equal length under a plain header row; `t` is prepended as the row index.
void write_series_csv(std::ostream& os, const std::vector<std::string>& names,
                      const std::vector<const std::vector<double>*>& columns);

/// Human-readable listing of the layout and every absolute-value group.
void write_polytope(std::ostream& os, const LiftedPolytope& poly);

/// Splits one CSV line on commas (no quoting).
std::vector<std::string> split_csv(const std::string& line);

}  // namespace ogdbz
