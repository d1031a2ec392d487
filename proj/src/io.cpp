#include "ogdbz/io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace ogdbz {

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s, int line) {
  // istringstream accepts inf/nan spellings that from_chars does not.
  std::istringstream is(s);
  double v = 0.0;
  if (!(is >> v) || !(is >> std::ws).eof()) {
    std::ostringstream os;
    os << "line " << line << ": '" << s << "' is not a number";
    throw ParseError(os.str());
  }
  return v;
}

int parse_int(const std::string& s, int line) {
  int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    std::ostringstream os;
    os << "line " << line << ": '" << s << "' is not an integer";
    throw ParseError(os.str());
  }
  return v;
}

ProjectionPath parse_path(const std::string& s, int line) {
  for (auto p : {ProjectionPath::identity, ProjectionPath::warm_start, ProjectionPath::active_set,
                 ProjectionPath::splitting})
    if (s == to_string(p)) return p;
  throw ParseError("line " + std::to_string(line) + ": unknown projection path '" + s + "'");
}

}  // namespace

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trace_csv_header(int n, int m, int H) {
  std::ostringstream os;
  os << "t";
  for (int i = 0; i < n; ++i) os << ",x_" << i;
  for (int i = 0; i < m; ++i) os << ",u_" << i;
  for (int i = 0; i < n; ++i) os << ",w_" << i;
  os << ",cost,proj_path,proj_kkt,proj_infeasibility,motion,motion_ok";
  for (int i = 0; i < H * m * n; ++i) os << ",M_" << i;
  return os.str();
}

void write_trace_csv(std::ostream& os, const RolloutTrace& trace) {
  require(!trace.stages.empty(), "write_trace_csv: empty trace");
  const StageRecord& s0 = trace.stages.front();
  const int n = static_cast<int>(s0.x.size());
  const int m = static_cast<int>(s0.u.size());
  const int H = s0.M.H;
  os << "# " << kTraceSchema << " n=" << n << " m=" << m << " H=" << H << "\n";
  os << trace_csv_header(n, m, H) << "\n";
  for (const StageRecord& s : trace.stages) {
    require(s.M.H == H && s.x.size() == n && s.u.size() == m, "write_trace_csv: ragged trace");
    os << s.t;
    for (int i = 0; i < n; ++i) os << ',' << fmt(s.x(i));
    for (int i = 0; i < m; ++i) os << ',' << fmt(s.u(i));
    for (int i = 0; i < n; ++i) os << ',' << fmt(s.w(i));
    os << ',' << fmt(s.cost) << ',' << to_string(s.proj_path) << ',' << fmt(s.proj_kkt) << ','
       << fmt(s.proj_infeasibility) << ',' << fmt(s.motion) << ',' << (s.motion_ok ? 1 : 0);
    if (H > 0) {
      const Vec v = s.M.flatten();
      for (Eigen::Index i = 0; i < v.size(); ++i) os << ',' << fmt(v(i));
    }
    os << "\n";
  }
  os << trace.stages.size();
  for (int i = 0; i < n; ++i) os << ',' << fmt(trace.final_state(i));
  os << "\n";
}

RolloutTrace read_trace_csv(std::istream& is) {
  std::string line;
  int ln = 1;
  if (!std::getline(is, line)) throw ParseError("line 1: empty trace file");
  int n = -1, m = -1, H = -1;
  {
    std::istringstream hs(line);
    std::string hash, tag;
    hs >> hash >> tag;
    if (hash != "#" || tag != kTraceSchema)
      throw ParseError("line 1: expected '# " + std::string(kTraceSchema) + "'");
    std::string kv;
    while (hs >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ParseError("line 1: bad field '" + kv + "'");
      const int v = parse_int(kv.substr(eq + 1), 1);
      const std::string key = kv.substr(0, eq);
      if (key == "n") n = v;
      else if (key == "m") m = v;
      else if (key == "H") H = v;
      else throw ParseError("line 1: unknown field '" + key + "'");
    }
    if (n <= 0 || m <= 0 || H < 0) throw ParseError("line 1: n, m and H are required");
  }
  ++ln;
  if (!std::getline(is, line) || line != trace_csv_header(n, m, H))
    throw ParseError("line 2: column header does not match " + std::string(kTraceSchema));
  const size_t full = 1 + 2 * n + m + 6 + static_cast<size_t>(H * m * n);

  RolloutTrace tr;
  bool closed = false;
  while (std::getline(is, line)) {
    ++ln;
    if (line.empty() || line == "\r") continue;
    if (closed) throw ParseError("line " + std::to_string(ln) + ": data after the final state row");
    const auto f = split_csv(line);
    const int t = parse_int(f[0], ln);
    if (t != static_cast<int>(tr.stages.size()))
      throw ParseError("line " + std::to_string(ln) + ": stage index out of sequence");
    if (f.size() == static_cast<size_t>(1 + n)) {
      tr.final_state.resize(n);
      for (int i = 0; i < n; ++i) tr.final_state(i) = parse_double(f[1 + i], ln);
      closed = true;
      continue;
    }
    if (f.size() != full) {
      std::ostringstream os;
      os << "line " << ln << ": expected " << full << " fields, found " << f.size();
      throw ParseError(os.str());
    }
    StageRecord s;
    s.t = t;
    s.x.resize(n);
    s.u.resize(m);
    s.w.resize(n);
    size_t c = 1;
    for (int i = 0; i < n; ++i) s.x(i) = parse_double(f[c++], ln);
    for (int i = 0; i < m; ++i) s.u(i) = parse_double(f[c++], ln);
    for (int i = 0; i < n; ++i) s.w(i) = parse_double(f[c++], ln);
    s.cost = parse_double(f[c++], ln);
    s.proj_path = parse_path(f[c++], ln);
    s.proj_kkt = parse_double(f[c++], ln);
    s.proj_infeasibility = parse_double(f[c++], ln);
    s.motion = parse_double(f[c++], ln);
    const int ok = parse_int(f[c++], ln);
    if (ok != 0 && ok != 1) throw ParseError("line " + std::to_string(ln) + ": motion_ok must be 0 or 1");
    s.motion_ok = ok == 1;
    if (H > 0) {
      Vec v(H * m * n);
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = parse_double(f[c++], ln);
      s.M = DacPolicy::unflatten(v, H, m, n);
    }
    tr.total_cost += s.cost;
    if (!s.motion_ok) ++tr.motion_flags;
    tr.stages.push_back(std::move(s));
  }
  if (!closed) throw ParseError("line " + std::to_string(ln) + ": missing final state row");
  if (tr.stages.empty()) throw ParseError("trace has no stages");
  return tr;
}

void write_margins_csv(std::ostream& os, const MarginTrace& margins) {
  const int kx = margins.x_margin.empty() ? 0 : static_cast<int>(margins.x_margin.front().size());
  const int ku = margins.u_margin.empty() ? 0 : static_cast<int>(margins.u_margin.front().size());
  os << "# " << kMarginSchema << "\nt";
  for (int i = 0; i < kx; ++i) os << ",x_margin_" << i;
  for (int j = 0; j < ku; ++j) os << ",u_margin_" << j;
  os << "\n";
  for (size_t t = 0; t < margins.x_margin.size(); ++t) {
    os << t;
    for (int i = 0; i < kx; ++i) os << ',' << fmt(margins.x_margin[t](i));
    for (int j = 0; j < ku; ++j) os << ',' << fmt(margins.u_margin[t](j));
    os << "\n";
  }
}

void write_series_csv(std::ostream& os, const std::vector<std::string>& names,
                      const std::vector<const std::vector<double>*>& columns) {
  require(names.size() == columns.size(), "write_series_csv: names and columns differ in count");
  const size_t len = columns.empty() ? 0 : columns.front()->size();
  for (const auto* c : columns) require(c->size() == len, "write_series_csv: ragged columns");
  os << "t";
  for (const auto& nm : names) os << ',' << nm;
  os << "\n";
  for (size_t t = 0; t < len; ++t) {
    os << t;
    for (const auto* c : columns) os << ',' << fmt((*c)[t]);
    os << "\n";
  }
}

void write_polytope(std::ostream& os, const LiftedPolytope& poly) {
  const LiftedLayout& L = poly.layout;
  os << "lifted polytope: H=" << L.H << " m=" << L.m << " n=" << L.n << " kx=" << L.kx
     << " ku=" << L.ku << " epsilon=" << fmt(poly.epsilon) << " kappa=" << fmt(poly.kappa)
     << " gamma=" << fmt(poly.gamma) << " w_bar=" << fmt(poly.w_bar) << "\n";
  os << "variables: " << L.dim << " (M " << L.n_M << ", Yx " << L.n_Yx << ", Yu " << L.n_Yu
     << ", Z " << L.n_Z << ")  rows: " << L.rows << "  nonzeros: " << poly.C.nonZeros() << "\n";
  for (const AbsGroup& g : poly.groups) {
    const char* kind = g.kind == GroupKind::state ? "state" : g.kind == GroupKind::action ? "action" : "policy";
    os << kind << " " << g.index << ": " << fmt(g.weight) << " * sum of " << g.A.rows()
       << " |terms| <= " << fmt(poly.group_rhs(g)) << (g.buffered ? " (buffered)" : "") << "\n";
    for (Eigen::Index t = 0; t < g.A.rows(); ++t) {
      os << "  |";
      bool any = false;
      for (Eigen::Index k = 0; k < g.A.cols(); ++k) {
        if (g.A(t, k) == 0.0) continue;
        os << (any ? " + " : "") << fmt(g.A(t, k)) << "*m" << k;
        any = true;
      }
      if (g.b(t) != 0.0 || !any) os << (any ? " + " : "") << fmt(g.b(t));
      os << "|\n";
    }
  }
}

}  // namespace ogdbz
