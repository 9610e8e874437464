// Command-line front end: one subcommand per library feature, JSON/CSV/table
// output, fixed exit codes (0 ok, 2 invalid input, 3 not converged, 64 usage).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pnstein/bessel.hpp"
#include "pnstein/charfn.hpp"
#include "pnstein/density.hpp"
#include "pnstein/mc.hpp"
#include "pnstein/moments.hpp"
#include "pnstein/opsearch.hpp"
#include "pnstein/params.hpp"
#include "pnstein/stein.hpp"

using json = nlohmann::json;
using namespace pnstein;

namespace {

constexpr const char* kSchemaVersion = "1.0";
constexpr int kExitInvalid = 2;
constexpr int kExitNotConverged = 3;
constexpr int kExitUsage = 64;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string rational_string(const Rational& r) {
  std::ostringstream os;
  os << r;
  return os.str();
}

json rational_json(const Rational& r) {
  std::ostringstream num, den;
  num << boost::multiprecision::numerator(r);
  den << boost::multiprecision::denominator(r);
  return {{"num", num.str()}, {"den", den.str()}};
}

// Cell of a printed table: numbers get 17 significant digits.
using Cell = std::variant<double, long long, std::string>;

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
};

std::string cell_text(const Cell& c) {
  if (auto d = std::get_if<double>(&c)) return fmt17(*d);
  if (auto i = std::get_if<long long>(&c)) return std::to_string(*i);
  return std::get<std::string>(c);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

void print_csv(const Table& t, std::ostream& os) {
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << csv_escape(t.columns[i]);
  os << "\r\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << csv_escape(cell_text(r[i]));
    os << "\r\n";
  }
}

void print_aligned(const Table& t, std::ostream& os) {
  std::vector<std::size_t> width(t.columns.size());
  for (std::size_t i = 0; i < t.columns.size(); ++i) width[i] = t.columns[i].size();
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], cell_text(r[i]).size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      os << (i ? "  " : "");
      os << std::string(width[i] - std::min(width[i], cells[i].size()), ' ') << cells[i];
    }
    os << '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) {
    std::vector<std::string> cells;
    for (const auto& c : r) cells.push_back(cell_text(c));
    line(cells);
  }
}

double parse_real(const std::string& name, const std::string& text) {
  if (text.find('/') != std::string::npos) {
    try {
      return static_cast<double>(parse_rational(text));
    } catch (const Error&) {
      throw Error(ErrorCode::InvalidArgument, "--" + name + " expects a number, got '" + text + "'");
    }
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw Error(ErrorCode::InvalidArgument, "--" + name + " expects a number, got '" + text + "'");
  }
  return v;
}

std::vector<double> parse_grid(const std::string& spec) {
  // lo:hi:count, inclusive endpoints
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 3) throw Error(ErrorCode::InvalidArgument, "--grid expects lo:hi:count");
  const double lo = parse_real("grid", parts[0]);
  const double hi = parse_real("grid", parts[1]);
  const double cnt = parse_real("grid", parts[2]);
  if (cnt < 1 || cnt != std::floor(cnt)) throw Error(ErrorCode::InvalidArgument, "--grid count must be a positive integer");
  const int m = static_cast<int>(cnt);
  std::vector<double> out;
  for (int i = 0; i < m; ++i) out.push_back(m == 1 ? lo : lo + (hi - lo) * i / (m - 1));
  return out;
}

// Distribution parameters as entered, kept as text so that exact commands can
// read them as rationals.
struct ParamText {
  std::string mu_x = "0", mu_y = "0", sigma_x = "1", sigma_y = "1", rho = "0";
  int n = 1;
};

struct ParamOptions {
  ParamText values;
  std::string params_json;
  std::map<std::string, CLI::Option*> opts;
};

void add_param_options(CLI::App* sub, ParamOptions& po) {
  po.opts["mu_x"] = sub->add_option("--mu-x", po.values.mu_x, "mean of X")->capture_default_str();
  po.opts["mu_y"] = sub->add_option("--mu-y", po.values.mu_y, "mean of Y")->capture_default_str();
  po.opts["sigma_x"] = sub->add_option("--sigma-x", po.values.sigma_x, "standard deviation of X")->capture_default_str();
  po.opts["sigma_y"] = sub->add_option("--sigma-y", po.values.sigma_y, "standard deviation of Y")->capture_default_str();
  po.opts["rho"] = sub->add_option("--rho", po.values.rho, "correlation of X and Y")->capture_default_str();
  po.opts["n"] = sub->add_option("--n", po.values.n, "number of averaged products")->capture_default_str();
  sub->add_option("--params-json", po.params_json,
                  "JSON object (or file holding one) with mu_x, mu_y, sigma_x, sigma_y, rho, n; "
                  "explicit flags take precedence");
}

ParamText resolve_params(const ParamOptions& po) { return po.values; }

MeanParams to_params(const ParamText& t) {
  return MeanParams::validate(parse_real("mu-x", t.mu_x), parse_real("mu-y", t.mu_y), parse_real("sigma-x", t.sigma_x),
                              parse_real("sigma-y", t.sigma_y), parse_real("rho", t.rho), t.n);
}

ExactMeanParams to_exact_params(const ParamText& t) {
  return ExactMeanParams::validate(parse_rational(t.mu_x), parse_rational(t.mu_y), parse_rational(t.sigma_x),
                                   parse_rational(t.sigma_y), parse_rational(t.rho), t.n);
}

json echo_params(const MeanParams& mp) {
  const auto& p = mp.base();
  return {{"mu_x", p.mu_x()}, {"mu_y", p.mu_y()}, {"sigma_x", p.sigma_x()},
          {"sigma_y", p.sigma_y()}, {"rho", p.rho()},   {"n", mp.n()}};
}

// Exact commands echo the parameters as entered so that fractions survive.
json echo_params(const ParamText& t) {
  return {{"mu_x", t.mu_x}, {"mu_y", t.mu_y}, {"sigma_x", t.sigma_x},
          {"sigma_y", t.sigma_y}, {"rho", t.rho}, {"n", t.n}};
}

struct Output {
  bool json = false;
  bool csv = false;
};

void add_output_options(CLI::App* sub, Output& out) {
  auto* j = sub->add_flag("--json", out.json, "emit a JSON envelope");
  auto* c = sub->add_flag("--csv", out.csv, "emit CSV");
  j->excludes(c);
}

// What a subcommand hands back for printing.
struct CommandResult {
  json params_echo = json::object();
  json results = json::object();
  Table table;
  std::vector<std::string> notes;  // printed under the table in text mode
};

void emit(const std::string& command, const CommandResult& r, const Output& out, long long ms) {
  if (out.json) {
    json env = {{"schema_version", kSchemaVersion},
                {"command", command},
                {"params_echo", r.params_echo},
                {"results", r.results},
                {"timing_ms", ms}};
    std::cout << env.dump(2) << '\n';
  } else if (out.csv) {
    print_csv(r.table, std::cout);
  } else {
    print_aligned(r.table, std::cout);
    for (const auto& n : r.notes) std::cout << n << '\n';
  }
}

// ---------------------------------------------------------------- handlers

struct PdfOptions {
  std::vector<std::string> xs;
  std::string grid;
  std::string method = "auto";
  double rel_tol = 1e-14;
  int max_outer = 300;
  bool no_fallback = false;
};

std::vector<double> collect_points(const std::vector<std::string>& xs, const std::string& grid, const char* name) {
  std::vector<double> pts;
  for (const auto& x : xs) pts.push_back(parse_real(name, x));
  if (!grid.empty()) {
    const auto g = parse_grid(grid);
    pts.insert(pts.end(), g.begin(), g.end());
  }
  if (pts.empty()) throw Error(ErrorCode::InvalidArgument, std::string("give --") + name + " or --grid");
  return pts;
}

DensityValue evaluate_pdf(const MeanParams& mp, double x, const PdfOptions& o, const SeriesControl& ctl) {
  const auto& p = mp.base();
  std::string m = o.method;
  if (m == "auto") {
    if (mp.n() > 1 || (p.mu_x() == 0.0 && p.mu_y() == 0.0)) {
      m = "zero-means";
    } else {
      m = "series";
    }
  }
  if (m == "zero-means") {
    if (p.mu_x() != 0.0 || p.mu_y() != 0.0) {
      throw Error(ErrorCode::CaseMismatch, "densities for n > 1 are available only for zero means");
    }
    return pdf_mean_zero_means(mp, x);
  }
  if (mp.n() != 1) throw Error(ErrorCode::CaseMismatch, "method '" + m + "' needs n = 1");
  if (m == "series") return pdf_product(p, x, ctl);
  if (m == "single-zero-mean") return pdf_single_zero_mean(p, x, ctl);
  throw Error(ErrorCode::InvalidArgument, "unknown method '" + m + "'");
}

CommandResult run_pdf(const MeanParams& mp, const PdfOptions& o) {
  SeriesControl ctl{o.rel_tol, o.max_outer, !o.no_fallback};
  ctl.check();
  CommandResult r;
  r.params_echo = echo_params(mp);
  r.params_echo["method"] = o.method;
  r.table.columns = {"x", "log_pdf", "pdf", "terms_used", "converged", "method"};
  json pts = json::array();
  for (double x : collect_points(o.xs, o.grid, "x")) {
    const DensityValue v = require_converged(evaluate_pdf(mp, x, o, ctl));
    pts.push_back({{"x", x},
                   {"log_pdf", v.log_abs},
                   {"pdf", v.value()},
                   {"terms_used", v.terms_used},
                   {"converged", v.converged},
                   {"method", std::string(to_string(v.method))}});
    r.table.rows.push_back({x, v.log_abs, v.value(), static_cast<long long>(v.terms_used),
                            std::string(v.converged ? "true" : "false"), std::string(to_string(v.method))});
  }
  r.results["points"] = pts;
  return r;
}

struct CdfOptions {
  std::vector<std::string> xs;
  std::string grid;
};

CommandResult run_cdf(const MeanParams& mp, const CdfOptions& o) {
  if (mp.n() != 1) throw Error(ErrorCode::CaseMismatch, "cdf is available for n = 1");
  CommandResult r;
  r.params_echo = echo_params(mp);
  r.table.columns = {"x", "cdf"};
  json pts = json::array();
  for (double x : collect_points(o.xs, o.grid, "x")) {
    const double c = cdf_product(mp.base(), x);
    pts.push_back({{"x", x}, {"cdf", c}});
    r.table.rows.push_back({x, c});
  }
  r.results["points"] = pts;
  return r;
}

struct MomentOptions {
  int kmax = 4;
  bool central = false;
  bool closed_form = false;
  bool exact = false;
  bool equal_ratio = false;
};

CommandResult run_moments(const ParamText& text, const MomentOptions& o) {
  CommandResult r;
  if (o.kmax < 0) throw Error(ErrorCode::InvalidArgument, "--kmax must be nonnegative");
  if (o.exact) {
    if (o.central || o.closed_form || o.equal_ratio) {
      throw Error(ErrorCode::InvalidArgument, "--exact computes raw moments from the general recursion only");
    }
    const auto ep = to_exact_params(text);
    r.params_echo = echo_params(text);
    r.params_echo["kmax"] = o.kmax;
    r.params_echo["exact"] = true;
    const auto vals = exact_raw_moments(ep, o.kmax);
    json arr = json::array();
    r.table.columns = {"k", "raw_moment"};
    for (int k = 0; k <= o.kmax; ++k) {
      arr.push_back(rational_json(vals[k]));
      r.table.rows.push_back({static_cast<long long>(k), rational_string(vals[k])});
    }
    r.results = {{"kind", "raw"}, {"provenance", "recursion"}, {"exact", true}, {"values", arr}};
    return r;
  }

  const auto mp = to_params(text);
  r.params_echo = echo_params(mp);
  r.params_echo["kmax"] = o.kmax;
  r.params_echo["central"] = o.central;
  r.params_echo["closed_form"] = o.closed_form;
  r.params_echo["equal_ratio"] = o.equal_ratio;
  MomentTable<double> t;
  if (o.equal_ratio) {
    t = o.central ? central_moments_equal_ratio(mp, o.kmax) : raw_moments_equal_ratio(mp, o.kmax);
  } else {
    t = o.central ? central_moments(mp, o.kmax) : raw_moments(mp, o.kmax);
  }
  r.results = {{"kind", o.central ? "central" : "raw"},
               {"provenance", std::string(to_string(t.provenance))},
               {"values", t.values}};
  r.table.columns = {"k", o.central ? "central_moment" : "raw_moment"};
  for (int k = 0; k <= o.kmax; ++k) r.table.rows.push_back({static_cast<long long>(k), t.values[k]});

  if (o.closed_form) {
    const auto f = closed_form_four(mp);
    json cf = {{"raw", f.raw},
               {"central", f.central},
               {"variance", f.variance},
               {"skewness", f.skewness},
               {"kurtosis", f.kurtosis}};
    if (mp.n() == 1) cf["product_kurtosis"] = product_kurtosis(mp.base());
    r.results["closed_form"] = cf;
    r.table.columns.push_back("closed_form");
    const auto& src = o.central ? f.central : f.raw;
    for (int k = 0; k <= o.kmax; ++k) {
      if (k == 0) {
        r.table.rows[k].push_back(1.0);
      } else if (k <= 4) {
        r.table.rows[k].push_back(src[k - 1]);
      } else {
        r.table.rows[k].push_back(std::string("-"));
      }
    }
    r.notes.push_back("variance " + fmt17(f.variance) + "  skewness " + fmt17(f.skewness) + "  kurtosis " +
                      fmt17(f.kurtosis));
  }
  return r;
}

struct OperatorOptions {
  std::string which = "a1";
};

SteinOperatorSpec<double> build_operator(const std::string& which, const MeanParams& mp) {
  const OperatorKind k = parse_operator_kind(which);
  if (k == OperatorKind::A1) return operator_a1(mp);
  if (k == OperatorKind::A2) return operator_a2(mp);
  return operator_special(k, mp);
}

CommandResult run_operator(const MeanParams& mp, const OperatorOptions& o) {
  const auto spec = build_operator(o.which, mp);
  CommandResult r;
  r.params_echo = echo_params(mp);
  r.params_echo["which"] = o.which;
  json coeffs = json::array();
  r.table.columns = {"j", "a0", "a1"};
  for (int j = 0; j <= spec.order(); ++j) {
    coeffs.push_back({{"j", j}, {"a0", spec[j].a0}, {"a1", spec[j].a1}});
    r.table.rows.push_back({static_cast<long long>(j), spec[j].a0, spec[j].a1});
  }
  r.results = {{"name", spec.name()}, {"order", spec.order()}, {"coefficients", coeffs}};
  r.notes.push_back("A f(x) = sum_j (a0_j + a1_j x) f^(j)(x)");
  return r;
}

struct SteinApplyOptions {
  std::string which = "a1";
  std::string f = "poly:2";
  std::vector<std::string> xs;
  bool substitution = false;
};

CommandResult run_stein_apply(const MeanParams& mp, const SteinApplyOptions& o) {
  const auto spec = build_operator(o.which, mp);
  const auto f = TestFunction::parse(o.f);
  CommandResult r;
  r.params_echo = echo_params(mp);
  r.params_echo["which"] = o.which;
  r.params_echo["f"] = o.f;
  if (o.substitution) {
    // a1 pairs with a2 (equal ratios), a3 with a4 (zero means)
    SubstitutionIdentity which;
    if (o.which == "a1") {
      which = SubstitutionIdentity::A1ToA2;
    } else if (o.which == "a3") {
      which = SubstitutionIdentity::A3ToA4;
    } else {
      throw Error(ErrorCode::InvalidArgument, "--substitution needs --which a1 or a3");
    }
    r.params_echo["substitution"] = true;
    r.table.columns = {"x", "lhs", "rhs", "relative"};
    json pts = json::array();
    double worst = 0.0;
    for (double x : collect_points(o.xs, "", "x")) {
      const auto res = substitution_identity_check(which, mp, f, x);
      worst = std::max(worst, res.relative());
      pts.push_back({{"x", x}, {"lhs", res.lhs}, {"rhs", res.rhs}, {"relative", res.relative()}});
      r.table.rows.push_back({x, res.lhs, res.rhs, res.relative()});
    }
    r.results = {{"identity", o.which == "a1" ? "a1_to_a2" : "a3_to_a4"}, {"f", f.label()}, {"points", pts},
                 {"max_relative", worst}};
    return r;
  }
  r.table.columns = {"x", "value"};
  json pts = json::array();
  for (double x : collect_points(o.xs, "", "x")) {
    const double v = apply(spec, f, x);
    pts.push_back({{"x", x}, {"value", v}});
    r.table.rows.push_back({x, v});
  }
  r.results = {{"operator", spec.name()}, {"f", f.label()}, {"points", pts}};
  return r;
}

struct McOptions {
  std::uint64_t seed = 42;
  std::int64_t count = 1'000'000;
  std::int64_t batch = 65'536;
  unsigned threads = 0;
};

void add_mc_options(CLI::App* sub, McOptions& o) {
  sub->add_option("--seed", o.seed, "random seed")->capture_default_str();
  sub->add_option("--count", o.count, "number of draws")->capture_default_str();
  sub->add_option("--batch", o.batch, "draws per independent stream")->capture_default_str();
  sub->add_option("--threads", o.threads, "worker threads (0 = all cores)")->capture_default_str();
}

SamplerConfig sampler_config(const McOptions& o) {
  SamplerConfig c{o.seed, o.count, std::min(o.batch, o.count), o.threads};
  c.check();
  return c;
}

json echo_mc(const SamplerConfig& c) { return {{"seed", c.seed}, {"count", c.count}, {"batch", c.batch}}; }

struct SteinCheckOptions {
  std::string which = "a1";
  std::vector<std::string> fs{"poly:2"};
  bool normal_baseline = false;
  McOptions mc;
};

CommandResult run_stein_check(const MeanParams& mp, const SteinCheckOptions& o) {
  const auto spec = build_operator(o.which, mp);
  std::vector<TestFunction> fs;
  for (const auto& s : o.fs) fs.push_back(TestFunction::parse(s));
  const auto cfg = sampler_config(o.mc);
  std::vector<EstimateWithError> est;
  if (o.normal_baseline) {
    const auto four = closed_form_four(mp);
    for (const auto& f : fs) est.push_back(estimate_stein_expectation_normal(four.raw[0], four.variance, spec, f, cfg));
  } else {
    est = estimate_stein_expectations(mp, spec, fs, cfg);
  }
  CommandResult r;
  r.params_echo = echo_params(mp);
  r.params_echo.update(echo_mc(cfg));
  r.params_echo["which"] = o.which;
  r.params_echo["f"] = o.fs;
  r.params_echo["normal_baseline"] = o.normal_baseline;
  r.table.columns = {"f", "estimate", "stderr", "z_score"};
  json arr = json::array();
  for (std::size_t i = 0; i < fs.size(); ++i) {
    arr.push_back({{"f", fs[i].label()},
                   {"estimate", est[i].mean},
                   {"stderr", est[i].stderr_},
                   {"z_score", est[i].z_score()},
                   {"count", est[i].count}});
    r.table.rows.push_back({fs[i].label(), est[i].mean, est[i].stderr_, est[i].z_score()});
  }
  r.results = {{"operator", spec.name()}, {"sampled_law", o.normal_baseline ? "matched_normal" : "target"}, {"checks", arr}};
  if (fs.size() == 1) {
    r.results["estimate"] = est[0].mean;
    r.results["stderr"] = est[0].stderr_;
    r.results["z_score"] = est[0].z_score();
  }
  return r;
}

struct CfOptions {
  std::vector<std::string> ts;
  std::string grid;
  bool check_ode = false;
  int moments = -1;
  bool empirical = false;
  McOptions mc;
};

CommandResult run_cf(const MeanParams& mp, const CfOptions& o) {
  CommandResult r;
  r.params_echo = echo_params(mp);
  r.params_echo["check_ode"] = o.check_ode;
  r.params_echo["empirical"] = o.empirical;
  std::vector<double> ts;
  if (!o.ts.empty() || !o.grid.empty()) ts = collect_points(o.ts, o.grid, "t");
  if (ts.empty() && o.moments < 0) throw Error(ErrorCode::InvalidArgument, "give --t, --grid or --moments");

  std::vector<ComplexEstimate> emp;
  if (o.empirical && !ts.empty()) {
    const auto cfg = sampler_config(o.mc);
    r.params_echo.update(echo_mc(cfg));
    emp = estimate_cf(mp, ts, cfg);
  }
  const auto grid = cf_grid(mp, ts);
  r.table.columns = {"t", "re", "im", "modulus", "arg"};
  if (o.check_ode) r.table.columns.push_back("ode_residual");
  if (!emp.empty()) {
    for (const char* c : {"emp_re", "emp_im", "z_re", "z_im"}) r.table.columns.push_back(c);
  }
  json pts = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& g = grid[i];
    json row = {{"t", g.t}, {"re", g.value.real()}, {"im", g.value.imag()}, {"modulus", g.modulus}, {"arg", g.unwrapped_arg}};
    std::vector<Cell> cells{g.t, g.value.real(), g.value.imag(), g.modulus, g.unwrapped_arg};
    if (o.check_ode) {
      const double res = cf_ode_residual(mp, g.t);
      row["ode_residual"] = res;
      cells.push_back(res);
    }
    if (!emp.empty()) {
      const auto& e = emp[i];
      auto z = [](double est, double exact, double se) { return se > 0 ? (est - exact) / se : (est == exact ? 0.0 : INFINITY); };
      const double zr = z(e.re.mean, g.value.real(), e.re.stderr_);
      const double zi = z(e.im.mean, g.value.imag(), e.im.stderr_);
      row["empirical"] = {{"re", e.re.mean}, {"im", e.im.mean}, {"stderr_re", e.re.stderr_}, {"stderr_im", e.im.stderr_},
                          {"z_re", zr}, {"z_im", zi}};
      for (double v : {e.re.mean, e.im.mean, zr, zi}) cells.push_back(v);
    }
    pts.push_back(row);
    r.table.rows.push_back(cells);
  }
  r.results["points"] = pts;
  if (o.moments >= 0) {
    r.params_echo["moments"] = o.moments;
    const auto m = cf_moments(mp, o.moments);
    const auto rec = raw_moments(mp, o.moments);
    r.results["contour_moments"] = m;
    r.results["recursion_moments"] = rec.values;
    if (ts.empty()) {
      r.table.columns = {"k", "contour_moment", "recursion_moment"};
      for (int k = 0; k <= o.moments; ++k) r.table.rows.push_back({static_cast<long long>(k), m[k], rec[k]});
    } else {
      std::string line = "raw moments from the characteristic function:";
      for (double v : m) line += " " + fmt17(v);
      r.notes.push_back(line);
    }
  }
  return r;
}

struct OdeCheckOptions {
  std::vector<std::string> xs;
};

CommandResult run_ode_check(const MeanParams& mp, const OdeCheckOptions& o) {
  const auto& p = mp.base();
  const bool zero = p.mu_x() == 0.0 && p.mu_y() == 0.0;
  if (!zero && mp.n() != 1) throw Error(ErrorCode::CaseMismatch, "ode-check needs zero means or n = 1");
  CommandResult r;
  r.params_echo = echo_params(mp);
  r.table.columns = {"x", "residual", "derivatives"};
  json pts = json::array();
  for (double x : collect_points(o.xs, "", "x")) {
    const Derivatives d = zero ? pdf_mean_zero_means_derivatives(mp, x) : pdf_product_derivatives_fd(p, x);
    const double res = ode_residual_density(mp, x, d);
    const char* how = zero ? "analytic" : "finite_difference";
    pts.push_back({{"x", x}, {"residual", res}, {"derivatives", how}, {"pdf", d[0]}});
    r.table.rows.push_back({x, res, std::string(how)});
  }
  r.results["points"] = pts;
  return r;
}

struct OpsearchOptions {
  int order = 3;
  int rows = -1;
  bool print_system = false;
  bool det = false;
  std::vector<std::string> contains;
};

CommandResult run_opsearch(const ParamText& text, const OpsearchOptions& o) {
  const auto ep = to_exact_params(text);
  // a determinant needs a square system, so --det alone picks that size
  std::optional<int> rows;
  if (o.rows > 0) {
    rows = o.rows;
  } else if (o.det) {
    rows = 2 * (o.order + 1);
  }
  const auto res = operator_exists(ep, o.order, rows);
  CommandResult r;
  r.params_echo = echo_params(text);
  r.params_echo["order"] = o.order;
  r.params_echo["rows"] = res.rows;
  r.results = {{"exists", res.exists}, {"rank", res.rank}, {"unknowns", 2 * (o.order + 1)}};
  r.table.columns = {"quantity", "value"};
  r.table.rows.push_back({std::string("exists"), std::string(res.exists ? "true" : "false")});
  r.table.rows.push_back({std::string("rank"), static_cast<long long>(res.rank)});

  json basis = json::array();
  for (const auto& v : res.nullspace_basis) {
    json vec = json::array();
    std::string line = "nullspace:";
    for (const auto& x : v) {
      vec.push_back(rational_json(x));
      line += " " + rational_string(x);
    }
    basis.push_back(vec);
    r.notes.push_back(line);
  }
  r.results["nullspace_basis"] = basis;
  r.results["column_order"] = "a0_0, a1_0, a0_1, a1_1, ...";

  if (o.det) {
    if (res.rows != 2 * (o.order + 1)) {
      throw Error(ErrorCode::NotSquare, "--det needs --rows equal to 2(order+1)");
    }
    const Rational d = determinant_exact(res.system);
    r.results["determinant"] = rational_json(d);
    r.results["determinant_text"] = rational_string(d);
    r.table.rows.push_back({std::string("determinant"), rational_string(d)});
  }
  if (o.print_system) {
    json sys = json::array();
    for (const auto& row : res.system) {
      json jr = json::array();
      std::string line = "row:";
      for (const auto& x : row) {
        jr.push_back(rational_json(x));
        line += " " + rational_string(x);
      }
      sys.push_back(jr);
      r.notes.push_back(line);
    }
    r.results["system"] = sys;
  }
  json contains = json::object();
  for (const auto& which : o.contains) {
    const OperatorKind k = parse_operator_kind(which);
    SteinOperatorSpec<Rational> spec = k == OperatorKind::A1   ? operator_a1(ep)
                                       : k == OperatorKind::A2 ? operator_a2(ep, 0.0)
                                                               : operator_special(k, ep);
    const bool in = spec.order() <= o.order && in_span(res.nullspace_basis, coefficient_vector(spec, o.order));
    contains[which] = in;
    r.table.rows.push_back({"contains_" + which, std::string(in ? "true" : "false")});
  }
  if (!o.contains.empty()) r.results["contains"] = contains;
  return r;
}

struct SampleOptions {
  std::string out;
  McOptions mc;
};

CommandResult run_sample(const MeanParams& mp, const SampleOptions& o) {
  const auto cfg = sampler_config(o.mc);
  const auto xs = sample_mean_of_products(mp, cfg);
  CommandResult r;
  r.params_echo = echo_params(mp);
  r.params_echo.update(echo_mc(cfg));
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  r.results = {{"count", xs.size()}, {"sample_mean", mean}};
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::binary);
    if (!f) throw Error(ErrorCode::InvalidArgument, "cannot write '" + o.out + "'");
    Table t{{"w"}, {}};
    for (double x : xs) t.rows.push_back({x});
    print_csv(t, f);
    r.results["out"] = o.out;
    r.table.columns = {"count", "sample_mean", "out"};
    r.table.rows.push_back({static_cast<long long>(xs.size()), mean, o.out});
  } else {
    r.results["values"] = xs;
    r.table.columns = {"w"};
    for (double x : xs) r.table.rows.push_back({x});
  }
  return r;
}

struct BesselOptions {
  double nu = 0.0;
  std::vector<std::string> xs;
  bool scaled = false;
  bool log = false;
};

CommandResult run_besselk(const BesselOptions& o) {
  const double twice = 2.0 * o.nu;
  if (twice != std::round(twice)) throw Error(ErrorCode::InvalidArgument, "--nu must be an integer or half-integer");
  const BesselOrder order(static_cast<int>(std::round(twice)));
  CommandResult r;
  r.params_echo = {{"nu", o.nu}, {"scaled", o.scaled}, {"log", o.log}};
  r.table.columns = {"x", o.log ? "log_k" : (o.scaled ? "scaled_k" : "k")};
  json pts = json::array();
  for (double x : collect_points(o.xs, "", "x")) {
    const double v = o.log ? log_bessel_k(order, x) : bessel_k(order, x, o.scaled);
    pts.push_back({{"x", x}, {"value", v}});
    r.table.rows.push_back({x, v});
  }
  r.results["points"] = pts;
  return r;
}

// Expands --params-json into ordinary flags for every echoed field the chosen
// subcommand understands. Flags already on the command line win.
std::vector<std::string> expand_params_json(const CLI::App& app, std::vector<std::string> args) {
  const CLI::App* sub = nullptr;
  for (const auto& a : args) {
    if ((sub = app.get_subcommand_no_throw(a)) != nullptr) break;
  }
  std::string source;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--params-json" && i + 1 < args.size()) source = args[i + 1];
    if (args[i].rfind("--params-json=", 0) == 0) source = args[i].substr(14);
  }
  if (sub == nullptr || source.empty()) return args;

  std::string text = source;
  if (text.find('{') == std::string::npos) {
    std::ifstream in(text);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open params file '" + text + "'");
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed params JSON: ") + e.what());
  }
  if (j.contains("params_echo")) j = j["params_echo"];
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "params JSON must be an object");

  auto given = [&](const std::string& opt) {
    for (const auto& a : args) {
      if (a == opt || a.rfind(opt + "=", 0) == 0) return true;
    }
    return false;
  };
  auto scalar = [](const json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return fmt17(v.get<double>());
    throw Error(ErrorCode::InvalidArgument, "params field must be a number or string, got " + v.dump());
  };
  std::vector<std::string> extra;
  for (const auto& [key, v] : j.items()) {
    std::string opt = "--" + key;
    std::replace(opt.begin(), opt.end(), '_', '-');
    if (opt == "--params-json" || sub->get_option_no_throw(opt) == nullptr || given(opt)) continue;
    if (v.is_boolean()) {
      if (v.get<bool>()) extra.push_back(opt);
    } else if (v.is_array()) {
      for (const auto& e : v) {
        extra.push_back(opt);
        extra.push_back(scalar(e));
      }
    } else if (!v.is_null()) {
      extra.push_back(opt);
      extra.push_back(scalar(v));
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Product-normal distribution toolkit: densities, moments, Stein operators, characteristic function", "pnstein"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "pnstein 0.1.0");

  std::map<std::string, std::function<CommandResult()>> handlers;
  std::map<std::string, Output> outputs;
  std::map<std::string, ParamOptions> params;

  auto make = [&](const std::string& name, const std::string& help, bool with_params) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_output_options(sub, outputs[name]);
    if (with_params) add_param_options(sub, params[name]);
    return sub;
  };
  auto mean_params = [&](const std::string& name) { return to_params(resolve_params(params[name])); };

  PdfOptions pdf_o;
  {
    auto* s = make("pdf", "density of the mean of n products", true);
    s->add_option("--x", pdf_o.xs, "evaluation points")->allow_extra_args();
    s->add_option("--grid", pdf_o.grid, "lo:hi:count grid of evaluation points");
    s->add_option("--method", pdf_o.method, "auto | series | single-zero-mean | zero-means")->capture_default_str();
    s->add_option("--rel-tol", pdf_o.rel_tol, "series truncation tolerance")->capture_default_str();
    s->add_option("--max-outer", pdf_o.max_outer, "maximum outer series terms")->capture_default_str();
    s->add_flag("--no-fallback", pdf_o.no_fallback, "report non-convergence instead of switching to the integral form");
    handlers["pdf"] = [&] { return run_pdf(mean_params("pdf"), pdf_o); };
  }
  CdfOptions cdf_o;
  {
    auto* s = make("cdf", "distribution function of the product (n = 1)", true);
    s->add_option("--x", cdf_o.xs, "evaluation points");
    s->add_option("--grid", cdf_o.grid, "lo:hi:count grid");
    handlers["cdf"] = [&] { return run_cdf(mean_params("cdf"), cdf_o); };
  }
  MomentOptions mom_o;
  {
    auto* s = make("moments", "raw or central moments from the recursions", true);
    s->add_option("--kmax", mom_o.kmax, "highest moment order")->capture_default_str();
    s->add_flag("--central", mom_o.central, "central instead of raw moments");
    s->add_flag("--closed-form", mom_o.closed_form, "also print the closed forms for k <= 4");
    s->add_flag("--exact", mom_o.exact, "exact rational arithmetic (parameters read as decimals or fractions)");
    s->add_flag("--equal-ratio", mom_o.equal_ratio, "use the lower-order recursion valid when mu_x/sigma_x = mu_y/sigma_y");
    handlers["moments"] = [&] { return run_moments(resolve_params(params["moments"]), mom_o); };
  }
  OperatorOptions op_o;
  {
    auto* s = make("operator", "coefficients of a Stein operator", true);
    s->add_option("--which", op_o.which, "a1 .. a7")->capture_default_str();
    s->add_flag("--print-coeffs", "print the coefficient table (default)");
    handlers["operator"] = [&] { return run_operator(mean_params("operator"), op_o); };
  }
  SteinApplyOptions sa_o;
  {
    auto* s = make("stein-apply", "apply a Stein operator to a test function", true);
    s->add_option("--which", sa_o.which, "a1 .. a7")->capture_default_str();
    s->add_option("--f", sa_o.f, "poly:K | exp:A | sin:T | cos:T | gauss")->capture_default_str();
    s->add_option("--x", sa_o.xs, "evaluation points")->required();
    s->add_flag("--substitution", sa_o.substitution,
                "compare A1 f with A2 g (equal ratios) or A3 f with A4 g (zero means) for the substituted g");
    handlers["stein-apply"] = [&] { return run_stein_apply(mean_params("stein-apply"), sa_o); };
  }
  SteinCheckOptions sc_o;
  {
    auto* s = make("stein-check", "Monte Carlo estimate of E[A f(W)]", true);
    s->add_option("--which", sc_o.which, "a1 .. a7")->capture_default_str();
    s->add_option("--f", sc_o.fs, "test functions (repeatable)")->capture_default_str();
    s->add_flag("--normal-baseline", sc_o.normal_baseline, "sample a normal law with the same mean and variance instead");
    add_mc_options(s, sc_o.mc);
    handlers["stein-check"] = [&] { return run_stein_check(mean_params("stein-check"), sc_o); };
  }
  CfOptions cf_o;
  {
    auto* s = make("cf", "characteristic function", true);
    s->add_option("--t", cf_o.ts, "evaluation points");
    s->add_option("--grid", cf_o.grid, "lo:hi:count grid");
    s->add_flag("--check-ode", cf_o.check_ode, "report the normalised residual of the characteristic-function ODE");
    s->add_option("--moments", cf_o.moments, "recover raw moments up to this order from the contour integral");
    s->add_flag("--empirical", cf_o.empirical, "compare with the empirical characteristic function");
    add_mc_options(s, cf_o.mc);
    handlers["cf"] = [&] { return run_cf(mean_params("cf"), cf_o); };
  }
  OdeCheckOptions ode_o;
  {
    auto* s = make("ode-check", "residual of the density ODE (unit variances)", true);
    s->add_option("--x", ode_o.xs, "evaluation points")->required();
    handlers["ode-check"] = [&] { return run_ode_check(mean_params("ode-check"), ode_o); };
  }
  OpsearchOptions os_o;
  {
    auto* s = make("opsearch", "exact search for linear-coefficient Stein operators", true);
    s->add_option("--order", os_o.order, "operator order")->capture_default_str();
    s->add_option("--rows", os_o.rows, "number of monomial equations (default 2(order+1)+4, or 2(order+1) with --det)");
    s->add_flag("--print-system", os_o.print_system, "print the moment system");
    s->add_flag("--det", os_o.det, "exact determinant (square systems)");
    s->add_option("--contains", os_o.contains, "check whether the named operators lie in the nullspace");
    handlers["opsearch"] = [&] { return run_opsearch(resolve_params(params["opsearch"]), os_o); };
  }
  SampleOptions sm_o;
  {
    auto* s = make("sample", "draw means of n products", true);
    s->add_option("--out", sm_o.out, "write draws to this CSV file");
    add_mc_options(s, sm_o.mc);
    sm_o.mc.count = 1000;
    sm_o.mc.batch = 1000;
    handlers["sample"] = [&] { return run_sample(mean_params("sample"), sm_o); };
  }
  BesselOptions bk_o;
  {
    auto* s = make("besselk", "modified Bessel function of the second kind", false);
    s->add_option("--nu", bk_o.nu, "order (integer or half-integer)")->capture_default_str();
    s->add_option("--x", bk_o.xs, "arguments")->required();
    s->add_flag("--scaled", bk_o.scaled, "multiply by exp(x)");
    s->add_flag("--log", bk_o.log, "natural logarithm of K");
    handlers["besselk"] = [&] { return run_besselk(bk_o); };
  }

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = expand_params_json(app, std::move(args));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  for (auto* sub : app.get_subcommands()) {
    const std::string name = sub->get_name();
    try {
      const auto start = std::chrono::steady_clock::now();
      CommandResult r = handlers.at(name)();
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
      emit(name, r, outputs[name], ms);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << '\n';
      return e.code() == ErrorCode::NotConverged ? kExitNotConverged : kExitInvalid;
    }
  }
  return 0;
}
