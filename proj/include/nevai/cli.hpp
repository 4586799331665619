#pragma once

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nevai/nevai.hpp"
#include "nevai/io.hpp"

namespace nevai::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct FamilyOptions {
  std::string family = "freud";
  double gamma = std::numeric_limits<double>::quiet_NaN();
  double s = 1.0;
  double p = 0.25;
  double t = 1.0;
  int kappa = 2;
  std::vector<double> alpha{1.0};
  std::vector<double> beta{0.0};
  double envelope = 0.5;
  std::string table;
  std::size_t resolution = kDefaultResolution;
};

inline FamilySpec build_family(const FamilyOptions& o) {
  const auto gamma_or = [&](double d) { return std::isnan(o.gamma) ? d : o.gamma; };
  FamilySpec spec;
  if (o.family == "freud") spec = Freud{gamma_or(2.0)};
  else if (o.family == "meixner") spec = Meixner{o.s, o.p};
  else if (o.family == "genhermite") spec = GenHermite{o.t};
  else if (o.family == "laguerre") spec = LaguerreType{gamma_or(-0.5), o.kappa};
  else if (o.family == "periodic") spec = PeriodicModulated{PeriodicProfile(o.alpha, o.beta), o.envelope};
  else if (o.family == "blend") spec = PeriodicBlend{PeriodicProfile(o.alpha, o.beta)};
  else if (o.family == "custom") spec = CustomTable{o.table};
  else throw ValidationError("unknown family '" + o.family + "'");
  validate(spec);
  return spec;
}

// "lo:hi:count"
inline std::vector<double> parse_grid(const std::string& text) {
  const auto c1 = text.find(':');
  const auto c2 = c1 == std::string::npos ? c1 : text.find(':', c1 + 1);
  if (c2 == std::string::npos) throw ValidationError("grid '" + text + "': expected lo:hi:count");
  const double lo = detail::parse_double(text.substr(0, c1), "grid");
  const double hi = detail::parse_double(text.substr(c1 + 1, c2 - c1 - 1), "grid");
  const double cnt = detail::parse_double(text.substr(c2 + 1), "grid");
  if (!(cnt >= 1.0) || cnt != std::floor(cnt)) throw ValidationError("grid '" + text + "': count must be a positive integer");
  return linear_grid(lo, hi, static_cast<std::size_t>(cnt));
}

// "lo:hi"
inline std::pair<double, double> parse_window(const std::string& text) {
  const auto c = text.find(':');
  if (c == std::string::npos) throw ValidationError("window '" + text + "': expected lo:hi");
  const double lo = detail::parse_double(text.substr(0, c), "window");
  const double hi = detail::parse_double(text.substr(c + 1), "window");
  if (!(hi > lo)) throw ValidationError("window '" + text + "': upper end must exceed lower end");
  return {lo, hi};
}

inline void require_ascending(const std::vector<std::size_t>& v, const std::string& what) {
  if (v.empty()) throw ValidationError(what + ": list is empty");
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] > v[k - 1])) throw ValidationError(what + ": list must be strictly ascending");
}

inline io::Json intervals_json(const std::vector<Interval>& v) {
  io::Json a = io::Json::array();
  for (const auto& iv : v) a.push_back({io::number(iv.first), io::number(iv.second)});
  return a;
}

inline io::Json report_json(const CaseReport& r) {
  io::Json j;
  j["trace"] = io::number(r.trace);
  j["discriminant"] = io::number(r.discriminant);
  j["label"] = to_string(r.label);
  j["epsilon"] = r.epsilon;
  j["defect"] = io::number(r.defect);
  j["h_coeffs"] = io::numbers(r.h_coeffs);
  j["lambda_minus"] = intervals_json(r.lambda_minus);
  j["boundary_roots"] = io::numbers(r.boundary_roots);
  return j;
}

inline io::Json mat_json(const Mat2& m) { return {{io::number(m.m11), io::number(m.m12)}, {io::number(m.m21), io::number(m.m22)}}; }

struct Shared {
  FamilyOptions fam;
  std::size_t threads = default_threads();
  std::string out;
};

// Everything a subcommand needs, resolved once.
struct Context {
  const Shared& sh;
  FamilySpec spec() const { return build_family(sh.fam); }
  JacobiParameters params() const { return make_parameters(spec(), sh.fam.resolution); }
};

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Orthogonal polynomial laboratory: recurrences, kernels, Nevai operators, spectral classes, ensembles"};
  app.name("nevai");
  app.option_defaults()->always_capture_default();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.set_config("--config", "", "INI file: [subcommand] sections of key = value; flags override it");
  app.require_subcommand(1);

  Shared sh;
  std::map<CLI::App*, std::function<void(std::ostream&)>> actions;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--family", sh.fam.family, "freud | meixner | genhermite | laguerre | periodic | blend | custom")
        ->check(CLI::IsMember({"freud", "meixner", "genhermite", "laguerre", "periodic", "blend", "custom"}));
    sub->add_option("--gamma", sh.fam.gamma, "freud exponent (>= 1) or laguerre power (> -1)")
        ->default_str("2 (freud), -0.5 (laguerre)");
    sub->add_option("--s", sh.fam.s, "meixner s > 0");
    sub->add_option("--p", sh.fam.p, "meixner p in (0,1)");
    sub->add_option("--t", sh.fam.t, "genhermite t > -1");
    sub->add_option("--kappa", sh.fam.kappa, "laguerre exponent, integer >= 2");
    sub->add_option("--alpha", sh.fam.alpha, "periodic profile alpha_0..alpha_{N-1}")->delimiter(',');
    sub->add_option("--beta", sh.fam.beta, "periodic profile beta_0..beta_{N-1}")->delimiter(',');
    sub->add_option("--envelope", sh.fam.envelope, "periodic: a_n = alpha_n (n+1)^envelope, b_n likewise");
    sub->add_option("--table", sh.fam.table, "custom coefficient table (n a_n b_n per line)");
    sub->add_option("--resolution", sh.fam.resolution, "coefficients resolved for weight-defined families");
    sub->add_option("--threads", sh.threads, "worker threads (1 = serial reference path)")->check(CLI::PositiveNumber);
    sub->add_option("--out", sh.out, "output file (default stdout)");
  };
  const Context ctx{sh};

  // coeffs
  {
    auto* sub = app.add_subcommand("coeffs", "Jacobi parameters a_n, b_n");
    add_common(sub);
    struct O { std::size_t count = 10; };
    auto o = std::make_shared<O>();
    sub->add_option("--count", o->count, "number of indices");
    actions[sub] = [&, o](std::ostream& os) {
      const std::size_t count = o->count;
      const JacobiParameters p = ctx.params();
      io::CsvWriter w(os);
      w.header({"n", "a", "b"});
      for (std::size_t n = 0; n < count; ++n) {
        const Coeff c = p.at(n);
        w.cell(n).cell(c.a).cell(c.b).end();
      }
    };
  }

  // eval
  {
    auto* sub = app.add_subcommand("eval", "p_{n-1}(x), p_n(x) in scaled form");
    add_common(sub);
    struct O { std::size_t n = 1; std::vector<double> xs{0.0}; };
    auto o = std::make_shared<O>();
    sub->add_option("--n", o->n, "degree n >= 1");
    sub->add_option("--x", o->xs, "points")->delimiter(',');
    actions[sub] = [&, o](std::ostream& os) {
      const auto& [n, xs] = *o;
      if (n < 1) throw ValidationError("eval: n must be >= 1");
      const JacobiParameters p = ctx.params();
      io::CsvWriter w(os);
      w.header({"x", "n", "u", "v", "log_scale", "p_prev", "p_n"});
      for (double x : xs) {
        const ScaledPair s = eval_pair(p, n, x);
        w.cell(x).cell(n).cell(s.u).cell(s.v).cell(s.log_scale()).cell(s.prev()).cell(s.curr()).end();
      }
    };
  }

  // kernel
  {
    auto* sub = app.add_subcommand("kernel", "Christoffel-Darboux kernel K_n(x,y) and Christoffel function");
    add_common(sub);
    struct O { std::size_t n = 8; double x = 0.0, y = 0.0; };
    auto o = std::make_shared<O>();
    sub->add_option("--n", o->n, "degree n >= 1");
    sub->add_option("--x", o->x, "first argument");
    sub->add_option("--y", o->y, "second argument");
    actions[sub] = [&, o](std::ostream& os) {
      const auto& [n, x, y] = *o;
      const JacobiParameters p = ctx.params();
      const KernelValue k = kernel(p, n, x, y);
      io::Json j;
      j["family"] = describe(ctx.spec());
      j["n"] = n;
      j["x"] = x;
      j["y"] = y;
      j["value"] = io::number(k.value);
      j["method"] = to_string(k.method);
      j["christoffel_x"] = io::number(christoffel(p, n, x));
      os << j.dump(2) << '\n';
    };
  }

  // quad
  {
    auto* sub = app.add_subcommand("quad", "Gauss rule (x,w) or coefficients recovered from it");
    add_common(sub);
    struct O { std::size_t M = 8, recover = 0; };
    auto o = std::make_shared<O>();
    sub->add_option("--M", o->M, "node count");
    sub->add_option("--recover", o->recover, "if > 0, print the first RECOVER coefficients rebuilt from the rule");
    actions[sub] = [&, o](std::ostream& os) {
      const auto& [M, recover] = *o;
      if (M < 1) throw ValidationError("quad: M must be >= 1");
      const DiscretizedMeasure dm = gauss_rule(ctx.params(), M);
      if (recover == 0) {
        write_csv(dm, os);
        return;
      }
      const StieltjesResult r = stieltjes_from_discrete(dm, recover);
      io::CsvWriter w(os);
      w.header({"n", "a", "b"});
      for (std::size_t k = 0; k < r.coeffs.size(); ++k) w.cell(k).cell(r.coeffs.a[k]).cell(r.coeffs.b[k]).end();
    };
  }

  // nevai-trace
  {
    auto* sub = app.add_subcommand("nevai-trace", "|G_n[f](x) - f(x)| over a grid");
    add_common(sub);
    struct O {
      std::string f = "cauchy", grid = "-1:1:21", summary;
      std::vector<std::size_t> ns{8, 32, 128};
      double radius = 0.1, rel_tol = 1e-9, bound = std::numeric_limits<double>::infinity();
    };
    auto o = std::make_shared<O>();
    auto& [f, grid, summary, ns, radius, rel_tol, bound] = *o;
    sub->add_option("--f", f, "battery name (one, cauchy, sin, atan, ratio) or expression in x");
    sub->add_option("--f-bound", bound, "sup-norm bound for expression f");
    sub->add_option("--grid", grid, "lo:hi:count");
    sub->add_option("--n", ns, "ascending degrees")->delimiter(',');
    sub->add_option("--exclude-radius", radius, "grid points this close to exceptional points are dropped");
    sub->add_option("--rel-tol", rel_tol, "adaptive quadrature tolerance");
    sub->add_option("--summary", summary, "also write n,sup_deviation here");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [f, grid, summary, ns, radius, rel_tol, bound] = *o;
      require_ascending(ns, "nevai-trace --n");
      const FamilySpec spec = ctx.spec();
      const TestFunction fn = make_test_function(f, bound);
      const std::vector<double> raw = parse_grid(grid);
      const std::vector<double> ex = exceptional_points(spec);
      const std::vector<double> g = exclude_points(raw, ex, radius);
      if (g.empty()) throw ValidationError("nevai-trace: every grid point was excluded");
      const GaussRuleCache cache(ctx.params());
      const NevaiTrace tr = uniform_trace(cache, fn, g, ns, {rel_tol, kMaxNodes}, sh.threads);
      io::CsvWriter w(os);
      w.header({"n", "x", "deviation"});
      for (std::size_t k = 0; k < ns.size(); ++k)
        for (std::size_t i = 0; i < g.size(); ++i) w.cell(ns[k]).cell(g[i]).cell(tr.deviation[k][i]).end();
      if (!summary.empty()) {
        std::ofstream sf(summary);
        if (!sf) throw ValidationError("cannot open summary file '" + summary + "'");
        io::CsvWriter s(sf);
        s.header({"n", "sup_deviation"});
        for (std::size_t k = 0; k < ns.size(); ++k) s.cell(ns[k]).cell(tr.sup[k]).end();
      }
    };
  }

  // concentration
  {
    auto* sub = app.add_subcommand("concentration", "mass of [x-eta, x+eta] under the kernel-concentrated measure");
    add_common(sub);
    struct O {
      std::vector<std::size_t> ns{4, 16, 64, 256};
      std::vector<double> xs{0.0}, etas{0.5};
      std::size_t factor = 4;
    };
    auto o = std::make_shared<O>();
    auto& [ns, xs, etas, factor] = *o;
    sub->add_option("--n", ns, "degrees")->delimiter(',');
    sub->add_option("--x", xs, "centers")->delimiter(',');
    sub->add_option("--eta", etas, "half-widths")->delimiter(',');
    sub->add_option("--node-factor", factor, "Gauss rule size as a multiple of n");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [ns, xs, etas, factor] = *o;
      const GaussRuleCache cache(ctx.params());
      const auto rows = concentration_report(cache, ns, xs, etas, factor);
      io::CsvWriter w(os);
      w.header({"n", "x", "eta", "mass"});
      for (const auto& r : rows) w.cell(r.n).cell(r.x).cell(r.eta).cell(r.mass).end();
    };
  }

  // ratio
  {
    auto* sub = app.add_subcommand("ratio", "Christoffel ratio for g dmu with its sandwich bounds");
    add_common(sub);
    struct O {
      std::string g = "ratio";
      std::vector<std::size_t> ns{16, 64, 256};
      std::vector<double> xs{1.0};
      std::size_t factor = 4;
      double bound = std::numeric_limits<double>::infinity();
    };
    auto o = std::make_shared<O>();
    auto& [g, ns, xs, factor, bound] = *o;
    sub->add_option("--g", g, "positive function: battery name or expression");
    sub->add_option("--g-bound", bound, "sup-norm bound for expression g");
    sub->add_option("--n", ns, "degrees")->delimiter(',');
    sub->add_option("--x", xs, "points")->delimiter(',');
    sub->add_option("--node-factor", factor, "Gauss rule size as a multiple of n");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [g, ns, xs, factor, bound] = *o;
      const TestFunction gf = make_test_function(g, bound);
      const GaussRuleCache cache(ctx.params());
      io::CsvWriter w(os);
      w.header({"n", "x", "lower", "ratio", "upper", "hard_lower", "hard_upper", "ratio_times_g"});
      for (std::size_t n : ns) {
        if (n < 1) throw ValidationError("ratio: n must be >= 1");
        const auto dm = cache.rule(std::min(cache.max_nodes(), factor * n));
        for (double x : xs) {
          const RatioBounds r = ratio_bounds(cache.params(), gf, n, x, *dm);
          w.cell(n).cell(x).cell(r.lower).cell(r.ratio).cell(r.upper).cell(r.hard_lower).cell(r.hard_upper).cell(r.ratio * gf(x)).end();
        }
      }
    };
  }

  // shared by classify / asymptotics / h-limit
  std::string window = "-3:3";
  std::vector<std::size_t> js = HOptions{}.j_list;
  std::string iib_envelope;
  const auto add_h = [&](CLI::App* sub) {
    sub->add_option("--window", window, "lo:hi scanned for sign changes of h");
    sub->add_option("--j", js, "ascending block indices for the h limit")->delimiter(',');
    sub->add_option("--iib-envelope", iib_envelope, "case IIb envelope gamma_n as an expression in x (= n); default a_n");
  };
  const auto h_options = [&]() {
    HOptions h;
    h.j_list = js;
    const auto [lo, hi] = parse_window(window);
    h.window_lo = lo;
    h.window_hi = hi;
    if (!iib_envelope.empty()) {
      const Expression e = Expression::parse(iib_envelope);
      h.gamma = [e](std::size_t n) { return e(static_cast<double>(n)); };
    }
    return h;
  };
  const auto profile_of = [&](const FamilySpec& spec) {
    const auto p = canonical_profile(spec);
    if (!p) throw ValidationError("family has no periodic profile; use --family periodic with --alpha/--beta");
    return *p;
  };

  // classify
  {
    auto* sub = app.add_subcommand("classify", "case I / IIa / IIb / III from the limiting transfer matrix");
    add_common(sub);
    add_h(sub);
    actions[sub] = [&](std::ostream& os) {
      const FamilySpec spec = ctx.spec();
      const PeriodicProfile prof = profile_of(spec);
      CaseReport r = classify(prof);
      if (r.label == CaseLabel::IIa || r.label == CaseLabel::IIb) r = classify_with_h(ctx.params(), prof, h_options());
      io::Json j;
      j["family"] = describe(spec);
      j["period"] = prof.period();
      j.update(report_json(r));
      os << j.dump(2) << '\n';
    };
  }

  // asymptotics
  {
    auto* sub = app.add_subcommand("asymptotics", "rho_n, upsilon and the kernel-limit ratios");
    add_common(sub);
    add_h(sub);
    struct O {
      std::vector<std::size_t> ns{256, 1024, 4096};
      std::vector<double> xs{0.0};
      double radius = 0.1;
      std::string blend_window = "-10:10";
    };
    auto o = std::make_shared<O>();
    auto& [ns, xs, radius, blend_window] = *o;
    sub->add_option("--n", ns, "degrees")->delimiter(',');
    sub->add_option("--x", xs, "points")->delimiter(',');
    sub->add_option("--exclude-radius", radius, "minimum distance from exceptional points");
    sub->add_option("--blend-window", blend_window, "lo:hi scanned for blend bands");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [ns, xs, radius, blend_window] = *o;
      const FamilySpec spec = ctx.spec();
      const PeriodicProfile prof = profile_of(spec);
      const bool blend = std::holds_alternative<PeriodicBlend>(spec);
      const JacobiParameters params = ctx.params();
      ProfileOptions po;
      po.h = h_options();
      std::tie(po.blend_window_lo, po.blend_window_hi) = parse_window(blend_window);
      const CaseLabel label = blend ? CaseLabel::I : classify(prof).label;
      const AsymptoticProfile ap = asymptotic_profile(params, prof, label, blend, po);
      io::Json j;
      j["family"] = describe(spec);
      j["label"] = blend ? "blend" : to_string(label);
      j["nu"] = ap.nu;
      j["support"] = intervals_json(ap.support);
      j["exceptional"] = io::numbers(ap.exceptional);
      io::Json rho = io::Json::array();
      for (std::size_t n : ns) rho.push_back({{"n", n}, {"rho", io::number(ap.rho(n))}});
      j["rho"] = rho;
      const auto dens = density(spec);
      io::Json pts = io::Json::array();
      for (double x : xs) {
        io::Json p;
        p["x"] = x;
        p["upsilon"] = io::number(ap.upsilon(x));
        if (dens) {
          const KernelLimitReport kl = kernel_limit_check(params, ap, x, ns, *dens, exceptional_points(spec), radius);
          io::Json rows = io::Json::array();
          for (const auto& r : kl.rows)
            rows.push_back({{"n", r.n}, {"rho", io::number(r.rho)}, {"r", io::number(r.r)}, {"rel_error", io::number(r.rel_error)}});
          p["kernel_limit"] = rows;
        } else {
          p["kernel_limit"] = nullptr;
        }
        pts.push_back(p);
      }
      j["points"] = pts;
      os << j.dump(2) << '\n';
    };
  }

  // h-limit
  {
    auto* sub = app.add_subcommand("h-limit", "scaled discriminant sequence along the period (cases IIa, IIb)");
    add_common(sub);
    add_h(sub);
    auto xs_p = std::make_shared<std::vector<double>>(std::vector<double>{1.0});
    auto& xs = *xs_p;
    sub->add_option("--x", xs, "points")->delimiter(',');
    actions[sub] = [&, xs_p](std::ostream& os) {
      const auto& xs = *xs_p;
      const FamilySpec spec = ctx.spec();
      const PeriodicProfile prof = profile_of(spec);
      const CaseLabel label = classify(prof).label;
      if (label != CaseLabel::IIa && label != CaseLabel::IIb)
        throw ValidationError(std::string("h-limit: needs case IIa or IIb, family is ") + to_string(label));
      const JacobiParameters params = ctx.params();
      const HOptions h = h_options();
      io::Json j;
      j["family"] = describe(spec);
      j["label"] = to_string(label);
      io::Json pts = io::Json::array();
      for (double x : xs) {
        const HLimit r = h_limit(params, prof.period(), label, x, h);
        pts.push_back({{"x", x}, {"j", r.j}, {"values", io::numbers(r.values)}, {"stabilized", r.stabilized},
                       {"estimate", io::number(r.estimate)}});
      }
      j["points"] = pts;
      os << j.dump(2) << '\n';
    };
  }

  // weak-limit
  {
    auto* sub = app.add_subcommand("weak-limit", "int f K_n / (rho_n (1+x^2)) dmu against its predicted limit");
    add_common(sub);
    add_h(sub);
    struct O {
      std::string f = "one", g;
      std::size_t n = 1024, factor = 4;
      double fbound = std::numeric_limits<double>::infinity(), gbound = std::numeric_limits<double>::infinity();
    };
    auto o = std::make_shared<O>();
    auto& [f, g, n, factor, fbound, gbound] = *o;
    sub->add_option("--f", f, "battery name or expression");
    sub->add_option("--f-bound", fbound, "sup-norm bound for expression f");
    sub->add_option("--g", g, "optional positive modification g (battery name or expression)");
    sub->add_option("--g-bound", gbound, "sup-norm bound for expression g");
    sub->add_option("--n", n, "degree");
    sub->add_option("--node-factor", factor, "Gauss rule size as a multiple of n (>= 4)");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [f, g, n, factor, fbound, gbound] = *o;
      if (factor < 4) throw ValidationError("weak-limit: node factor must be >= 4");
      const FamilySpec spec = ctx.spec();
      const PeriodicProfile prof = profile_of(spec);
      const bool blend = std::holds_alternative<PeriodicBlend>(spec);
      const JacobiParameters params = ctx.params();
      ProfileOptions po;
      po.h = h_options();
      const CaseLabel label = blend ? CaseLabel::I : classify(prof).label;
      const AsymptoticProfile ap = asymptotic_profile(params, prof, label, blend, po);
      const TestFunction fn = make_test_function(f, fbound);
      const GaussRuleCache cache(params);
      const auto dm = cache.rule(std::min(cache.max_nodes(), factor * n));
      const auto to_json = [](const WeakLimitReport& r) {
        return io::Json{{"n", r.n}, {"nodes", r.nodes}, {"rho", io::number(r.rho)}, {"lhs", io::number(r.lhs)},
                        {"rhs", io::number(r.rhs)}, {"gap", io::number(r.gap)}};
      };
      io::Json j;
      j["family"] = describe(spec);
      j["exploratory"] = blend;
      j["base"] = to_json(weak_limit_check(params, ap, fn, n, *dm));
      if (!g.empty()) j["modified"] = to_json(weak_limit_check_modified(ap, fn, make_test_function(g, gbound), n, *dm));
      os << j.dump(2) << '\n';
    };
  }

  // blend
  {
    auto* sub = app.add_subcommand("blend", "transfer matrix of a periodic blend and its bands");
    add_common(sub);
    struct O {
      std::vector<double> xs{0.0};
      std::string bw = "-10:10";
      std::size_t scan = 1000;
    };
    auto o = std::make_shared<O>();
    auto& [xs, bw, scan] = *o;
    sub->add_option("--x", xs, "points")->delimiter(',');
    sub->add_option("--window", bw, "lo:hi scanned for sign changes of the discriminant");
    sub->add_option("--scan", scan, "scan points");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [xs, bw, scan] = *o;
      const PeriodicProfile prof(sh.fam.alpha, sh.fam.beta);
      const auto [lo, hi] = parse_window(bw);
      const SignScan s = blend_bands(prof, lo, hi, scan);
      io::Json j;
      j["period"] = prof.period();
      io::Json pts = io::Json::array();
      for (double x : xs) {
        const BlendTransfer b = blend_transfer(prof, x);
        pts.push_back({{"x", x}, {"matrix", mat_json(b.value)}, {"discriminant", io::number(b.discriminant)},
                       {"determinant", io::number(b.value.det())}, {"trace_derivative", io::number(b.derivative.trace())}});
      }
      j["points"] = pts;
      j["lambda_minus"] = intervals_json(s.negative);
      j["boundary_roots"] = io::numbers(s.roots);
      os << j.dump(2) << '\n';
    };
  }

  // ope-sample / ope-stats
  std::size_t ope_n = 3, ope_M = 8, ope_draws = 10;
  std::uint64_t ope_seed = 0;
  const auto add_ope = [&](CLI::App* sub) {
    sub->add_option("--n", ope_n, "ensemble size");
    sub->add_option("--M", ope_M, "Gauss rule size (n <= M)");
    sub->add_option("--seed", ope_seed, "seed");
  };
  {
    auto* sub = app.add_subcommand("ope-sample", "draws from the discretized orthogonal polynomial ensemble");
    add_common(sub);
    add_ope(sub);
    sub->add_option("--draws", ope_draws, "number of draws");
    actions[sub] = [&](std::ostream& os) {
      const JacobiParameters params = ctx.params();
      const EnsembleSampler es(params.prefix(ope_n), ope_n, gauss_rule(params, ope_M));
      const auto batch = es.sample(ope_seed, ope_draws, sh.threads);
      io::CsvWriter w(os);
      std::vector<std::string> head{"draw_index"};
      for (std::size_t k = 0; k < ope_n; ++k) head.push_back("node_" + std::to_string(k + 1));
      w.header(head);
      for (std::size_t d = 0; d < batch.size(); ++d) {
        w.cell(d);
        for (std::size_t i : batch[d]) w.cell(i);
        w.end();
      }
    };
  }
  {
    auto* sub = app.add_subcommand("ope-stats", "exact and Monte Carlo mean/variance of a linear statistic");
    add_common(sub);
    add_ope(sub);
    struct O {
      std::string f = "x";
      double fbound = std::numeric_limits<double>::infinity();
      std::size_t draws = 0;
    };
    auto o = std::make_shared<O>();
    auto& [f, fbound, draws] = *o;
    sub->add_option("--f", f, "battery name or expression");
    sub->add_option("--f-bound", fbound, "sup-norm bound for expression f");
    sub->add_option("--draws", draws, "Monte Carlo draws (0 = exact only)");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [f, fbound, draws] = *o;
      const JacobiParameters params = ctx.params();
      const EnsembleSampler es(params.prefix(ope_n), ope_n, gauss_rule(params, ope_M));
      const StatisticReport r = statistic_report(es, make_test_function(f, fbound), ope_seed, draws, sh.threads);
      io::Json j;
      j["family"] = describe(ctx.spec());
      j["n"] = ope_n;
      j["M"] = ope_M;
      j["f"] = f;
      j["seed"] = ope_seed;
      j["exact_mean"] = io::number(r.exact_mean);
      j["exact_variance"] = io::number(r.exact_variance);
      j["mc_mean"] = io::number(r.mc_mean);
      j["mc_variance"] = io::number(r.mc_variance);
      j["std_error"] = io::number(r.std_error);
      j["draws"] = r.draws;
      os << j.dump(2) << '\n';
    };
  }

  // lln
  {
    auto* sub = app.add_subcommand("lln", "law of large numbers for linear statistics along n");
    add_common(sub);
    add_h(sub);
    struct O {
      std::string f = "cauchy";
      std::vector<std::size_t> ns{64, 256, 1024};
      std::size_t draws = 0, factor = 4;
      std::uint64_t seed = 0;
      double eps = 0.1;
    };
    auto o = std::make_shared<O>();
    auto& [f, ns, draws, factor, seed, eps] = *o;
    sub->add_option("--f", f, "battery name (needs a finite bound)");
    sub->add_option("--n", ns, "ascending ensemble sizes")->delimiter(',');
    sub->add_option("--draws", draws, "Monte Carlo draws per n");
    sub->add_option("--seed", seed, "seed");
    sub->add_option("--epsilon", eps, "epsilon in the concentration bound");
    sub->add_option("--node-factor", factor, "Gauss rule size as a multiple of n (>= 4)");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [f, ns, draws, factor, seed, eps] = *o;
      require_ascending(ns, "lln --n");
      const FamilySpec spec = ctx.spec();
      const PeriodicProfile prof = profile_of(spec);
      const bool blend = std::holds_alternative<PeriodicBlend>(spec);
      const JacobiParameters params = ctx.params();
      ProfileOptions po;
      po.h = h_options();
      const CaseLabel label = blend ? CaseLabel::I : classify(prof).label;
      const AsymptoticProfile ap = asymptotic_profile(params, prof, label, blend, po);
      const GaussRuleCache cache(params);
      LlnOptions o;
      o.draws = draws;
      o.seed = seed;
      o.node_factor = factor;
      o.epsilon = eps;
      o.threads = sh.threads;
      const auto rows = lln_experiment(cache, ap, make_test_function(f), ns, o);
      io::CsvWriter w(os);
      w.header({"n", "nodes", "rho", "mean_over_rho", "mc_mean_over_rho", "mc_std_error_over_rho", "var_over_rho", "target",
                "bound", "draws"});
      for (const auto& r : rows)
        w.cell(r.n).cell(r.nodes).cell(r.rho).cell(r.mean_over_rho).cell(r.mc_mean_over_rho).cell(r.mc_std_error_over_rho)
            .cell(r.var_over_rho).cell(r.target).cell(r.bound).cell(r.stats.draws).end();
    };
  }

  // diagnostics
  {
    auto* sub = app.add_subcommand("diagnostics", "finite difference sums and the Carleman partial sums");
    add_common(sub);
    struct O { std::size_t r = 1, period = 1, n_max = 1000; };
    auto o = std::make_shared<O>();
    auto& [r, period, n_max] = *o;
    sub->add_option("--r", r, "difference order");
    sub->add_option("--period", period, "residues N");
    sub->add_option("--n-max", n_max, "last index");
    actions[sub] = [&, o](std::ostream& os) {
      auto& [r, period, n_max] = *o;
      const RegularityReport rep = regularity_diagnostics(ctx.params(), r, period, n_max);
      io::Json j;
      j["family"] = describe(ctx.spec());
      j["r"] = rep.r;
      j["period"] = rep.period;
      j["n_max"] = rep.n_max;
      io::Json seqs = io::Json::array();
      for (const auto& s : rep.sequences) seqs.push_back({{"sequence", s.sequence}, {"residue", s.residue}, {"sums", io::numbers(s.sums)}});
      j["sequences"] = seqs;
      io::Json carl = io::Json::array();
      for (const auto& [n, v] : rep.carleman) carl.push_back({{"n", n}, {"sum", io::number(v)}});
      j["carleman"] = carl;
      j["carleman_increasing"] = rep.carleman_increasing;
      os << j.dump(2) << '\n';
    };
  }

  const auto one_line = [](std::string s) {
    for (char& c : s)
      if (c == '\n' || c == '\r') c = ' ';
    return s;
  };

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    std::ostringstream o, e2;
    app.exit(e, o, e2);
    out << o.str();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    std::ostringstream o, e2;
    app.exit(e, o, e2);
    out << o.str();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: validation: " << one_line(e.what()) << '\n';
    return kExitValidation;
  }

  try {
    for (auto& [sub, action] : actions) {
      if (!sub->parsed()) continue;
      if (sh.out.empty()) {
        action(out);
      } else {
        std::ostringstream buf;
        action(buf);
        std::ofstream f(sh.out, std::ios::binary);
        if (!f) throw ValidationError("cannot open output file '" + sh.out + "'");
        f << buf.str();
      }
      return kExitOk;
    }
    err << "error: validation: no subcommand\n";
    return kExitValidation;
  } catch (const ResolutionError& e) {
    err << "error: resolution: " << one_line(e.what()) << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: validation: " << one_line(e.what()) << '\n';
    return kExitValidation;
  } catch (const ConvergenceError& e) {
    err << "error: numerical: " << one_line(e.what()) << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "error: validation: " << one_line(e.what()) << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: numerical: " << one_line(e.what()) << '\n';
    return kExitNumerical;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace nevai::cli
