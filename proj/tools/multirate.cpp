// multirate: tables, multirate tableaux, integration runs, convergence and
// efficiency studies, and linear stability scans.
//
//   multirate tableau 38
//   multirate tableau --family 1/3 2/3
//   multirate converge --method rmis-38 --problem linear --m 100
//   multirate stability --method mis-38 --kappa 10 --out out

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rmis/butcher.hpp"
#include "rmis/convergence.hpp"
#include "rmis/gark.hpp"
#include "rmis/io.hpp"
#include "rmis/problems.hpp"
#include "rmis/stability.hpp"
#include "rmis/stepper.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rmis;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitDomain = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string config;
  std::string out;
  std::string refcache;
  double ref_tol = kDefaultReferenceTolerance;
  std::vector<std::string> methods;
  std::string problem;
  std::string params;  // JSON object of problem overrides
  std::vector<double> h;
  int m = 100;
  double kappa = 10.0;

  // tableau
  std::string table_name;
  std::vector<std::string> family;
  bool json_out = false;
};

/// "1/3", "0.25", "2" as an exact rational.
Rational parse_rational(const std::string& text) {
  const auto bad = [&] { return InvalidArgument("not a number: '" + text + "'"); };
  if (text.empty()) throw bad();
  if (const auto slash = text.find('/'); slash != std::string::npos) {
    try {
      return Rational(text);
    } catch (const std::exception&) {
      throw bad();
    }
  }
  std::size_t pos = 0;
  bool neg = false;
  if (text[pos] == '-' || text[pos] == '+') neg = text[pos++] == '-';
  boost::multiprecision::cpp_int num = 0, den = 1;
  bool digits = false, dot = false;
  for (; pos < text.size(); ++pos) {
    const char ch = text[pos];
    if (ch == '.' && !dot) {
      dot = true;
    } else if (ch >= '0' && ch <= '9') {
      num = num * 10 + (ch - '0');
      if (dot) den *= 10;
      digits = true;
    } else {
      throw bad();
    }
  }
  if (!digits) throw bad();
  Rational r(num, den);
  return neg ? Rational(-r) : r;
}

std::string fmt(double x) { return format_number(x); }

void print_table(const ButcherTable& t, std::ostream& os) {
  os << t.name << " (" << t.stages() << " stages)\n";
  os << std::setprecision(17);
  for (int i = 0; i < t.stages(); ++i) {
    os << "  " << std::setw(24) << t.c(i) << " |";
    for (int j = 0; j < t.stages(); ++j) os << " " << std::setw(24) << t.A(i, j);
    os << "\n";
  }
  os << "  " << std::setw(24) << "" << " |";
  for (int j = 0; j < t.stages(); ++j) os << " " << std::setw(24) << t.b(j);
  os << "\n";
}

/// Scalar or array config values become a vector.
std::vector<double> as_double_list(const json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  return {j.get<double>()};
}

std::vector<std::string> as_string_list(const json& j) {
  if (j.is_array()) return j.get<std::vector<std::string>>();
  return {j.get<std::string>()};
}

/// Values from --config fill every option not given on the command line.
void apply_config(CLI::App& sub, Options& o) {
  if (o.config.empty()) return;
  std::ifstream f(o.config);
  if (!f) throw InvalidArgument("cannot read config file " + o.config);
  json cfg;
  try {
    cfg = json::parse(f);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!cfg.is_object()) throw InvalidArgument("config file must hold a JSON object");
  const auto unset = [&](const char* flag) {
    auto* opt = sub.get_option_no_throw(flag);
    return !opt || opt->count() == 0;
  };
  try {
    for (const auto& [key, val] : cfg.items()) {
      if (key == "method" || key == "methods") {
        if (unset("--method")) o.methods = as_string_list(val);
      } else if (key == "problem") {
        if (unset("--problem")) o.problem = val.get<std::string>();
      } else if (key == "params") {
        if (unset("--params")) o.params = val.dump();
      } else if (key == "h") {
        if (unset("--h")) o.h = as_double_list(val);
      } else if (key == "m") {
        if (unset("--m")) o.m = val.get<int>();
      } else if (key == "kappa") {
        if (unset("--kappa")) o.kappa = val.get<double>();
      } else if (key == "out") {
        if (unset("--out")) o.out = val.get<std::string>();
      } else if (key == "ref_tol") {
        if (unset("--ref-tol")) o.ref_tol = val.get<double>();
      } else if (key == "refcache") {
        if (unset("--refcache")) o.refcache = val.get<std::string>();
      } else {
        throw InvalidArgument("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config value has the wrong type: ") + e.what());
  }
}

fs::path out_dir(const Options& o) { return o.out.empty() ? fs::path("out") : fs::path(o.out); }

fs::path refcache_dir(const Options& o) {
  return o.refcache.empty() ? default_refcache_dir() : fs::path(o.refcache);
}

MultirateProblem load_problem(const Options& o) {
  if (o.problem.empty()) throw InvalidArgument("--problem is required");
  json overrides = json::object();
  if (!o.params.empty()) {
    try {
      overrides = json::parse(o.params);
    } catch (const json::exception&) {
      throw InvalidArgument("--params must be a JSON object");
    }
  }
  return problem_by_name(o.problem, overrides);
}

const std::string& single_method(const Options& o) {
  if (o.methods.size() != 1) throw InvalidArgument("exactly one --method is required");
  return o.methods.front();
}

std::vector<double> h_list(const Options& o) {
  return o.h.empty() ? default_h_list(o.problem) : o.h;
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_output(path, std::ios::out | std::ios::binary);
  f << text;
}

// --------------------------------------------------------------------------

int cmd_tableau(const Options& o) {
  ButcherTable t;
  json extra = json::object();
  if (!o.family.empty()) {
    if (!o.table_name.empty()) throw InvalidArgument("give either a table name or --family");
    const Rational c2 = parse_rational(o.family[0]);
    const Rational c3 = parse_rational(o.family[1]);
    t = butcher_family(c2, c3);
    const auto [mis, rmis] = family_condition_curves(c2.convert_to<double>(), c3.convert_to<double>());
    extra = {{"c2", c2.convert_to<double>()},
             {"c3", c3.convert_to<double>()},
             {"mis_curve", mis},
             {"rmis_curve", rmis}};
  } else if (o.table_name == "38" || o.table_name == "3/8") {
    t = make_three_eighths();
  } else if (o.table_name == "kw3") {
    t = make_kw3();
  } else if (o.table_name.empty()) {
    throw InvalidArgument("table name (38, kw3) or --family c2 c3 required");
  } else {
    throw InvalidArgument("unknown table '" + o.table_name + "'");
  }

  json rep = to_json(t);
  rep["order"] = classical_order(t);
  rep["rfsmr3_residual"] = rfsmr3_residual(t);
  rep["rmis4_residual"] = rmis4_residual(t);
  for (const auto& [k, v] : extra.items()) rep[k] = v;

  if (o.json_out) {
    std::cout << rep.dump(2) << "\n";
  } else {
    print_table(t, std::cout);
    std::cout << "order            " << rep["order"].get<int>() << "\n"
              << "rfsmr3 residual  " << fmt(rep["rfsmr3_residual"]) << "\n"
              << "rmis4 residual   " << fmt(rep["rmis4_residual"]) << "\n";
    if (!o.family.empty())
      std::cout << "MIS curve        " << fmt(extra["mis_curve"]) << "\n"
                << "RMIS curve       " << fmt(extra["rmis_curve"]) << "\n";
  }
  if (!o.out.empty()) write_text(out_dir(o) / ("tableau_" + t.name + ".json"), rep.dump(2) + "\n");
  return 0;
}

int cmd_assemble(const Options& o) {
  const auto spec = make_method(single_method(o), o.m);
  const auto g = tableau_for(spec);
  const auto report = check_conditions(g);
  json rep = to_json(g);
  rep["method"] = spec.name;
  rep["subcycles"] = spec.subcycles;
  rep["conditions"] = to_json(report);
  if (o.json_out) std::cout << rep.dump(2) << "\n";
  else
    std::cout << spec.name << ": " << g.fast_stages() << " fast, " << g.slow_stages()
              << " slow stages, schedule";
  if (!o.json_out) {
    for (int n : spec.subcycles) std::cout << " " << n;
    std::cout << "\nsatisfied order  " << report.satisfied_order << "\n"
              << "max residual (order <= 4)  " << fmt(report.max_residual(4)) << "\n";
  }
  if (!o.out.empty()) write_text(out_dir(o) / ("assemble_" + spec.name + ".json"), rep.dump(2) + "\n");
  return 0;
}

int cmd_run(const Options& o) {
  const auto spec = make_method(single_method(o), o.m);
  const auto problem = load_problem(o);
  if (o.h.size() != 1) throw InvalidArgument("run needs a single --h");
  const auto traj = integrate(problem, spec, o.h.front());
  const fs::path path = out_dir(o) / ("run_" + spec.name + "_" + problem.name + ".csv");
  write_trajectory(traj, path);
  std::cout << "steps " << traj.steps << ", fast calls " << traj.fast_calls << ", slow calls "
            << traj.slow_calls << "\nwrote " << path.string() << "\n";
  return 0;
}

ConvergenceOptions convergence_options(const Options& o) {
  ConvergenceOptions c;
  c.ref_tol = o.ref_tol;
  c.refcache = refcache_dir(o);
  return c;
}

int cmd_converge(const Options& o) {
  const auto problem = load_problem(o);
  const auto hs = h_list(o);
  if (o.methods.empty()) throw InvalidArgument("--method is required");
  std::vector<ConvergenceReport> reports;
  json all = json::array();
  for (const auto& name : o.methods) {
    const auto spec = make_method(name, o.m);
    reports.push_back(run_convergence(spec, problem, hs, o.m, convergence_options(o)));
    const auto& r = reports.back();
    all.push_back(to_json(r));
    std::cout << std::left << std::setw(16) << name << " order " << fmt(r.fitted_order) << "\n";
  }
  const fs::path base = out_dir(o) / ("converge_" + problem.name);
  {
    auto f = open_output(base.string() + ".csv", std::ios::out | std::ios::binary);
    write_convergence_csv(reports, f);
  }
  write_text(base.string() + ".json", all.dump(2) + "\n");
  std::cout << "wrote " << base.string() << ".csv\n";
  return 0;
}

int cmd_efficiency(const Options& o) {
  const auto problem = load_problem(o);
  const auto hs = h_list(o);
  auto methods = o.methods;
  if (methods.empty()) methods = {"mis-38", "mis-kw3", "rmis-38", "rmis-kw3", "opt-38-minnorm"};
  std::vector<ConvergenceReport> reports;
  for (const auto& name : methods) {
    const auto spec = make_method(name, o.m);
    reports.push_back(run_convergence(spec, problem, hs, o.m, convergence_options(o)));
    // per-step cost from a single step from the initial state
    StepWorkspace<Eigen::VectorXd> ws;
    ws.prepare(spec, problem.y0);
    const auto one = step(problem, spec, problem.t0, problem.y0, hs.front(), ws);
    std::cout << std::left << std::setw(16) << name << " calls/step "
              << one.n_fast_calls + one.n_slow_calls << " (nominal "
              << nominal_calls_per_step(spec) << ")\n";
  }
  const fs::path path = out_dir(o) / ("efficiency_" + problem.name + ".csv");
  auto f = open_output(path, std::ios::out | std::ios::binary);
  CsvWriter w(f);
  w.row({"method", "h", "total_calls", "rms_error"});
  for (const auto& r : reports)
    for (std::size_t k = 0; k < r.h_values.size(); ++k)
      w.row({r.method, fmt(r.h_values[k]),
             r.total_calls[k] >= 0 ? std::to_string(r.total_calls[k]) : "", fmt(r.rms_errors[k])});
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

int cmd_stability(const Options& o) {
  if (!(o.kappa > 0.0)) throw InvalidArgument("--kappa must be positive");
  const auto spec = make_method(single_method(o), o.m);
  const auto s = scan(spec, o.kappa);
  std::ostringstream tag;
  tag << "stability_" << spec.name << "_k" << o.kappa;
  const fs::path base = out_dir(o) / tag.str();
  {
    auto f = open_output(base.string() + ".csv", std::ios::out | std::ios::binary);
    write_scan_csv(s, f);
  }
  write_text(base.string() + ".svg", scan_svg(s));
  std::cout << "area_fraction " << fmt(s.area_fraction) << "\nwrote " << base.string()
            << ".csv, .svg\n";
  return 0;
}

int cmd_optimize(const Options& o) {
  // Minimum-norm fast weights for the 3/8-Rule pair under the order <= 4
  // conditions; not the published optimized coefficients, which depend on
  // order-5 conditions.
  const auto outer = make_three_eighths();
  const auto sched = default_subcycles(outer, o.m);
  for (int n : sched)
    if (n != sched.front()) throw InvalidArgument("optimize needs an even subcycle schedule");
  const auto inner = subcycle_inner(outer, sched.front());
  const auto w = optimize_fast_weights(outer, inner);
  auto g = assemble_rmis(outer, inner);
  g.b_f = pad_fast_weights(g, w);
  const auto sys = fast_condition_system(g);
  const double res = (sys.matrix * g.b_f - sys.rhs).cwiseAbs().maxCoeff();
  const auto report = check_conditions(g);
  std::cout << "fast weights     " << w.size() << " (subcycles " << sched.front() << ")\n"
            << "norm             " << fmt(w.norm()) << "\n"
            << "range            [" << fmt(w.minCoeff()) << ", " << fmt(w.maxCoeff()) << "]\n"
            << "max residual     " << fmt(res) << "\n"
            << "satisfied order  " << report.satisfied_order << "\n"
            << "note: minimum-norm solution of the order <= 4 fast conditions\n";
  if (!o.out.empty()) {
    json rep = {{"subcycles", sched},
                {"fast_weights", to_json_vector(w)},
                {"norm", w.norm()},
                {"max_residual", res},
                {"satisfied_order", report.satisfied_order}};
    write_text(out_dir(o) / "optimize_38.json", rep.dump(2) + "\n");
  }
  return 0;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--config", o.config, "JSON file with option defaults")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory (default: out)");
}

void add_method(CLI::App* sub, Options& o, bool many = false) {
  auto* opt = sub->add_option("--method", o.methods, many ? "method names" : "method name");
  opt->delimiter(',');
  if (!many) opt->expected(1);
  sub->add_option("--m", o.m, "time-scale ratio used for the subcycle schedule")
      ->check(CLI::PositiveNumber);
}

void add_problem(CLI::App* sub, Options& o) {
  sub->add_option("--problem", o.problem, "inverter, linear, brusselator, zero");
  sub->add_option("--params", o.params, "problem parameter overrides as a JSON object");
}

void add_reference(CLI::App* sub, Options& o) {
  sub->add_option("--ref-tol", o.ref_tol, "reference RMS change target")->check(CLI::PositiveNumber);
  sub->add_option("--refcache", o.refcache, "reference cache directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multirate infinitesimal step methods: tables, runs, studies"};
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);
  Options o;

  auto* tab = app.add_subcommand("tableau", "print a 4-stage table and its residuals");
  tab->add_option("name", o.table_name, "38 or kw3");
  tab->add_option("--family", o.family, "c2 c3 of the two-parameter family")->expected(2);
  tab->add_flag("--json", o.json_out, "print JSON");
  add_common(tab, o);

  auto* asmb = app.add_subcommand("assemble", "assemble a method's multirate tableau");
  add_method(asmb, o);
  asmb->add_flag("--json", o.json_out, "print JSON");
  add_common(asmb, o);

  auto* run = app.add_subcommand("run", "integrate one problem at a fixed step");
  add_method(run, o);
  add_problem(run, o);
  run->add_option("--h", o.h, "step size")->expected(1);
  add_common(run, o);

  auto* conv = app.add_subcommand("converge", "convergence study against a reference");
  add_method(conv, o, true);
  add_problem(conv, o);
  conv->add_option("--h", o.h, "step sizes")->delimiter(',');
  add_reference(conv, o);
  add_common(conv, o);

  auto* eff = app.add_subcommand("efficiency", "error against right-hand side calls");
  add_method(eff, o, true);
  add_problem(eff, o);
  eff->add_option("--h", o.h, "step sizes")->delimiter(',');
  add_reference(eff, o);
  add_common(eff, o);

  auto* stab = app.add_subcommand("stability", "linear stability scan over (xi, eta)");
  add_method(stab, o);
  stab->add_option("--kappa", o.kappa, "slow/fast stiffness ratio");
  add_common(stab, o);

  auto* opt = app.add_subcommand("optimize", "minimum-norm fast weights for the 3/8 pair");
  opt->add_option("--m", o.m, "time-scale ratio")->check(CLI::PositiveNumber);
  add_common(opt, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    apply_config(*sub, o);
    if (sub == tab) return cmd_tableau(o);
    if (sub == asmb) return cmd_assemble(o);
    if (sub == run) return cmd_run(o);
    if (sub == conv) return cmd_converge(o);
    if (sub == eff) return cmd_efficiency(o);
    if (sub == stab) return cmd_stability(o);
    if (sub == opt) return cmd_optimize(o);
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}
