#include "tensorcalc/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "tensorcalc/autodiff.hpp"
#include "tensorcalc/newton.hpp"
#include "tensorcalc/parser.hpp"
#include "tensorcalc/problems.hpp"
#include "tensorcalc/serialize.hpp"
#include "tensorcalc/simplify.hpp"

namespace tensorcalc {
namespace {

// Bad flags or unreadable input: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputOptions {
  std::string expr_file;
  std::string inline_text;
  std::vector<std::string> vars;
  std::string env_file;
  std::string problem;
  std::int64_t n = 16;
  std::int64_t k = 5;
  std::int64_t layers = 3;
  std::uint64_t seed = 42;
};

struct DiffOptions {
  std::string wrt;
  std::size_t output = 0;
  int order = 1;
  std::string mode = "auto";
  bool compress = false;
};

struct Loaded {
  ExprDag dag;
  Environment env;
  std::string kind;                 // problem kind, empty for parsed input
  std::vector<std::string> params;  // default differentiation variables
};

const std::vector<std::string> kModeNames = {"forward", "reverse", "cross", "auto"};

void add_input_options(CLI::App* cmd, InputOptions& o) {
  cmd->add_option("--expr", o.expr_file, "Program file");
  cmd->add_option("--inline", o.inline_text, "Program text");
  cmd->add_option("--var", o.vars, "Extra declaration 'NAME : LABELS (DIMS)', repeatable");
  cmd->add_option("--env", o.env_file, "JSON environment (default: standard normal data)");
  cmd->add_option("--seed", o.seed, "Seed for generated data");
  cmd->add_option("--problem", o.problem, "Benchmark objective instead of a program")
      ->check(CLI::IsMember({"logreg", "matfac", "matfac-masked", "nn"}));
  cmd->add_option("--n", o.n, "Problem size (nn: layer width)");
  cmd->add_option("--k", o.k, "Matrix factorization rank");
  cmd->add_option("--layers", o.layers, "Network depth");
}

void add_diff_options(CLI::App* cmd, DiffOptions& d, bool wrt_required) {
  auto* wrt = cmd->add_option("--wrt", d.wrt, "Variable to differentiate with respect to");
  if (wrt_required) wrt->required();
  cmd->add_option("--output", d.output, "Output position");
  cmd->add_option("--order", d.order, "Derivative order")->check(CLI::Range(1, 8));
  cmd->add_option("--mode", d.mode, "forward, reverse, cross or auto (reverse, then cross)")
      ->check(CLI::IsMember(kModeNames));
  cmd->add_flag("--compress", d.compress, "Factor out a trailing unit tensor when possible");
}

std::uint64_t effective_seed(std::uint64_t seed) {
  const char* env = std::getenv("TENSORCALC_SEED");
  if (env == nullptr || *env == '\0') return seed;
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(env, &used);
    if (used == std::strlen(env)) return v;
  } catch (const std::exception&) {
  }
  throw UsageError("TENSORCALC_SEED is not an unsigned integer");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Loaded load_input(const InputOptions& o) {
  const int sources = !o.expr_file.empty() + !o.inline_text.empty() + !o.problem.empty();
  if (sources != 1) throw UsageError("give exactly one of --expr, --inline or --problem");
  const std::uint64_t seed = effective_seed(o.seed);
  Loaded l;
  try {
    if (!o.problem.empty()) {
      if (o.n < 1 || o.k < 1 || o.layers < 1) throw UsageError("--n, --k and --layers must be positive");
      Problem p = make_problem(o.problem, o.n, o.k, o.layers, seed);
      l.dag = std::move(p.dag);
      l.env = std::move(p.env);
      l.kind = p.kind;
      l.params = p.params;
    } else {
      std::string text;
      for (const auto& v : o.vars) text += "var " + v + "\n";
      text += o.expr_file.empty() ? o.inline_text : read_file(o.expr_file);
      l.dag = parse(text);
      if (l.dag.outputs().empty()) throw UsageError("input defines no expression");
      l.params = l.dag.input_names();
      std::mt19937_64 rng(seed);
      for (const auto& name : l.dag.input_names()) {
        l.env[name] = random_normal(l.dag.input_index_set(name).dims(), rng);
      }
    }
    if (!o.env_file.empty()) {
      for (auto& [name, t] : environment_from_json(read_file(o.env_file))) l.env[name] = std::move(t);
    }
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return l;
}

std::vector<DiffMode> level_modes(const std::string& mode, int order) {
  if (mode == "auto") return {};
  return std::vector<DiffMode>(static_cast<std::size_t>(order), mode_from_name(mode));
}

DerivativeResult derive(const Loaded& l, const std::string& wrt, const DiffOptions& d) {
  return higher_order(l.dag, d.output, wrt, d.order, level_modes(d.mode, d.order));
}

// Compresses when asked; a derivative without the pattern stays plain.
DerivativeResult maybe_compress(DerivativeResult r, bool wanted, std::ostream& err) {
  if (!wanted) return r;
  try {
    return compress(r);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotCompressible) throw;
    err << "note: " << e.what() << "; emitting the plain derivative\n";
    return r;
  }
}

void emit_dag(const ExprDag& dag, const std::string& emit, std::ostream& out) {
  if (emit == "json") {
    out << dag_to_json(dag) << "\n";
  } else if (emit == "dot") {
    out << dag_to_dot(dag);
  } else {
    out << print_expr(dag);
  }
}

void emit_result(const DerivativeResult& r, const std::string& emit, std::ostream& out) {
  if (emit == "json") {
    out << derivative_to_json(r) << "\n";
  } else if (emit == "dot") {
    out << dag_to_dot(r.dag, "d" + std::to_string(r.order) + "/d" + r.wrt);
  } else if (r.compression) {
    const auto& c = *r.compression;
    out << "# compressed: full = einsum(" << join_labels(c.core_labels) << "," << join_labels(c.trailing_labels)
        << "->" << join_labels(c.full_labels) << "; core, trailing)\n";
    out << print_expr(r.dag);
  } else {
    out << print_expr(derivative_dag(r));
  }
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string ms_text(double ms, bool timing) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", timing ? ms : 0.0);
  return buf;
}

// Minimum wall time of `repeat` runs in milliseconds.
double time_ms(int repeat, const std::function<void()>& fn) {
  double best = 0.0;
  for (int i = 0; i < std::max(1, repeat); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    best = i == 0 ? ms : std::min(best, ms);
  }
  return best;
}

int cmd_diff(const InputOptions& in, const DiffOptions& d, const std::string& emit, std::ostream& out,
             std::ostream& err) {
  const Loaded l = load_input(in);
  emit_result(maybe_compress(derive(l, d.wrt, d), d.compress, err), emit, out);
  return kExitOk;
}

int cmd_check(const InputOptions& in, const DiffOptions& d, std::optional<double> h, std::optional<double> tol,
              double perturb, std::ostream& out) {
  if (d.order > 2) throw UsageError("check supports orders 1 and 2");
  const Loaded l = load_input(in);
  const double step = h.value_or(d.order == 1 ? 1e-5 : 1e-3);
  const double limit = tol.value_or(d.order == 1 ? 1e-6 : 1e-4);
  const std::vector<std::string> targets = d.wrt.empty() ? l.params : std::vector<std::string>{d.wrt};
  bool ok = true;
  for (const auto& wrt : targets) {
    const DerivativeResult r = derive(l, wrt, d);
    DenseTensor got = evaluate(derivative_dag(r), l.env).outputs.at(0);
    // Test hook: corrupt the symbolic result to exercise the failure path.
    if (perturb != 0.0 && got.size() > 0) got.data()[0] += perturb;
    const DenseTensor want = d.order == 1 ? finite_difference(l.dag, d.output, wrt, l.env, step)
                                          : finite_difference2(l.dag, d.output, wrt, l.env, step);
    const double e = max_rel_diff(got, want);
    const bool pass = e <= limit;
    ok = ok && pass;
    out << wrt << " order=" << d.order << " max_rel_err=" << sci(e) << " tol=" << sci(limit) << " "
        << (pass ? "PASS" : "FAIL") << "\n";
  }
  return ok ? kExitOk : kExitCheckFailed;
}

struct BenchOptions {
  std::string wrt;
  int order = 2;
  std::vector<std::string> modes = {"forward", "reverse", "cross"};
  int repeat = 1;
  bool timing = true;
  std::string csv_file;
};

int cmd_bench(const InputOptions& in, const BenchOptions& b, std::ostream& out) {
  if (in.problem.empty()) throw UsageError("bench needs --problem");
  if (b.repeat < 1) throw UsageError("--repeat must be positive");
  const Loaded l = load_input(in);
  const std::string wrt = b.wrt.empty() ? l.params.front() : b.wrt;
  const bool newton = l.kind.rfind("matfac", 0) == 0 && b.order == 2;

  std::vector<std::vector<std::string>> rows;
  auto row = [&](const std::string& mode, double build, std::int64_t flops, double eval, bool compressed,
                 std::optional<double> solve) {
    const bool has_rank = l.kind.rfind("matfac", 0) == 0;
    rows.push_back({l.kind, std::to_string(in.n), has_rank ? std::to_string(in.k) : "0", mode, ms_text(build, b.timing),
                    std::to_string(flops), ms_text(eval, b.timing), compressed ? "1" : "0",
                    solve ? ms_text(*solve, b.timing) : ""});
  };
  const double f_ms = time_ms(b.repeat, [&] { evaluate(l.dag, l.env, {.optimized = true}); });
  row("function", 0.0, count_flops(l.dag).total(), f_ms, false, std::nullopt);

  // Newton right-hand side: the gradient at the data point.
  DenseTensor grad;
  if (newton) {
    grad = evaluate(derivative_dag(differentiate(l.dag, 0, wrt, DiffMode::Reverse)), l.env).outputs.at(0);
  }
  for (const auto& mode : b.modes) {
    DiffOptions d;
    d.order = b.order;
    d.mode = mode;
    DerivativeResult r;
    const double build = time_ms(1, [&] { r = derive(l, wrt, d); });
    const ExprDag plain = derivative_dag(r);
    DenseTensor value;
    const double eval = time_ms(b.repeat, [&] { value = evaluate(plain, l.env, {.optimized = true}).outputs.at(0); });
    std::optional<double> solve;
    if (newton) solve = time_ms(b.repeat, [&] { solve_dense(value, grad); });
    row(mode, build, count_flops(plain).total(), eval, false, solve);

    if (b.order < 2 || l.kind == "logreg") continue;
    DerivativeResult c;
    try {
      const double squeeze = time_ms(1, [&] { c = compress(r); });
      if (!c.compression) continue;
      std::vector<DenseTensor> parts;
      const double ceval = time_ms(b.repeat, [&] { parts = evaluate(c.dag, l.env, {.optimized = true}).outputs; });
      std::optional<double> csolve;
      if (newton && !c.compression->delta_pairs.empty()) {
        csolve = time_ms(b.repeat, [&] { solve_compressed(*c.compression, parts.at(0), grad); });
      }
      row(mode, build + squeeze, count_flops(c.dag).total(), ceval, true, csolve);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotCompressible) throw;
    }
  }

  const std::vector<std::string> header = {"problem", "n", "k", "mode", "build_ms", "eval_flops",
                                           "eval_ms", "compressed", "solve_ms"};
  auto csv = [&](std::ostream& s) {
    for (std::size_t i = 0; i < header.size(); ++i) s << (i ? "," : "") << header[i];
    s << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) s << (i ? "," : "") << r[i];
      s << "\n";
    }
  };
  if (b.csv_file.empty()) {
    csv(out);
    return kExitOk;
  }
  std::ofstream file(b.csv_file);
  if (!file) throw UsageError("cannot write '" + b.csv_file + "'");
  csv(file);
  // Aligned table on stdout when the CSV goes to a file.
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto& r : rows) width[i] = std::max(width[i], r[i].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      out << (i ? "  " : "") << cells[i] << std::string(width[i] - cells[i].size(), ' ');
    }
    out << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
  return kExitOk;
}

int cmd_show(const InputOptions& in, const DiffOptions& d, std::ostream& out, std::ostream& err) {
  const Loaded l = load_input(in);
  if (d.wrt.empty()) {
    out << dag_to_dot(l.dag);
  } else {
    emit_result(maybe_compress(derive(l, d.wrt, d), d.compress, err), "dot", out);
  }
  return kExitOk;
}

int cmd_eval(const InputOptions& in, bool optimized, bool flops, std::ostream& out) {
  const Loaded l = load_input(in);
  const Evaluation ev = evaluate(l.dag, l.env, {.optimized = optimized});
  for (const auto& t : ev.outputs) out << tensor_to_json(t);
  if (flops) {
    out << "# flops multiplies=" << ev.flops.multiplies << " adds=" << ev.flops.adds << " unary=" << ev.flops.unary
        << " total=" << ev.flops.total() << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Symbolic tensor calculus: differentiate, simplify, evaluate and benchmark tensor expressions",
               "tensorcalc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  InputOptions in;
  DiffOptions d;
  std::string emit = "text";
  auto emit_check = CLI::IsMember({"text", "json", "dot"});

  auto* diff = app.add_subcommand("diff", "Differentiate an expression");
  add_input_options(diff, in);
  add_diff_options(diff, d, true);
  diff->add_option("--emit", emit, "text, json or dot")->check(emit_check);

  auto* check = app.add_subcommand("check", "Compare symbolic derivatives against finite differences");
  check->set_help_flag("--help", "Print this help message and exit");  // frees the name h for the step
  add_input_options(check, in);
  add_diff_options(check, d, false);
  std::optional<double> h, tol;
  double perturb = 0.0;
  check->add_option("--h", h, "Difference step (default 1e-5, or 1e-3 for order 2)");
  check->add_option("--tol", tol, "Relative tolerance (default 1e-6, or 1e-4 for order 2)");
  check->add_option("--perturb", perturb, "Add this to the first symbolic entry (negative control)");

  auto* bench = app.add_subcommand("bench", "Benchmark derivative modes on a problem (CSV)");
  add_input_options(bench, in);
  BenchOptions b;
  bench->add_option("--wrt", b.wrt, "Variable (default: the problem's first parameter)");
  bench->add_option("--order", b.order, "Derivative order")->check(CLI::Range(1, 4));
  bench->add_option("--modes", b.modes, "Comma-separated modes")->delimiter(',')->check(CLI::IsMember(kModeNames));
  bench->add_option("--repeat", b.repeat, "Timing repetitions (minimum is reported)");
  bench->add_flag("!--no-timing", b.timing, "Print zero for all times (reproducible output)");
  bench->add_option("--csv", b.csv_file, "Write CSV here and print a table instead");

  auto* show = app.add_subcommand("show", "Graphviz DOT of an expression or its derivative");
  add_input_options(show, in);
  add_diff_options(show, d, false);

  auto* simp = app.add_subcommand("simplify", "Simplify an expression");
  add_input_options(simp, in);
  simp->add_option("--emit", emit, "text, json or dot")->check(emit_check);

  auto* ev = app.add_subcommand("eval", "Evaluate an expression");
  add_input_options(ev, in);
  bool optimized = false, flops = false;
  ev->add_flag("--optimized", optimized, "Use the transpose-and-multiply kernel");
  ev->add_flag("--flops", flops, "Print the FLOP report");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << "run 'tensorcalc --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (diff->parsed()) return cmd_diff(in, d, emit, out, err);
    if (check->parsed()) return cmd_check(in, d, h, tol, perturb, out);
    if (bench->parsed()) return cmd_bench(in, b, out);
    if (show->parsed()) return cmd_show(in, d, out, err);
    if (simp->parsed()) {
      emit_dag(simplify(load_input(in).dag), emit, out);
      return kExitOk;
    }
    if (ev->parsed()) return cmd_eval(in, optimized, flops, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace tensorcalc
