#include "qnm/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "qnm/certificate.hpp"
#include "qnm/error.hpp"
#include "qnm/optimizer.hpp"
#include "qnm/sensitivity.hpp"
#include "qnm/spectrum.hpp"
#include "qnm/structure_io.hpp"
#include "qnm/timedomain.hpp"

namespace qnm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for conditions that map to a specific exit code rather than a solver failure.
struct CliFailure {
  int code;
  std::string message;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

class Csv {
 public:
  explicit Csv(std::initializer_list<std::string> header) {
    bool first = true;
    for (const auto& h : header) {
      text_ += (first ? "" : ",") + h;
      first = false;
    }
    text_ += "\n";
  }
  Csv& num(double v) { return cell(format_number(v)); }
  Csv& integer(long long v) { return cell(std::to_string(v)); }
  Csv& str(const std::string& s) { return cell(csv_field(s)); }
  void end_row() {
    text_ += "\n";
    fresh_ = true;
  }
  const std::string& text() const { return text_; }

 private:
  Csv& cell(const std::string& s) {
    text_ += (fresh_ ? "" : ",") + s;
    fresh_ = false;
    return *this;
  }
  std::string text_;
  bool fresh_ = true;
};

cplx parse_kappa(const std::vector<double>& v) {
  if (v.size() != 2) throw CliFailure{InputError, "kappa needs two numbers: re,im"};
  return {v[0], v[1]};
}

json kappa_json(cplx k) { return json::array({k.real(), k.imag()}); }

StructureFile load_medium(const std::string& path, const std::optional<double>& constant) {
  if (!path.empty() && constant) throw CliFailure{InputError, "give either --structure or --constant"};
  if (!path.empty()) return read_structure(path);
  if (!constant) throw CliFailure{InputError, "a medium is required (--structure or --constant)"};
  if (!(*constant >= 0.0)) throw CliFailure{InputError, "--constant must be non-negative"};
  StructureFile f;
  f.bounds = {0.0, std::max(*constant, 1.0)};
  f.structure = PiecewiseStructure::constant(*constant);
  return f;
}

json certificate_json(const PiecewiseStructure& B, cplx kappa, const AdmissibleBounds& bounds, double angle_tol) {
  json j;
  j["kappa"] = kappa_json(kappa);
  if (!is_bang_bang(B, bounds)) {
    j["bang_bang"] = false;
    j["pass"] = false;
    return j;
  }
  j["bang_bang"] = true;
  if (std::abs(kappa.real()) <= 1e-12 * std::max(1.0, std::abs(kappa))) {
    const auto nr = nonlinear_residual(B, kappa, bounds);
    j["on_axis"] = true;
    j["theta"] = nr.theta;
    j["mismatch"] = nr.mismatch;
    j["pass"] = nr.mismatch < 1e-3;
    return j;
  }
  const auto c = switch_alignment(B, kappa, bounds);
  j["on_axis"] = false;
  j["omega"] = c.omega;
  j["theta"] = c.theta;
  json sw = json::array();
  for (std::size_t k = 0; k < c.switches.size(); ++k)
    sw.push_back({{"x", c.switches[k].x},
                  {"direction", c.switches[k].direction == SwitchDirection::Up ? "up" : "down"},
                  {"deviation", c.deviations[k]}});
  j["switches"] = sw;
  j["max_deviation"] = c.max_deviation;
  j["max_interval_variation"] = c.max_interval_variation;
  j["mismatch"] = c.nonlinear_mismatch;
  j["angle_tol"] = angle_tol;
  j["pass"] = c.passes(angle_tol);
  return j;
}

// Fields of OptimizeConfig plus the seed description.
struct OptimizeInput {
  OptimizeConfig cfg;
  std::optional<double> seed_constant;
  std::string seed_structure;
};

OptimizeInput parse_optimize_config(const json& j, const fs::path& base) {
  static const std::vector<std::string> known{
      "alpha",   "bounds",    "N",        "step0",    "step_grow", "step_shrink",       "step_max", "step_min",
      "max_iters", "tol_freq", "tol_grad", "armijo", "escape_collisions", "finalize", "kappa_seed", "seed"};
  if (!j.is_object()) throw CliFailure{InputError, "config must be a JSON object"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw CliFailure{InputError, "unknown config field '" + k + "'"};
  OptimizeInput in;
  auto& c = in.cfg;
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("bounds")) {
    const auto b = j.at("bounds").get<std::vector<double>>();
    if (b.size() != 2) throw CliFailure{InputError, "bounds must have two entries"};
    c.bounds = {b[0], b[1]};
  }
  c.N = j.value("N", c.N);
  c.step0 = j.value("step0", c.step0);
  c.step_grow = j.value("step_grow", c.step_grow);
  c.step_shrink = j.value("step_shrink", c.step_shrink);
  c.step_max = j.value("step_max", c.step_max);
  c.step_min = j.value("step_min", c.step_min);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.tol_freq = j.value("tol_freq", c.tol_freq);
  c.tol_grad = j.value("tol_grad", c.tol_grad);
  c.armijo = j.value("armijo", c.armijo);
  c.escape_collisions = j.value("escape_collisions", c.escape_collisions);
  c.finalize = j.value("finalize", c.finalize);
  if (j.contains("kappa_seed")) c.kappa_seed = parse_kappa(j.at("kappa_seed").get<std::vector<double>>());
  if (j.contains("seed")) {
    const auto& s = j.at("seed");
    if (s.contains("constant")) in.seed_constant = s.at("constant").get<double>();
    if (s.contains("structure")) {
      fs::path p = s.at("structure").get<std::string>();
      in.seed_structure = (p.is_relative() ? base / p : p).string();
    }
    if (in.seed_constant && !in.seed_structure.empty())
      throw CliFailure{InputError, "seed takes either 'constant' or 'structure'"};
  }
  c.bounds.validate();
  c.validate();
  return in;
}

json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw CliFailure{InputError, "cannot open " + path};
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw CliFailure{InputError, path + ": " + e.what()};
  }
}

// Seed grid for an optimization run. Throws CliFailure(Infeasible) when none exists.
GridStructure seed_grid(OptimizeInput& in) {
  auto& c = in.cfg;
  if (!in.seed_structure.empty()) {
    const auto f = read_structure(in.seed_structure);
    if (!f.structure.within(c.bounds, 1e-12)) throw CliFailure{InputError, "seed structure violates the bounds"};
    return to_grid(f.structure, c.N);
  }
  if (in.seed_constant) {
    if (!c.bounds.contains(*in.seed_constant)) throw CliFailure{InputError, "seed constant outside the bounds"};
    return GridStructure(c.N, *in.seed_constant);
  }
  if (c.alpha == 0.0 && c.bounds.b2 <= 1.0)
    throw CliFailure{Infeasible, "no admissible medium resonates on the imaginary axis when b2 <= 1"};
  try {
    const auto s = default_seed(c.alpha, c.bounds);
    if (!c.kappa_seed && c.alpha != 0.0) c.kappa_seed = s.kappa;
    return GridStructure(c.N, s.b);
  } catch (const SolverError& e) {
    throw CliFailure{Infeasible, std::string("no seed: ") + e.what()};
  }
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  RunManifest manifest;
  fs::path manifest_path;

  void write(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    write_text_atomic(p, text);
    manifest.outputs.push_back(p.string());
  }
};

int cmd_spectrum(Context& ctx, const std::string& structure, const std::optional<double>& constant,
                 const std::vector<double>& window, double tol, const std::string& out) {
  const auto f = load_medium(structure, constant);
  if (!structure.empty()) ctx.manifest.inputs.push_back(structure);
  if (window.size() != 4) throw CliFailure{InputError, "window needs re_min,re_max,im_min,im_max"};
  const SpectralWindow w{window[0], window[1], window[2], window[3]};
  w.validate();
  LocateOptions opt;
  opt.tol = tol;
  const auto roots = locate(f.structure, w, opt);
  Csv csv{"re", "im", "multiplicity", "residual"};
  for (const auto& q : roots) {
    csv.num(q.kappa.real()).num(q.kappa.imag()).integer(q.multiplicity).num(q.residual);
    csv.end_row();
  }
  ctx.write(out, csv.text());
  ctx.manifest.summary_json = json{{"roots", roots.size()}}.dump();
  ctx.out << roots.size() << " roots\n";
  return Ok;
}

int cmd_optimize(Context& ctx, const std::string& config, const std::string& out_dir) {
  const fs::path dir(out_dir);
  ctx.manifest.config_path = config;
  ctx.manifest.inputs.push_back(config);
  ctx.manifest_path = dir / "manifest.json";
  auto in = parse_optimize_config(read_json_file(config), fs::path(config).parent_path());
  if (!in.seed_structure.empty()) ctx.manifest.inputs.push_back(in.seed_structure);
  const auto B0 = seed_grid(in);

  Csv traj{"iter", "re", "im", "drift", "extremality", "step"};
  in.cfg.observer = [&](const IterationRecord& r) {
    traj.integer(r.iter).num(r.kappa.real()).num(r.kappa.imag()).num(r.drift).num(r.extremality).num(r.step);
    traj.end_row();
  };
  OptimizeResult res;
  try {
    res = minimize_im_at_frequency(in.cfg, B0);
  } catch (...) {
    ctx.write(dir / "trajectory.csv", traj.text());
    throw;
  }
  ctx.write(dir / "trajectory.csv", traj.text());
  const auto P = res.structure();
  const cplx k = res.final_kappa();
  ctx.write(dir / "structure.json", dump_structure({in.cfg.bounds, P}));
  json cert = certificate_json(P, k, in.cfg.bounds, 0.05);
  ctx.write(dir / "certificate.json", cert.dump(2) + "\n");
  json summary{{"kappa", kappa_json(k)},
               {"kappa_grid", kappa_json(res.kappa)},
               {"stop", std::string(to_string(res.stop))},
               {"iterations", res.trajectory.size()},
               {"escapes", res.escapes},
               {"certificate_pass", cert["pass"]}};
  if (res.final) {
    summary["forced_measure"] = res.final->forced_measure;
    summary["polished"] = res.final->polished;
  }
  ctx.manifest.summary_json = summary.dump();
  char line[160];
  std::snprintf(line, sizeof line, "kappa = %.12f %+.12fi  stop = %s  certificate %s\n", k.real(), k.imag(),
                std::string(to_string(res.stop)).c_str(), cert["pass"].get<bool>() ? "pass" : "fail");
  ctx.out << line;
  return Ok;
}

int cmd_certify(Context& ctx, const std::string& structure, const std::vector<double>& kappa, double angle_tol,
                const std::string& out) {
  const auto f = read_structure(structure);
  ctx.manifest.inputs.push_back(structure);
  const auto nr = newton_refine(f.structure, parse_kappa(kappa));
  if (!nr.converged) throw SolverError(ErrorKind::NoConvergence, "kappa is not near a resonance of the structure");
  const json cert = certificate_json(f.structure, nr.z, f.bounds, angle_tol);
  ctx.write(out, cert.dump(2) + "\n");
  ctx.manifest.summary_json = json{{"pass", cert["pass"]}}.dump();
  ctx.out << (cert["pass"].get<bool>() ? "pass" : "fail") << "\n";
  return Ok;
}

int cmd_simulate(Context& ctx, const std::string& structure, const std::optional<double>& constant,
                 const std::vector<double>& mode, const std::vector<double>& pulse, double T, std::size_t M,
                 double probe, bool fit, const std::string& out) {
  const auto f = load_medium(structure, constant);
  if (!structure.empty()) ctx.manifest.inputs.push_back(structure);
  if (mode.empty() == pulse.empty()) throw CliFailure{InputError, "give exactly one of --mode or --pulse"};
  SimulateOptions opt;
  opt.T = T;
  opt.M = M;
  opt.probe = probe;
  std::vector<double> u0(M + 1), v0(M + 1);
  std::optional<cplx> k;
  if (!mode.empty()) {
    k = parse_kappa(mode);
    const auto nr = newton_refine(f.structure, *k);
    if (!nr.converged) throw SolverError(ErrorKind::NoConvergence, "--mode is not near a resonance");
    k = nr.z;
    std::vector<double> xs(M + 1);
    for (std::size_t j = 0; j <= M; ++j) xs[j] = static_cast<double>(j) / static_cast<double>(M);
    const auto tr = sample_phi(f.structure, *k, xs);
    for (std::size_t j = 0; j <= M; ++j) {
      u0[j] = tr.samples[j].y.real();
      v0[j] = (cplx(0.0, 1.0) * *k * tr.samples[j].y).real();
    }
  } else {
    if (pulse.size() != 2 || !(pulse[1] > 0.0)) throw CliFailure{InputError, "--pulse needs center,width"};
    for (std::size_t j = 0; j <= M; ++j) {
      const double s = (static_cast<double>(j) / static_cast<double>(M) - pulse[0]) / pulse[1];
      u0[j] = std::exp(-s * s);
      v0[j] = 2.0 * s / pulse[1] * std::exp(-s * s);  // travels to the right in unit media
    }
  }
  const auto r = simulate(f.structure, u0, v0, opt);
  Csv csv{"t", "energy", "u_probe"};
  for (std::size_t i = 0; i < r.t.size(); ++i) {
    csv.num(r.t[i]).num(r.energy[i]).num(r.u_probe[i]);
    csv.end_row();
  }
  ctx.write(out, csv.text());
  json summary{{"steps", r.t.size()}, {"dt", r.final.dt}};
  if (fit) {
    if (!k) throw CliFailure{InputError, "--fit needs --mode"};
    const auto d = excite_and_fit(f.structure, *k, T, M);
    summary["fitted_beta"] = d.fitted_beta;
    summary["expected_beta"] = d.expected;
    char line[120];
    std::snprintf(line, sizeof line, "fitted_beta = %.10f  expected = %.10f\n", d.fitted_beta, d.expected);
    ctx.out << line;
  }
  ctx.manifest.summary_json = summary.dump();
  return Ok;
}

int cmd_splitting(Context& ctx, const std::string& structure, const std::vector<double>& kappa, int order,
                  std::vector<double> zetas, std::size_t cells, const std::string& out) {
  PiecewiseStructure P;
  cplx k0;
  if (structure.empty()) {
    if (!kappa.empty()) throw CliFailure{InputError, "--kappa needs --structure"};
    const auto d = find_double_eigenvalue(4.0, 0.53, 1.26, {2.97, 1.10});
    P = d.structure;
    k0 = d.kappa;
  } else {
    P = read_structure(structure).structure;
    ctx.manifest.inputs.push_back(structure);
    k0 = parse_kappa(kappa);
  }
  if (zetas.empty()) zetas = {1e-4, 1e-5, 1e-6, 1e-7};
  const auto p = splitting_probe(P, k0, order, GridStructure(cells, 1.0), zetas);
  Csv csv{"zeta", "branch", "re", "im", "shift"};
  for (std::size_t i = 0; i < p.zeta_values.size(); ++i)
    for (std::size_t b = 0; b < p.branch_points[i].size(); ++b) {
      const cplx z = p.branch_points[i][b];
      csv.num(p.zeta_values[i]).integer(static_cast<long long>(b)).num(z.real()).num(z.imag()).num(std::abs(z - k0));
      csv.end_row();
    }
  ctx.write(out, csv.text());
  ctx.manifest.summary_json = json{{"kappa0", kappa_json(p.kappa0)},
                                   {"order", p.r},
                                   {"fitted_exponent", p.fitted_exponent},
                                   {"c1_predicted", kappa_json(p.c1_predicted)},
                                   {"c1_fitted", kappa_json(p.c1_fitted)}}
                                  .dump();
  char line[80];
  std::snprintf(line, sizeof line, "fitted_exponent = %.6f\n", p.fitted_exponent);
  ctx.out << line;
  return Ok;
}

int cmd_sweep(Context& ctx, const std::string& config, std::vector<double> alphas, const std::vector<double>& range,
              const std::string& out) {
  OptimizeConfig cfg;
  if (!config.empty()) {
    ctx.manifest.config_path = config;
    ctx.manifest.inputs.push_back(config);
    auto in = parse_optimize_config(read_json_file(config), fs::path(config).parent_path());
    if (in.seed_constant || !in.seed_structure.empty())
      throw CliFailure{InputError, "sweep seeds every alpha itself; remove 'seed'"};
    cfg = in.cfg;
  }
  if (!range.empty()) {
    if (range.size() != 3 || range[2] < 1 || range[2] != std::floor(range[2]))
      throw CliFailure{InputError, "--range needs start,stop,count"};
    const int n = static_cast<int>(range[2]);
    for (int i = 0; i < n; ++i) alphas.push_back(n == 1 ? range[0] : range[0] + (range[1] - range[0]) * i / (n - 1));
  }
  if (alphas.empty()) throw CliFailure{InputError, "no frequencies given (--alphas or --range)"};
  const auto rows = sweep_I(alphas, cfg);
  Csv csv{"alpha", "ok", "I", "re", "im", "upper_bound", "error"};
  int failed = 0;
  for (const auto& r : rows) {
    csv.num(r.alpha).integer(r.ok ? 1 : 0).num(r.ok ? r.I : std::nan("")).num(r.kappa.real()).num(r.kappa.imag());
    csv.num(r.upper_bound).str(r.error);
    csv.end_row();
    failed += !r.ok;
  }
  ctx.write(out, csv.text());
  ctx.manifest.summary_json = json{{"alphas", rows.size()}, {"failed", failed}}.dump();
  ctx.out << rows.size() - failed << "/" << rows.size() << " frequencies optimized\n";
  return Ok;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::NotBangBang:
      return InputError;
    default:
      return NumericalFailure;
  }
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

std::string RunManifest::to_json() const {
  json j{{"command", command}, {"config", config_path}, {"inputs", inputs}, {"outputs", outputs},
         {"version", version}, {"timestamp", timestamp}, {"seed", seed},     {"args", args}};
  j["summary"] = json::parse(summary_json);
  return j.dump(2) + "\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quasi-normal eigenvalues of layered media and resonance optimization", "qnmopt"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed recorded in the manifest for reproducible runs");

  std::string structure, config, out_path, out_dir = ".";
  std::optional<double> constant;
  std::vector<double> window{0.1, 5.0, 0.1, 1.0}, kappa, mode, pulse, zetas, alphas, range;
  double tol = 1e-10, angle_tol = 0.05, T = 8.0, probe = 1.0;
  std::size_t M = 1024, cells = 64;
  int order = 2;
  bool fit = false;

  auto* spectrum = app.add_subcommand("spectrum", "Locate resonances of a medium inside a window");
  spectrum->add_option("--structure", structure, "Structure JSON");
  spectrum->add_option("--constant", constant, "Constant medium B = value instead of a file");
  spectrum->add_option("--window", window, "re_min,re_max,im_min,im_max")->delimiter(',')->expected(4);
  spectrum->add_option("--tol", tol, "Newton tolerance");
  spectrum->add_option("-o,--out", out_path, "Output CSV")->default_str("spectrum.csv");

  auto* optimize = app.add_subcommand("optimize", "Minimize Im kappa at a fixed frequency");
  optimize->add_option("--config", config, "Optimizer config JSON")->required();
  optimize->add_option("--out-dir", out_dir, "Directory for trajectory, structure and certificate");

  auto* certify = app.add_subcommand("certify", "Check the optimality conditions of a bang-bang medium");
  certify->add_option("--structure", structure, "Structure JSON")->required();
  certify->add_option("--kappa", kappa, "re,im near a resonance")->delimiter(',')->expected(2)->required();
  certify->add_option("--angle-tol", angle_tol, "Angular tolerance in radians");
  certify->add_option("-o,--out", out_path, "Output JSON")->default_str("certificate.json");

  auto* sim = app.add_subcommand("simulate", "Time-domain run with a radiating boundary");
  sim->add_option("--structure", structure, "Structure JSON");
  sim->add_option("--constant", constant, "Constant medium B = value instead of a file");
  sim->add_option("--mode", mode, "re,im of the resonance used as initial data")->delimiter(',')->expected(2);
  sim->add_option("--pulse", pulse, "center,width of a right-moving Gaussian")->delimiter(',')->expected(2);
  sim->add_option("--T", T, "Final time");
  sim->add_option("--M", M, "Grid cells");
  sim->add_option("--probe", probe, "Recorded position");
  sim->add_flag("--fit", fit, "Fit the energy decay rate of the mode");
  sim->add_option("-o,--out", out_path, "Output CSV")->default_str("simulate.csv");

  auto* split = app.add_subcommand("splitting-probe", "Follow the branches of a multiple resonance");
  split->add_option("--structure", structure, "Structure JSON (default: built-in double-root medium)");
  split->add_option("--kappa", kappa, "re,im of the multiple root")->delimiter(',')->expected(2);
  split->add_option("--order", order, "Multiplicity");
  split->add_option("--zetas", zetas, "Perturbation sizes")->delimiter(',');
  split->add_option("--cells", cells, "Grid of the uniform perturbation direction");
  split->add_option("-o,--out", out_path, "Output CSV")->default_str("splitting.csv");

  auto* sweep = app.add_subcommand("sweep", "Trace I(alpha) over several frequencies");
  sweep->add_option("--config", config, "Optimizer config JSON (alpha is ignored)");
  sweep->add_option("--alphas", alphas, "Comma-separated frequencies")->delimiter(',');
  sweep->add_option("--range", range, "start,stop,count")->delimiter(',')->expected(3);
  sweep->add_option("-o,--out", out_path, "Output CSV")->default_str("sweep.csv");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? Ok : InputError;
  }

  auto* sub = app.get_subcommands().front();
  Context ctx{out, err, {}, {}};
  ctx.manifest.command = sub->get_name();
  ctx.manifest.seed = seed;
  ctx.manifest.args = args;
  ctx.manifest.timestamp = utc_now();
  auto default_out = [&](const char* name) { return out_path.empty() ? std::string(name) : out_path; };

  int code = Ok;
  try {
    try {
      if (sub == spectrum) {
        out_path = default_out("spectrum.csv");
        code = cmd_spectrum(ctx, structure, constant, window, tol, out_path);
      } else if (sub == optimize) {
        code = cmd_optimize(ctx, config, out_dir);
      } else if (sub == certify) {
        out_path = default_out("certificate.json");
        code = cmd_certify(ctx, structure, kappa, angle_tol, out_path);
      } else if (sub == sim) {
        out_path = default_out("simulate.csv");
        code = cmd_simulate(ctx, structure, constant, mode, pulse, T, M, probe, fit, out_path);
      } else if (sub == split) {
        out_path = default_out("splitting.csv");
        code = cmd_splitting(ctx, structure, kappa, order, zetas, cells, out_path);
      } else {
        out_path = default_out("sweep.csv");
        code = cmd_sweep(ctx, config, alphas, range, out_path);
      }
    } catch (const SolverError& e) {
      err << "error: " << e.what() << "\n";
      code = exit_code(e.kind());
    } catch (const CliFailure& e) {
      err << "error: " << e.message << "\n";
      code = e.code;
    } catch (const json::exception& e) {
      err << "error: " << e.what() << "\n";
      code = InputError;
    } catch (const fs::filesystem_error& e) {
      err << "error: " << e.what() << "\n";
      code = InputError;
    }
    ctx.manifest.summary_json = json::parse(ctx.manifest.summary_json).dump();
    if (code != Ok) {
      json s = json::parse(ctx.manifest.summary_json);
      s["exit_code"] = code;
      ctx.manifest.summary_json = s.dump();
    }
    fs::path mp = ctx.manifest_path;
    if (mp.empty()) mp = fs::path(out_path.empty() ? "run" : out_path).concat(".manifest.json");
    if (mp.has_parent_path()) fs::create_directories(mp.parent_path());
    write_text_atomic(mp, ctx.manifest.to_json());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return code == Ok ? InputError : code;
  }
  return code;
}

}  // namespace qnm::cli
