// Command-line driver: one subcommand per pipeline stage, JSON summaries and CSV series in --out.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "exlab/config.hpp"
#include "exlab/fit.hpp"
#include "exlab/nls.hpp"
#include "exlab/resonance.hpp"

using namespace exlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& w) : std::runtime_error(w) {}
};

std::string sha1_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr)) throw std::runtime_error("sha1 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

// RFC 4180 writer
class Csv {
 public:
  explicit Csv(const fs::path& p) : out_(p) {
    if (!out_) throw std::runtime_error("cannot write " + p.string());
    out_ << std::setprecision(17);
  }
  void header(const std::vector<std::string>& cols) {
    for (size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << quote(cols[i]);
    out_ << "\r\n";
  }
  void row(const std::vector<double>& v) {
    for (size_t i = 0; i < v.size(); ++i) out_ << (i ? "," : "") << v[i];
    out_ << "\r\n";
  }

 private:
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
  }
  std::ofstream out_;
};

struct Context {
  Config cfg;
  fs::path out = "out";
  unsigned threads = 1;
  std::string command;
  std::vector<std::string> args;

  RadialGrid grid() const { return cfg.grid(); }
  RadialGrid dynamics_grid() const {
    return make_grid_dr(cfg.get<double>("/dynamics/r_max"), cfg.get<double>("/dynamics/dr"),
                        cfg.get<double>("/dynamics/absorbing_width"));
  }

  void write_json(const std::string& name, json body) const {
    fs::create_directories(out);
    std::string input = cfg.raw.dump() + "\n" + command;
    for (const auto& a : args) input += "\n" + a;
    body["config"] = cfg.raw;
    body["command"] = command;
    body["input_hash"] = sha1_hex(input);
    std::ofstream f(out / (name + ".json"));
    f << body.dump(2) << "\n";
  }
  Csv csv(const std::string& name) const {
    fs::create_directories(out);
    return Csv(out / (name + ".csv"));
  }
};

AssumptionOptions assumption_options(const Config& c) {
  AssumptionOptions o;
  o.s0_fraction = c.get<double>("/assumptions/s0_fraction");
  o.s_samples = c.get<int>("/assumptions/s_samples");
  o.a3_tol = c.get<double>("/assumptions/a3_tol");
  return o;
}

cd parse_complex(const std::string& s) {
  static const std::regex re(R"(^\s*([-+]?[0-9.eE+-]*?[0-9.])\s*(?:([-+])\s*([0-9.eE+-]*)\s*i)?\s*$)");
  std::smatch m;
  if (std::regex_match(s, m, re)) {
    try {
      const double re_part = std::stod(m[1].str());
      double im = 0.0;
      if (m[2].matched) im = (m[2].str() == "-" ? -1.0 : 1.0) * (m[3].str().empty() ? 1.0 : std::stod(m[3].str()));
      return {re_part, im};
    } catch (const std::exception&) {
    }
  }
  throw ValidationError("cannot parse complex number '" + s + "' (expected a+bi)");
}

json ajson(const AssumptionReport& r) {
  json j{{"K", r.K},
         {"a0_ok", r.a0_ok},
         {"a1_ok", r.a1_ok},
         {"zero_energy_regular", r.zero_energy_regular},
         {"a2_inequalities_ok", r.a2_inequalities_ok},
         {"a2_margin", r.a2_margin},
         {"gamma0", r.gamma0},
         {"gamma0_plus", r.gamma0_plus},
         {"gamma0_argmin", r.gamma0_argmin},
         {"gamma0_s0", r.gamma0_s0},
         {"a3_ok", r.a3_ok},
         {"a3_margin", r.a3_margin}};
  j["a3_violations"] = json::array();
  for (const auto& v : r.a3_violations) j["a3_violations"].push_back(json{{"k", v.k}, {"l", v.l}, {"mismatch", v.mismatch}});
  return j;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json fit_json(const LinearFit& f) {
  return {{"slope", f.slope}, {"slope_err", f.slope_err}, {"intercept", f.intercept}, {"r2", f.r2}};
}

// ---- subcommands

int cmd_spectrum(const Context& c) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.grid());
  c.write_json("spectrum", {{"K", s.K}, {"e", std::vector<double>(s.e.data(), s.e.data() + s.e.size())},
                            {"grid", {{"r_max", s.grid.r_max}, {"N", s.grid.N}, {"dr", s.grid.dr}}}});
  Csv csv = c.csv("spectrum");
  std::vector<std::string> cols = {"r"};
  for (int k = 0; k <= s.K; ++k) cols.push_back("phi_" + std::to_string(k));
  csv.header(cols);
  for (int i = 0; i < s.grid.N; ++i) {
    std::vector<double> row = {s.grid.r(i)};
    for (int k = 0; k <= s.K; ++k) row.push_back(s.phi(i, k) / s.grid.r(i));
    csv.row(row);
  }
  std::printf("K=%d", s.K);
  for (int k = 0; k <= s.K; ++k) std::printf(" e_%d=%.8f", k, s.e[k]);
  std::printf("\n");
  return 0;
}

int cmd_check_assumptions(const Context& c) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.grid());
  const AssumptionReport r = check_assumptions(s, c.cfg.potential, assumption_options(c.cfg));
  json j = ajson(r);
  c.write_json("check-assumptions", j);
  std::cout << j.dump(2) << "\n";
  const bool ok = r.a0_ok && r.a1_ok && r.a2_inequalities_ok && r.gamma0 > 0 && r.a3_ok;
  return ok ? 0 : 2;
}

int cmd_bound_state(const Context& c, int k, std::vector<double> ns) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.grid());
  if (ns.empty()) ns = c.cfg.get<std::vector<double>>("/bound_state/n_sweep");
  NewtonOptions opt;
  opt.tol = c.cfg.get<double>("/bound_state/newton_tol");
  opt.max_iter = c.cfg.get<int>("/bound_state/max_iter");
  const double C = c.cfg.kappa * quartic_integral(s, k);
  json arr = json::array();
  Csv csv = c.csv("bound-state");
  csv.header({"n", "E", "E_minus_e_minus_Cn2", "iterations", "residual"});
  std::optional<BoundState> warm;
  for (double n : ns) {
    const BoundState bs = solve_bound_state(k, n, c.cfg.kappa, s, warm, opt);
    warm = bs;
    const double dev = bs.E - s.e[k] - C * n * n;
    arr.push_back({{"n", n}, {"E", bs.E}, {"deviation", dev}, {"iterations", bs.iterations}, {"residual", bs.residual}});
    csv.row({n, bs.E, dev, double(bs.iterations), bs.residual});
  }
  c.write_json("bound-state", {{"k", k}, {"C", C}, {"e_k", s.e[k]}, {"states", arr}});
  return 0;
}

int cmd_linearize(const Context& c, int m, std::vector<double> ns) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.grid());
  if (ns.empty()) ns = c.cfg.get<std::vector<double>>("/linearized/n_sweep");
  json arr = json::array();
  Csv csv = c.csv("linearize");
  csv.header({"n", "k", "re_lambda", "im_lambda", "residual"});
  std::optional<BoundState> warm;
  for (double n : ns) {
    const BoundState bs = solve_bound_state(m, n, c.cfg.kappa, s, warm);
    warm = bs;
    const LSpectrum ls = spectral_decomposition(build_L(s, bs), s);
    json modes = json::array();
    for (const LMode& md : ls.modes) {
      json fam = json::array();
      for (const cd& l : md.family) fam.push_back({{"re", l.real()}, {"im", l.imag()}});
      modes.push_back({{"k", md.k}, {"re", md.lambda.real()}, {"im", md.lambda.imag()}, {"family", fam},
                       {"residual", md.residual}});
      csv.row({n, double(md.k), md.lambda.real(), md.lambda.imag(), md.residual});
    }
    arr.push_back({{"n", n}, {"E", bs.E}, {"c_m", ls.c_m}, {"modes", modes}});
  }
  c.write_json("linearize", {{"m", m}, {"spectra", arr}});
  return 0;
}

int cmd_fgr(const Context& c, std::optional<double> n) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.grid());
  const FgrTable t = build_fgr_table(s, c.cfg.kappa, c.cfg.potential, assumption_options(c.cfg));
  json j{{"fgr", to_json(t)}};
  if (n) {
    const BoundState bs = solve_bound_state(c.cfg.get<int>("/linearized/m"), *n, c.cfg.kappa, s);
    j["normal_form"] = to_json(coefficients_D(spectral_decomposition(build_L(s, bs), s), t));
  }
  c.write_json("fgr", j);
  Csv csv = c.csv("fgr");
  csv.header({"a", "b", "l", "gamma"});
  for (int a = 0; a <= t.K; ++a)
    for (int b = 0; b <= t.K; ++b)
      for (int l = 0; l <= t.K; ++l) csv.row({double(a), double(b), double(l), t(a, b, l)});
  std::printf("gamma0=%.6e gamma0_plus=%.6e\n", t.gamma0, t.gamma0_plus);
  return 0;
}

int cmd_greens(const Context& c, double r, double t, const std::string& zs, std::optional<double> rtol) {
  const cd z = parse_complex(zs);
  const double tol = rtol.value_or(c.cfg.get<double>("/greens/rtol"));
  const GreensValue g = greens_free(r, t, z, tol);
  json j{{"r", r}, {"t", t}, {"z", {{"re", z.real()}, {"im", z.imag()}}}, {"rtol", tol},
         {"value", {{"re", g.value.real()}, {"im", g.value.imag()}}}, {"error", g.error}, {"converged", g.converged}};
  std::printf("G(r=%g, t=%g, z=%g%+gi) = %.12e %+.12ei  (error estimate %.2e%s)\n", r, t, z.real(), z.imag(),
              g.value.real(), g.value.imag(), g.error, g.converged ? "" : ", not converged");
  if (t == 0.0) {
    const cd closed = std::exp(cd(0, 1) * std::sqrt(z) * r) / (4.0 * pi * r);
    j["closed_form"] = {{"re", closed.real()}, {"im", closed.imag()}};
    j["relative_deviation"] = std::abs(g.value - closed) / std::abs(closed);
    std::printf("closed form      = %.12e %+.12ei  (relative deviation %.2e)\n", closed.real(), closed.imag(),
                std::abs(g.value - closed) / std::abs(closed));
  }
  c.write_json("greens", j);
  return g.converged ? 0 : 1;
}

int cmd_nf_ode(const Context& c, const std::string& system, double n, double T, int trajectories, uint64_t seed) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.grid());
  const FgrTable t = build_fgr_table(s, c.cfg.kappa, c.cfg.potential, assumption_options(c.cfg));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 1.0), ph(0.0, 2 * pi);
  if (system == "excited") {
    const BoundState bs = solve_bound_state(1, n, c.cfg.kappa, s);
    const LSpectrum ls = spectral_decomposition(build_L(s, bs), s);
    const NormalFormCoeffs nc = coefficients_D(ls, t);
    const double seed_amp = c.cfg.get<double>("/dynamics/seed_z0_over_n") * n;
    std::vector<cd> q0(s.K + 1, 0.0);
    q0[0] = std::polar(seed_amp, ph(rng));
    for (int k = 2; k <= s.K; ++k) q0[k] = std::polar(0.1 * n * u(rng), ph(rng));
    const auto traj = integrate_excited_nf(nc, real_parts(ls), q0, 0.0, T);
    Csv csv = c.csv("nf-ode");
    std::vector<std::string> cols = {"t"};
    for (int k = 0; k <= s.K; ++k)
      if (k != 1) {
        cols.push_back("q" + std::to_string(k) + "_re");
        cols.push_back("q" + std::to_string(k) + "_im");
      }
    cols.push_back("b");
    csv.header(cols);
    for (const auto& st : traj) {
      std::vector<double> row = {st.t};
      for (int k = 0; k <= s.K; ++k)
        if (k != 1) {
          row.push_back(st.q[k].real());
          row.push_back(st.q[k].imag());
        }
      row.push_back(st.b);
      csv.row(row);
    }
    c.write_json("nf-ode", {{"system", system}, {"n", n}, {"T", T}, {"steps", traj.size()}, {"coefficients", to_json(nc)}});
    return 0;
  }
  if (system != "mu") throw ValidationError("nf-ode: --system must be excited or mu");
  const MuCoefficients mc = mu_coefficients(coefficients_d(t));
  const double gamma = lyapunov_gamma(t);
  json reps = json::array();
  bool ok = true;
  Csv csv = c.csv("nf-ode");
  std::vector<std::string> cols = {"trajectory", "t"};
  for (int j = 0; j <= s.K; ++j) {
    cols.push_back("mu" + std::to_string(j) + "_re");
    cols.push_back("mu" + std::to_string(j) + "_im");
  }
  for (int j = 0; j <= s.K; ++j) cols.push_back("f" + std::to_string(j));
  csv.header(cols);
  for (int i = 0; i < trajectories; ++i) {
    std::vector<cd> mu0(s.K + 1);
    for (auto& v : mu0) v = std::polar(0.7 * u(rng), ph(rng));
    const auto traj = integrate_mu_system(mc, mu0, T);
    const LyapunovReport rep = lyapunov_check(traj, mc, gamma);
    ok = ok && rep.ok(1e-9) && rep.monotone_margin >= -1e-9;
    reps.push_back({{"ground_margin", rep.ground_margin}, {"excited_margin", rep.excited_margin},
                    {"monotone_margin", rep.monotone_margin}, {"h_max_rate", rep.h_max_rate}, {"steps", traj.size()}});
    for (const auto& st : traj) {
      std::vector<double> row = {double(i), st.t};
      for (const cd& v : st.mu) {
        row.push_back(v.real());
        row.push_back(v.imag());
      }
      for (double f : st.f) row.push_back(f);
      csv.row(row);
    }
  }
  c.write_json("nf-ode", {{"system", system}, {"T", T}, {"gamma", gamma}, {"lyapunov", reps}, {"all_ok", ok}});
  return ok ? 0 : 2;
}

// bound-state branch cache: n grid and energies, regenerated when missing or too short
BoundState cached_bound_state(const Context& c, const LinearSpectrum& s, int k, double n) {
  const fs::path p = c.out / "cache" / ("branch_" + std::to_string(k) + ".json");
  json j;
  bool usable = false;
  if (fs::exists(p)) {
    std::ifstream in(p);
    try {
      in >> j;
      usable = j.at("n_max").get<double>() >= n && j.at("N").get<int>() == s.grid.N &&
               j.at("r_max").get<double>() == s.grid.r_max && j.at("potential") == json(c.cfg.potential);
    } catch (const json::exception&) {
      usable = false;
    }
  }
  if (!usable) {
    std::cerr << "regenerating bound-state branch k=" << k << " up to n=" << n << "\n";
    const int steps = std::max(4, c.cfg.get<int>("/bound_state/branch_steps"));
    std::vector<double> grid;
    for (int i = 0; i <= steps; ++i) grid.push_back(n * i / steps);
    const Branch b = continue_branch(k, grid, c.cfg.kappa, s);
    std::vector<double> E;
    for (const auto& st : b.states) E.push_back(st.E);
    j = {{"k", k}, {"n_grid", b.n_grid}, {"E", E}, {"n_max", n}, {"N", s.grid.N}, {"r_max", s.grid.r_max},
         {"potential", c.cfg.potential}};
    fs::create_directories(p.parent_path());
    std::ofstream(p) << j.dump(2) << "\n";
  }
  // warm start from the nearest cached energy
  const auto ng = j.at("n_grid").get<std::vector<double>>();
  const auto E = j.at("E").get<std::vector<double>>();
  size_t i = 0;
  while (i + 1 < ng.size() && ng[i + 1] <= n) ++i;
  BoundState warm;
  warm.k = k;
  warm.kappa = c.cfg.kappa;
  warm.n = ng[i] > 0 ? ng[i] : n;
  warm.E = ng[i] > 0 ? E[i] : s.e[k];
  warm.Q = warm.n * s.phi.col(k);
  return solve_bound_state(k, n, c.cfg.kappa, s, warm);
}

ScenarioConfig scenario_config(const Context& c, double n, double T, uint64_t seed) {
  ScenarioConfig sc;
  sc.n = n;
  sc.T = T;
  sc.sample_dt = c.cfg.get<double>("/dynamics/sample_dt");
  sc.prop.dt = c.cfg.get<double>("/dynamics/dt");
  sc.prop.absorb_strength = c.cfg.get<double>("/dynamics/absorb_strength");
  sc.prop.absorbing = c.cfg.get<double>("/dynamics/absorbing_width") > 0;
  sc.delta = c.cfg.get<double>("/events/delta");
  sc.eps3 = c.cfg.get<double>("/events/eps3");
  sc.eps4 = c.cfg.get<double>("/events/eps4");
  sc.rho0_over_n = c.cfg.get<double>("/events/rho0_over_n");
  sc.r1 = c.cfg.get<double>("/norms/r1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ph(0.0, 2 * pi);
  sc.seeds = {std::polar(c.cfg.get<double>("/dynamics/seed_z0_over_n") * n, ph(rng))};
  return sc;
}

json record_json(const TrajectoryRecord& r) {
  json j{{"n", r.cfg.n},
         {"T", r.cfg.T},
         {"t_end", r.samples.empty() ? 0.0 : r.samples.back().t},
         {"events", {{"t_c", optional_json(r.events.t_c)}, {"t_o", optional_json(r.events.t_o)}, {"t_i", optional_json(r.events.t_i)}}},
         {"outcome", to_string(r.outcome)},
         {"n_plus", std::isfinite(r.n_plus) ? json(r.n_plus) : json(nullptr)},
         {"re_lambda0", r.re_lambda0},
         {"phase_warnings", r.phase_warnings}};
  if (r.growth_fitted) j["growth"] = fit_json(r.growth);
  if (r.stabilization_fitted)
    j["stabilization"] = {{"fit", fit_json(r.stabilization)}, {"beta", -r.stabilization.slope},
                          {"window", {r.window_lo, r.window_hi}}};
  return j;
}

void record_csv(const Context& c, const std::string& name, const TrajectoryRecord& r) {
  Csv csv = c.csv(name);
  const size_t K = r.samples.empty() ? 0 : r.samples.front().x.size();
  std::vector<std::string> cols = {"t", "region", "mass", "xi_norm"};
  for (size_t j = 0; j < K; ++j) {
    cols.push_back("x" + std::to_string(j) + "_re");
    cols.push_back("x" + std::to_string(j) + "_im");
  }
  cols.insert(cols.end(), {"n_best", "theta", "residual_l2loc", "eta_l2loc"});
  for (size_t j = 0; j < K; ++j) {
    cols.push_back("z" + std::to_string(j) + "_re");
    cols.push_back("z" + std::to_string(j) + "_im");
  }
  csv.header(cols);
  for (const Sample& s : r.samples) {
    std::vector<double> row = {s.t, double(s.region), s.mass, s.xi_norm};
    for (const cd& x : s.x) {
      row.push_back(x.real());
      row.push_back(x.imag());
    }
    row.insert(row.end(), {s.n_best, s.theta, s.residual, s.eta_loc});
    for (size_t j = 0; j < K; ++j) {
      const cd z = j < s.z.size() ? s.z[j] : cd(NAN, NAN);
      row.push_back(z.real());
      row.push_back(z.imag());
    }
    csv.row(row);
  }
}

double gamma0_of(const Context& c) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.grid());
  return check_assumptions(s, c.cfg.potential, assumption_options(c.cfg)).gamma0;
}

int cmd_simulate(const Context& c, const std::string& scenario, std::optional<double> n_opt, std::optional<double> T_opt,
                 uint64_t seed) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.dynamics_grid());
  double n, T;
  ScenarioConfig sc;
  if (scenario == "escape") {
    n = n_opt.value_or(c.cfg.get<std::vector<double>>("/dynamics/n_escape").back());
    T = T_opt.value_or(c.cfg.get<double>("/dynamics/T_escape_max"));
    sc = scenario_config(c, n, T, seed);
    sc.stop_after_exit = true;
    sc.T_extra = c.cfg.get<double>("/dynamics/escape_extra");
  } else if (scenario == "full") {
    n = n_opt.value_or(c.cfg.get<double>("/dynamics/n_full"));
    T = T_opt.value_or(c.cfg.get<double>("/dynamics/T_full"));
    sc = scenario_config(c, n, T, seed);
  } else if (scenario == "stationary") {
    n = n_opt.value_or(c.cfg.get<std::vector<double>>("/dynamics/n_escape").front());
    T = T_opt.value_or(100.0);
    sc = scenario_config(c, n, T, seed);
    sc.seeds.clear();
  } else {
    throw ValidationError("simulate: unknown scenario '" + scenario + "' (escape, full, stationary)");
  }
  cached_bound_state(c, s, 1, n);
  sc.gamma0 = gamma0_of(c);
  const TrajectoryRecord r = run_scenario(sc, s, c.cfg.kappa);
  record_csv(c, "simulate", r);
  json j = record_json(r);
  j["scenario"] = scenario;
  j["seed"] = seed;
  c.write_json("simulate", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const Context& c, uint64_t seed) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.dynamics_grid());
  const auto ns = c.cfg.get<std::vector<double>>("/dynamics/n_escape");
  const double gamma0 = gamma0_of(c);
  std::vector<std::optional<TrajectoryRecord>> results(ns.size());
  std::vector<std::string> errors(ns.size());
  std::mutex mu;
  size_t next = 0;
  auto worker = [&] {
    for (;;) {
      size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= ns.size()) return;
        i = next++;
      }
      try {
        ScenarioConfig sc = scenario_config(c, ns[i], c.cfg.get<double>("/dynamics/T_escape_max"), seed);
        sc.stop_after_exit = true;
        sc.T_extra = c.cfg.get<double>("/dynamics/escape_extra");
        sc.gamma0 = gamma0;
        TrajectoryRecord r = run_scenario(sc, s, c.cfg.kappa);
        std::lock_guard<std::mutex> lock(mu);
        results[i] = std::move(r);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < std::max(1u, std::min<unsigned>(c.threads, ns.size())); ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  json runs = json::array();
  std::vector<double> fn, fd;
  Csv csv = c.csv("sweep");
  csv.header({"n", "t_c", "t_o", "t_o_minus_t_c", "growth_rate", "re_lambda0"});
  for (size_t i = 0; i < ns.size(); ++i) {
    if (!results[i]) throw std::runtime_error("sweep: run at n=" + std::to_string(ns[i]) + " failed: " + errors[i]);
    const TrajectoryRecord& r = *results[i];
    runs.push_back(record_json(r));
    const double tc = r.events.t_c.value_or(NAN), to = r.events.t_o.value_or(NAN);
    csv.row({ns[i], tc, to, to - tc, r.growth_fitted ? r.growth.slope : NAN, r.re_lambda0});
    if (std::isfinite(to - tc) && to > tc) {
      fn.push_back(ns[i]);
      fd.push_back(to - tc);
    }
  }
  json j{{"runs", runs}};
  if (fn.size() >= 2) j["exit_time_exponent"] = fit_json(loglog_fit(fn, fd));
  c.write_json("sweep", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_compare(const Context& c, double n, double T, double z2_over_n, uint64_t seed) {
  const LinearSpectrum s = solve_spectrum(c.cfg.potential, c.dynamics_grid());
  ScenarioConfig sc = scenario_config(c, n, T, seed);
  sc.seeds = {0.0, 0.0, std::polar(z2_over_n * n, 0.3)};
  const TrajectoryRecord r = run_scenario(sc, s, c.cfg.kappa);
  const FgrTable t = build_fgr_table(solve_spectrum(c.cfg.potential, c.grid()), c.cfg.kappa, c.cfg.potential,
                                     assumption_options(c.cfg));
  const LSpectrum ls = spectral_decomposition(build_L(s, solve_bound_state(1, n, c.cfg.kappa, s)), s);
  const NormalFormCoeffs nc = coefficients_D(ls, t);
  std::vector<cd> q0 = r.samples.front().z;
  q0[0] = 0.0;
  const auto nf = integrate_excited_nf(nc, real_parts(ls), q0, 0.0, T);
  const NfComparison cmp = compare_nf(r, nf, {2}, T);
  Csv csv = c.csv("compare");
  csv.header({"t", "abs_z2_pde"});
  for (const Sample& sm : r.samples)
    if (sm.region == 1) csv.row({sm.t, std::abs(sm.z[2])});
  json j{{"n", n}, {"T", T}, {"samples", cmp.samples}, {"max_rel_z2", cmp.max_rel[2]}, {"rms_rel_z2", cmp.rms_rel[2]}};
  c.write_json("compare", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"excited-state relaxation laboratory"};
  app.require_subcommand(1);
  std::string config_path = "default", out_dir = "out";
  int threads = 0;
  uint64_t seed = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "config file (JSON) or 'default'");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads (default: EXLAB_THREADS or 1)");
  app.add_option_function<uint64_t>("--seed", [&](uint64_t v) { seed = v; seed_set = true; }, "random seed");

  auto* spectrum = app.add_subcommand("spectrum", "linear eigenvalues and eigenfunctions");
  auto* assumptions = app.add_subcommand("check-assumptions", "spectral assumption report");
  auto* bound = app.add_subcommand("bound-state", "nonlinear bound states over an n sweep");
  int bs_k = 1;
  std::vector<double> bs_n;
  bound->add_option("--k", bs_k);
  bound->add_option("--n", bs_n);
  auto* linearize = app.add_subcommand("linearize", "linearized eigenvalues over an n sweep");
  int lin_m = 1;
  std::vector<double> lin_n;
  linearize->add_option("--m", lin_m);
  linearize->add_option("--n", lin_n);
  auto* fgr = app.add_subcommand("fgr", "resonance coefficients");
  std::optional<double> fgr_n;
  fgr->add_option("--n", fgr_n, "also compute the normal-form coefficients at this n");
  auto* greens = app.add_subcommand("greens", "free resolvent-propagator kernel");
  double g_r = 1.0, g_t = 0.0;
  std::string g_z = "0.25";
  std::optional<double> g_rtol;
  greens->add_option("--r", g_r)->required();
  greens->add_option("--t", g_t)->required();
  greens->add_option("--z", g_z)->required();
  greens->add_option("--rtol", g_rtol);
  auto* nf = app.add_subcommand("nf-ode", "normal-form ODE integration");
  std::string nf_system = "mu";
  double nf_n = 1.5, nf_T = 1e4;
  int nf_traj = 10;
  nf->add_option("--system", nf_system)->check(CLI::IsMember({"mu", "excited"}));
  nf->add_option("--n", nf_n);
  nf->add_option("--T", nf_T);
  nf->add_option("--trajectories", nf_traj);
  auto* sim = app.add_subcommand("simulate", "full NLS scenario");
  std::string scenario = "escape";
  std::optional<double> sim_n, sim_T;
  sim->add_option("--scenario", scenario);
  sim->add_option("--n", sim_n);
  sim->add_option("--T", sim_T);
  auto* sweep = app.add_subcommand("sweep", "escape scenarios over the configured n values");
  auto* compare = app.add_subcommand("compare", "PDE against the excited-state normal form");
  double cmp_n = 1.2, cmp_T = 400.0, cmp_z2 = 0.1;
  compare->add_option("--n", cmp_n);
  compare->add_option("--T", cmp_T);
  compare->add_option("--z2", cmp_z2, "stable-mode seed over n");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    Context c;
    c.cfg = config_path == "default" ? make_config(json::object()) : load_config(config_path);
    if (seed_set) c.cfg.raw["seed"] = seed;
    seed = c.cfg.raw.at("seed").get<uint64_t>();
    c.out = out_dir;
    if (threads <= 0) {
      const char* env = std::getenv("EXLAB_THREADS");
      threads = env ? std::atoi(env) : 1;
    }
    c.threads = static_cast<unsigned>(std::max(1, threads));
    c.command = app.get_subcommands().front()->get_name();
    for (int i = 1; i < argc; ++i) c.args.push_back(argv[i]);

    if (*spectrum) return cmd_spectrum(c);
    if (*assumptions) return cmd_check_assumptions(c);
    if (*bound) return cmd_bound_state(c, bs_k, bs_n);
    if (*linearize) return cmd_linearize(c, lin_m, lin_n);
    if (*fgr) return cmd_fgr(c, fgr_n);
    if (*greens) return cmd_greens(c, g_r, g_t, g_z, g_rtol);
    if (*nf) return cmd_nf_ode(c, nf_system, nf_n, nf_T, nf_traj, seed);
    if (*sim) return cmd_simulate(c, scenario, sim_n, sim_T, seed);
    if (*sweep) return cmd_sweep(c, seed);
    if (*compare) return cmd_compare(c, cmp_n, cmp_T, cmp_z2, seed);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NeighborhoodViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
