// Scans the depth of a single Gaussian well of fixed width for three s-wave bound states with
// the widest margins in the ordering and no-resonance conditions, then writes the winner into
// the "potential" block of the given config file.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "exlab/spectrum.hpp"

using namespace exlab;

struct Candidate {
  double depth = 0.0;
  double score = -1.0;
  double a2 = 0.0, a3 = 0.0, top = 0.0;
};

static Candidate score(double depth, double width, const RadialGrid& g) {
  Candidate c;
  c.depth = depth;
  LinearSpectrum s;
  try {
    s = solve_spectrum(PotentialSpec::gaussian(depth, width), g);
  } catch (const std::exception&) {
    return c;
  }
  if (s.K != 2) return c;
  const auto& e = s.e;
  c.a2 = std::min(2 * e[1] - e[0], 4 * e[2] - 2 * e[1]) / std::abs(e[0]);
  c.a3 = check_a3(e, 3).second;
  c.top = std::abs(e[2]) / std::abs(e[0]);
  c.score = std::min({c.a2, c.a3, c.top});
  return c;
}

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-well depth search"};
  std::string cfg_path;
  double width = 2.0, dmin = 8.0, dmax = 30.0, step = 0.01, r_max = 40.0, dr = 0.05;
  app.add_option("--config", cfg_path, "config file to update")->required();
  app.add_option("--width", width);
  app.add_option("--min-depth", dmin);
  app.add_option("--max-depth", dmax);
  app.add_option("--step", step);
  app.add_option("--r-max", r_max);
  app.add_option("--dr", dr);
  CLI11_PARSE(app, argc, argv);

  const RadialGrid g = make_grid_dr(r_max, dr);
  Candidate best;
  const int steps = static_cast<int>(std::lround((dmax - dmin) / step));
  for (int i = 0; i <= steps; ++i) {
    const Candidate c = score(std::round((dmin + i * step) * 1e6) / 1e6, width, g);
    if (c.score > best.score) best = c;
  }
  if (best.score <= 0) {
    std::cerr << "no admissible depth in range\n";
    return 1;
  }
  const PotentialSpec p = PotentialSpec::gaussian(best.depth, width);
  const LinearSpectrum s = solve_spectrum(p, g);
  const AssumptionReport rep = check_assumptions(s, p);
  std::printf("depth=%.4f width=%.3f e=(%.6f, %.6f, %.6f) a2=%.4f a3=%.4f top=%.4f gamma0=%.6e\n", best.depth,
              width, s.e[0], s.e[1], s.e[2], best.a2, best.a3, best.top, rep.gamma0);
  if (!(rep.gamma0 > 0) || !rep.a3_ok || !rep.a2_inequalities_ok) {
    std::cerr << "best candidate fails the assumption check\n";
    return 1;
  }

  nlohmann::json cfg;
  {
    std::ifstream in(cfg_path);
    if (in) in >> cfg;
  }
  cfg["potential"] = p;
  cfg["potential_search"] = {{"width", width},        {"depth_range", {dmin, dmax}}, {"step", step},
                             {"r_max", r_max},        {"dr", dr},                    {"score", best.score},
                             {"a2_margin", best.a2},  {"a3_margin", best.a3},       {"e2_over_e0", best.top}};
  std::ofstream out(cfg_path);
  out << cfg.dump(2) << "\n";
  return 0;
}
