#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "grid.hpp"
#include "potential.hpp"

namespace exlab {

// Built-in values for every key; a config file only needs to override what it changes.
inline nlohmann::json default_config_json() {
  return nlohmann::json::parse(R"({
    "potential": {"family": "gaussian_well", "wells": [{"depth": 17.15, "width": 2.0, "center": 0.0}]},
    "grid": {"r_max": 40.0, "dr": 0.05, "absorbing_width": 0.0},
    "kappa": -1,
    "norms": {"r1": 10.0},
    "assumptions": {"s0_fraction": 0.1, "s_samples": 21, "a3_tol": 1e-8},
    "bound_state": {"newton_tol": 1e-11, "max_iter": 50, "n_sweep": [0.05, 0.1, 0.2, 0.5],
                    "branch_steps": 25},
    "linearized": {"m": 1, "n_sweep": [0.15, 0.3, 0.6, 1.5]},
    "semigroup": {"n": [0.1, 0.4, 1.0], "p": 5.5, "r_max": 100.0, "absorbing_width": 30.0, "dt": 0.01,
                  "bump_center": 4.0, "window": [2.0, 20.0],
                  "control": {"n": 2.0, "r_max": 200.0, "window": [2.0, 60.0]}},
    "resonance": {"n_sweep": [0.05, 0.1, 0.2, 0.4]},
    "greens": {"n": 0.5, "re_z": 0.25, "rtol": 1e-8},
    "events": {"delta": 0.1, "eps3": 0.2, "eps4": 0.1, "rho0_over_n": 0.1},
    "dynamics": {"r_max": 60.0, "dr": 0.05, "absorbing_width": 20.0, "absorb_strength": 4.0,
                 "dt": 0.01, "sample_dt": 0.5, "n_escape": [1.0, 1.4, 2.0], "T_escape_max": 10000.0,
                 "escape_extra": 50.0, "seed_z0_over_n": 1e-4, "n_full": 2.4, "T_full": 12000.0},
    "seed": 1
  })");
}

struct Config {
  nlohmann::json raw;  // defaults merged with the file
  PotentialSpec potential;
  int kappa = -1;

  RadialGrid grid() const {
    const auto& g = raw.at("grid");
    return make_grid_dr(g.at("r_max").get<double>(), g.at("dr").get<double>(),
                        g.value("absorbing_width", 0.0));
  }

  template <class T>
  T get(const std::string& pointer) const {
    return raw.at(nlohmann::json::json_pointer(pointer)).get<T>();
  }
};

inline Config make_config(const nlohmann::json& overrides) {
  Config c;
  c.raw = default_config_json();
  c.raw.merge_patch(overrides);
  c.potential = c.raw.at("potential").get<PotentialSpec>();
  c.kappa = c.raw.at("kappa").get<int>();
  if (c.kappa != 1 && c.kappa != -1) throw std::invalid_argument("kappa must be +1 or -1");
  return c;
}

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed config " + path + ": " + e.what());
  }
  return make_config(j);
}

}  // namespace exlab
