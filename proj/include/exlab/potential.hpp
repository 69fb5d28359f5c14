#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "grid.hpp"

namespace exlab {

struct GaussianWell {
  double depth = 0.0;   // V contribution -depth * exp(-((r - center)/width)^2)
  double width = 1.0;
  double center = 0.0;
};

struct PotentialSpec {
  enum Family { gaussian_well, sum_of_gaussian_wells, tabulated, square_well, zero } family = zero;
  std::vector<GaussianWell> wells;
  // square well: V = -depth for r < width
  double depth = 0.0;
  double width = 0.0;
  // tabulated: linear interpolation, V = 0 past the last node
  std::vector<double> table_r, table_v;

  double operator()(double r) const {
    switch (family) {
      case zero:
        return 0.0;
      case square_well:
        if (r == width) return -0.5 * depth;
        return r < width ? -depth : 0.0;
      case gaussian_well:
      case sum_of_gaussian_wells: {
        double v = 0.0;
        for (const auto& w : wells) {
          const double x = (r - w.center) / w.width;
          v -= w.depth * std::exp(-x * x);
        }
        return v;
      }
      case tabulated: {
        if (table_r.empty() || r >= table_r.back()) return 0.0;
        if (r <= table_r.front()) return table_v.front();
        auto it = std::upper_bound(table_r.begin(), table_r.end(), r);
        const size_t j = static_cast<size_t>(it - table_r.begin());
        const double t = (r - table_r[j - 1]) / (table_r[j] - table_r[j - 1]);
        return (1 - t) * table_v[j - 1] + t * table_v[j];
      }
    }
    return 0.0;
  }

  RField sample(const RadialGrid& g) const {
    RField v(g.N);
    for (int i = 0; i < g.N; ++i) v[i] = (*this)(g.r(i));
    return v;
  }

  // families with compact support or Gaussian tails satisfy the decay requirement
  bool decays_fast() const { return family != tabulated || !table_r.empty(); }

  static PotentialSpec gaussian(double depth, double width) {
    PotentialSpec p;
    p.family = gaussian_well;
    p.wells = {{depth, width, 0.0}};
    return p;
  }

  static PotentialSpec square(double depth, double width) {
    PotentialSpec p;
    p.family = square_well;
    p.depth = depth;
    p.width = width;
    return p;
  }
};

inline void to_json(nlohmann::json& j, const PotentialSpec& p) {
  static const char* names[] = {"gaussian_well", "sum_of_gaussian_wells", "tabulated", "square_well", "zero"};
  j = nlohmann::json{{"family", names[p.family]}};
  if (p.family == PotentialSpec::gaussian_well || p.family == PotentialSpec::sum_of_gaussian_wells) {
    auto arr = nlohmann::json::array();
    for (const auto& w : p.wells) arr.push_back({{"depth", w.depth}, {"width", w.width}, {"center", w.center}});
    j["wells"] = arr;
  } else if (p.family == PotentialSpec::square_well) {
    j["depth"] = p.depth;
    j["width"] = p.width;
  } else if (p.family == PotentialSpec::tabulated) {
    j["r"] = p.table_r;
    j["v"] = p.table_v;
  }
}

inline void from_json(const nlohmann::json& j, PotentialSpec& p) {
  const std::string fam = j.at("family").get<std::string>();
  p = PotentialSpec{};
  if (fam == "gaussian_well" || fam == "sum_of_gaussian_wells") {
    p.family = fam == "gaussian_well" ? PotentialSpec::gaussian_well : PotentialSpec::sum_of_gaussian_wells;
    if (j.contains("wells")) {
      for (const auto& w : j.at("wells"))
        p.wells.push_back({w.at("depth").get<double>(), w.at("width").get<double>(), w.value("center", 0.0)});
    } else {
      p.wells.push_back({j.at("depth").get<double>(), j.at("width").get<double>(), j.value("center", 0.0)});
    }
    if (p.family == PotentialSpec::gaussian_well && p.wells.size() != 1)
      throw std::invalid_argument("gaussian_well takes exactly one well");
    for (const auto& w : p.wells)
      if (!(w.width > 0.0)) throw std::invalid_argument("well width must be positive");
  } else if (fam == "square_well") {
    p.family = PotentialSpec::square_well;
    p.depth = j.at("depth").get<double>();
    p.width = j.at("width").get<double>();
  } else if (fam == "tabulated") {
    p.family = PotentialSpec::tabulated;
    p.table_r = j.at("r").get<std::vector<double>>();
    p.table_v = j.at("v").get<std::vector<double>>();
    if (p.table_r.size() != p.table_v.size() || p.table_r.size() < 2)
      throw std::invalid_argument("tabulated potential needs matching r/v arrays");
  } else if (fam == "zero") {
    p.family = PotentialSpec::zero;
  } else {
    throw std::invalid_argument("unknown potential family: " + fam);
  }
}

}  // namespace exlab
