#pragma once

// Small models and states shared by the unit and acceptance tests.

#include "pgdlr/coefficients.hpp"
#include "pgdlr/dlr_state.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace testing_support {

using namespace pgdlr;

/// Every coefficient random, non-constant in x, with forcing and a
/// non-homogeneous boundary value.
inline CoefficientModel random_adr_model(double boundary_value = 0.2) {
  CoefficientModel m;
  m.name = "random_adr";
  m.eps = [](SampleView w) { return 0.05 + 0.02 * w[0]; };
  m.advection.push_back({[](SampleView w) { return 1.0 + 0.3 * w[1]; },
                         [](Point2 x) { return Point2{1.0 + 0.5 * x.y, 0.5 - 0.25 * x.x}; },
                         [](Point2) { return 0.0; }});
  m.advection.push_back({[](SampleView w) { return 0.2 * w[0]; },
                         [](Point2 x) { return Point2{x.x, x.y}; },
                         [](Point2) { return 2.0; }});
  m.reaction.push_back({[](SampleView w) { return 0.8 + 0.3 * w[1]; },
                        [](Point2 x) { return 1.0 + x.x * x.y; }});
  m.forcing.push_back({[](double t, SampleView w) { return (1.0 + 0.5 * w[0]) * (1.0 + t); },
                       [](Point2 x) { return std::sin(std::numbers::pi * x.x) * (1.0 + x.y); }});
  m.boundary_values = {{"boundary", boundary_value}};
  return m;
}

inline SampleSpace small_space(std::size_t n, std::uint64_t seed = 7) {
  MonteCarloSpec spec;
  spec.bounds = {{-1.0, 1.0}, {-1.0, 1.0}};
  return make_monte_carlo(spec, n, seed);
}

/// Random valid state: U0 with the boundary value on the boundary,
/// homogeneous fluctuation modes, orthonormal zero-mean Y.
inline DlrState random_state(const Mesh& mesh, const SampleSpace& space, std::size_t rank, double boundary_value,
                             std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const auto nh = static_cast<Eigen::Index>(mesh.num_vertices());
  const auto nc = static_cast<Eigen::Index>(space.count());
  const auto r = static_cast<Eigen::Index>(rank);
  Vec u0(nh);
  Mat u(nh, r), y(nc, r);
  for (Eigen::Index i = 0; i < nh; ++i) u0[i] = normal(rng);
  for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
  for (int v : mesh.boundary_vertices()) {
    u0[v] = boundary_value;
    u.row(v).setZero();
  }
  return init_from_modes(u0, u, y, space);
}

inline std::vector<double> uniform_delta(const Mesh& mesh, double value) {
  return std::vector<double>(mesh.num_triangles(), value);
}

}  // namespace testing_support
