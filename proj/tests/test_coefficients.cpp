#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pgdlr/coefficients.hpp"
#include "support.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <random>

using namespace pgdlr;
using namespace testing_support;

namespace {

// Largest generalised eigenvalue of (K, M) on interior nodes by plain
// power iteration on L^{-1} K L^{-T}, written without the library routine.
double oracle_inverse_constant(const Mesh& mesh) {
  const auto quad = QuadratureRule::degree4();
  const Mat K = assemble_stiffness(mesh), M = assemble_mass(mesh, quad);
  const std::vector<int> in = mesh.interior_vertices();
  const auto n = static_cast<Eigen::Index>(in.size());
  Mat Ki(n, n), Mi(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      Ki(i, j) = K(in[i], in[j]);
      Mi(i, j) = M(in[i], in[j]);
    }
  const Eigen::LLT<Mat> llt(Mi);
  const Mat L = llt.matrixL();
  const Mat Linv = L.inverse();
  const Mat S = Linv * Ki * Linv.transpose();
  Vec v = Vec::Ones(n);
  double lambda = 0.0;
  for (int it = 0; it < 20000; ++it) {
    const Vec w = S * v;
    const double next = v.dot(w) / v.dot(v);
    v = w.normalized();
    if (std::abs(next - lambda) < 1e-15 * next) break;
    lambda = next;
  }
  return mesh.h * std::sqrt(lambda);
}

CoefficientModel scalar_model(double eps, double c, Point2 b, double div = 0.0, bool linear_field = false) {
  CoefficientModel m;
  m.eps = [eps](SampleView) { return eps; };
  if (linear_field)
    m.advection.push_back({[](SampleView) { return 1.0; }, [](Point2 x) { return Point2{x.x, x.y}; },
                           [div](Point2) { return div; }});
  else
    m.advection.push_back({[](SampleView) { return 1.0; }, [b](Point2) { return b; }, [](Point2) { return 0.0; }});
  if (c != 0.0) m.reaction.push_back({[c](SampleView) { return c; }, [](Point2) { return 1.0; }});
  m.boundary_values = {{"boundary", 0.0}};
  return m;
}

}  // namespace

TEST_CASE("sampled coefficients and their splitting") {
  const SampleSpace space = small_space(25);
  const CoefficientModel model = random_adr_model();
  const SampledCoefficients s = sample_coefficients(model, space);
  CHECK(s.eps_hat == doctest::Approx(s.eps.minCoeff()));
  CHECK(s.C_E == doctest::Approx(s.eps.maxCoeff() / s.eps.minCoeff()));
  CHECK(s.eps_mean == doctest::Approx(space.weights().dot(s.eps)));
  CHECK(std::abs(space.weights().dot(s.eps_fluct())) < 1e-15);
  CHECK(!s.deterministic());

  // constant columns have exactly zero fluctuation
  const SampledCoefficients d = sample_coefficients(make_constant_model(0.3, {1.0, 2.0}, 0.5, 1.0), small_space(7));
  CHECK(d.deterministic(0.0));
  CHECK(d.eps_fluct().cwiseAbs().maxCoeff() == 0.0);

  CoefficientModel bad = random_adr_model();
  bad.eps = [](SampleView w) { return w[0]; };
  CHECK_THROWS_AS(sample_coefficients(bad, space), ConfigError);
}

TEST_CASE("reaction analysis closed forms") {
  const Mesh mesh = build_structured_mesh(4);
  const SampleSpace space = small_space(5);
  SUBCASE("no reaction and solenoidal advection") {
    const ReactionAnalysis a = analyze_reaction(scalar_model(0.1, 0.0, {1, 0}), mesh, space);
    CHECK(a.nu == 0.0);
    CHECK(a.mu0 == 0.0);
    CHECK(a.mu_identically_zero);
  }
  SUBCASE("constant reaction 2") {
    const ReactionAnalysis a = analyze_reaction(scalar_model(0.1, 2.0, {1, 0}), mesh, space);
    CHECK(a.mu_tilde0 == doctest::Approx(1.0));
    CHECK(a.nu == 0.0);
    CHECK(a.mu0 == doctest::Approx(1.0));
    for (double c : a.c_sup_K) CHECK(c == doctest::Approx(2.0));
  }
  SUBCASE("divergent advection shifts by nu") {
    // c = 0, div b = 2: mu_tilde = -1, nu = 1, mu = 0
    const ReactionAnalysis a = analyze_reaction(scalar_model(0.1, 0.0, {}, 2.0, true), mesh, space);
    CHECK(a.mu_tilde0 == doctest::Approx(-1.0));
    CHECK(a.nu == doctest::Approx(1.0));
    CHECK(a.mu0 == doctest::Approx(0.0));
  }
  SUBCASE("rotating field is solenoidal") {
    CoefficientModel m = scalar_model(0.1, 0.0, {});
    m.advection[0].field = [](Point2 x) { return Point2{0.5 - x.y, x.x - 0.5}; };
    CHECK(analyze_reaction(m, mesh, space).nu == 0.0);
  }
  SUBCASE("mu = c/2 for non-negative c and solenoidal b") {
    CoefficientModel m = random_adr_model();
    m.advection.pop_back();  // keep the divergence-free term only
    const ReactionAnalysis a = analyze_reaction(m, mesh, space);
    CHECK(a.nu == 0.0);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
      const Point2 x{u(rng), u(rng)};
      const auto w = space.sample(static_cast<std::size_t>(k) % space.count());
      CHECK(a.mu(x, w) == doctest::Approx(0.5 * m.c(x, w)).epsilon(1e-14));
    }
  }
}

TEST_CASE("inverse inequality constant") {
  const Mesh mesh = build_structured_mesh(4);
  const double C_I = estimate_inverse_constant(mesh, assemble_stiffness(mesh),
                                               assemble_mass(mesh, QuadratureRule::degree4()));
  // [DERIVED] independent dense power iteration
  CHECK(C_I == doctest::Approx(oracle_inverse_constant(mesh)).epsilon(1e-8));

  const auto quad = QuadratureRule::degree4();
  const SpMat K = assemble_stiffness(mesh), M = assemble_mass(mesh, quad);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 1000; ++trial) {
    Vec u = Vec::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
    for (int v : mesh.interior_vertices()) u[v] = n(rng);
    CHECK(std::sqrt(u.dot(K * u)) <= (C_I / mesh.h) * std::sqrt(u.dot(M * u)) * (1.0 + 1e-12));
  }
  // constant field: zero gradient
  const Vec one = Vec::Ones(static_cast<Eigen::Index>(mesh.num_vertices()));
  CHECK(one.dot(K * one) < 1e-12);

  // quasi-uniform refinement keeps the constant bounded
  std::vector<double> c;
  for (int m : {8, 16, 32}) {
    const Mesh r = build_structured_mesh(m);
    c.push_back(estimate_inverse_constant(r, assemble_stiffness(r), assemble_mass(r, quad)));
  }
  CHECK(c[1] == doctest::Approx(c[0]).epsilon(0.1));
  CHECK(c[2] == doctest::Approx(c[0]).epsilon(0.1));

  // the sparse branch agrees with the dense one
  const Mesh big = build_structured_mesh(52);
  const double cb = estimate_inverse_constant(big, assemble_stiffness(big), assemble_mass(big, quad));
  CHECK(cb == doctest::Approx(c[2]).epsilon(0.02));
}

TEST_CASE("coercivity delta") {
  const Mesh mesh = build_structured_mesh(8);
  const SampleSpace space = small_space(3);
  StabilizationParams p;
  p.C_I = estimate_inverse_constant(mesh, assemble_stiffness(mesh), assemble_mass(mesh, QuadratureRule::degree4()));
  p.C_E = 1.0;
  SUBCASE("diffusion bound") {
    const ReactionAnalysis a = analyze_reaction(scalar_model(0.01, 0.0, {1, 0}), mesh, space);
    const auto d = delta_coercivity(mesh, a, p);
    for (std::size_t k = 0; k < d.size(); ++k) {
      // [DERIVED] h_K^2 / (2 d C_I^2 C_E^2 eps_hat) with d = 2
      const double hk = std::sqrt(2.0) / 8.0;
      CHECK(mesh.h_K[k] == doctest::Approx(hk));
      CHECK(d[k] == doctest::Approx(hk * hk / (4.0 * p.C_I * p.C_I * 0.01)).epsilon(1e-14));
    }
  }
  SUBCASE("reaction bound") {
    const ReactionAnalysis a = analyze_reaction(scalar_model(1e-8, 4.0, {1, 0}), mesh, space);
    for (double d : delta_coercivity(mesh, a, p)) CHECK(d == doctest::Approx(0.125));
  }
  SUBCASE("both inactive") {
    const ReactionAnalysis a = analyze_reaction(scalar_model(0.01, 0.0, {1, 0}), mesh, space);
    p.drop_diffusion_bound = true;
    const auto d = delta_coercivity(mesh, a, p);
    for (double v : d) CHECK(v == kInactiveDelta);
    const auto capped = cap_delta(d, delta_experiment(mesh));
    for (std::size_t k = 0; k < d.size(); ++k) CHECK(capped[k] == doctest::Approx(mesh.h_K[k] / 4.0));
  }
}

TEST_CASE("semi-implicit delta") {
  const Mesh mesh = build_structured_mesh(8);
  const SampleSpace space = small_space(3);
  StabilizationParams p;
  p.C_I = estimate_inverse_constant(mesh, assemble_stiffness(mesh), assemble_mass(mesh, QuadratureRule::degree4()));
  SUBCASE("time step binds") {
    const ReactionAnalysis a = analyze_reaction(scalar_model(1e-12, 0.0, {1, 0}), mesh, space);
    for (double d : delta_semi_implicit(mesh, a, p, 0.1)) CHECK(d == doctest::Approx(0.025));
  }
  SUBCASE("large time step") {
    const ReactionAnalysis a = analyze_reaction(scalar_model(0.01, 1.0, {1, 0}), mesh, space);
    const auto d = delta_semi_implicit(mesh, a, p, 1e9);
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double diff = mesh.h_K[k] * mesh.h_K[k] / (2.0 * 0.01 * p.C_I * p.C_I * 2.0);
      CHECK(d[k] == doctest::Approx(std::min(0.5, diff) / 8.0).epsilon(1e-14));
    }
  }
  SUBCASE("never above the coercivity delta") {
    const Mesh m4 = build_structured_mesh(6);
    StabilizationParams q;
    q.C_I = estimate_inverse_constant(m4, assemble_stiffness(m4), assemble_mass(m4, QuadratureRule::degree4()));
    const SampleSpace s = small_space(9);
    const CoefficientModel model = random_adr_model();
    const ReactionAnalysis a = analyze_reaction(model, m4, s);
    q.C_E = a.C_E;
    const auto dc = delta_coercivity(m4, a, q);
    for (double dt : {1e-3, 0.1, 10.0}) {
      const auto ds = delta_semi_implicit(m4, a, q, dt);
      for (std::size_t k = 0; k < ds.size(); ++k) CHECK(ds[k] <= dc[k]);
    }
  }
  SUBCASE("rotating-body data, full three-way minimum") {
    const Mesh m = build_structured_mesh(16);
    MonteCarloSpec spec;
    spec.bounds = {{-1, 1}, {-1, 1}, {-1, 1}};
    const SampleSpace s = make_monte_carlo(spec, 20, 1);
    CoefficientModel model = scalar_model(0.0, 0.0, {});
    model.eps = [](SampleView w) { return std::pow(10.0, w[0] - 16.0); };
    model.advection[0].field = [](Point2 x) { return Point2{0.5 - x.y, x.x - 0.5}; };
    const ReactionAnalysis a = analyze_reaction(model, m, s);
    StabilizationParams q;
    q.C_I = estimate_inverse_constant(m, assemble_stiffness(m), assemble_mass(m, QuadratureRule::degree4()));
    q.C_E = a.C_E;
    const double dt = 2.0 * M_PI / 4000.0;
    const auto d = delta_semi_implicit(m, a, q, dt);
    double eps_hat = 1e300, eps_max = 0.0;
    for (std::size_t i = 0; i < s.count(); ++i) {
      const double e = std::pow(10.0, s.sample(i)[0] - 16.0);
      eps_hat = std::min(eps_hat, e);
      eps_max = std::max(eps_max, e);
    }
    const double ce = eps_max / eps_hat;
    for (std::size_t k = 0; k < d.size(); ++k) {
      const double h = m.h_K[k];
      const double diff = h * h / (2.0 * eps_hat * q.C_I * q.C_I * std::max(ce * ce, 1.0) * 2.0);
      CHECK(d[k] == doctest::Approx(std::min(diff, 2.0 * dt) / 8.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("local Peclet number") {
  const Mesh mesh = build_structured_mesh(10);
  const SampleSpace space = small_space(2);
  const PecletReport r = local_peclet(scalar_model(0.01, 0.0, {1, 0}), mesh, space);
  CHECK(r.max_peclet == doctest::Approx(std::sqrt(2.0) / 10.0 / 0.02));
  CHECK(r.advection_dominated);
  CHECK(!local_peclet(scalar_model(100.0, 0.0, {1, 0}), mesh, space).advection_dominated);

  const Mesh m32 = build_structured_mesh(32);
  MonteCarloSpec spec;
  spec.bounds = {{-1, 1}, {-1, 1}, {-1, 1}};
  const SampleSpace s = make_monte_carlo(spec, 10, 3);
  CoefficientModel rb = scalar_model(0.0, 0.0, {});
  rb.eps = [](SampleView w) { return std::pow(10.0, w[0] - 16.0); };
  rb.advection[0].field = [](Point2 x) { return Point2{0.5 - x.y, x.x - 0.5}; };
  const PecletReport p = local_peclet(rb, m32, s);
  for (char flag : p.per_sample) CHECK(flag);
}

TEST_CASE("moderate stochasticity gate") {
  const Mesh mesh = build_structured_mesh(4);
  const SampleSpace pm = make_tensor_grid({{-1.0, 1.0, 2}});
  auto with_eps = [](double amp) {
    CoefficientModel m = scalar_model(1.0, 0.0, {1, 0});
    m.eps = [amp](SampleView w) { return 1.0 + amp * w[0]; };
    return m;
  };
  {
    const CoefficientModel m = with_eps(0.5);
    const StochasticityReport r = check_moderate_stochasticity(m, analyze_reaction(m, mesh, pm), pm, mesh);
    CHECK(!r.holds());
    CHECK(r.eps_margin == doctest::Approx(0.5 / 32.0 - 0.5));
  }
  {
    const CoefficientModel m = with_eps(0.01);
    const StochasticityReport r = check_moderate_stochasticity(m, analyze_reaction(m, mesh, pm), pm, mesh);
    CHECK(r.holds());
    CHECK(r.eps_margin == doctest::Approx(0.99 / 32.0 - 0.01));
  }
  {
    const CoefficientModel m = scalar_model(1.0, 1.0, {1, 0});
    const StochasticityReport r = check_moderate_stochasticity(m, analyze_reaction(m, mesh, pm), pm, mesh);
    CHECK(r.holds());
    CHECK(std::isinf(r.eps_margin));
    CHECK(std::isinf(r.c_margin));
  }
}
