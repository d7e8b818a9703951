#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pgdlr/fom.hpp"
#include "support.hpp"

#include <Eigen/LU>

#include <numeric>
#include <random>

using namespace pgdlr;
using namespace testing_support;

namespace {

SchemeConfig config(Scheme scheme, Stabilization stab, const Mesh& mesh, double dt, double delta = 0.03) {
  SchemeConfig cfg;
  cfg.scheme = scheme;
  cfg.stabilization = stab;
  cfg.dt = dt;
  cfg.delta = uniform_delta(mesh, delta);
  return cfg;
}

// One step of the scheme for sample i, assembled term by term from the
// mesh primitives and solved densely with identity boundary rows.
Vec dense_step(const Mesh& mesh, const CoefficientModel& m, const SampleSpace& space, std::size_t i, const Vec& u,
               double t, const SchemeConfig& cfg) {
  const auto quad = QuadratureRule::degree4();
  const std::vector<double> delta =
      cfg.stabilization == Stabilization::supg ? cfg.delta : std::vector<double>(mesh.num_triangles(), 0.0);
  const Vec& w = space.weights();
  // mean weights of each term
  std::vector<double> a_mean(m.advection.size(), 0.0), c_mean(m.reaction.size(), 0.0);
  double eps_mean = 0.0;
  for (std::size_t s = 0; s < space.count(); ++s) {
    eps_mean += w[static_cast<Eigen::Index>(s)] * m.eps(space.sample(s));
    for (std::size_t k = 0; k < m.advection.size(); ++k)
      a_mean[k] += w[static_cast<Eigen::Index>(s)] * m.advection[k].weight(space.sample(s));
    for (std::size_t k = 0; k < m.reaction.size(); ++k)
      c_mean[k] += w[static_cast<Eigen::Index>(s)] * m.reaction[k].weight(space.sample(s));
  }
  const VectorField bbar = [&](Point2 x) {
    Point2 b{0.0, 0.0};
    for (std::size_t k = 0; k < m.advection.size(); ++k) {
      const Point2 f = m.advection[k].field(x);
      b.x += a_mean[k] * f.x;
      b.y += a_mean[k] * f.y;
    }
    return b;
  };
  const auto wi = space.sample(i);
  const Mat K = assemble_stiffness(mesh);
  const Mat MH = Mat(assemble_mass(mesh, quad)) + Mat(assemble_supg_mass(mesh, quad, bbar, delta));
  Mat A = m.eps(wi) * K, Abar = eps_mean * K;
  for (std::size_t k = 0; k < m.advection.size(); ++k) {
    const Mat term = Mat(assemble_convection(mesh, quad, m.advection[k].field)) +
                     Mat(assemble_supg_conv(mesh, quad, m.advection[k].field, bbar, delta));
    A += m.advection[k].weight(wi) * term;
    Abar += a_mean[k] * term;
  }
  for (std::size_t k = 0; k < m.reaction.size(); ++k) {
    const Mat term = Mat(assemble_mass(mesh, quad, m.reaction[k].field)) +
                     Mat(assemble_supg_reaction(mesh, quad, m.reaction[k].field, bbar, delta));
    A += m.reaction[k].weight(wi) * term;
    Abar += c_mean[k] * term;
  }
  const double dt = cfg.dt;
  const bool explicit_scheme = cfg.scheme == Scheme::explicit_euler;
  const double tf = explicit_scheme ? t : t + dt;
  Vec F = Vec::Zero(u.size());
  for (const auto& f : m.forcing) F += f.weight(tf, wi) * assemble_load(mesh, quad, f.field, bbar, delta);
  Mat lhs = MH / dt;
  Vec rhs = MH * u / dt + F;
  if (explicit_scheme) {
    rhs -= A * u;
  } else {
    lhs += Abar;
    rhs -= (A - Abar) * u;
  }
  const DirichletData bc = make_dirichlet(mesh, m.boundary_values);
  for (std::size_t k = 0; k < bc.nodes.size(); ++k) {
    lhs.row(bc.nodes[k]).setZero();
    lhs(bc.nodes[k], bc.nodes[k]) = 1.0;
    rhs[bc.nodes[k]] = bc.values[static_cast<Eigen::Index>(k)];
  }
  return lhs.fullPivLu().solve(rhs);
}

}  // namespace

TEST_CASE("FOM step equals the scheme assembled term by term") {
  const Mesh mesh = build_structured_mesh(4);
  const SampleSpace space = small_space(5);
  const CoefficientModel model = random_adr_model();
  for (Scheme scheme : {Scheme::semi_implicit, Scheme::explicit_euler})
    for (Stabilization stab : {Stabilization::none, Stabilization::supg}) {
      CAPTURE(to_string(scheme));
      CAPTURE(to_string(stab));
      const SchemeConfig cfg = config(scheme, stab, mesh, 0.01);
      const Operators ops(mesh, model, space, cfg);
      const DlrState s = random_state(mesh, space, 2, 0.2);
      FomState f{realize_all(s), 0.3};
      const FomState next = fom_step(f, ops);
      CHECK(next.t == doctest::Approx(0.31));
      for (std::size_t i = 0; i < space.count(); ++i) {
        const Vec expected = dense_step(mesh, model, space, i, f.fields.col(static_cast<Eigen::Index>(i)), 0.3, cfg);
        CHECK((next.fields.col(static_cast<Eigen::Index>(i)) - expected).cwiseAbs().maxCoeff() <=
              1e-12 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
      }
    }
}

TEST_CASE("sample permutation commutes with the FOM") {
  const Mesh mesh = build_structured_mesh(4);
  const SampleSpace space = small_space(6);
  std::vector<Eigen::Index> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(2);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat ps(6, space.dimension());
  Vec pw(6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    ps.row(i) = space.samples().row(perm[static_cast<std::size_t>(i)]);
    pw[i] = space.weights()[perm[static_cast<std::size_t>(i)]];
  }
  const SampleSpace permuted(ps, pw);
  const CoefficientModel model = random_adr_model();
  const Operators a(mesh, model, space, config(Scheme::semi_implicit, Stabilization::supg, mesh, 0.02));
  const Operators b(mesh, model, permuted, config(Scheme::semi_implicit, Stabilization::supg, mesh, 0.02));
  const Mat u0 = realize_all(random_state(mesh, space, 3, 0.2));
  Mat pu0(u0.rows(), 6);
  for (Eigen::Index i = 0; i < 6; ++i) pu0.col(i) = u0.col(perm[static_cast<std::size_t>(i)]);
  const FomRun ra = fom_run({u0, 0.0}, a, 0.2);
  const FomRun rb = fom_run({pu0, 0.0}, b, 0.2);
  for (Eigen::Index i = 0; i < 6; ++i)
    CHECK((rb.state.fields.col(i) - ra.state.fields.col(perm[static_cast<std::size_t>(i)])).cwiseAbs().maxCoeff() <
          1e-11);
  CHECK(ra.norms.back() == doctest::Approx(rb.norms.back()).epsilon(1e-12));
}

TEST_CASE("constant steady state is preserved") {
  // u = 1 solves c u = f with c = f = 1.5 and boundary value 1
  const Mesh mesh = build_structured_mesh(6);
  const SampleSpace space = small_space(3);
  CoefficientModel m = make_constant_model(0.01, {1.0, 0.5}, 1.5, 1.5);
  m.boundary_values = {{"boundary", 1.0}};
  for (Stabilization stab : {Stabilization::none, Stabilization::supg}) {
    const Operators ops(mesh, m, space, config(Scheme::semi_implicit, stab, mesh, 0.05, 0.04));
    const FomRun r = fom_run({Mat::Ones(49, 3), 0.0}, ops, 0.5);
    CHECK((r.state.fields.array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("single collocation point and norms") {
  const Mesh mesh = build_structured_mesh(3);
  const SampleSpace one = make_tensor_grid({{0.3, 0.3, 1}, {-0.2, -0.2, 1}});
  const CoefficientModel model = random_adr_model();
  const SchemeConfig cfg = config(Scheme::semi_implicit, Stabilization::supg, mesh, 0.05);
  const Operators ops(mesh, model, one, cfg);
  Vec u = Vec::Zero(16);
  for (int v : mesh.boundary_vertices()) u[v] = 0.2;
  FomState s{u, 0.0};
  for (int n = 0; n < 3; ++n) {
    const Vec expected = dense_step(mesh, model, one, 0, s.fields.col(0), s.t, cfg);
    s = fom_step(s, ops);
    CHECK((s.fields.col(0) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  const Mat M = ops.mean_blocks().mass;
  CHECK(fom_norm(s.fields, ops.mean_blocks().mass, one) ==
        doctest::Approx(std::sqrt(s.fields.col(0).dot(M * s.fields.col(0)))));
}

TEST_CASE("explicit blow-up is reported with its step") {
  const Mesh mesh = build_structured_mesh(8);
  const SampleSpace space = small_space(3);
  CoefficientModel m = make_constant_model(1.0, {0.0, 0.0}, 0.0, 0.0);
  SchemeConfig cfg = config(Scheme::explicit_euler, Stabilization::none, mesh, 0.05);
  cfg.blowup_factor = 1e6;
  const Operators ops(mesh, m, space, cfg);
  const Mat u0 = realize_all(random_state(mesh, space, 2, 0.0));
  try {
    fom_run({u0, 0.0}, ops, 5.0);
    FAIL("no blow-up detected");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("blow-up at step") != std::string::npos);
  }
  CHECK_THROWS_AS(fom_step({Mat::Zero(3, 3), 0.0}, ops), ConfigError);
}
