#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pgdlr/mesh.hpp"
#include "oracle_quadrature.hpp"

#include <Eigen/SparseLU>

#include <cmath>
#include <random>

using namespace pgdlr;
using testing_support::duffy_rule;

namespace {

// Brute-force dense assembly of sum_K w_K * integral g(x, grad phi_j, phi_j, grad phi_i, phi_i).
template <class F>
Mat brute_force(const Mesh& mesh, const std::vector<double>& elem_weight, F integrand) {
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  Mat A = Mat::Zero(n, n);
  const auto rule = duffy_rule(10);
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    const auto& tri = mesh.triangles[k];
    const Point2 a = mesh.vertices[tri[0]], b = mesh.vertices[tri[1]], c = mesh.vertices[tri[2]];
    const double J11 = b.x - a.x, J12 = c.x - a.x, J21 = b.y - a.y, J22 = c.y - a.y;
    const double det = J11 * J22 - J12 * J21;
    // reference gradients of 1 - xi - eta, xi, eta mapped by J^{-T}
    const double rg[3][2] = {{-1, -1}, {1, 0}, {0, 1}};
    Point2 g[3];
    for (int l = 0; l < 3; ++l)
      g[l] = {(J22 * rg[l][0] - J21 * rg[l][1]) / det, (-J12 * rg[l][0] + J11 * rg[l][1]) / det};
    for (const auto& q : rule) {
      const Point2 x{a.x + J11 * q.xi + J12 * q.eta, a.y + J21 * q.xi + J22 * q.eta};
      const double phi[3] = {1.0 - q.xi - q.eta, q.xi, q.eta};
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          A(tri[i], tri[j]) += elem_weight[k] * q.w * std::abs(det) * integrand(x, g[j], phi[j], g[i], phi[i]);
    }
  }
  return A;
}

double dot2(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }

Point2 b_field(Point2 x) { return {1.0 + 0.5 * x.y, 0.5 - 0.25 * x.x}; }
Point2 beta_field(Point2 x) { return {x.x - 0.3, 0.7 * x.y + 0.1}; }
double c_field(Point2 x) { return 1.0 + x.x * x.y; }

std::vector<double> random_delta(const Mesh& mesh) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  std::vector<double> d(mesh.num_triangles());
  for (double& v : d) v = u(rng);
  return d;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

}  // namespace

TEST_CASE("degree-4 rule integrates monomials exactly on the reference triangle") {
  const QuadratureRule q = QuadratureRule::degree4();
  CHECK(q.size() == 6);
  for (int a = 0; a <= 4; ++a)
    for (int b = 0; a + b <= 4; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        const double x = q.points[i][1], y = q.points[i][2];
        s += q.weights[i] * std::pow(x, a) * std::pow(y, b);
      }
      // [DERIVED] integral of x^a y^b over the unit simplex = a! b! / (a+b+2)!
      CHECK(s == doctest::Approx(factorial(a) * factorial(b) / factorial(a + b + 2)).epsilon(1e-14));
    }
}

TEST_CASE("structured mesh layout") {
  const Mesh mesh = build_structured_mesh(4);
  CHECK(mesh.num_vertices() == 25);
  CHECK(mesh.num_triangles() == 32);
  CHECK(mesh.boundary_vertices().size() == 16);
  CHECK(mesh.interior_vertices().size() == 9);
  double area = 0.0;
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) area += mesh.area(k);
  CHECK(area == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(mesh.h == doctest::Approx(std::sqrt(2.0) / 4.0));
  // vertex (i, j) at (i/n, j/n)
  CHECK(mesh.vertices[2 * 5 + 3].x == doctest::Approx(0.75));
  CHECK(mesh.vertices[2 * 5 + 3].y == doctest::Approx(0.5));
}

TEST_CASE("boundary-layer split tags") {
  Mesh mesh = build_structured_mesh(50);
  tag_boundary_layer_split(mesh);
  CHECK(mesh.has_tag("D1"));
  CHECK(mesh.has_tag("D2"));
  const DirichletData bc = make_dirichlet(mesh, {{"D1", 1.0}, {"D2", 0.0}});
  for (std::size_t i = 0; i < bc.nodes.size(); ++i) {
    const Point2 x = mesh.vertices[bc.nodes[i]];
    const bool d1 = (x.x == 0.0 && x.y <= 0.2) || x.y == 0.0 || (x.x == 1.0 && x.y <= 0.02);
    CHECK(bc.values[static_cast<Eigen::Index>(i)] == (d1 ? 1.0 : 0.0));
  }
  CHECK_THROWS_AS(make_dirichlet(mesh, {{"nope", 1.0}}), ConfigError);
}

TEST_CASE("mass and stiffness reproduce exact integrals of linear fields") {
  const Mesh mesh = build_structured_mesh(6);
  const auto quad = QuadratureRule::degree4();
  const SpMat M = assemble_mass(mesh, quad);
  const SpMat K = assemble_stiffness(mesh);
  const Vec one = Vec::Ones(static_cast<Eigen::Index>(mesh.num_vertices()));
  const Vec x = interpolate(mesh, [](Point2 p) { return p.x; });
  const Vec y = interpolate(mesh, [](Point2 p) { return p.y; });
  CHECK(one.dot(M * one) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(x.dot(M * x) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(x.dot(M * y) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(x.dot(K * x) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(x.dot(K * y)) < 1e-14);
  CHECK((K * one).cwiseAbs().maxCoeff() < 1e-13);
  // [DERIVED] five-point stencil on the diagonal split
  const int c = 3 * 7 + 3;
  CHECK(K.coeff(c, c) == doctest::Approx(4.0));
  CHECK(K.coeff(c, c + 1) == doctest::Approx(-1.0));
  CHECK(K.coeff(c, c + 7) == doctest::Approx(-1.0));
  CHECK(std::abs(K.coeff(c, c + 8)) < 1e-14);
}

TEST_CASE("convection with the test-row convention") {
  const Mesh mesh = build_structured_mesh(5);
  const auto quad = QuadratureRule::degree4();
  const SpMat C = assemble_convection(mesh, quad, [](Point2) { return Point2{1.0, 1.0}; });
  const Vec u = interpolate(mesh, [](Point2 p) { return p.x + 2.0 * p.y; });
  const Vec v = interpolate(mesh, [](Point2 p) { return p.y; });
  // (b . grad u, v) = integral of 3 y = 3/2
  CHECK(v.dot(C * u) == doctest::Approx(1.5).epsilon(1e-14));
}

TEST_CASE("SUPG blocks and loads match a brute-force high-order assembly") {
  const Mesh mesh = build_structured_mesh(3);
  const auto quad = QuadratureRule::degree4();
  const std::vector<double> delta = random_delta(mesh);
  const std::vector<double> ones(mesh.num_triangles(), 1.0);

  const Mat conv = brute_force(mesh, ones, [](Point2 x, Point2 gj, double, Point2, double pi) {
    return dot2(b_field(x), gj) * pi;
  });
  CHECK((Mat(assemble_convection(mesh, quad, b_field)) - conv).cwiseAbs().maxCoeff() < 1e-14);

  const Mat smass = brute_force(mesh, delta, [](Point2 x, Point2, double pj, Point2 gi, double) {
    return pj * dot2(beta_field(x), gi);
  });
  CHECK((Mat(assemble_supg_mass(mesh, quad, beta_field, delta)) - smass).cwiseAbs().maxCoeff() < 1e-14);

  const Mat sconv = brute_force(mesh, delta, [](Point2 x, Point2 gj, double, Point2 gi, double) {
    return dot2(b_field(x), gj) * dot2(beta_field(x), gi);
  });
  CHECK((Mat(assemble_supg_conv(mesh, quad, b_field, beta_field, delta)) - sconv).cwiseAbs().maxCoeff() < 1e-14);

  const Mat sreac = brute_force(mesh, delta, [](Point2 x, Point2, double pj, Point2 gi, double) {
    return c_field(x) * pj * dot2(beta_field(x), gi);
  });
  CHECK((Mat(assemble_supg_reaction(mesh, quad, c_field, beta_field, delta)) - sreac).cwiseAbs().maxCoeff() < 1e-14);

  const Mat wmass = brute_force(mesh, ones, [](Point2 x, Point2, double pj, Point2, double pi) {
    return c_field(x) * pj * pi;
  });
  CHECK((Mat(assemble_mass(mesh, quad, c_field)) - wmass).cwiseAbs().maxCoeff() < 1e-14);

  // load with a linear f: the integrand f * (phi_i + delta beta . grad phi_i) is cubic
  auto f = [](Point2 x) { return 1.0 + 2.0 * x.x - x.y; };
  const Mat lm = brute_force(mesh, ones, [&](Point2 x, Point2, double pj, Point2, double pi) {
    return f(x) * pi * pj;
  });
  const Mat ls = brute_force(mesh, delta, [&](Point2 x, Point2, double pj, Point2 gi, double) {
    return f(x) * pj * dot2(beta_field(x), gi);
  });
  const Vec one = Vec::Ones(lm.cols());
  const Vec expected = lm * one + ls * one;  // sum over j of phi_j is 1
  CHECK((assemble_load(mesh, quad, f, beta_field, delta) - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("assemble_blocks uses the same field as transport and streamline direction") {
  const Mesh mesh = build_structured_mesh(4);
  const auto quad = QuadratureRule::degree4();
  const std::vector<double> delta = random_delta(mesh);
  const FemBlocks blocks = assemble_blocks(mesh, b_field, c_field, delta, quad);
  CHECK((Mat(blocks.supg_conv) - Mat(assemble_supg_conv(mesh, quad, b_field, b_field, delta))).norm() < 1e-14);
  CHECK((Mat(blocks.supg_mass) - Mat(assemble_supg_mass(mesh, quad, b_field, delta))).norm() < 1e-14);
  CHECK((Mat(blocks.reaction) - Mat(assemble_mass(mesh, quad, c_field))).norm() < 1e-14);
  // the streamline block is symmetric positive semi-definite
  const Mat S = blocks.supg_conv;
  CHECK((S - S.transpose()).norm() < 1e-13);
  CHECK(Eigen::SelfAdjointEigenSolver<Mat>(S).eigenvalues().minCoeff() > -1e-13);
}

TEST_CASE("Dirichlet lifting solves a problem with a linear exact solution") {
  const Mesh mesh = build_structured_mesh(8);
  Mesh tagged = mesh;
  tag_boundary_layer_split(tagged);
  const SpMat K = assemble_stiffness(mesh);
  // u = 1 + x + 2y is harmonic, so the discrete Laplace solution is nodally exact
  DirichletData bc;
  bc.nodes = mesh.boundary_vertices();
  bc.values.resize(static_cast<Eigen::Index>(bc.nodes.size()));
  for (std::size_t i = 0; i < bc.nodes.size(); ++i) {
    const Point2 x = mesh.vertices[bc.nodes[i]];
    bc.values[static_cast<Eigen::Index>(i)] = 1.0 + x.x + 2.0 * x.y;
  }
  const ConstrainedSystem sys(K, bc);
  Eigen::SparseLU<SpMat> lu(sys.matrix());
  const Vec zero = Vec::Zero(K.rows());
  const Vec u = lu.solve(sys.lift(zero, bc.values));
  const Vec exact = interpolate(mesh, [](Point2 x) { return 1.0 + x.x + 2.0 * x.y; });
  CHECK((u - exact).cwiseAbs().maxCoeff() < 1e-12);

  // apply_dirichlet gives the same solution
  SpMat A = K;
  Vec rhs = zero;
  apply_dirichlet(A, rhs, bc);
  Eigen::SparseLU<SpMat> lu2(A);
  CHECK((Vec(lu2.solve(rhs)) - exact).cwiseAbs().maxCoeff() < 1e-12);
}
