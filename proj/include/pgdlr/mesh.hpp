#pragma once

#include "pgdlr/types.hpp"

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace pgdlr {

using ScalarField = std::function<double(Point2)>;
using VectorField = std::function<Point2(Point2)>;

/// Symmetric rule on the reference triangle (0,0),(1,0),(0,1). Weights sum
/// to the reference area 1/2.
struct QuadratureRule {
  std::vector<std::array<double, 3>> points;  // barycentric
  std::vector<double> weights;
  int degree = 0;

  std::size_t size() const { return weights.size(); }

  /// Six-point degree-4 rule used for every assembly in the library.
  static QuadratureRule degree4();
};

/// Structured P1 triangulation of the unit square.
///
/// Vertex (i, j) sits at (i/n, j/n) with index j*(n+1)+i. Every grid cell is
/// split along its lower-left to upper-right diagonal. Boundary vertices
/// carry exactly one tag; the default tag is "boundary".
struct Mesh {
  int n_per_side = 0;
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> boundary_tag;  // -1 for interior vertices
  std::vector<std::string> tag_names;
  double h = 0.0;
  std::vector<double> h_K;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_triangles() const { return triangles.size(); }
  bool is_boundary(int v) const { return boundary_tag[v] >= 0; }
  std::vector<int> boundary_vertices() const;
  std::vector<int> interior_vertices() const;

  double area(std::size_t k) const;
  /// Constant gradients of the three local P1 basis functions of triangle k.
  std::array<Point2, 3> gradients(std::size_t k) const;
  /// Physical point of barycentric coordinates `bary` in triangle k.
  Point2 map_point(std::size_t k, const std::array<double, 3>& bary) const;

  /// Re-tag every boundary vertex satisfying `select` with `name`.
  void tag_boundary(const std::string& name, const std::function<bool(Point2)>& select);
  bool has_tag(const std::string& name) const;
};

Mesh build_structured_mesh(int n_per_side);

/// Tags the boundary-layer split: "D1" is the left edge up to y = 0.2, the
/// bottom edge and the right edge up to y = 0.02; every other boundary
/// vertex is "D2".
void tag_boundary_layer_split(Mesh& mesh);

/// Nodal interpolation of a scalar field.
Vec interpolate(const Mesh& mesh, const ScalarField& f);

// --- assembly -------------------------------------------------------------
//
// Matrix convention: entry (i, j) tests with basis function i and uses basis
// function j as trial, i.e. A(i, j) = a(phi_j, phi_i). Stabilisation
// parameters `delta` hold one non-negative value per triangle.

SpMat assemble_mass(const Mesh& mesh, const QuadratureRule& quad, const ScalarField& weight = {});
SpMat assemble_stiffness(const Mesh& mesh);
/// (b . grad phi_j, phi_i)
SpMat assemble_convection(const Mesh& mesh, const QuadratureRule& quad, const VectorField& b);
/// sum_K delta_K (phi_j, beta . grad phi_i)_K
SpMat assemble_supg_mass(const Mesh& mesh, const QuadratureRule& quad, const VectorField& beta,
                         const std::vector<double>& delta);
/// sum_K delta_K (b . grad phi_j, beta . grad phi_i)_K
SpMat assemble_supg_conv(const Mesh& mesh, const QuadratureRule& quad, const VectorField& b,
                         const VectorField& beta, const std::vector<double>& delta);
/// sum_K delta_K (c phi_j, beta . grad phi_i)_K
SpMat assemble_supg_reaction(const Mesh& mesh, const QuadratureRule& quad, const ScalarField& c,
                             const VectorField& beta, const std::vector<double>& delta);
/// (f, phi_i) + sum_K delta_K (f, beta . grad phi_i)_K
Vec assemble_load(const Mesh& mesh, const QuadratureRule& quad, const ScalarField& f,
                  const VectorField& beta, const std::vector<double>& delta);

/// Deterministic blocks of the Galerkin and SUPG forms for one advection
/// field `b` (used both as transport and as streamline direction) and one
/// reaction field `c`. P1 has no Laplacian residual, so none is assembled.
struct FemBlocks {
  SpMat mass;
  SpMat stiffness;
  SpMat convection;
  SpMat supg_mass;
  SpMat supg_conv;
  SpMat reaction;
  SpMat supg_reaction;
  std::vector<double> delta;
};

FemBlocks assemble_blocks(const Mesh& mesh, const VectorField& b, const ScalarField& c,
                          const std::vector<double>& delta, const QuadratureRule& quad);

// --- Dirichlet conditions -------------------------------------------------

struct DirichletData {
  std::vector<int> nodes;
  Vec values;
};

/// Boundary nodes with their prescribed values. Tags missing from the map get
/// the value 0; map keys that are not tags of the mesh are rejected.
DirichletData make_dirichlet(const Mesh& mesh, const std::map<std::string, double>& boundary_values);

/// Row replacement with column elimination into the right-hand side.
void apply_dirichlet(SpMat& matrix, Vec& rhs, const DirichletData& bc);

/// A constrained square system whose right-hand side can be lifted many
/// times without touching the matrix again.
class ConstrainedSystem {
 public:
  ConstrainedSystem() = default;
  ConstrainedSystem(const SpMat& matrix, const DirichletData& bc);

  const SpMat& matrix() const { return constrained_; }
  /// rhs - A[:, B] g on free rows, g on constrained rows.
  Vec lift(const Vec& rhs, const Vec& boundary_values) const;
  Mat lift(const Mat& rhs, const Vec& boundary_values) const;
  const DirichletData& bc() const { return bc_; }

 private:
  SpMat constrained_;
  SpMat boundary_columns_;  // original columns of the constrained nodes
  DirichletData bc_;
  std::vector<char> is_constrained_;
};

}  // namespace pgdlr
