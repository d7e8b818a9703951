#include "pgdlr/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pgdlr {

QuadratureRule QuadratureRule::degree4() {
  constexpr double a1 = 0.445948490915964886318329253883;
  constexpr double w1 = 0.223381589678011465944361040349;
  constexpr double a2 = 0.091576213509770743459571463402;
  constexpr double w2 = 0.109951743655321867388972292984;
  QuadratureRule rule;
  rule.degree = 4;
  for (auto [a, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
    const double b = 1.0 - 2.0 * a;
    rule.points.push_back({a, a, b});
    rule.points.push_back({a, b, a});
    rule.points.push_back({b, a, a});
    for (int i = 0; i < 3; ++i) rule.weights.push_back(0.5 * w);
  }
  return rule;
}

std::vector<int> Mesh::boundary_vertices() const {
  std::vector<int> out;
  for (std::size_t v = 0; v < vertices.size(); ++v)
    if (boundary_tag[v] >= 0) out.push_back(static_cast<int>(v));
  return out;
}

std::vector<int> Mesh::interior_vertices() const {
  std::vector<int> out;
  for (std::size_t v = 0; v < vertices.size(); ++v)
    if (boundary_tag[v] < 0) out.push_back(static_cast<int>(v));
  return out;
}

double Mesh::area(std::size_t k) const {
  const auto& t = triangles[k];
  const Point2 p0 = vertices[t[0]], p1 = vertices[t[1]], p2 = vertices[t[2]];
  return 0.5 * ((p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y));
}

std::array<Point2, 3> Mesh::gradients(std::size_t k) const {
  const auto& t = triangles[k];
  const Point2 p0 = vertices[t[0]], p1 = vertices[t[1]], p2 = vertices[t[2]];
  const double two_area = 2.0 * area(k);
  return {Point2{(p1.y - p2.y) / two_area, (p2.x - p1.x) / two_area},
          Point2{(p2.y - p0.y) / two_area, (p0.x - p2.x) / two_area},
          Point2{(p0.y - p1.y) / two_area, (p1.x - p0.x) / two_area}};
}

Point2 Mesh::map_point(std::size_t k, const std::array<double, 3>& bary) const {
  const auto& t = triangles[k];
  Point2 p{};
  for (int a = 0; a < 3; ++a) p = p + bary[a] * vertices[t[a]];
  return p;
}

void Mesh::tag_boundary(const std::string& name, const std::function<bool(Point2)>& select) {
  auto it = std::find(tag_names.begin(), tag_names.end(), name);
  int id = static_cast<int>(it - tag_names.begin());
  if (it == tag_names.end()) tag_names.push_back(name);
  for (std::size_t v = 0; v < vertices.size(); ++v)
    if (boundary_tag[v] >= 0 && select(vertices[v])) boundary_tag[v] = id;
  // drop names that no longer label any vertex
  std::vector<std::string> used;
  std::vector<int> remap(tag_names.size(), -1);
  for (std::size_t i = 0; i < tag_names.size(); ++i) {
    if (std::find(boundary_tag.begin(), boundary_tag.end(), static_cast<int>(i)) != boundary_tag.end()) {
      remap[i] = static_cast<int>(used.size());
      used.push_back(tag_names[i]);
    }
  }
  for (auto& tag : boundary_tag)
    if (tag >= 0) tag = remap[tag];
  tag_names = std::move(used);
}

bool Mesh::has_tag(const std::string& name) const {
  return std::find(tag_names.begin(), tag_names.end(), name) != tag_names.end();
}

Mesh build_structured_mesh(int n) {
  if (n < 1) throw ConfigError("build_structured_mesh: n_per_side must be >= 1");
  Mesh mesh;
  mesh.n_per_side = n;
  const int np = n + 1;
  mesh.vertices.reserve(static_cast<std::size_t>(np) * np);
  mesh.boundary_tag.assign(static_cast<std::size_t>(np) * np, -1);
  for (int j = 0; j < np; ++j) {
    for (int i = 0; i < np; ++i) {
      mesh.vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
      if (i == 0 || j == 0 || i == n || j == n) mesh.boundary_tag[j * np + i] = 0;
    }
  }
  mesh.tag_names = {"boundary"};
  mesh.triangles.reserve(2 * static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int v00 = j * np + i, v10 = v00 + 1, v01 = v00 + np, v11 = v01 + 1;
      mesh.triangles.push_back({v00, v10, v11});
      mesh.triangles.push_back({v00, v11, v01});
    }
  }
  mesh.h = std::sqrt(2.0) / n;
  mesh.h_K.assign(mesh.triangles.size(), mesh.h);
  return mesh;
}

void tag_boundary_layer_split(Mesh& mesh) {
  constexpr double tol = 1e-12;
  mesh.tag_boundary("D2", [](Point2) { return true; });
  mesh.tag_boundary("D1", [](Point2 p) {
    return (p.x <= tol && p.y <= 0.2 + tol) || p.y <= tol || (p.x >= 1.0 - tol && p.y <= 0.02 + tol);
  });
}

Vec interpolate(const Mesh& mesh, const ScalarField& f) {
  Vec out(mesh.num_vertices());
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) out[v] = f(mesh.vertices[v]);
  return out;
}

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

void check_delta(const Mesh& mesh, const std::vector<double>& delta) {
  if (delta.size() != mesh.num_triangles()) {
    std::ostringstream msg;
    msg << "stabilisation parameter has " << delta.size() << " entries, mesh has "
        << mesh.num_triangles() << " triangles";
    throw ConfigError(msg.str());
  }
  for (double d : delta)
    if (!(d >= 0.0) || !std::isfinite(d))
      throw ConfigError("stabilisation parameters must be finite and non-negative");
}

double finite(double v) {
  if (!std::isfinite(v)) throw NumericalError("non-finite coefficient evaluation during assembly");
  return v;
}

Point2 finite(Point2 v) {
  finite(v.x);
  finite(v.y);
  return v;
}

// Generic element loop. `kernel(k, x, bary, grads, w, local)` adds the
// weighted quadrature contribution of point x to the 3x3 local matrix.
template <class Kernel>
SpMat assemble_with(const Mesh& mesh, const QuadratureRule& quad, Kernel&& kernel,
                    const std::vector<double>* skip_zero = nullptr) {
  Triplets trip;
  trip.reserve(9 * mesh.num_triangles());
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    if (skip_zero && (*skip_zero)[k] == 0.0) continue;
    const double scale = 2.0 * mesh.area(k);
    const auto grads = mesh.gradients(k);
    double local[3][3] = {};
    for (std::size_t q = 0; q < quad.size(); ++q) {
      const Point2 x = mesh.map_point(k, quad.points[q]);
      kernel(k, x, quad.points[q], grads, quad.weights[q] * scale, local);
    }
    const auto& t = mesh.triangles[k];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trip.emplace_back(t[a], t[b], local[a][b]);
  }
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  SpMat out(n, n);
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

}  // namespace

SpMat assemble_mass(const Mesh& mesh, const QuadratureRule& quad, const ScalarField& weight) {
  return assemble_with(mesh, quad, [&](std::size_t, Point2 x, const std::array<double, 3>& l,
                                       const std::array<Point2, 3>&, double w, double local[3][3]) {
    const double c = weight ? finite(weight(x)) : 1.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) local[a][b] += w * c * l[a] * l[b];
  });
}

SpMat assemble_stiffness(const Mesh& mesh) {
  Triplets trip;
  trip.reserve(9 * mesh.num_triangles());
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    const double area = mesh.area(k);
    const auto g = mesh.gradients(k);
    const auto& t = mesh.triangles[k];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trip.emplace_back(t[a], t[b], area * dot(g[a], g[b]));
  }
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  SpMat out(n, n);
  out.setFromTriplets(trip.begin(), trip.end());
  out.makeCompressed();
  return out;
}

SpMat assemble_convection(const Mesh& mesh, const QuadratureRule& quad, const VectorField& b) {
  return assemble_with(mesh, quad, [&](std::size_t, Point2 x, const std::array<double, 3>& l,
                                       const std::array<Point2, 3>& g, double w, double local[3][3]) {
    const Point2 bx = finite(b(x));
    for (int a = 0; a < 3; ++a)
      for (int j = 0; j < 3; ++j) local[a][j] += w * dot(bx, g[j]) * l[a];
  });
}

SpMat assemble_supg_mass(const Mesh& mesh, const QuadratureRule& quad, const VectorField& beta,
                         const std::vector<double>& delta) {
  check_delta(mesh, delta);
  return assemble_with(
      mesh, quad,
      [&](std::size_t k, Point2 x, const std::array<double, 3>& l, const std::array<Point2, 3>& g, double w,
          double local[3][3]) {
        const Point2 bx = finite(beta(x));
        for (int a = 0; a < 3; ++a)
          for (int j = 0; j < 3; ++j) local[a][j] += w * delta[k] * l[j] * dot(bx, g[a]);
      },
      &delta);
}

SpMat assemble_supg_conv(const Mesh& mesh, const QuadratureRule& quad, const VectorField& b,
                         const VectorField& beta, const std::vector<double>& delta) {
  check_delta(mesh, delta);
  return assemble_with(
      mesh, quad,
      [&](std::size_t k, Point2 x, const std::array<double, 3>&, const std::array<Point2, 3>& g, double w,
          double local[3][3]) {
        const Point2 bx = finite(b(x));
        const Point2 sx = finite(beta(x));
        for (int a = 0; a < 3; ++a)
          for (int j = 0; j < 3; ++j) local[a][j] += w * delta[k] * dot(bx, g[j]) * dot(sx, g[a]);
      },
      &delta);
}

SpMat assemble_supg_reaction(const Mesh& mesh, const QuadratureRule& quad, const ScalarField& c,
                             const VectorField& beta, const std::vector<double>& delta) {
  check_delta(mesh, delta);
  return assemble_with(
      mesh, quad,
      [&](std::size_t k, Point2 x, const std::array<double, 3>& l, const std::array<Point2, 3>& g, double w,
          double local[3][3]) {
        const double cx = finite(c(x));
        const Point2 sx = finite(beta(x));
        for (int a = 0; a < 3; ++a)
          for (int j = 0; j < 3; ++j) local[a][j] += w * delta[k] * cx * l[j] * dot(sx, g[a]);
      },
      &delta);
}

Vec assemble_load(const Mesh& mesh, const QuadratureRule& quad, const ScalarField& f, const VectorField& beta,
                  const std::vector<double>& delta) {
  check_delta(mesh, delta);
  Vec out = Vec::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    const double scale = 2.0 * mesh.area(k);
    const auto g = mesh.gradients(k);
    const auto& t = mesh.triangles[k];
    for (std::size_t q = 0; q < quad.size(); ++q) {
      const Point2 x = mesh.map_point(k, quad.points[q]);
      const double fx = finite(f(x));
      const double w = quad.weights[q] * scale;
      const Point2 sx = delta[k] != 0.0 ? finite(beta(x)) : Point2{};
      for (int a = 0; a < 3; ++a)
        out[t[a]] += w * fx * (quad.points[q][a] + delta[k] * dot(sx, g[a]));
    }
  }
  return out;
}

FemBlocks assemble_blocks(const Mesh& mesh, const VectorField& b, const ScalarField& c,
                          const std::vector<double>& delta, const QuadratureRule& quad) {
  check_delta(mesh, delta);
  FemBlocks blocks;
  blocks.mass = assemble_mass(mesh, quad);
  blocks.stiffness = assemble_stiffness(mesh);
  blocks.convection = assemble_convection(mesh, quad, b);
  blocks.supg_mass = assemble_supg_mass(mesh, quad, b, delta);
  blocks.supg_conv = assemble_supg_conv(mesh, quad, b, b, delta);
  blocks.reaction = assemble_mass(mesh, quad, c);
  blocks.supg_reaction = assemble_supg_reaction(mesh, quad, c, b, delta);
  blocks.delta = delta;
  return blocks;
}

DirichletData make_dirichlet(const Mesh& mesh, const std::map<std::string, double>& boundary_values) {
  for (const auto& [tag, value] : boundary_values) {
    if (!mesh.has_tag(tag)) throw ConfigError("unknown boundary tag '" + tag + "'");
    if (!std::isfinite(value)) throw ConfigError("non-finite boundary value for tag '" + tag + "'");
  }
  std::vector<double> by_tag(mesh.tag_names.size(), 0.0);
  for (std::size_t i = 0; i < mesh.tag_names.size(); ++i) {
    auto it = boundary_values.find(mesh.tag_names[i]);
    if (it != boundary_values.end()) by_tag[i] = it->second;
  }
  DirichletData bc;
  bc.nodes = mesh.boundary_vertices();
  bc.values.resize(static_cast<Eigen::Index>(bc.nodes.size()));
  for (std::size_t i = 0; i < bc.nodes.size(); ++i) bc.values[i] = by_tag[mesh.boundary_tag[bc.nodes[i]]];
  return bc;
}

ConstrainedSystem::ConstrainedSystem(const SpMat& matrix, const DirichletData& bc) : bc_(bc) {
  const Eigen::Index n = matrix.rows();
  is_constrained_.assign(static_cast<std::size_t>(n), 0);
  std::vector<Eigen::Index> column_slot(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < bc.nodes.size(); ++i) {
    is_constrained_[bc.nodes[i]] = 1;
    column_slot[bc.nodes[i]] = static_cast<Eigen::Index>(i);
  }
  Triplets keep, cols;
  for (Eigen::Index j = 0; j < matrix.outerSize(); ++j) {
    for (SpMat::InnerIterator it(matrix, j); it; ++it) {
      const auto r = it.row(), c = it.col();
      if (is_constrained_[r]) continue;
      if (is_constrained_[c])
        cols.emplace_back(r, column_slot[c], it.value());
      else
        keep.emplace_back(r, c, it.value());
    }
  }
  for (int node : bc.nodes) keep.emplace_back(node, node, 1.0);
  constrained_.resize(n, n);
  constrained_.setFromTriplets(keep.begin(), keep.end());
  constrained_.makeCompressed();
  boundary_columns_.resize(n, static_cast<Eigen::Index>(bc.nodes.size()));
  boundary_columns_.setFromTriplets(cols.begin(), cols.end());
}

Vec ConstrainedSystem::lift(const Vec& rhs, const Vec& boundary_values) const {
  Vec out = rhs - boundary_columns_ * boundary_values;
  for (std::size_t i = 0; i < bc_.nodes.size(); ++i) out[bc_.nodes[i]] = boundary_values[i];
  return out;
}

Mat ConstrainedSystem::lift(const Mat& rhs, const Vec& boundary_values) const {
  Mat out = rhs;
  const Vec shift = boundary_columns_ * boundary_values;
  out.colwise() -= shift;
  for (std::size_t i = 0; i < bc_.nodes.size(); ++i) out.row(bc_.nodes[i]).setConstant(boundary_values[i]);
  return out;
}

void apply_dirichlet(SpMat& matrix, Vec& rhs, const DirichletData& bc) {
  ConstrainedSystem sys(matrix, bc);
  rhs = sys.lift(rhs, bc.values);
  matrix = sys.matrix();
}

}  // namespace pgdlr
