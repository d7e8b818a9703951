#include "pgdlr/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pgdlr {

Point2 CoefficientModel::b(Point2 x, SampleView w) const {
  Point2 out{};
  for (const auto& term : advection) out = out + term.weight(w) * term.field(x);
  return out;
}

double CoefficientModel::div_b(Point2 x, SampleView w) const {
  double out = 0.0;
  for (const auto& term : advection) out += term.weight(w) * term.divergence(x);
  return out;
}

double CoefficientModel::c(Point2 x, SampleView w) const {
  double out = 0.0;
  for (const auto& term : reaction) out += term.weight(w) * term.field(x);
  return out;
}

double CoefficientModel::f(double t, Point2 x, SampleView w) const {
  double out = 0.0;
  for (const auto& term : forcing) out += term.weight(t, w) * term.field(x);
  return out;
}

CoefficientModel make_constant_model(double eps, Point2 b, double c, double f) {
  CoefficientModel model;
  model.name = "constant_adr";
  model.eps = [eps](SampleView) { return eps; };
  if (b.x != 0.0 || b.y != 0.0)
    model.advection.push_back({[](SampleView) { return 1.0; }, [b](Point2) { return b; }, [](Point2) { return 0.0; }});
  if (c != 0.0) model.reaction.push_back({[](SampleView) { return 1.0; }, [c](Point2) { return c; }});
  if (f != 0.0) model.forcing.push_back({[](double, SampleView) { return 1.0; }, [f](Point2) { return f; }});
  model.boundary_values = {{"boundary", 0.0}};
  return model;
}

namespace {

// Weighted mean that is exact for a constant column.
double column_mean(const Vec& values, const Vec& weights) {
  if (values.size() > 0 && values.maxCoeff() == values.minCoeff()) return values[0];
  return weights.dot(values);
}

}  // namespace

Mat SampledCoefficients::advection_fluct() const {
  Mat out = advection;
  out.rowwise() -= advection_mean.transpose();
  return out;
}

Mat SampledCoefficients::reaction_fluct() const {
  Mat out = reaction;
  out.rowwise() -= reaction_mean.transpose();
  return out;
}

bool SampledCoefficients::deterministic(double tol) const {
  if (eps_fluct().cwiseAbs().maxCoeff() > tol) return false;
  if (advection.cols() > 0 && advection_fluct().cwiseAbs().maxCoeff() > tol) return false;
  if (reaction.cols() > 0 && reaction_fluct().cwiseAbs().maxCoeff() > tol) return false;
  return true;
}

VectorField SampledCoefficients::mean_field(const CoefficientModel& model, const Vec& advection_mean) {
  std::vector<std::pair<double, VectorField>> terms;
  for (std::size_t t = 0; t < model.advection.size(); ++t)
    if (advection_mean[static_cast<Eigen::Index>(t)] != 0.0)
      terms.emplace_back(advection_mean[static_cast<Eigen::Index>(t)], model.advection[t].field);
  return [terms](Point2 x) {
    Point2 out{};
    for (const auto& [w, field] : terms) out = out + w * field(x);
    return out;
  };
}

SampledCoefficients sample_coefficients(const CoefficientModel& model, const SampleSpace& space) {
  if (!model.eps) throw ConfigError("coefficient model '" + model.name + "' has no diffusion coefficient");
  const auto n = static_cast<Eigen::Index>(space.count());
  const auto na = static_cast<Eigen::Index>(model.advection.size());
  const auto nr = static_cast<Eigen::Index>(model.reaction.size());
  SampledCoefficients out;
  out.eps.resize(n);
  out.advection.resize(n, na);
  out.reaction.resize(n, nr);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto w = space.sample(static_cast<std::size_t>(i));
    out.eps[i] = model.eps(w);
    for (Eigen::Index t = 0; t < na; ++t) out.advection(i, t) = model.advection[t].weight(w);
    for (Eigen::Index t = 0; t < nr; ++t) out.reaction(i, t) = model.reaction[t].weight(w);
  }
  if (!out.eps.allFinite() || !out.advection.allFinite() || !out.reaction.allFinite())
    throw NumericalError("non-finite coefficient evaluation over the sample space");
  if (!(out.eps.minCoeff() > 0.0)) throw ConfigError("diffusion coefficient must be strictly positive");
  const Vec& m = space.weights();
  out.eps_mean = column_mean(out.eps, m);
  out.advection_mean.resize(na);
  out.reaction_mean.resize(nr);
  for (Eigen::Index t = 0; t < na; ++t) out.advection_mean[t] = column_mean(out.advection.col(t), m);
  for (Eigen::Index t = 0; t < nr; ++t) out.reaction_mean[t] = column_mean(out.reaction.col(t), m);
  out.eps_hat = out.eps.minCoeff();
  out.C_E = out.eps.maxCoeff() / out.eps_hat;
  out.eps_star_sup = out.eps_fluct().cwiseAbs().maxCoeff();
  return out;
}

ReactionAnalysis analyze_reaction(const CoefficientModel& model, const Mesh& mesh, const SampleSpace& space,
                                  const QuadratureRule& quad) {
  const SampledCoefficients coeffs = sample_coefficients(model, space);
  const auto n = static_cast<Eigen::Index>(space.count());
  const auto na = static_cast<Eigen::Index>(model.advection.size());
  const auto nr = static_cast<Eigen::Index>(model.reaction.size());

  ReactionAnalysis out;
  out.c_sup_K.assign(mesh.num_triangles(), 0.0);
  out.eps_hat = coeffs.eps_hat;
  out.C_E = coeffs.C_E;
  out.eps_star_sup = coeffs.eps_star_sup;
  double min_mu_tilde = std::numeric_limits<double>::infinity();
  double max_mu_tilde = -std::numeric_limits<double>::infinity();

  Vec cfield(nr), divfield(na);
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    for (std::size_t q = 0; q < quad.size(); ++q) {
      const Point2 x = mesh.map_point(k, quad.points[q]);
      for (Eigen::Index t = 0; t < nr; ++t) cfield[t] = model.reaction[t].field(x);
      for (Eigen::Index t = 0; t < na; ++t) divfield[t] = model.advection[t].divergence(x);
      if (!cfield.allFinite() || !divfield.allFinite())
        throw NumericalError("non-finite coefficient evaluation in analyze_reaction");
      for (Eigen::Index i = 0; i < n; ++i) {
        const double c = nr > 0 ? coeffs.reaction.row(i).dot(cfield) : 0.0;
        const double div = na > 0 ? coeffs.advection.row(i).dot(divfield) : 0.0;
        const double mt = c - 0.5 * std::abs(c) - 0.5 * div;
        min_mu_tilde = std::min(min_mu_tilde, mt);
        max_mu_tilde = std::max(max_mu_tilde, mt);
        out.c_sup_K[k] = std::max(out.c_sup_K[k], std::abs(c));
      }
    }
  }
  out.scanned_points = mesh.num_triangles() * quad.size();
  out.scanned_samples = space.count();
  out.mu_tilde0 = min_mu_tilde;
  out.nu = -std::min(min_mu_tilde, 0.0);
  out.mu0 = min_mu_tilde + out.nu;
  out.mu_identically_zero = (max_mu_tilde + out.nu == 0.0);

  const CoefficientModel m = model;
  out.mu_tilde = [m](Point2 x, SampleView w) {
    const double c = m.c(x, w);
    return c - 0.5 * std::abs(c) - 0.5 * m.div_b(x, w);
  };
  const double nu = out.nu;
  out.mu = [m, nu](Point2 x, SampleView w) {
    const double c = m.c(x, w);
    return std::max(0.0, c - 0.5 * std::abs(c) - 0.5 * m.div_b(x, w) + nu);
  };
  return out;
}

double estimate_inverse_constant(const Mesh& mesh, const FemBlocks& blocks) {
  return estimate_inverse_constant(mesh, blocks.stiffness, blocks.mass);
}

double estimate_inverse_constant(const Mesh& mesh, const SpMat& stiffness, const SpMat& mass) {
  const std::vector<int> interior = mesh.interior_vertices();
  const auto ni = static_cast<Eigen::Index>(interior.size());
  if (ni == 0) return 0.0;
  std::vector<Eigen::Index> slot(mesh.num_vertices(), -1);
  for (Eigen::Index i = 0; i < ni; ++i) slot[interior[i]] = i;
  auto restrict = [&](const SpMat& a) {
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index j = 0; j < a.outerSize(); ++j)
      for (SpMat::InnerIterator it(a, j); it; ++it)
        if (slot[it.row()] >= 0 && slot[it.col()] >= 0) trip.emplace_back(slot[it.row()], slot[it.col()], it.value());
    SpMat out(ni, ni);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
  };
  const SpMat k = restrict(stiffness);
  const SpMat m = restrict(mass);

  double lambda_max = 0.0;
  if (ni <= 2500) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Mat(k), Mat(m), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("estimate_inverse_constant: eigen-solver failed");
    lambda_max = es.eigenvalues().maxCoeff();
  } else {
    // power iteration on M^{-1} K
    Eigen::SimplicialLLT<SpMat> chol(m);
    if (chol.info() != Eigen::Success) throw NumericalError("estimate_inverse_constant: mass not SPD");
    Vec x = Vec::Ones(ni);
    for (Eigen::Index i = 0; i < ni; i += 2) x[i] = -1.0;  // overlap with the oscillatory end
    double previous = 0.0;
    constexpr int max_iterations = 20000;
    bool converged = false;
    for (int it = 0; it < max_iterations; ++it) {
      Vec y = chol.solve(k * x);
      const double norm = std::sqrt(y.dot(m * y));
      x = y / norm;
      lambda_max = x.dot(k * x);
      if (it > 10 && std::abs(lambda_max - previous) <= 1e-12 * lambda_max) {
        converged = true;
        break;
      }
      previous = lambda_max;
    }
    if (!converged) throw NumericalError("estimate_inverse_constant: power iteration did not converge");
  }
  return mesh.h * std::sqrt(std::max(lambda_max, 0.0));
}

std::vector<double> delta_coercivity(const Mesh& mesh, const ReactionAnalysis& analysis,
                                     const StabilizationParams& params) {
  std::vector<double> out(mesh.num_triangles());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double c_sup = analysis.c_sup_K.at(k);
    const double reaction_bound = c_sup > 0.0 ? 1.0 / (2.0 * c_sup) : kInactiveDelta;
    double diffusion_bound = kInactiveDelta;
    if (!params.drop_diffusion_bound && params.C_I > 0.0 && analysis.eps_hat > 0.0)
      diffusion_bound = mesh.h_K[k] * mesh.h_K[k] /
                        (2.0 * params.d * params.C_I * params.C_I * params.C_E * params.C_E * analysis.eps_hat);
    out[k] = std::min(reaction_bound, diffusion_bound);
  }
  return out;
}

std::vector<double> delta_semi_implicit(const Mesh& mesh, const ReactionAnalysis& analysis,
                                        const StabilizationParams& params, double dt) {
  if (!(dt > 0.0)) throw ConfigError("delta_semi_implicit: dt must be positive");
  std::vector<double> out(mesh.num_triangles());
  const double ce2 = std::max(params.C_E * params.C_E, 1.0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double c_sup = analysis.c_sup_K.at(k);
    const double reaction_bound = c_sup > 0.0 ? 1.0 / (2.0 * c_sup) : kInactiveDelta;
    double diffusion_bound = kInactiveDelta;
    if (params.C_I > 0.0 && analysis.eps_hat > 0.0)
      diffusion_bound =
          mesh.h_K[k] * mesh.h_K[k] / (2.0 * analysis.eps_hat * params.C_I * params.C_I * ce2 * params.d);
    out[k] = 0.125 * std::min({reaction_bound, diffusion_bound, 2.0 * dt});
  }
  return out;
}

std::vector<double> delta_experiment(const Mesh& mesh) {
  std::vector<double> out(mesh.num_triangles());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = mesh.h_K[k] / 4.0;
  return out;
}

std::vector<double> cap_delta(std::vector<double> delta, const std::vector<double>& cap) {
  if (cap.size() != delta.size()) throw ConfigError("cap_delta: size mismatch");
  for (std::size_t k = 0; k < delta.size(); ++k)
    if (!std::isfinite(delta[k])) delta[k] = cap[k];
  return delta;
}

PecletReport local_peclet(const CoefficientModel& model, const Mesh& mesh, const SampleSpace& space,
                          const QuadratureRule& quad) {
  const SampledCoefficients coeffs = sample_coefficients(model, space);
  const auto n = static_cast<Eigen::Index>(space.count());
  const auto na = static_cast<Eigen::Index>(model.advection.size());
  PecletReport out;
  out.peclet = Mat::Zero(static_cast<Eigen::Index>(mesh.num_triangles()), n);
  Mat bx(na, 2);
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    for (std::size_t q = 0; q < quad.size(); ++q) {
      const Point2 x = mesh.map_point(k, quad.points[q]);
      for (Eigen::Index t = 0; t < na; ++t) {
        const Point2 v = model.advection[t].field(x);
        bx(t, 0) = v.x;
        bx(t, 1) = v.y;
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        double b0 = 0.0, b1 = 0.0;
        for (Eigen::Index t = 0; t < na; ++t) {
          b0 += coeffs.advection(i, t) * bx(t, 0);
          b1 += coeffs.advection(i, t) * bx(t, 1);
        }
        const double pe = std::hypot(b0, b1) * mesh.h_K[k] / (2.0 * coeffs.eps[i]);
        auto& slot = out.peclet(static_cast<Eigen::Index>(k), i);
        slot = std::max(slot, pe);
      }
    }
  }
  out.per_sample.assign(space.count(), 0);
  for (Eigen::Index i = 0; i < n; ++i) out.per_sample[i] = out.peclet.col(i).maxCoeff() > 1.0;
  out.max_peclet = out.peclet.size() > 0 ? out.peclet.maxCoeff() : 0.0;
  out.advection_dominated = out.max_peclet > 1.0;
  return out;
}

StochasticityReport check_moderate_stochasticity(const CoefficientModel& model, const ReactionAnalysis& analysis,
                                                 const SampleSpace& space, const Mesh& mesh,
                                                 const QuadratureRule& quad) {
  const SampledCoefficients coeffs = sample_coefficients(model, space);
  StochasticityReport out;
  const Vec eps_fluct = coeffs.eps_fluct();
  if (eps_fluct.cwiseAbs().maxCoeff() > 0.0) {
    out.eps_margin = (coeffs.eps_hat / 32.0 - eps_fluct.array().abs()).minCoeff();
    out.eps_condition = out.eps_margin >= 0.0;
  }
  const Mat reaction_fluct = coeffs.reaction_fluct();
  if (reaction_fluct.size() > 0 && reaction_fluct.cwiseAbs().maxCoeff() > 0.0) {
    const auto nr = static_cast<Eigen::Index>(model.reaction.size());
    Vec cfield(nr);
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
      for (std::size_t q = 0; q < quad.size(); ++q) {
        const Point2 x = mesh.map_point(k, quad.points[q]);
        for (Eigen::Index t = 0; t < nr; ++t) cfield[t] = model.reaction[t].field(x);
        for (std::size_t i = 0; i < space.count(); ++i) {
          const double c_star = reaction_fluct.row(static_cast<Eigen::Index>(i)).dot(cfield);
          const double mu = analysis.mu(x, space.sample(i));
          margin = std::min(margin, mu / 32.0 - std::abs(c_star));
        }
      }
    }
    out.c_margin = margin;
    out.c_condition = margin >= 0.0;
  }
  return out;
}

}  // namespace pgdlr
