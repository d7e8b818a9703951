#pragma once

#include "pgdlr/mesh.hpp"
#include "pgdlr/sample_space.hpp"

#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pgdlr {

using SampleView = std::span<const double>;
using RandomScalar = std::function<double(SampleView)>;

/// One separable contribution weight(omega) * field(x) to the advection.
struct AdvectionTerm {
  RandomScalar weight;
  VectorField field;
  ScalarField divergence;  // analytic div of `field`
};

/// One separable contribution weight(omega) * field(x) to the reaction.
struct ReactionTerm {
  RandomScalar weight;
  ScalarField field;
};

/// One separable contribution weight(t, omega) * field(x) to the forcing.
struct ForcingTerm {
  std::function<double(double, SampleView)> weight;
  ScalarField field;
};

/// Random coefficients of  u_t - eps(w) lap u + b(x,w).grad u + c(x,w) u = f,
/// each field given as a finite sum of separable terms. A term whose weight
/// is constant over the sample space is deterministic.
struct CoefficientModel {
  std::string name;
  RandomScalar eps;
  std::vector<AdvectionTerm> advection;
  std::vector<ReactionTerm> reaction;
  std::vector<ForcingTerm> forcing;
  std::map<std::string, double> boundary_values;

  Point2 b(Point2 x, SampleView w) const;
  double div_b(Point2 x, SampleView w) const;
  double c(Point2 x, SampleView w) const;
  double f(double t, Point2 x, SampleView w) const;
  bool has_forcing() const { return !forcing.empty(); }
};

/// Deterministic constant_adr helper: eps, constant b, constant c and f.
CoefficientModel make_constant_model(double eps, Point2 b, double c, double f);

/// All per-sample weights of a model evaluated over a sample space, with
/// their means and fluctuations.
struct SampledCoefficients {
  Vec eps;           // N_C
  Mat advection;     // N_C x n_adv
  Mat reaction;      // N_C x n_reac
  double eps_mean = 0.0;
  Vec advection_mean;
  Vec reaction_mean;
  double eps_hat = 0.0;  // min eps
  double C_E = 1.0;      // max eps / min eps
  double eps_star_sup = 0.0;

  Vec eps_fluct() const { return eps.array() - eps_mean; }
  Mat advection_fluct() const;
  Mat reaction_fluct() const;
  bool deterministic(double tol = 0.0) const;
  /// Mean advection field E[b](x) (the streamline direction of the skew).
  static VectorField mean_field(const CoefficientModel& model, const Vec& advection_mean);
};

/// Evaluates and validates eps_hat <= eps <= C_E eps_hat, eps_hat > 0.
SampledCoefficients sample_coefficients(const CoefficientModel& model, const SampleSpace& space);

/// Reaction-advection analysis scanned over quadrature points x samples.
struct ReactionAnalysis {
  std::function<double(Point2, SampleView)> mu_tilde;
  std::function<double(Point2, SampleView)> mu;
  double mu_tilde0 = 0.0;
  double nu = 0.0;
  double mu0 = 0.0;
  std::vector<double> c_sup_K;  // |||c|||_K per triangle
  double eps_hat = 0.0;
  double C_E = 1.0;
  double eps_star_sup = 0.0;
  bool mu_identically_zero = false;
  std::size_t scanned_points = 0;
  std::size_t scanned_samples = 0;
};

ReactionAnalysis analyze_reaction(const CoefficientModel& model, const Mesh& mesh, const SampleSpace& space,
                                  const QuadratureRule& quad = QuadratureRule::degree4());

/// C_I = h sqrt(lambda_max) with lambda_max the largest generalised
/// eigenvalue of (stiffness, mass) on interior nodes.
double estimate_inverse_constant(const Mesh& mesh, const FemBlocks& blocks);
double estimate_inverse_constant(const Mesh& mesh, const SpMat& stiffness, const SpMat& mass);

struct StabilizationParams {
  std::vector<double> delta_K;
  std::string policy;
  double C_I = 1.0;
  double C_E = 1.0;
  int d = 2;
  /// Drop the diffusion bound of the coercivity constraint (allowed for P1).
  bool drop_diffusion_bound = false;
};

constexpr double kInactiveDelta = std::numeric_limits<double>::infinity();

/// min{ 1/(2|||c|||_K), h_K^2 / (2 d C_I^2 C_E^2 eps_hat) } per element;
/// returns +inf where both constraints are inactive.
std::vector<double> delta_coercivity(const Mesh& mesh, const ReactionAnalysis& analysis,
                                     const StabilizationParams& params);
/// (1/8) min{ 1/(2|||c|||_K), h_K^2 / (2 eps_hat C_I^2 max(C_E^2,1) d), 2 dt }.
std::vector<double> delta_semi_implicit(const Mesh& mesh, const ReactionAnalysis& analysis,
                                        const StabilizationParams& params, double dt);
/// h_K / 4
std::vector<double> delta_experiment(const Mesh& mesh);
/// Replaces +inf entries by the matching entry of `cap`.
std::vector<double> cap_delta(std::vector<double> delta, const std::vector<double>& cap);

struct PecletReport {
  Mat peclet;                    // N_triangles x N_C, max over quadrature points
  std::vector<char> per_sample;  // max_K Pe_K(w) > 1
  bool advection_dominated = false;
  double max_peclet = 0.0;
};
PecletReport local_peclet(const CoefficientModel& model, const Mesh& mesh, const SampleSpace& space,
                          const QuadratureRule& quad = QuadratureRule::degree4());

/// |eps*(w)| <= eps_hat/32 and |c*(x,w)| <= mu(x,w)/32.
struct StochasticityReport {
  bool eps_condition = true;
  bool c_condition = true;
  double eps_margin = std::numeric_limits<double>::infinity();  // min eps_hat/32 - |eps*|
  double c_margin = std::numeric_limits<double>::infinity();    // min mu/32 - |c*|
  bool holds() const { return eps_condition && c_condition; }
};
StochasticityReport check_moderate_stochasticity(const CoefficientModel& model, const ReactionAnalysis& analysis,
                                                 const SampleSpace& space, const Mesh& mesh,
                                                 const QuadratureRule& quad = QuadratureRule::degree4());

}  // namespace pgdlr
