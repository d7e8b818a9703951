#pragma once

#include "pgdlr/coefficients.hpp"
#include "pgdlr/dlr_state.hpp"

#include <Eigen/SparseLU>

#include <functional>
#include <memory>
#include <string>

namespace pgdlr {

enum class Scheme { semi_implicit, implicit_euler_deterministic, explicit_euler };
enum class Stabilization { none, supg };

std::string to_string(Scheme s);
std::string to_string(Stabilization s);
Scheme parse_scheme(const std::string& name);
Stabilization parse_stabilization(const std::string& name);

struct SchemeConfig {
  Scheme scheme = Scheme::semi_implicit;
  Stabilization stabilization = Stabilization::supg;
  double dt = 0.0;
  std::vector<double> delta;  // per triangle; ignored for Stabilization::none
  /// Largest accepted condition number of the R x R stochastic-mode system.
  double max_condition = 1e12;
  /// run() aborts once ||u^n|| exceeds this multiple of ||u^0||.
  double blowup_factor = 1e8;
};

/// A sparse operator applied with a per-sample scalar weight.
struct WeightedOperator {
  std::string label;
  SpMat matrix;
  Vec theta;  // N_C
};

/// Discrete operators of one (model, mesh, sample space, scheme) combination.
///
/// Every matrix uses the test-row convention with the SUPG skew
/// v + sum_K delta_K chi_K bbar . grad v already applied. The one-step map is
///   (M_H/dt + A2) u^{n+1}(w) = M_H u^n(w)/dt + F(t*, w) - A1(w) u^n(w),
/// where A1(w) = sum_k theta_k(w) A1_k.
class Operators {
 public:
  Operators(const Mesh& mesh, const CoefficientModel& model, const SampleSpace& space, const SchemeConfig& cfg,
            const QuadratureRule& quad = QuadratureRule::degree4());

  const Mesh& mesh() const { return *mesh_; }
  const SampleSpace& space() const { return *space_; }
  const SchemeConfig& config() const { return cfg_; }
  const SampledCoefficients& coefficients() const { return coeffs_; }
  /// Blocks of the mean problem (bbar as transport and streamline field, cbar).
  const FemBlocks& mean_blocks() const { return mean_blocks_; }
  const VectorField& mean_advection() const { return b_mean_; }

  const SpMat& skewed_mass() const { return m_h_; }
  const SpMat& implicit_operator() const { return a2_; }
  const std::vector<WeightedOperator>& explicit_operators() const { return a1_; }
  /// M_H/dt + A2 before boundary conditions.
  const SpMat& system_matrix() const { return system_; }

  /// Forcing vectors F_s (skewed loads of the separable forcing fields).
  const std::vector<Vec>& forcing_vectors() const { return forcing_; }
  const std::vector<ForcingTerm>& forcing_terms() const { return forcing_terms_; }
  /// N_C x n_forcing matrix of psi_s(t, w).
  Mat forcing_weights(double t) const;
  /// N_h x N_C forcing of every sample at time t.
  Mat forcing(double t) const;
  bool has_forcing() const { return !forcing_.empty(); }
  /// Time level at which the forcing enters the step starting at t_n.
  double forcing_time(double t_n) const;

  /// Full a_SUPG(., .) matrix of sample i (skew with bbar).
  SpMat full_operator(std::size_t sample) const;
  /// out.col(i) = A(w_i) fields.col(i) with the full a_SUPG of sample i.
  Mat apply_full(const Mat& fields) const;
  /// A1(w_i) u for every column: out.col(i) = A1(w_i) fields.col(i).
  Mat apply_explicit(const Mat& fields) const;

  const DirichletData& dirichlet() const { return bc_; }
  /// Solves (M_H/dt + A2) x = rhs for each column with the boundary rows set
  /// to `boundary` (one column of values per rhs column, or a single column
  /// broadcast to all).
  Mat solve(const Mat& rhs, const Mat& boundary) const;

 private:
  const Mesh* mesh_;
  const SampleSpace* space_;
  SchemeConfig cfg_;
  SampledCoefficients coeffs_;
  VectorField b_mean_;
  FemBlocks mean_blocks_;
  SpMat m_h_, a2_, system_;
  std::vector<WeightedOperator> a1_;
  // kept for full_operator(): unsplit per-term matrices
  SpMat stiffness_;
  std::vector<SpMat> advection_terms_, reaction_terms_;
  std::vector<Vec> forcing_;
  std::vector<ForcingTerm> forcing_terms_;
  DirichletData bc_;
  ConstrainedSystem constrained_;
  std::shared_ptr<Eigen::SparseLU<SpMat>> lu_;
};

/// Deterministic modes U~_0..U~_R (N_h x (R+1)); column 0 carries the
/// Dirichlet data, the other columns are homogeneous.
Mat step_deterministic_modes(const DlrState& state, const Operators& ops);

struct StochasticUpdate {
  Mat Y_tilde;      // N_C x R
  Mat W_hat;        // R x R, W_hat_ij with i the trial and j the test mode
  double condition = 1.0;
};
StochasticUpdate step_stochastic_modes(const DlrState& state, const Mat& U_tilde, const Operators& ops);

struct StepInfo {
  std::size_t index = 0;
  double t = 0.0;
  double condition = 1.0;        // of W_hat
  double lemma_defect = 0.0;     // max |E[(Y~ - Y^n)^T Y^n]|
  double lemma_identity = 0.0;   // max |E[Y~^T Y^n] - I|
  double reorth_defect = 0.0;    // bound on the field change of re-orthonormalization
};

struct StepResult {
  DlrState state;
  StepInfo info;
  Mat U_tilde;  // kept for diagnostics
  Mat Y_tilde;
};

StepResult step(const DlrState& state, const Operators& ops);

/// Step count for [t0, T] at step dt; throws when dt does not divide the
/// interval up to rounding.
std::size_t step_count(double t0, double T, double dt);

using StepCallback = std::function<void(const StepResult&, const DlrState& previous)>;

/// Advances to T, calling `callback` after every step. Non-finite norms or
/// growth beyond blowup_factor raise NumericalError naming the step.
DlrState run(const DlrState& initial, const Operators& ops, double T, const StepCallback& callback = {});

/// ||u||^2 = ||U0||_M^2 + sum_i ||U_i||_M^2 (orthonormal Y).
double dlr_norm_squared(const DlrState& state, const SpMat& mass);

}  // namespace pgdlr
