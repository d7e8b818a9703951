#pragma once

#include "pgdlr/fom.hpp"
#include "pgdlr/integrator.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace pgdlr {

/// Squared norms of random FE fields for one discretization.
///
/// The SUPG norm is eps_hat ||grad u||^2 + sum_K delta_K ||bbar . grad u||_K^2
/// + ||mu^{1/2} u||^2, with expectations over the sample space. DLR states
/// use the orthonormality of Y; per-sample field matrices are summed with
/// the sample weights.
class NormEvaluator {
 public:
  NormEvaluator(const Operators& ops, const ReactionAnalysis& analysis,
                const QuadratureRule& quad = QuadratureRule::degree4());

  double l2_sq(const DlrState& s) const;
  double grad_sq(const DlrState& s) const;
  double streamline_sq(const DlrState& s) const;
  double mu_sq(const DlrState& s) const;
  double supg_sq(const DlrState& s) const;

  double l2_sq(const Mat& fields) const;
  double grad_sq(const Mat& fields) const;
  double streamline_sq(const Mat& fields) const;
  double mu_sq(const Mat& fields) const;
  double supg_sq(const Mat& fields) const;

  /// E[||f(t)||^2_{L2(D)}] from the Gram matrix of the forcing fields.
  double forcing_sq(double t) const;

  double eps_hat() const { return eps_hat_; }
  const Operators& operators() const { return *ops_; }

 private:
  const Operators* ops_;
  double eps_hat_;
  SpMat streamline_;   // sum_K delta_K (bbar . grad phi_j, bbar . grad phi_i)_K
  SpMat point_values_; // quadrature point x node interpolation
  Vec point_weights_;
  Mat mu_table_;       // quadrature point x sample; empty when mu == 0
  Mat forcing_gram_;
};

/// max - min of the nodal values.
double md_metric(const Vec& field);

struct StepReport {
  std::size_t step = 0;
  double t = 0.0;
  double l2 = 0.0;
  double supg = 0.0;
  double grad = 0.0;
  double condition = 1.0;
  double gram_defect = 0.0;
  double mean_defect = 0.0;
  double lemma_defect = 0.0;
  double reorth_defect = 0.0;
  double tangent_residual = std::numeric_limits<double>::quiet_NaN();
  Vec mode_norms;
};

StepReport make_step_report(std::size_t step, const DlrState& state, const StepInfo& info, const NormEvaluator& norms);

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, const StepReport& r);

struct CoercivityReport {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();  // relative
  std::uint64_t worst_seed = 0;
  bool passed() const { return violations == 0; }
};

/// Tests a(u, u) >= 1/2 ||u||_SUPG^2 - nu ||u||^2 on `trials` random fields
/// with homogeneous boundary values, alternating smooth (low sine modes) and
/// rough (nodal noise) fields. Trial k uses the seed `seed + k`.
CoercivityReport check_coercivity(const NormEvaluator& norms, const ReactionAnalysis& analysis, std::size_t trials,
                                  std::uint64_t seed = 1);

/// Largest residual of one semi-implicit/implicit step tested against the
/// tangent space at U~ (Y^n)^T, relative to the largest single term.
/// `U_tilde` holds U~_0..U~_R, `Y_tilde` the unnormalized stochastic modes.
double check_tangent_residual(const DlrState& previous, const Mat& U_tilde, const Mat& Y_tilde, const Operators& ops);

enum class Theorem { im_stab, si_stab };
enum class BoundCase { i, ii, iii };
std::string to_string(Theorem t);
std::string to_string(BoundCase c);

/// Everything a bound needs from a finished run.
struct BoundInputs {
  const Mesh* mesh = nullptr;
  ReactionAnalysis analysis;
  std::vector<double> delta;
  double C_I = 1.0;
  double dt = 0.0;
  double T = 0.0;
  std::vector<double> l2_sq;    // ||u^n||^2, n = 0..N
  std::vector<double> supg_sq;  // ||u^n||_SUPG^2, n = 1..N
  std::vector<double> f_sq;     // ||f(t_{n+1})||^2, n = 0..N-1
  bool forcing_zero = true;
  double grad0_sq = 0.0;        // ||grad u^0||^2
  double mu0_sq = 0.0;          // ||mu^{1/2} u^0||^2
  std::optional<StochasticityReport> stochasticity;
};

struct BoundLedger {
  Theorem theorem = Theorem::im_stab;
  BoundCase bound_case = BoundCase::ii;
  bool applicable = false;
  std::string reason;  // why the bound is not applicable
  double C1 = 0.0, C2 = 0.0, C3 = 1.0;
  double left = 0.0, right = 0.0;
  double margin = 0.0;          // right - left
  double literal_margin = 0.0;  // si_stab (ii) with ||u^0||^2 in place of A_0
  bool pass = false;
  std::string outcome() const { return applicable ? (pass ? "PASS" : "FAIL") : "not applicable"; }
};

/// Case selection from the data: (i) if mu0 > 0, else (ii) if f == 0, else (iii).
BoundCase select_case(const BoundInputs& in);
BoundLedger evaluate_bound(const BoundInputs& in, Theorem theorem, BoundCase bound_case);

void write_ledger_header(std::ostream& out);
void write_ledger_row(std::ostream& out, const BoundLedger& l);

}  // namespace pgdlr
