#pragma once

#include "pgdlr/mesh.hpp"
#include "pgdlr/sample_space.hpp"

#include <iosfwd>

namespace pgdlr {

/// u = U0 + sum_i U_i Y_i with E[Y_i Y_j] = delta_ij and E[Y_i] = 0.
/// U0 carries the Dirichlet data; U_1..U_R vanish on the boundary.
struct DlrState {
  Vec U0;  // N_h
  Mat U;   // N_h x R
  Mat Y;   // N_C x R
  double t = 0.0;

  std::size_t rank() const { return static_cast<std::size_t>(U.cols()); }
  std::size_t num_nodes() const { return static_cast<std::size_t>(U0.size()); }
  std::size_t num_samples() const { return static_cast<std::size_t>(Y.rows()); }
};

struct StateDefects {
  double gram = 0.0;          // max |E[Y^T Y] - I|
  double mean = 0.0;          // max |E[Y]|
  double mode_condition = 1;  // sigma_min / sigma_max of the mass Gram of U (1 for R = 0)
  double boundary = 0.0;      // max |U_i| on boundary nodes
};

StateDefects state_defects(const DlrState& state, const SampleSpace& space, const SpMat& mass,
                           const std::vector<int>& boundary_nodes);
/// Throws NumericalError when any invariant is off by more than `tol`.
void validate(const DlrState& state, const SampleSpace& space, const SpMat& mass,
              const std::vector<int>& boundary_nodes, double tol = 1e-10);

/// Centres the stochastic modes, absorbs their means into U0, orthonormalises
/// them and absorbs the transfer matrix into U. The represented field is
/// unchanged.
DlrState init_from_modes(const Vec& U0, const Mat& U, const Mat& Y, const SampleSpace& space, double t = 0.0);

struct SnapshotInit {
  DlrState state;
  Vec singular_values;  // of the centred snapshot, all of them
  double truncation_error = 0.0;  // absolute norm of the discarded tail
};

/// Generalised SVD of the centred snapshot (N_h x N_C) under the mass inner
/// product in space and the weighted one in the samples, truncated at `rank`
/// modes. Modes with zero singular value are never kept.
SnapshotInit init_from_snapshot(const Mat& snapshot, const SpMat& mass, const SampleSpace& space,
                                std::size_t rank);
/// Same, truncated at the smallest rank with relative norm tail <= tol.
SnapshotInit init_from_snapshot_tol(const Mat& snapshot, const SpMat& mass, const SampleSpace& space,
                                    double tol);

Vec evaluate_realization(const DlrState& state, std::size_t sample);
/// N_h x N_C matrix of every realization.
Mat realize_all(const DlrState& state);

/// W_ij = <U_i, U_j> + sum_K delta_K <U_i, b . grad U_j>_K.
struct SkewedGram {
  Mat W;
  double condition = 1.0;
  double smallest_singular_value = 0.0;
};
SkewedGram skewed_gram(const Mat& U_tilde, const FemBlocks& blocks);

/// Binary dump of (t, R, U0, U, Y) behind a header with n_per_side and N_C.
void write_checkpoint(std::ostream& out, const DlrState& state, int n_per_side);
struct Checkpoint {
  DlrState state;
  int n_per_side = 0;
};
Checkpoint read_checkpoint(std::istream& in);

}  // namespace pgdlr
