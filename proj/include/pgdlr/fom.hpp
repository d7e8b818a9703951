#pragma once

#include "pgdlr/integrator.hpp"

namespace pgdlr {

/// One nodal column per collocation sample.
struct FomState {
  Mat fields;  // N_h x N_C
  double t = 0.0;
};

/// One step of the same time discretization the DLR integrator uses, for
/// every sample independently.
FomState fom_step(const FomState& state, const Operators& ops);

struct FomRun {
  FomState state;
  std::vector<double> norms;  // ||u^n|| for n = 0..N
};

using FomCallback = std::function<void(const FomState& state, std::size_t step)>;

FomRun fom_run(const FomState& initial, const Operators& ops, double T, const FomCallback& callback = {});

/// Weighted L2(D) x L2 norm of a per-sample field matrix.
double fom_norm(const Mat& fields, const SpMat& mass, const SampleSpace& space);

}  // namespace pgdlr
