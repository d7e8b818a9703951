#include "pgdlr/fom.hpp"

#include <cmath>
#include <sstream>

namespace pgdlr {

FomState fom_step(const FomState& state, const Operators& ops) {
  if (state.fields.rows() != static_cast<Eigen::Index>(ops.mesh().num_vertices()) ||
      state.fields.cols() != static_cast<Eigen::Index>(ops.space().count()))
    throw ConfigError("FOM state does not match the discretization");
  const double dt = ops.config().dt;
  Mat rhs = ops.skewed_mass() * state.fields / dt - ops.apply_explicit(state.fields);
  if (ops.has_forcing()) rhs += ops.forcing(ops.forcing_time(state.t));
  FomState out;
  out.fields = ops.solve(rhs, ops.dirichlet().values);
  out.t = state.t + dt;
  return out;
}

double fom_norm(const Mat& fields, const SpMat& mass, const SampleSpace& space) {
  const Vec per_sample = (fields.array() * (mass * fields).array()).colwise().sum().transpose();
  return std::sqrt(space.weights().dot(per_sample));
}

FomRun fom_run(const FomState& initial, const Operators& ops, double T, const FomCallback& callback) {
  const std::size_t steps = step_count(initial.t, T, ops.config().dt);
  const SpMat& mass = ops.mean_blocks().mass;
  FomRun out;
  out.state = initial;
  out.norms.push_back(fom_norm(initial.fields, mass, ops.space()));
  const double reference = std::max(out.norms.front(), 1.0);
  for (std::size_t n = 0; n < steps; ++n) {
    try {
      out.state = fom_step(out.state, ops);
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(n + 1) + ": " + e.what());
    }
    const double norm = fom_norm(out.state.fields, mass, ops.space());
    if (!std::isfinite(norm) || norm > ops.config().blowup_factor * reference) {
      std::ostringstream msg;
      msg << "numerical blow-up at step " << n + 1 << " (t = " << out.state.t << ", norm " << norm << ")";
      throw NumericalError(msg.str());
    }
    out.norms.push_back(norm);
    if (callback) callback(out.state, n + 1);
  }
  return out;
}

}  // namespace pgdlr
