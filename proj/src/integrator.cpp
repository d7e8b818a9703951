#include "pgdlr/integrator.hpp"

#include <cmath>
#include <sstream>

namespace pgdlr {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::semi_implicit: return "semi_implicit";
    case Scheme::implicit_euler_deterministic: return "implicit_euler_deterministic";
    case Scheme::explicit_euler: return "explicit";
  }
  return "?";
}

std::string to_string(Stabilization s) { return s == Stabilization::supg ? "supg" : "none"; }

Scheme parse_scheme(const std::string& name) {
  if (name == "semi_implicit") return Scheme::semi_implicit;
  if (name == "implicit_euler_deterministic") return Scheme::implicit_euler_deterministic;
  if (name == "explicit") return Scheme::explicit_euler;
  throw ConfigError("unknown scheme '" + name + "'");
}

Stabilization parse_stabilization(const std::string& name) {
  if (name == "supg") return Stabilization::supg;
  if (name == "none") return Stabilization::none;
  throw ConfigError("unknown stabilization '" + name + "'");
}

namespace {

bool any_nonzero(const Vec& v) { return v.size() > 0 && v.cwiseAbs().maxCoeff() > 0.0; }

SpMat combine(const std::vector<SpMat>& terms, const Vec& weights, Eigen::Index n) {
  SpMat out(n, n);
  for (std::size_t t = 0; t < terms.size(); ++t) out += weights[static_cast<Eigen::Index>(t)] * terms[t];
  return out;
}

}  // namespace

Operators::Operators(const Mesh& mesh, const CoefficientModel& model, const SampleSpace& space,
                     const SchemeConfig& cfg, const QuadratureRule& quad)
    : mesh_(&mesh), space_(&space), cfg_(cfg) {
  if (!(cfg_.dt > 0.0) || !std::isfinite(cfg_.dt)) throw ConfigError("time step must be positive");
  const bool supg = cfg_.stabilization == Stabilization::supg;
  if (!supg) cfg_.delta.assign(mesh.num_triangles(), 0.0);
  if (cfg_.delta.size() != mesh.num_triangles()) throw ConfigError("delta has the wrong number of entries");

  coeffs_ = sample_coefficients(model, space);
  if (cfg_.scheme == Scheme::implicit_euler_deterministic && !coeffs_.deterministic(0.0))
    throw ConfigError("implicit_euler_deterministic requires deterministic eps, b and c");

  b_mean_ = SampledCoefficients::mean_field(model, coeffs_.advection_mean);
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());

  const SpMat mass = assemble_mass(mesh, quad);
  SpMat supg_mass(n, n);
  if (supg) supg_mass = assemble_supg_mass(mesh, quad, b_mean_, cfg_.delta);
  stiffness_ = assemble_stiffness(mesh);

  std::vector<SpMat> conv, supg_conv, reac, supg_reac;
  for (const auto& term : model.advection) {
    conv.push_back(assemble_convection(mesh, quad, term.field));
    supg_conv.push_back(supg ? assemble_supg_conv(mesh, quad, term.field, b_mean_, cfg_.delta) : SpMat(n, n));
    advection_terms_.push_back(conv.back() + supg_conv.back());
  }
  for (const auto& term : model.reaction) {
    reac.push_back(assemble_mass(mesh, quad, term.field));
    supg_reac.push_back(supg ? assemble_supg_reaction(mesh, quad, term.field, b_mean_, cfg_.delta) : SpMat(n, n));
    reaction_terms_.push_back(reac.back() + supg_reac.back());
  }

  mean_blocks_.mass = mass;
  mean_blocks_.stiffness = stiffness_;
  mean_blocks_.supg_mass = supg_mass;
  mean_blocks_.convection = combine(conv, coeffs_.advection_mean, n);
  mean_blocks_.supg_conv = combine(supg_conv, coeffs_.advection_mean, n);
  mean_blocks_.reaction = combine(reac, coeffs_.reaction_mean, n);
  mean_blocks_.supg_reaction = combine(supg_reac, coeffs_.reaction_mean, n);
  mean_blocks_.delta = cfg_.delta;

  m_h_ = mass + supg_mass;
  if (cfg_.scheme == Scheme::explicit_euler) {
    a2_ = SpMat(n, n);
    a1_.push_back({"eps", stiffness_, coeffs_.eps});
    for (std::size_t t = 0; t < advection_terms_.size(); ++t)
      a1_.push_back({"b" + std::to_string(t), advection_terms_[t], coeffs_.advection.col(static_cast<Eigen::Index>(t))});
    for (std::size_t t = 0; t < reaction_terms_.size(); ++t)
      a1_.push_back({"c" + std::to_string(t), reaction_terms_[t], coeffs_.reaction.col(static_cast<Eigen::Index>(t))});
  } else {
    a2_ = coeffs_.eps_mean * stiffness_ + combine(advection_terms_, coeffs_.advection_mean, n) +
          combine(reaction_terms_, coeffs_.reaction_mean, n);
    if (cfg_.scheme == Scheme::semi_implicit) {
      const Vec eps_fluct = coeffs_.eps_fluct();
      const Mat adv_fluct = coeffs_.advection_fluct();
      const Mat reac_fluct = coeffs_.reaction_fluct();
      if (any_nonzero(eps_fluct)) a1_.push_back({"eps", stiffness_, eps_fluct});
      for (std::size_t t = 0; t < advection_terms_.size(); ++t) {
        const Vec theta = adv_fluct.col(static_cast<Eigen::Index>(t));
        if (any_nonzero(theta)) a1_.push_back({"b" + std::to_string(t), advection_terms_[t], theta});
      }
      for (std::size_t t = 0; t < reaction_terms_.size(); ++t) {
        const Vec theta = reac_fluct.col(static_cast<Eigen::Index>(t));
        if (any_nonzero(theta)) a1_.push_back({"c" + std::to_string(t), reaction_terms_[t], theta});
      }
    }
  }

  forcing_terms_ = model.forcing;
  for (const auto& term : model.forcing) forcing_.push_back(assemble_load(mesh, quad, term.field, b_mean_, cfg_.delta));

  system_ = m_h_ / cfg_.dt + a2_;
  system_.makeCompressed();
  bc_ = make_dirichlet(mesh, model.boundary_values);
  constrained_ = ConstrainedSystem(system_, bc_);
  SpMat a = constrained_.matrix();
  a.makeCompressed();
  lu_ = std::make_shared<Eigen::SparseLU<SpMat>>();
  lu_->analyzePattern(a);
  lu_->factorize(a);
  if (lu_->info() != Eigen::Success) throw NumericalError("factorization of the implicit operator failed");
}

Mat Operators::forcing_weights(double t) const {
  const auto nc = static_cast<Eigen::Index>(space_->count());
  Mat psi(nc, static_cast<Eigen::Index>(forcing_terms_.size()));
  for (Eigen::Index i = 0; i < nc; ++i)
    for (std::size_t s = 0; s < forcing_terms_.size(); ++s)
      psi(i, static_cast<Eigen::Index>(s)) = forcing_terms_[s].weight(t, space_->sample(static_cast<std::size_t>(i)));
  if (!psi.allFinite()) throw NumericalError("non-finite forcing weight");
  return psi;
}

Mat Operators::forcing(double t) const {
  const auto n = static_cast<Eigen::Index>(mesh_->num_vertices());
  Mat out = Mat::Zero(n, static_cast<Eigen::Index>(space_->count()));
  if (forcing_.empty()) return out;
  const Mat psi = forcing_weights(t);
  for (std::size_t s = 0; s < forcing_.size(); ++s)
    out += forcing_[s] * psi.col(static_cast<Eigen::Index>(s)).transpose();
  return out;
}

double Operators::forcing_time(double t_n) const {
  return cfg_.scheme == Scheme::explicit_euler ? t_n : t_n + cfg_.dt;
}

SpMat Operators::full_operator(std::size_t sample) const {
  const auto i = static_cast<Eigen::Index>(sample);
  SpMat out = coeffs_.eps[i] * stiffness_;
  for (std::size_t t = 0; t < advection_terms_.size(); ++t)
    out += coeffs_.advection(i, static_cast<Eigen::Index>(t)) * advection_terms_[t];
  for (std::size_t t = 0; t < reaction_terms_.size(); ++t)
    out += coeffs_.reaction(i, static_cast<Eigen::Index>(t)) * reaction_terms_[t];
  return out;
}

Mat Operators::apply_full(const Mat& fields) const {
  Mat out = (stiffness_ * fields) * coeffs_.eps.asDiagonal();
  for (std::size_t t = 0; t < advection_terms_.size(); ++t)
    out.noalias() += (advection_terms_[t] * fields) * coeffs_.advection.col(static_cast<Eigen::Index>(t)).asDiagonal();
  for (std::size_t t = 0; t < reaction_terms_.size(); ++t)
    out.noalias() += (reaction_terms_[t] * fields) * coeffs_.reaction.col(static_cast<Eigen::Index>(t)).asDiagonal();
  return out;
}

Mat Operators::apply_explicit(const Mat& fields) const {
  Mat out = Mat::Zero(fields.rows(), fields.cols());
  for (const auto& op : a1_) out.noalias() += (op.matrix * fields) * op.theta.asDiagonal();
  return out;
}

Mat Operators::solve(const Mat& rhs, const Mat& boundary) const {
  Mat out(rhs.rows(), rhs.cols());
  for (Eigen::Index c = 0; c < rhs.cols(); ++c) {
    const Vec lifted = constrained_.lift(Vec(rhs.col(c)), Vec(boundary.col(boundary.cols() == 1 ? 0 : c)));
    out.col(c) = lu_->solve(lifted);
  }
  if (!out.allFinite()) throw NumericalError("linear solve produced non-finite values");
  return out;
}

namespace {

Mat hat(const DlrState& s) {
  Mat out(s.U.rows(), s.U.cols() + 1);
  out.col(0) = s.U0;
  out.rightCols(s.U.cols()) = s.U;
  return out;
}

Mat hat_y(const DlrState& s) {
  Mat out(s.Y.rows(), s.Y.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(s.Y.cols()) = s.Y;
  return out;
}

}  // namespace

Mat step_deterministic_modes(const DlrState& state, const Operators& ops) {
  if (state.num_nodes() != ops.mesh().num_vertices() || state.num_samples() != ops.space().count())
    throw ConfigError("state does not match the discretization");
  const double dt = ops.config().dt;
  const Vec& w = ops.space().weights();
  const Mat u_hat = hat(state);
  const Mat y_hat = hat_y(state);
  Mat rhs = ops.skewed_mass() * u_hat / dt;
  if (ops.has_forcing()) {
    const Mat psi = ops.forcing_weights(ops.forcing_time(state.t));
    const Mat proj = psi.transpose() * w.asDiagonal() * y_hat;  // n_f x (R+1)
    for (std::size_t s = 0; s < ops.forcing_vectors().size(); ++s)
      rhs += ops.forcing_vectors()[s] * proj.row(static_cast<Eigen::Index>(s));
  }
  for (const auto& op : ops.explicit_operators()) {
    const Mat g = y_hat.transpose() * (w.array() * op.theta.array()).matrix().asDiagonal() * y_hat;
    rhs.noalias() -= op.matrix * (u_hat * g);
  }
  Mat boundary = Mat::Zero(static_cast<Eigen::Index>(ops.dirichlet().nodes.size()), rhs.cols());
  boundary.col(0) = ops.dirichlet().values;
  return ops.solve(rhs, boundary);
}

StochasticUpdate step_stochastic_modes(const DlrState& state, const Mat& U_tilde, const Operators& ops) {
  const auto r = static_cast<Eigen::Index>(state.rank());
  StochasticUpdate out;
  out.Y_tilde = state.Y;
  if (r == 0) return out;
  if (U_tilde.cols() != r + 1) throw ConfigError("step_stochastic_modes: U_tilde has the wrong mode count");
  const Mat ur = U_tilde.rightCols(r);
  const Mat g_mat = ur.transpose() * ops.system_matrix() * ur;  // (j, k) = U_j^T B U_k
  out.W_hat = g_mat.transpose();

  const auto nc = static_cast<Eigen::Index>(ops.space().count());
  Mat rhs = Mat::Zero(nc, r);
  if (ops.has_forcing()) {
    const Mat psi = ops.forcing_weights(ops.forcing_time(state.t));
    Mat phi(r, psi.cols());
    for (std::size_t s = 0; s < ops.forcing_vectors().size(); ++s)
      phi.col(static_cast<Eigen::Index>(s)) = ur.transpose() * ops.forcing_vectors()[s];
    rhs += psi * phi.transpose();
  }
  const Mat u_hat = hat(state);
  const Mat y_hat = hat_y(state);
  for (const auto& op : ops.explicit_operators()) {
    const Mat p = ur.transpose() * (op.matrix * u_hat);  // R x (R+1)
    rhs.noalias() -= op.theta.asDiagonal() * (y_hat * p.transpose());
  }
  rhs = project_complement_unchecked(rhs, state.Y, ops.space());

  Eigen::JacobiSVD<Mat> svd(g_mat);
  const Vec& s = svd.singularValues();
  out.condition = s[r - 1] > 0.0 ? s[0] / s[r - 1] : std::numeric_limits<double>::infinity();
  if (!std::isfinite(out.condition) || out.condition > ops.config().max_condition) {
    std::ostringstream msg;
    msg << "stochastic-mode system is near singular (condition " << out.condition << ")";
    throw NearSingularError(msg.str(), out.condition);
  }
  const Mat delta_y = g_mat.partialPivLu().solve(rhs.transpose()).transpose();
  out.Y_tilde = state.Y + delta_y;
  return out;
}

StepResult step(const DlrState& state, const Operators& ops) {
  StepResult out;
  out.U_tilde = step_deterministic_modes(state, ops);
  StochasticUpdate sto = step_stochastic_modes(state, out.U_tilde, ops);
  out.Y_tilde = sto.Y_tilde;
  out.info.t = state.t + ops.config().dt;
  out.info.condition = sto.condition;

  const auto r = static_cast<Eigen::Index>(state.rank());
  out.state.t = out.info.t;
  out.state.U0 = out.U_tilde.col(0);
  if (r == 0) {
    out.state.U = Mat(state.U.rows(), 0);
    out.state.Y = Mat(state.Y.rows(), 0);
    return out;
  }
  const Mat w_y = ops.space().weights().asDiagonal() * state.Y;
  const Mat cross = sto.Y_tilde.transpose() * w_y;
  out.info.lemma_identity = (cross - Mat::Identity(r, r)).cwiseAbs().maxCoeff();
  out.info.lemma_defect = ((sto.Y_tilde - state.Y).transpose() * w_y).cwiseAbs().maxCoeff();

  const Orthonormalized q = weighted_orthonormalize(sto.Y_tilde, ops.space());
  const Mat ur = out.U_tilde.rightCols(r);
  out.state.Y = q.modes;
  out.state.U = ur * q.transfer.transpose();
  out.info.reorth_defect = (sto.Y_tilde - q.modes * q.transfer).cwiseAbs().maxCoeff() *
                           ur.cwiseAbs().rowwise().sum().maxCoeff();
  return out;
}

std::size_t step_count(double t0, double T, double dt) {
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  if (!(T >= t0)) throw ConfigError("final time precedes the initial time");
  const double x = (T - t0) / dt;
  return static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
}

double dlr_norm_squared(const DlrState& state, const SpMat& mass) {
  double out = state.U0.dot(mass * state.U0);
  if (state.rank() > 0) out += (state.U.transpose() * mass * state.U).trace();
  return out;
}

DlrState run(const DlrState& initial, const Operators& ops, double T, const StepCallback& callback) {
  const std::size_t steps = step_count(initial.t, T, ops.config().dt);
  const SpMat& mass = ops.mean_blocks().mass;
  const double reference = std::max(std::sqrt(dlr_norm_squared(initial, mass)), 1.0);
  DlrState current = initial;
  for (std::size_t n = 0; n < steps; ++n) {
    StepResult result;
    try {
      result = step(current, ops);
    } catch (const NearSingularError& e) {
      throw NearSingularError("step " + std::to_string(n + 1) + ": " + e.what(), e.condition());
    } catch (const RankLossError& e) {
      throw RankLossError("step " + std::to_string(n + 1) + ": " + e.what(), e.numerical_rank());
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(n + 1) + ": " + e.what());
    }
    result.info.index = n + 1;
    const double norm = std::sqrt(dlr_norm_squared(result.state, mass));
    if (!std::isfinite(norm) || norm > ops.config().blowup_factor * reference) {
      std::ostringstream msg;
      msg << "numerical blow-up at step " << n + 1 << " (t = " << result.state.t << ", norm " << norm << ")";
      throw NumericalError(msg.str());
    }
    if (callback) callback(result, current);
    current = std::move(result.state);
  }
  return current;
}

}  // namespace pgdlr
