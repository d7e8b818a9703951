#include "pgdlr/diagnostics.hpp"

#include "pgdlr/text_format.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

namespace pgdlr {

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

// E[u^T A u] for u = U0 + U Y^T with orthonormal, zero-mean Y.
double dlr_quadratic(const DlrState& s, const SpMat& a) {
  double out = s.U0.dot(a * s.U0);
  if (s.rank() > 0) out += (s.U.transpose() * (a * s.U)).trace();
  return out;
}

double field_quadratic(const Mat& fields, const SpMat& a, const Vec& weights) {
  const Vec per_sample = (fields.array() * (a * fields).array()).colwise().sum().transpose();
  return weights.dot(per_sample);
}

}  // namespace

NormEvaluator::NormEvaluator(const Operators& ops, const ReactionAnalysis& analysis, const QuadratureRule& quad)
    : ops_(&ops), eps_hat_(analysis.eps_hat) {
  const Mesh& mesh = ops.mesh();
  streamline_ = ops.mean_blocks().supg_conv;
  const auto nq = static_cast<Eigen::Index>(mesh.num_triangles() * quad.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(3 * nq));
  point_weights_.resize(nq);
  std::vector<Point2> points(static_cast<std::size_t>(nq));
  for (std::size_t k = 0; k < mesh.num_triangles(); ++k) {
    for (std::size_t q = 0; q < quad.size(); ++q) {
      const auto row = static_cast<Eigen::Index>(k * quad.size() + q);
      for (int a = 0; a < 3; ++a) trip.emplace_back(row, mesh.triangles[k][a], quad.points[q][a]);
      point_weights_[row] = quad.weights[q] * 2.0 * mesh.area(k);
      points[static_cast<std::size_t>(row)] = mesh.map_point(k, quad.points[q]);
    }
  }
  point_values_.resize(nq, static_cast<Eigen::Index>(mesh.num_vertices()));
  point_values_.setFromTriplets(trip.begin(), trip.end());

  const SampleSpace& space = ops.space();
  if (!analysis.mu_identically_zero) {
    mu_table_.resize(nq, static_cast<Eigen::Index>(space.count()));
    for (Eigen::Index q = 0; q < nq; ++q)
      for (std::size_t i = 0; i < space.count(); ++i)
        mu_table_(q, static_cast<Eigen::Index>(i)) = analysis.mu(points[static_cast<std::size_t>(q)], space.sample(i));
  }

  const auto& terms = ops.forcing_terms();
  Mat f_at(nq, static_cast<Eigen::Index>(terms.size()));
  for (std::size_t s = 0; s < terms.size(); ++s)
    for (Eigen::Index q = 0; q < nq; ++q) f_at(q, static_cast<Eigen::Index>(s)) = terms[s].field(points[q]);
  forcing_gram_ = f_at.transpose() * point_weights_.asDiagonal() * f_at;
}

double NormEvaluator::l2_sq(const DlrState& s) const { return dlr_quadratic(s, ops_->mean_blocks().mass); }
double NormEvaluator::grad_sq(const DlrState& s) const { return dlr_quadratic(s, ops_->mean_blocks().stiffness); }
double NormEvaluator::streamline_sq(const DlrState& s) const {
  return streamline_.nonZeros() > 0 ? dlr_quadratic(s, streamline_) : 0.0;
}

double NormEvaluator::mu_sq(const DlrState& s) const {
  if (mu_table_.size() == 0) return 0.0;
  const Mat values = (point_values_ * hat(s)) * hat_y(s).transpose();
  return point_weights_.dot((mu_table_.array() * values.array().square()).matrix() * ops_->space().weights());
}

double NormEvaluator::supg_sq(const DlrState& s) const {
  return eps_hat_ * grad_sq(s) + streamline_sq(s) + mu_sq(s);
}

double NormEvaluator::l2_sq(const Mat& f) const {
  return field_quadratic(f, ops_->mean_blocks().mass, ops_->space().weights());
}
double NormEvaluator::grad_sq(const Mat& f) const {
  return field_quadratic(f, ops_->mean_blocks().stiffness, ops_->space().weights());
}
double NormEvaluator::streamline_sq(const Mat& f) const {
  return streamline_.nonZeros() > 0 ? field_quadratic(f, streamline_, ops_->space().weights()) : 0.0;
}

double NormEvaluator::mu_sq(const Mat& f) const {
  if (mu_table_.size() == 0) return 0.0;
  const Mat values = point_values_ * f;
  return point_weights_.dot((mu_table_.array() * values.array().square()).matrix() * ops_->space().weights());
}

double NormEvaluator::supg_sq(const Mat& f) const { return eps_hat_ * grad_sq(f) + streamline_sq(f) + mu_sq(f); }

double NormEvaluator::forcing_sq(double t) const {
  if (forcing_gram_.size() == 0) return 0.0;
  const Mat psi = ops_->forcing_weights(t);
  const Mat e = psi.transpose() * ops_->space().weights().asDiagonal() * psi;
  return (forcing_gram_.array() * e.array()).sum();
}

double md_metric(const Vec& field) {
  if (field.size() == 0) throw ConfigError("md_metric: empty field");
  return field.maxCoeff() - field.minCoeff();
}

StepReport make_step_report(std::size_t step, const DlrState& state, const StepInfo& info,
                            const NormEvaluator& norms) {
  StepReport r;
  r.step = step;
  r.t = state.t;
  r.l2 = std::sqrt(norms.l2_sq(state));
  r.grad = std::sqrt(norms.grad_sq(state));
  r.supg = std::sqrt(norms.supg_sq(state));
  r.condition = info.condition;
  r.lemma_defect = info.lemma_defect;
  r.reorth_defect = info.reorth_defect;
  const auto rank = static_cast<Eigen::Index>(state.rank());
  const SampleSpace& space = norms.operators().space();
  if (rank > 0) {
    r.gram_defect = (gram(state.Y, space) - Mat::Identity(rank, rank)).cwiseAbs().maxCoeff();
    r.mean_defect = (space.weights().transpose() * state.Y).cwiseAbs().maxCoeff();
  }
  const SpMat& mass = norms.operators().mean_blocks().mass;
  r.mode_norms.resize(rank + 1);
  r.mode_norms[0] = std::sqrt(state.U0.dot(mass * state.U0));
  for (Eigen::Index k = 0; k < rank; ++k) r.mode_norms[k + 1] = std::sqrt(state.U.col(k).dot(mass * state.U.col(k)));
  return r;
}

void write_report_header(std::ostream& out) {
  out << "step,t,l2,supg,grad,condition,gram_defect,mean_defect,lemma_defect,reorth_defect,tangent_residual,"
         "mode_norms\n";
}

void write_report_row(std::ostream& out, const StepReport& r) {
  out << r.step << ',' << format_double(r.t) << ',' << format_double(r.l2) << ',' << format_double(r.supg) << ','
      << format_double(r.grad) << ',' << format_double(r.condition) << ',' << format_double(r.gram_defect) << ','
      << format_double(r.mean_defect) << ',' << format_double(r.lemma_defect) << ','
      << format_double(r.reorth_defect) << ','
      << (std::isnan(r.tangent_residual) ? std::string() : format_double(r.tangent_residual)) << ',';
  for (Eigen::Index k = 0; k < r.mode_norms.size(); ++k) out << (k ? ";" : "") << format_double(r.mode_norms[k]);
  out << '\n';
}

CoercivityReport check_coercivity(const NormEvaluator& norms, const ReactionAnalysis& analysis, std::size_t trials,
                                  std::uint64_t seed) {
  const Operators& ops = norms.operators();
  const Mesh& mesh = ops.mesh();
  const SampleSpace& space = ops.space();
  const auto nh = static_cast<Eigen::Index>(mesh.num_vertices());
  const auto nc = static_cast<Eigen::Index>(space.count());
  const std::vector<int> interior = mesh.interior_vertices();

  constexpr int modes = 3;
  Mat sines(nh, modes * modes);
  for (Eigen::Index v = 0; v < nh; ++v) {
    const Point2 p = mesh.vertices[static_cast<std::size_t>(v)];
    for (int k = 0; k < modes; ++k)
      for (int l = 0; l < modes; ++l)
        sines(v, k * modes + l) = std::sin((k + 1) * std::numbers::pi * p.x) * std::sin((l + 1) * std::numbers::pi * p.y);
  }
  for (int v : mesh.boundary_vertices()) sines.row(v).setZero();

  CoercivityReport report;
  report.trials = trials;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(seed + trial);
    std::normal_distribution<double> normal;
    Mat u = Mat::Zero(nh, nc);
    if (trial % 2 == 0) {
      Mat a(modes * modes, nc);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
      u = sines * a;
    } else {
      for (Eigen::Index i = 0; i < nc; ++i)
        for (int v : interior) u(v, i) = normal(rng);
    }
    const double l2 = norms.l2_sq(u);
    if (!(l2 > 0.0)) continue;
    u /= std::sqrt(l2);
    const Mat au = ops.apply_full(u);
    const double a_uu = space.weights().dot((u.array() * au.array()).colwise().sum().matrix().transpose());
    const double supg = norms.supg_sq(u);
    const double lower = 0.5 * supg - analysis.nu;
    const double scale = std::max({1.0, std::abs(a_uu), supg});
    const double margin = (a_uu - lower) / scale;
    if (margin < report.worst_margin) {
      report.worst_margin = margin;
      report.worst_seed = seed + trial;
    }
    if (margin < -1e-10) ++report.violations;
  }
  return report;
}

double check_tangent_residual(const DlrState& previous, const Mat& U_tilde, const Mat& Y_tilde, const Operators& ops) {
  const SampleSpace& space = ops.space();
  const auto nc = static_cast<Eigen::Index>(space.count());
  const auto r = static_cast<Eigen::Index>(previous.rank());
  if (nc > 64) throw ConfigError("check_tangent_residual: sample space too large for an explicit complement basis");
  if (U_tilde.cols() != r + 1 || Y_tilde.cols() != r) throw ConfigError("check_tangent_residual: rank mismatch");

  const Mat ur = U_tilde.rightCols(r);
  Mat u_next = ur * Y_tilde.transpose();
  u_next.colwise() += U_tilde.col(0);
  const Mat u_prev = realize_all(previous);
  const double dt = ops.config().dt;

  std::vector<Mat> terms;
  terms.push_back(ops.skewed_mass() * (u_next - u_prev) / dt);
  terms.push_back(ops.implicit_operator() * u_next);
  terms.push_back(ops.apply_explicit(u_prev));
  if (ops.has_forcing()) terms.push_back(-ops.forcing(ops.forcing_time(previous.t)));

  // weighted orthonormal basis of the complement of span{1, Y^n}
  const Vec& w = space.weights();
  const Vec sqrt_w = w.cwiseSqrt();
  const Mat z = sqrt_w.asDiagonal() * hat_y(previous);
  const Mat q = Eigen::HouseholderQR<Mat>(z).householderQ();
  const Mat complement = sqrt_w.cwiseInverse().asDiagonal() * q.rightCols(nc - r - 1);
  const Mat y_hat = hat_y(previous);
  const std::vector<int> interior = ops.mesh().interior_vertices();

  auto tested = [&](const Mat& x) {
    double out = 0.0;
    const Mat a = x * w.asDiagonal() * y_hat;
    for (int v : interior) out = std::max(out, a.row(v).cwiseAbs().maxCoeff());
    if (r > 0 && complement.cols() > 0)
      out = std::max(out, (ur.transpose() * x * w.asDiagonal() * complement).cwiseAbs().maxCoeff());
    return out;
  };

  Mat residual = Mat::Zero(u_next.rows(), nc);
  double scale = 0.0;
  for (const Mat& t : terms) {
    residual += t;
    scale = std::max(scale, tested(t));
  }
  const double res = tested(residual);
  return scale > 0.0 ? res / scale : res;
}

std::string to_string(Theorem t) { return t == Theorem::im_stab ? "im_stab" : "si_stab"; }

std::string to_string(BoundCase c) {
  switch (c) {
    case BoundCase::i: return "i";
    case BoundCase::ii: return "ii";
    case BoundCase::iii: return "iii";
  }
  return "?";
}

BoundCase select_case(const BoundInputs& in) {
  if (in.analysis.mu0 > 0.0) return BoundCase::i;
  return in.forcing_zero ? BoundCase::ii : BoundCase::iii;
}

BoundLedger evaluate_bound(const BoundInputs& in, Theorem theorem, BoundCase bound_case) {
  BoundLedger out;
  out.theorem = theorem;
  out.bound_case = bound_case;
  if (!in.mesh) throw ConfigError("evaluate_bound: mesh missing");
  const std::size_t n = in.supg_sq.size();
  if (in.l2_sq.size() != n + 1) throw ConfigError("evaluate_bound: trajectory lengths disagree");
  if (!in.forcing_zero && in.f_sq.size() != n) throw ConfigError("evaluate_bound: forcing norms missing");

  auto refuse = [&](const std::string& why) {
    out.applicable = false;
    out.reason = why;
    return out;
  };

  const ReactionAnalysis& an = in.analysis;
  if (bound_case == BoundCase::i && !(an.mu0 > 0.0)) return refuse("case (i) needs mu0 > 0");
  if (bound_case == BoundCase::ii && !in.forcing_zero) return refuse("case (ii) needs f = 0");
  if (bound_case == BoundCase::iii && !(in.dt < 1.0 / (1.0 + 2.0 * an.nu))) return refuse("case (iii) needs dt < 1/(1+2 nu)");

  StabilizationParams params;
  params.C_I = in.C_I;
  params.C_E = an.C_E;
  constexpr double slack = 1.0 + 1e-12;
  if (theorem == Theorem::im_stab) {
    const std::vector<double> bound = delta_coercivity(*in.mesh, an, params);
    for (std::size_t k = 0; k < in.delta.size(); ++k) {
      if (in.delta[k] > in.dt / 4.0 * slack) return refuse("delta_K exceeds dt/4");
      if (in.delta[k] > bound[k] * slack) return refuse("delta_K exceeds the coercivity bound");
    }
  } else {
    const std::vector<double> bound = delta_semi_implicit(*in.mesh, an, params, in.dt);
    for (std::size_t k = 0; k < in.delta.size(); ++k)
      if (in.delta[k] > bound[k] * slack) return refuse("delta_K exceeds the semi-implicit bound");
    if (!in.stochasticity) return refuse("moderate stochasticity not checked");
    if (!in.stochasticity->holds()) return refuse("moderate stochasticity conditions fail");
  }
  out.applicable = true;

  double delta_max = 0.0;
  for (double d : in.delta) delta_max = std::max(delta_max, d);
  const bool im = theorem == Theorem::im_stab;
  switch (bound_case) {
    case BoundCase::i:
      out.C1 = im ? 0.5 : 0.25;
      out.C2 = 2.0 / an.mu0 + 4.0 * delta_max;
      break;
    case BoundCase::ii:
      out.C1 = im ? 0.75 : 0.5;
      out.C2 = 0.0;
      break;
    case BoundCase::iii:
      out.C1 = im ? 0.5 : 0.25;
      out.C3 = std::exp((1.0 + 2.0 * an.nu) * in.T);
      break;
  }

  double supg_sum = 0.0, f_sum = 0.0;
  for (double v : in.supg_sq) supg_sum += v;
  if (!in.forcing_zero)
    for (double v : in.f_sq) f_sum += v;
  const double u0 = in.l2_sq.front();
  const double base = im ? u0 : u0 + an.eps_hat * in.grad0_sq / 8.0 + in.mu0_sq / 8.0;
  out.left = in.l2_sq.back() + in.dt * out.C1 * supg_sum;
  if (bound_case == BoundCase::iii)
    out.right = out.C3 * (base + in.dt * f_sum);
  else
    out.right = base + in.dt * out.C2 * f_sum;
  out.margin = out.right - out.left;
  out.literal_margin = out.margin;
  if (!im && bound_case == BoundCase::ii) out.literal_margin = u0 - out.left;
  out.pass = out.left <= out.right + 1e-10 * out.right;
  return out;
}

void write_ledger_header(std::ostream& out) {
  out << "theorem,case,outcome,C1,C2,C3,left,right,margin,literal_margin,reason\n";
}

void write_ledger_row(std::ostream& out, const BoundLedger& l) {
  out << to_string(l.theorem) << ',' << to_string(l.bound_case) << ',' << l.outcome() << ',' << format_double(l.C1)
      << ',' << format_double(l.C2) << ',' << format_double(l.C3) << ',' << format_double(l.left) << ','
      << format_double(l.right) << ',' << format_double(l.margin) << ',' << format_double(l.literal_margin) << ','
      << l.reason << '\n';
}

}  // namespace pgdlr
