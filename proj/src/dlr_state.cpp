#include "pgdlr/dlr_state.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace pgdlr {

StateDefects state_defects(const DlrState& state, const SampleSpace& space, const SpMat& mass,
                           const std::vector<int>& boundary_nodes) {
  StateDefects out;
  const auto r = static_cast<Eigen::Index>(state.rank());
  if (r == 0) return out;
  out.gram = (gram(state.Y, space) - Mat::Identity(r, r)).cwiseAbs().maxCoeff();
  out.mean = (space.weights().transpose() * state.Y).cwiseAbs().maxCoeff();
  Eigen::JacobiSVD<Mat> svd(state.U.transpose() * mass * state.U);
  const Vec& s = svd.singularValues();
  out.mode_condition = s[0] > 0.0 ? s[r - 1] / s[0] : 0.0;
  for (int v : boundary_nodes) out.boundary = std::max(out.boundary, state.U.row(v).cwiseAbs().maxCoeff());
  return out;
}

void validate(const DlrState& state, const SampleSpace& space, const SpMat& mass,
              const std::vector<int>& boundary_nodes, double tol) {
  if (state.Y.rows() != static_cast<Eigen::Index>(space.count()) || state.U.rows() != state.U0.size() ||
      state.U.cols() != state.Y.cols() || mass.rows() != state.U0.size())
    throw ConfigError("DLR state dimensions do not match mesh and sample space");
  const StateDefects d = state_defects(state, space, mass, boundary_nodes);
  std::ostringstream msg;
  if (d.gram > tol) msg << "stochastic modes not orthonormal (defect " << d.gram << "); ";
  if (d.mean > tol) msg << "stochastic modes not zero-mean (defect " << d.mean << "); ";
  if (d.mode_condition < 1e-12) msg << "deterministic modes linearly dependent; ";
  if (d.boundary > tol) msg << "fluctuation modes violate homogeneous boundary data; ";
  if (!msg.str().empty()) throw NumericalError("invalid DLR state: " + msg.str());
}

DlrState init_from_modes(const Vec& U0, const Mat& U, const Mat& Y, const SampleSpace& space, double t) {
  if (U.cols() != Y.cols()) throw ConfigError("init_from_modes: mode counts differ");
  if (U.rows() != U0.size()) throw ConfigError("init_from_modes: deterministic modes have wrong length");
  if (Y.rows() != static_cast<Eigen::Index>(space.count()))
    throw ConfigError("init_from_modes: stochastic modes have wrong length");
  DlrState out;
  out.t = t;
  const Eigen::RowVectorXd means = space.weights().transpose() * Y;
  out.U0 = U0 + U * means.transpose();
  Mat centred = Y;
  centred.rowwise() -= means;
  if (Y.cols() == 0) {
    out.U = U;
    out.Y = Y;
    return out;
  }
  Orthonormalized q = weighted_orthonormalize(centred, space);
  out.Y = std::move(q.modes);
  out.U = U * q.transfer.transpose();
  return out;
}

namespace {

SnapshotInit snapshot_svd(const Mat& snapshot, const SpMat& mass, const SampleSpace& space, std::size_t rank,
                          double tol, bool by_tol) {
  const Eigen::Index nh = snapshot.rows(), nc = snapshot.cols();
  if (nc != static_cast<Eigen::Index>(space.count())) throw ConfigError("init_from_snapshot: sample count mismatch");
  if (mass.rows() != nh) throw ConfigError("init_from_snapshot: mass matrix size mismatch");
  if (!snapshot.allFinite()) throw NumericalError("init_from_snapshot: non-finite snapshot");
  if (!by_tol && rank > static_cast<std::size_t>(std::min(nh, nc)))
    throw ConfigError("init_from_snapshot: rank exceeds min(N_h, N_C)");
  if (by_tol && !(tol >= 0.0 && std::isfinite(tol))) throw ConfigError("init_from_snapshot: bad tolerance");

  const Vec& w = space.weights();
  SnapshotInit out;
  out.state.U0 = snapshot * w;
  Mat centred = snapshot;
  centred.colwise() -= out.state.U0;

  Eigen::SimplicialLLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>> chol(mass);
  if (chol.info() != Eigen::Success) throw NumericalError("init_from_snapshot: mass matrix is not SPD");
  const SpMat L = chol.matrixL();
  if (nc == 1) {
    out.state.U = Mat(nh, 0);
    out.state.Y = Mat(1, 0);
    return out;
  }
  const Vec sqrt_w = w.cwiseSqrt();
  Mat scaled = L.transpose() * centred * sqrt_w.asDiagonal();

  // Restrict to the complement of sqrt(w), which the centred snapshot
  // annihilates: a Householder reflector H maps it to e_1.
  Vec v = sqrt_w;
  v[0] += (v[0] >= 0.0 ? 1.0 : -1.0) * v.norm();
  v /= v.norm();
  const Mat reflected = scaled - 2.0 * (scaled * v) * v.transpose();
  const Mat restricted = reflected.rightCols(nc - 1);

  Eigen::BDCSVD<Mat> svd(restricted, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.singular_values = svd.singularValues();
  const Vec& s = out.singular_values;
  const Eigen::Index available = s.size();
  Eigen::Index numerical = 0;
  for (Eigen::Index k = 0; k < available; ++k)
    if (s[k] > 1e-13 * s[0]) ++numerical;

  Eigen::Index r = 0;
  if (by_tol) {
    const double total = s.squaredNorm();
    double tail = total;
    while (r < numerical && tail > tol * tol * total) {
      tail -= s[r] * s[r];
      ++r;
    }
  } else {
    r = std::min<Eigen::Index>(static_cast<Eigen::Index>(rank), numerical);
  }
  out.truncation_error = std::sqrt(s.tail(available - r).squaredNorm());

  // Q = H[:, 1:] Q'
  Mat q = Mat::Zero(nc, r);
  q.bottomRows(nc - 1) = svd.matrixV().leftCols(r);
  q -= 2.0 * v * (v.transpose() * q);
  out.state.Y = sqrt_w.cwiseInverse().asDiagonal() * q;
  const Mat ps = svd.matrixU().leftCols(r) * s.head(r).asDiagonal();
  out.state.U = L.transpose().triangularView<Eigen::Upper>().solve(ps);
  return out;
}

}  // namespace

SnapshotInit init_from_snapshot(const Mat& snapshot, const SpMat& mass, const SampleSpace& space,
                                std::size_t rank) {
  return snapshot_svd(snapshot, mass, space, rank, 0.0, false);
}

SnapshotInit init_from_snapshot_tol(const Mat& snapshot, const SpMat& mass, const SampleSpace& space,
                                    double tol) {
  return snapshot_svd(snapshot, mass, space, 0, tol, true);
}

Vec evaluate_realization(const DlrState& state, std::size_t sample) {
  if (sample >= state.num_samples()) throw ConfigError("evaluate_realization: sample index out of range");
  return state.U0 + state.U * state.Y.row(static_cast<Eigen::Index>(sample)).transpose();
}

Mat realize_all(const DlrState& state) {
  Mat out = state.U * state.Y.transpose();
  out.colwise() += state.U0;
  return out;
}

SkewedGram skewed_gram(const Mat& U_tilde, const FemBlocks& blocks) {
  SkewedGram out;
  out.W = U_tilde.transpose() * blocks.mass * U_tilde;
  if (blocks.supg_mass.nonZeros() > 0) out.W += (U_tilde.transpose() * blocks.supg_mass * U_tilde).transpose();
  if (out.W.size() > 0) {
    Eigen::JacobiSVD<Mat> svd(out.W);
    const Vec& s = svd.singularValues();
    out.smallest_singular_value = s[s.size() - 1];
    out.condition = out.smallest_singular_value > 0.0 ? s[0] / out.smallest_singular_value
                                                      : std::numeric_limits<double>::infinity();
  }
  return out;
}

namespace {

constexpr char kMagic[8] = {'P', 'G', 'D', 'L', 'R', 'C', 'K', '1'};

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw ConfigError("checkpoint: truncated file");
  return value;
}

void put_block(std::ostream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void get_block(std::istream& in, double* data, std::size_t n) {
  if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double))))
    throw ConfigError("checkpoint: truncated file");
}

}  // namespace

void write_checkpoint(std::ostream& out, const DlrState& state, int n_per_side) {
  out.write(kMagic, sizeof(kMagic));
  put<std::int32_t>(out, n_per_side);
  put<std::uint64_t>(out, state.num_samples());
  put<double>(out, state.t);
  put<std::uint64_t>(out, state.rank());
  put<std::uint64_t>(out, state.num_nodes());
  put_block(out, state.U0.data(), static_cast<std::size_t>(state.U0.size()));
  put_block(out, state.U.data(), static_cast<std::size_t>(state.U.size()));
  put_block(out, state.Y.data(), static_cast<std::size_t>(state.Y.size()));
  if (!out) throw Error("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("checkpoint: bad magic");
  Checkpoint out;
  out.n_per_side = get<std::int32_t>(in);
  const auto nc = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  out.state.t = get<double>(in);
  const auto r = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  const auto nh = static_cast<Eigen::Index>(get<std::uint64_t>(in));
  out.state.U0.resize(nh);
  out.state.U.resize(nh, r);
  out.state.Y.resize(nc, r);
  get_block(in, out.state.U0.data(), static_cast<std::size_t>(nh));
  get_block(in, out.state.U.data(), static_cast<std::size_t>(nh * r));
  get_block(in, out.state.Y.data(), static_cast<std::size_t>(nc * r));
  return out;
}

}  // namespace pgdlr
