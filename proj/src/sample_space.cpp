#include "pgdlr/sample_space.hpp"

#include "pgdlr/text_format.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

namespace pgdlr {

namespace {

void check_length(Eigen::Index n, const SampleSpace& space, const char* what) {
  if (static_cast<std::size_t>(n) != space.count()) {
    std::ostringstream msg;
    msg << what << ": random vector has " << n << " entries, sample space has " << space.count();
    throw ConfigError(msg.str());
  }
}

double compensated_sum(const Vec& v) {
  double sum = 0.0, carry = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double y = v[i] - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

}  // namespace

SampleSpace::SampleSpace(Mat samples, Vec weights) : samples_(std::move(samples)), weights_(std::move(weights)) {
  if (weights_.size() < 1) throw ConfigError("sample space needs at least one sample");
  if (samples_.rows() != weights_.size()) throw ConfigError("sample space: samples and weights disagree in count");
  for (Eigen::Index i = 0; i < weights_.size(); ++i)
    if (!(weights_[i] > 0.0) || !std::isfinite(weights_[i]))
      throw ConfigError("sample space weights must be finite and strictly positive");
  if (!samples_.allFinite()) throw ConfigError("sample space: non-finite sample coordinates");
  if (std::abs(compensated_sum(weights_) - 1.0) > 1e-14) throw ConfigError("sample space weights must sum to 1");
  rows_.resize(static_cast<std::size_t>(samples_.size()));
  for (Eigen::Index i = 0; i < samples_.rows(); ++i)
    for (Eigen::Index d = 0; d < samples_.cols(); ++d) rows_[i * samples_.cols() + d] = samples_(i, d);
}

std::span<const double> SampleSpace::sample(std::size_t i) const {
  const std::size_t p = dimension();
  return {rows_.data() + i * p, p};
}

std::size_t SampleSpace::nearest(std::span<const double> point) const {
  if (point.size() != dimension()) throw ConfigError("nearest: parameter vector has wrong dimension");
  std::size_t best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count(); ++i) {
    auto s = sample(i);
    double d = 0.0;
    for (std::size_t k = 0; k < point.size(); ++k) d += (s[k] - point[k]) * (s[k] - point[k]);
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  return best;
}

double expectation(const RandomVector& z, const SampleSpace& space) {
  check_length(z.size(), space, "expectation");
  return space.weights().dot(z);
}

double inner(const RandomVector& y, const RandomVector& z, const SampleSpace& space) {
  check_length(y.size(), space, "inner");
  check_length(z.size(), space, "inner");
  return (space.weights().array() * y.array() * z.array()).sum();
}

MeanSplit split_mean(const RandomVector& z, const SampleSpace& space) {
  MeanSplit out;
  out.mean = expectation(z, space);
  out.fluct = z.array() - out.mean;
  return out;
}

Mat gram(const Mat& modes, const SampleSpace& space) {
  check_length(modes.rows(), space, "gram");
  return modes.transpose() * space.weights().asDiagonal() * modes;
}

Mat project_complement_unchecked(const Mat& z, const Mat& modes, const SampleSpace& space) {
  const Vec& w = space.weights();
  Mat out = z;
  const Eigen::RowVectorXd means = w.transpose() * z;
  out.rowwise() -= means;
  if (modes.cols() > 0) {
    const Mat coeffs = modes.transpose() * w.asDiagonal() * out;  // R x k
    out.noalias() -= modes * coeffs;
  }
  return out;
}

RandomVector project_complement(const RandomVector& z, const Mat& modes, const SampleSpace& space,
                                const StochasticTolerances& tol) {
  check_length(z.size(), space, "project_complement");
  check_length(modes.rows(), space, "project_complement");
  const Mat g = gram(modes, space);
  const Mat eye = Mat::Identity(modes.cols(), modes.cols());
  if (modes.cols() > 0) {
    if ((g - eye).cwiseAbs().maxCoeff() > tol.orthonormal_check)
      throw ConfigError("project_complement: modes are not orthonormal");
    const Eigen::RowVectorXd means = space.weights().transpose() * modes;
    if (means.cwiseAbs().maxCoeff() > tol.orthonormal_check)
      throw ConfigError("project_complement: modes are not zero-mean");
  }
  return project_complement_unchecked(z, modes, space).col(0);
}

Orthonormalized weighted_orthonormalize(const Mat& input, const SampleSpace& space, const StochasticTolerances& tol) {
  check_length(input.rows(), space, "weighted_orthonormalize");
  const Eigen::Index n = input.rows(), r = input.cols();
  const Vec& w = space.weights();
  auto wnorm = [&](const Vec& v) { return std::sqrt((w.array() * v.array().square()).sum()); };

  double max_norm = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) max_norm = std::max(max_norm, wnorm(input.col(j)));

  Orthonormalized out;
  out.modes = Mat::Zero(n, r);
  out.transfer = Mat::Zero(r, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    Vec v = input.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) {
        const double c = (w.array() * out.modes.col(i).array() * v.array()).sum();
        out.transfer(i, j) += c;
        v -= c * out.modes.col(i);
      }
    }
    const double norm = wnorm(v);
    if (!(norm > tol.rank_pivot * max_norm) || !std::isfinite(norm)) {
      const Mat scaled = w.cwiseSqrt().asDiagonal() * input;
      Eigen::JacobiSVD<Mat> svd(scaled);
      const Vec& s = svd.singularValues();
      std::size_t rank = 0;
      for (Eigen::Index k = 0; k < s.size(); ++k)
        if (s[k] > tol.rank_pivot * s[0]) ++rank;
      std::ostringstream msg;
      msg << "weighted_orthonormalize: rank loss at column " << j << " (numerical rank " << rank << " of " << r
          << ")";
      throw RankLossError(msg.str(), rank);
    }
    out.transfer(j, j) = norm;
    out.modes.col(j) = v / norm;
  }
  return out;
}

SampleSpace make_tensor_grid(const std::vector<GridAxis>& axes) {
  if (axes.empty()) throw ConfigError("make_tensor_grid: empty axis list");
  std::size_t total = 1;
  for (const auto& ax : axes) {
    if (ax.points < 1) throw ConfigError("make_tensor_grid: each axis needs at least one point");
    total *= static_cast<std::size_t>(ax.points);
  }
  const auto p = static_cast<Eigen::Index>(axes.size());
  Mat samples(static_cast<Eigen::Index>(total), p);
  for (std::size_t s = 0; s < total; ++s) {
    std::size_t rem = s;
    for (Eigen::Index d = p - 1; d >= 0; --d) {
      const auto& ax = axes[d];
      const std::size_t idx = rem % static_cast<std::size_t>(ax.points);
      rem /= static_cast<std::size_t>(ax.points);
      samples(static_cast<Eigen::Index>(s), d) =
          ax.points == 1 ? ax.lower
                         : ax.lower + static_cast<double>(idx) * (ax.upper - ax.lower) / (ax.points - 1);
    }
  }
  Vec weights = Vec::Constant(static_cast<Eigen::Index>(total), 1.0 / static_cast<double>(total));
  return SampleSpace(std::move(samples), std::move(weights));
}

SampleSpace make_monte_carlo(const MonteCarloSpec& spec, std::size_t count, std::uint64_t seed) {
  if (spec.distribution != "uniform")
    throw ConfigError("make_monte_carlo: unsupported distribution '" + spec.distribution + "'");
  if (spec.bounds.empty()) throw ConfigError("make_monte_carlo: no parameter axes");
  if (count < 1) throw ConfigError("make_monte_carlo: need at least one sample");
  for (auto [a, b] : spec.bounds)
    if (!(a < b)) throw ConfigError("make_monte_carlo: each axis needs lower < upper");
  std::mt19937_64 rng(seed);
  const auto p = static_cast<Eigen::Index>(spec.bounds.size());
  Mat samples(static_cast<Eigen::Index>(count), p);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (Eigen::Index d = 0; d < p; ++d) {
      std::uniform_real_distribution<double> dist(spec.bounds[d].first, spec.bounds[d].second);
      samples(i, d) = dist(rng);
    }
  }
  Vec weights = Vec::Constant(static_cast<Eigen::Index>(count), 1.0 / static_cast<double>(count));
  return SampleSpace(std::move(samples), std::move(weights));
}

void write_sample_space(std::ostream& out, const SampleSpace& space) {
  out << space.count() << ' ' << space.dimension() << '\n';
  for (std::size_t i = 0; i < space.count(); ++i) {
    out << format_double(space.weights()[static_cast<Eigen::Index>(i)]);
    for (double v : space.sample(i)) out << ' ' << format_double(v);
    out << '\n';
  }
}

SampleSpace read_sample_space(std::istream& in) {
  std::size_t n = 0, p = 0;
  if (!(in >> n >> p)) throw ConfigError("sample space table: bad header");
  Mat samples(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  Vec weights(static_cast<Eigen::Index>(n));
  std::string tok;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> tok)) throw ConfigError("sample space table: truncated");
    weights[static_cast<Eigen::Index>(i)] = parse_double(tok);
    for (std::size_t d = 0; d < p; ++d) {
      if (!(in >> tok)) throw ConfigError("sample space table: truncated");
      samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = parse_double(tok);
    }
  }
  return SampleSpace(std::move(samples), std::move(weights));
}

}  // namespace pgdlr
