#pragma once

#include "pgdlr/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pgdlr {

/// Tolerances of the stochastic-space operations. Defaults are the module
/// constants; callers may override them.
struct StochasticTolerances {
  double orthonormal_check = 1e-8;
  double rank_pivot = 1e-12;
};

/// Discrete probability space: collocation points with positive weights
/// summing to one. Row i of `samples()` is the parameter vector omega_i.
class SampleSpace {
 public:
  SampleSpace() = default;
  SampleSpace(Mat samples, Vec weights);

  std::size_t count() const { return static_cast<std::size_t>(weights_.size()); }
  std::size_t dimension() const { return static_cast<std::size_t>(samples_.cols()); }
  const Mat& samples() const { return samples_; }
  const Vec& weights() const { return weights_; }
  std::span<const double> sample(std::size_t i) const;
  /// Index of the sample closest (Euclidean) to `point`.
  std::size_t nearest(std::span<const double> point) const;

 private:
  Mat samples_;  // row-major copy kept in `rows_`
  Vec weights_;
  std::vector<double> rows_;
};

double expectation(const RandomVector& z, const SampleSpace& space);
double inner(const RandomVector& y, const RandomVector& z, const SampleSpace& space);

struct MeanSplit {
  double mean = 0.0;
  RandomVector fluct;
};
MeanSplit split_mean(const RandomVector& z, const SampleSpace& space);

/// Weighted Gram matrix E[Y_i Y_j] of the columns of `modes` (N_C x R).
Mat gram(const Mat& modes, const SampleSpace& space);

/// z* - P_Y z: removes the mean and the components along the orthonormal,
/// zero-mean columns of `modes`. Validates the basis first.
RandomVector project_complement(const RandomVector& z, const Mat& modes, const SampleSpace& space,
                                const StochasticTolerances& tol = {});
/// Column-wise projection without basis validation (hot path).
Mat project_complement_unchecked(const Mat& z, const Mat& modes, const SampleSpace& space);

struct Orthonormalized {
  Mat modes;     // N_C x R, weighted-orthonormal columns
  Mat transfer;  // R x R upper triangular, input = modes * transfer
};

/// Weighted modified Gram-Schmidt with one reorthogonalisation pass.
/// Throws RankLossError when a pivot falls below rank_pivot * max column norm.
Orthonormalized weighted_orthonormalize(const Mat& input, const SampleSpace& space,
                                        const StochasticTolerances& tol = {});

struct GridAxis {
  double lower = 0.0;
  double upper = 1.0;
  int points = 1;
};
/// Full tensor grid of equispaced points, equal weights. The first axis
/// varies slowest.
SampleSpace make_tensor_grid(const std::vector<GridAxis>& axes);

/// Independent uniform samples on a box. `distribution` must be "uniform".
struct MonteCarloSpec {
  std::string distribution = "uniform";
  std::vector<std::pair<double, double>> bounds;
};
SampleSpace make_monte_carlo(const MonteCarloSpec& spec, std::size_t count, std::uint64_t seed);

/// Plain-text table: header "N_C p", then "m_i w_i1 ... w_ip" per row, written
/// with shortest round-trip formatting.
void write_sample_space(std::ostream& out, const SampleSpace& space);
SampleSpace read_sample_space(std::istream& in);

}  // namespace pgdlr
