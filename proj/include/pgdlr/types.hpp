#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pgdlr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

/// One value per collocation sample.
using RandomVector = Eigen::VectorXd;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input or configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Solver failure, non-finite values, blow-up (CLI exit code 2).
class NumericalError : public Error {
 public:
  using Error::Error;
};

class RankLossError : public NumericalError {
 public:
  RankLossError(const std::string& what, std::size_t numerical_rank)
      : NumericalError(what), rank_(numerical_rank) {}
  std::size_t numerical_rank() const { return rank_; }

 private:
  std::size_t rank_;
};

class NearSingularError : public NumericalError {
 public:
  NearSingularError(const std::string& what, double condition)
      : NumericalError(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// A diagnostic or theorem-bound check failed (CLI exit code 3).
class DiagnosticError : public Error {
 public:
  using Error::Error;
};

}  // namespace pgdlr
