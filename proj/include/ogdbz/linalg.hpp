#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ogdbz {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when a precondition on shapes or parameter ranges fails.
class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Largest singular value.
double norm2(const Mat& M);

/// Max absolute row sum (induced infinity norm).
double norm_inf(const Mat& M);

/// Spectral radius of a square matrix.
double spectral_radius(const Mat& M);

/// M^k by repeated squaring; M^0 is the identity.
Mat matrix_power(const Mat& M, int k);

bool all_finite(const Mat& M);

void require(bool cond, const std::string& what);

}  // namespace ogdbz
