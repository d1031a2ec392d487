#include "ogdbz/linalg.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace ogdbz {

double norm2(const Mat& M) {
  if (M.size() == 0) return 0.0;
  if (M.rows() == 1 || M.cols() == 1) return M.norm();
  Eigen::JacobiSVD<Mat> svd(M);
  return svd.singularValues()(0);
}

double norm_inf(const Mat& M) {
  if (M.size() == 0) return 0.0;
  return M.cwiseAbs().rowwise().sum().maxCoeff();
}

double spectral_radius(const Mat& M) {
  require(M.rows() == M.cols(), "spectral_radius: matrix must be square");
  if (M.rows() == 1) return std::abs(M(0, 0));
  Eigen::EigenSolver<Mat> es(M, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Mat matrix_power(const Mat& M, int k) {
  require(M.rows() == M.cols(), "matrix_power: matrix must be square");
  require(k >= 0, "matrix_power: exponent must be nonnegative");
  Mat result = Mat::Identity(M.rows(), M.cols());
  Mat base = M;
  while (k > 0) {
    if (k & 1) result = result * base;
    k >>= 1;
    if (k > 0) base = base * base;
  }
  return result;
}

bool all_finite(const Mat& M) { return M.allFinite(); }

void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace ogdbz
