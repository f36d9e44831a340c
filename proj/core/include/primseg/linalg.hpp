#ifndef PRIMSEG_LINALG_HPP_
#define PRIMSEG_LINALG_HPP_

#include <Eigen/Dense>

#include <string>

namespace primseg {

// Lower Cholesky factor of a symmetric positive-definite matrix. On failure
// a ridge of 1e-9 * trace / d is added once and the factorization retried;
// a second failure throws NumericError carrying the smallest eigenvalue.
// `what` is prefixed to the error message.
Eigen::MatrixXd spd_cholesky(const Eigen::MatrixXd& m, const std::string& what = "matrix");

// Same contract as spd_cholesky but never adds jitter.
Eigen::MatrixXd strict_cholesky(const Eigen::MatrixXd& m, const std::string& what = "matrix");

// log det of the matrix whose lower Cholesky factor is `chol`.
double log_det_from_cholesky(const Eigen::MatrixXd& chol);

double smallest_eigenvalue(const Eigen::MatrixXd& m);

// log(sum(exp(v))) with max subtraction; -inf for an all -inf vector.
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace primseg

#endif  // PRIMSEG_LINALG_HPP_
