#include "primseg/linalg.hpp"

#include "primseg/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace primseg {

namespace {

bool try_cholesky(const Eigen::MatrixXd& m, Eigen::MatrixXd& out) {
  if (!m.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return false;
  out = llt.matrixL();
  return out.diagonal().minCoeff() > 0.0 && out.allFinite();
}

[[noreturn]] void throw_not_pd(const Eigen::MatrixXd& m, const std::string& what) {
  std::ostringstream msg;
  msg << what << " is not positive definite (smallest eigenvalue "
      << smallest_eigenvalue(m) << ")";
  throw NumericError(msg.str());
}

}  // namespace

Eigen::MatrixXd strict_cholesky(const Eigen::MatrixXd& m, const std::string& what) {
  Eigen::MatrixXd chol;
  if (!try_cholesky(m, chol)) throw_not_pd(m, what);
  return chol;
}

Eigen::MatrixXd spd_cholesky(const Eigen::MatrixXd& m, const std::string& what) {
  Eigen::MatrixXd chol;
  if (try_cholesky(m, chol)) return chol;
  const double d = static_cast<double>(m.rows());
  const double jitter = 1e-9 * std::abs(m.trace()) / d;
  Eigen::MatrixXd lifted = m;
  lifted.diagonal().array() += jitter;
  if (jitter > 0.0 && try_cholesky(lifted, chol)) return chol;
  throw_not_pd(m, what);
}

double log_det_from_cholesky(const Eigen::MatrixXd& chol) {
  return 2.0 * chol.diagonal().array().log().sum();
}

double smallest_eigenvalue(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) return std::numeric_limits<double>::quiet_NaN();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double top = v.maxCoeff();
  if (top == -std::numeric_limits<double>::infinity()) return top;
  return top + std::log((v.array() - top).exp().sum());
}

}  // namespace primseg
