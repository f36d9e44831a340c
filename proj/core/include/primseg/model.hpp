#ifndef PRIMSEG_MODEL_HPP_
#define PRIMSEG_MODEL_HPP_

#include "primseg/random.hpp"
#include "primseg/types.hpp"

#include <Eigen/Dense>

#include <vector>

namespace primseg {

// Truncated GEM(gamma) draw: L stick weights beta_k = v_k * prod_{j<k}(1 - v_j)
// with v_k ~ Beta(1, gamma), followed by the unbroken remainder. Nonnegative,
// sums to 1.
Eigen::VectorXd stick_breaking(double gamma, int truncation, Rng& rng);

// Dirichlet concentration of transition row `state` (1-based) under the
// sticky prior: c_j = alpha * beta_j + kappa * [j == state]. `beta` holds the
// L state weights (no remainder entry).
Eigen::VectorXd sticky_row_concentration(double alpha, const Eigen::Ref<const Eigen::VectorXd>& beta,
                                         double kappa, int state);

// A Gaussian with its Cholesky factor and log-normalizer cached, for
// evaluating many points against the same parameters.
class GaussianDensity {
 public:
  explicit GaussianDensity(const GaussianEmission& emission);

  double log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  // Log-density of every column of `points`.
  Eigen::RowVectorXd log_pdf_columns(const Eigen::MatrixXd& points) const;

  const Eigen::MatrixXd& cholesky() const { return chol_; }
  double log_det() const { return log_det_; }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd chol_;
  double log_det_ = 0.0;
  double log_norm_ = 0.0;
};

// log N(x; mean, cov). Throws NumericError naming the smallest eigenvalue when
// cov is not positive definite, ParameterError on a dimension mismatch.
double gaussian_logpdf(const Eigen::Ref<const Eigen::VectorXd>& x, const GaussianEmission& emission);

// L x T matrix of per-state log-likelihoods of every frame.
Eigen::MatrixXd emission_log_likelihoods(const Eigen::MatrixXd& data,
                                         const std::vector<GaussianEmission>& emissions);

// log initial(p_1) + sum_t log pi(p_{t-1}, p_t) + sum_t log N(o_t; theta_{p_t}).
// An exactly-zero probability on the path yields -infinity rather than an
// exception.
double joint_log_likelihood(const TimeSeriesBag& bag, const ModelState& state,
                            const Eigen::Ref<const Eigen::VectorXd>& initial);

struct SimulatedSequence {
  Labels labels;
  Eigen::MatrixXd data;  // d x T
};

// Forward simulation of the HMM: labels from the Markov chain, observations
// from the per-state Gaussians.
SimulatedSequence simulate(const Eigen::MatrixXd& pi, const std::vector<GaussianEmission>& emissions,
                           const Eigen::Ref<const Eigen::VectorXd>& initial, int frames, Rng& rng);

}  // namespace primseg

#endif  // PRIMSEG_MODEL_HPP_
