#ifndef PRIMSEG_RANDOM_HPP_
#define PRIMSEG_RANDOM_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace primseg {

// All sampling goes through an explicitly passed engine so every result is
// reproducible from a seed.
using Rng = std::mt19937_64;

// Uniform draw on the open interval (0, 1).
double uniform_open(Rng& rng);

double standard_normal(Rng& rng);

// Natural log of a Gamma(shape, 1) variate. Stays finite for very small
// shapes where the variate itself would underflow to zero.
double log_gamma_variate(double shape, Rng& rng);

// Dirichlet draw. Zero concentrations give exactly-zero coordinates; at least
// one concentration must be positive. The result sums to 1 up to rounding.
Eigen::VectorXd dirichlet(const Eigen::Ref<const Eigen::VectorXd>& concentration, Rng& rng);

// Index drawn with probability proportional to exp(log_weights). Entries may
// be -inf. Returns -1 if every weight is -inf or NaN.
int sample_log_categorical(const Eigen::Ref<const Eigen::VectorXd>& log_weights, Rng& rng);

int sample_binomial(int trials, double p, Rng& rng);

bool sample_bernoulli(double p, Rng& rng);

// mean + chol * z, z standard normal.
Eigen::VectorXd multivariate_normal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol,
                                    Rng& rng);

// Inverse-Wishart(dof, scale) draw via the Bartlett decomposition, given the
// lower Cholesky factor of the scale matrix. Requires dof > d - 1.
Eigen::MatrixXd inverse_wishart(double dof, const Eigen::MatrixXd& scale_chol, Rng& rng);

}  // namespace primseg

#endif  // PRIMSEG_RANDOM_HPP_
