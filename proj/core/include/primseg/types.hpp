#ifndef PRIMSEG_TYPES_HPP_
#define PRIMSEG_TYPES_HPP_

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace primseg {

// Hidden-state labels are 1-based throughout the public API: a label k
// refers to state index k-1 in beta, pi and emissions.
using Labels = std::vector<int>;

// One trip's aligned multichannel series. data is channels x frames.
struct TimeSeriesBag {
  std::string bag_id;
  std::vector<std::string> channels;
  double rate_hz = 1.0;
  double start_time = 0.0;
  Eigen::MatrixXd data;

  int dims() const { return static_cast<int>(data.rows()); }
  int frames() const { return static_cast<int>(data.cols()); }

  // Throws ParameterError when the bag breaks its invariants
  // (empty, non-finite values, duplicate or missing channel names).
  void validate() const;
};

// Normal-Inverse-Wishart base measure over (mean, covariance).
struct NiwPrior {
  Eigen::VectorXd mean0;
  double scale0 = 1.0;
  double dof0 = 0.0;
  Eigen::MatrixXd psi0;

  int dims() const { return static_cast<int>(mean0.size()); }
  void validate() const;

  // Data-driven default: per-channel mean, scale 1, dof d+2, and the
  // population covariance of the bag. A near-singular covariance (for
  // instance a constant series) is lifted by a small ridge so psi0 stays
  // positive definite.
  static NiwPrior from_data(const Eigen::MatrixXd& data);
};

struct HyperParams {
  double gamma = 1.0;
  double alpha = 1.0;
  double kappa = 9.0;
  int truncation = 20;
  // Empty (dims() == 0) means "derive from the data at fit time".
  NiwPrior emission_prior;
  bool diagonal_covariance = false;

  // Self-transition bias rho = kappa / (alpha + kappa).
  double rho() const { return kappa / (alpha + kappa); }
  void validate() const;
};

struct GaussianEmission {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dims() const { return static_cast<int>(mean.size()); }
};

// One Gibbs sample.
struct ModelState {
  Eigen::VectorXd beta;  // L weights followed by the remainder mass
  Eigen::MatrixXd pi;    // L x L, row-stochastic
  std::vector<GaussianEmission> emissions;
  Labels labels;
  double log_joint = 0.0;

  int num_states() const { return static_cast<int>(pi.rows()); }

  // Initial-state distribution implied by the global weights: the first L
  // entries of beta renormalized.
  Eigen::VectorXd initial_distribution() const;

  // Throws ParameterError if rows/weights are not normalized within tol or
  // a label is outside [1, L].
  void validate(double tol = 1e-12) const;
};

}  // namespace primseg

#endif  // PRIMSEG_TYPES_HPP_
