#ifndef PRIMSEG_INFERENCE_HPP_
#define PRIMSEG_INFERENCE_HPP_

#include "primseg/random.hpp"
#include "primseg/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace primseg {

struct GibbsConfig {
  int iterations = 300;
  int burn_in = 100;
  std::uint64_t seed = 0;
  HyperParams hyper;
  int store_every = 1;

  void validate() const;
  // Keys: iterations, burn_in, seed, store_every, hyper {gamma, alpha, kappa,
  // truncation_L, diagonal_covariance, emission_prior {mean0, scale0, dof0,
  // psi0}}; all optional, unknown keys rejected with ParameterError.
  static GibbsConfig from_json(const std::string& text);
  static GibbsConfig from_file(const std::filesystem::path& path);
  // Iteration `it` (0-based) is kept when it is past burn-in and on the
  // thinning grid.
  bool retains(int it) const { return it >= burn_in && (it - burn_in) % store_every == 0; }
};

struct PosteriorSummary {
  ModelState map_state;
  int map_iteration = -1;
  int samples_kept = 0;
  std::vector<double> log_joint_trace;
  int used_states = 0;
};

// Conjugate NIW posterior parameters for one state.
struct NiwPosterior {
  Eigen::VectorXd mean;
  double scale = 0.0;
  double dof = 0.0;
  Eigen::MatrixXd psi;
};

// Posterior of `prior` after observing the columns of `points` (d x n, n may
// be 0, in which case the prior is returned unchanged).
NiwPosterior niw_posterior(const NiwPrior& prior, const Eigen::MatrixXd& points);

// (cov, mean) draw: cov ~ IW(dof, psi), mean ~ N(mean, cov / scale). In
// diagonal mode each channel is drawn from its own univariate marginal and
// the covariance is diagonal.
GaussianEmission sample_niw(const NiwPosterior& posterior, bool diagonal, Rng& rng);

// n_ij: number of i -> j transitions in `labels` (1-based), as an L x L matrix.
Eigen::MatrixXd transition_counts(const Labels& labels, int num_states);

// Blocked draw of the whole label sequence given pi, theta and the initial
// distribution: log-space backward messages followed by forward sampling.
Labels resample_labels(const TimeSeriesBag& bag, const ModelState& state,
                       const Eigen::Ref<const Eigen::VectorXd>& initial, Rng& rng);

// Conjugate draw of every state's Gaussian; unoccupied states draw from the
// prior.
std::vector<GaussianEmission> resample_emissions(const TimeSeriesBag& bag, const Labels& labels,
                                                 int num_states, const NiwPrior& prior,
                                                 bool diagonal, Rng& rng);

// Row i ~ Dirichlet(alpha * beta + kappa * e_i + n_i.). beta has L+1 entries.
Eigen::MatrixXd resample_transitions(const Labels& labels, const Eigen::VectorXd& beta,
                                     const HyperParams& hyper, Rng& rng);

struct TableCounts {
  Eigen::MatrixXd tables;     // m_jk
  Eigen::VectorXd overrides;  // w_j
  Eigen::MatrixXd corrected;  // m_bar
};

// Auxiliary table counts of the sticky construction: Chinese-restaurant
// draws of m_jk, then the override counts w_j removed from the diagonal.
TableCounts sample_table_counts(const Eigen::MatrixXd& counts, const Eigen::VectorXd& beta,
                                const HyperParams& hyper, Rng& rng);

// beta ~ Dirichlet(gamma / L + m_bar_{.k}) under the weak-limit approximation.
// Returns L+1 entries; the remainder is 0 once the weak-limit update has run.
Eigen::VectorXd resample_beta(const Labels& labels, const Eigen::VectorXd& beta,
                              const HyperParams& hyper, Rng& rng);

int count_used_states(const Labels& labels);

// Permutes states so labels appear as 1, 2, ... in order of first use;
// unused states follow in their previous order.
void relabel_by_first_appearance(ModelState& state);

// Called after every sweep with the 0-based iteration and the fresh sample.
using SweepObserver = std::function<void(int, const ModelState&)>;

// Runs config.iterations sweeps of labels -> emissions -> transitions -> beta
// and returns the highest-scoring retained sample, relabeled by first
// appearance. Deterministic given config.seed.
PosteriorSummary fit(const TimeSeriesBag& bag, const GibbsConfig& config,
                     const SweepObserver& observer = {});

}  // namespace primseg

#endif  // PRIMSEG_INFERENCE_HPP_
