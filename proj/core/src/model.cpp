#include "primseg/model.hpp"

#include "primseg/errors.hpp"
#include "primseg/linalg.hpp"

#include <cmath>
#include <limits>

namespace primseg {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_probability_vector(const Eigen::Ref<const Eigen::VectorXd>& p, const char* what) {
  if ((p.array() < 0.0).any() || !p.allFinite() || std::abs(p.sum() - 1.0) > 1e-9) {
    throw ParameterError(std::string(what) + " is not a probability vector");
  }
}

}  // namespace

Eigen::VectorXd stick_breaking(double gamma, int truncation, Rng& rng) {
  if (!(gamma > 0.0)) throw ParameterError("stick_breaking: gamma must be positive");
  if (truncation < 1) throw ParameterError("stick_breaking: truncation must be at least 1");
  Eigen::VectorXd beta(truncation + 1);
  double remaining = 1.0;
  for (int k = 0; k < truncation; ++k) {
    // Beta(1, gamma) by inversion: P(v <= x) = 1 - (1 - x)^gamma.
    const double v = 1.0 - std::pow(uniform_open(rng), 1.0 / gamma);
    beta[k] = v * remaining;
    remaining *= 1.0 - v;
  }
  beta[truncation] = remaining;
  return beta;
}

Eigen::VectorXd sticky_row_concentration(double alpha, const Eigen::Ref<const Eigen::VectorXd>& beta,
                                         double kappa, int state) {
  if (!(alpha > 0.0)) throw ParameterError("sticky_row_concentration: alpha must be positive");
  if (!(kappa >= 0.0)) throw ParameterError("sticky_row_concentration: kappa must be nonnegative");
  if (state < 1 || state > beta.size()) {
    throw ParameterError("sticky_row_concentration: state index " + std::to_string(state) +
                         " out of range");
  }
  Eigen::VectorXd c = alpha * beta;
  c[state - 1] += kappa;
  return c;
}

GaussianDensity::GaussianDensity(const GaussianEmission& emission)
    : mean_(emission.mean) {
  if (emission.cov.rows() != emission.mean.size() || emission.cov.cols() != emission.mean.size()) {
    throw ParameterError("gaussian: covariance shape does not match mean");
  }
  chol_ = strict_cholesky(emission.cov, "covariance");
  log_det_ = log_det_from_cholesky(chol_);
  log_norm_ = -0.5 * (static_cast<double>(mean_.size()) * kLog2Pi + log_det_);
}

double GaussianDensity::log_pdf(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != mean_.size()) throw ParameterError("gaussian: point dimension mismatch");
  const Eigen::VectorXd z = chol_.triangularView<Eigen::Lower>().solve(x - mean_);
  return log_norm_ - 0.5 * z.squaredNorm();
}

Eigen::RowVectorXd GaussianDensity::log_pdf_columns(const Eigen::MatrixXd& points) const {
  if (points.rows() != mean_.size()) throw ParameterError("gaussian: point dimension mismatch");
  Eigen::MatrixXd z = points.colwise() - mean_;
  chol_.triangularView<Eigen::Lower>().solveInPlace(z);
  return (log_norm_ - 0.5 * z.colwise().squaredNorm().array()).matrix();
}

double gaussian_logpdf(const Eigen::Ref<const Eigen::VectorXd>& x, const GaussianEmission& emission) {
  return GaussianDensity(emission).log_pdf(x);
}

Eigen::MatrixXd emission_log_likelihoods(const Eigen::MatrixXd& data,
                                         const std::vector<GaussianEmission>& emissions) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(emissions.size()), data.cols());
  for (std::size_t k = 0; k < emissions.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = GaussianDensity(emissions[k]).log_pdf_columns(data);
  }
  return out;
}

double joint_log_likelihood(const TimeSeriesBag& bag, const ModelState& state,
                            const Eigen::Ref<const Eigen::VectorXd>& initial) {
  const int frames = bag.frames();
  const int n = state.num_states();
  if (static_cast<int>(state.labels.size()) != frames) {
    throw ParameterError("joint_log_likelihood: label count does not match frame count");
  }
  if (initial.size() != n) throw ParameterError("joint_log_likelihood: initial has wrong size");
  for (int label : state.labels) {
    if (label < 1 || label > n) throw ParameterError("joint_log_likelihood: label out of range");
  }

  std::vector<GaussianDensity> densities;
  densities.reserve(state.emissions.size());
  for (const auto& e : state.emissions) densities.emplace_back(e);

  double total = std::log(initial[state.labels[0] - 1]);
  for (int t = 1; t < frames; ++t) {
    total += std::log(state.pi(state.labels[t - 1] - 1, state.labels[t] - 1));
  }
  if (total == -std::numeric_limits<double>::infinity()) return total;
  for (int t = 0; t < frames; ++t) {
    total += densities[state.labels[t] - 1].log_pdf(bag.data.col(t));
  }
  return total;
}

SimulatedSequence simulate(const Eigen::MatrixXd& pi, const std::vector<GaussianEmission>& emissions,
                           const Eigen::Ref<const Eigen::VectorXd>& initial, int frames, Rng& rng) {
  const Eigen::Index n = pi.rows();
  if (frames < 1) throw ParameterError("simulate: frame count must be at least 1");
  if (n < 1 || pi.cols() != n || static_cast<Eigen::Index>(emissions.size()) != n ||
      initial.size() != n) {
    throw ParameterError("simulate: model dimensions disagree");
  }
  check_probability_vector(initial, "initial distribution");
  for (Eigen::Index i = 0; i < n; ++i) check_probability_vector(pi.row(i).transpose(), "pi row");

  std::vector<Eigen::MatrixXd> chols;
  const Eigen::Index d = emissions.front().mean.size();
  for (const auto& e : emissions) {
    if (e.mean.size() != d) throw ParameterError("simulate: emissions disagree on dimension");
    chols.push_back(strict_cholesky(e.cov, "emission covariance"));
  }

  SimulatedSequence out;
  out.labels.resize(static_cast<std::size_t>(frames));
  out.data.resize(d, frames);
  Eigen::VectorXd logs = initial.array().log();
  int current = sample_log_categorical(logs, rng);
  for (int t = 0; t < frames; ++t) {
    if (t > 0) {
      logs = pi.row(current).transpose().array().log();
      current = sample_log_categorical(logs, rng);
    }
    out.labels[static_cast<std::size_t>(t)] = current + 1;
    out.data.col(t) = multivariate_normal(emissions[static_cast<std::size_t>(current)].mean,
                                          chols[static_cast<std::size_t>(current)], rng);
  }
  return out;
}

}  // namespace primseg
