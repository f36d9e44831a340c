#include "primseg/inference.hpp"

#include "primseg/errors.hpp"
#include "primseg/linalg.hpp"
#include "primseg/model.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>

namespace primseg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Makes `cov` safe for strict factorization, lifting it once by a small ridge
// if needed.
void stabilize_covariance(Eigen::MatrixXd& cov, const std::string& what) {
  cov = 0.5 * (cov + cov.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success && cov.allFinite()) return;
  const double d = static_cast<double>(cov.rows());
  Eigen::MatrixXd lifted = cov;
  lifted.diagonal().array() += 1e-9 * std::abs(cov.trace()) / d;
  Eigen::LLT<Eigen::MatrixXd> retry(lifted);
  if (retry.info() != Eigen::Success || !lifted.allFinite()) {
    throw NumericError(what + ": sampled covariance is not positive definite (smallest eigenvalue " +
                       std::to_string(smallest_eigenvalue(cov)) + ")");
  }
  cov = lifted;
}

void check_labels(const Labels& labels, int num_states) {
  for (int label : labels) {
    if (label < 1 || label > num_states) {
      throw ParameterError("label " + std::to_string(label) + " outside [1, " +
                           std::to_string(num_states) + "]");
    }
  }
}

}  // namespace

void GibbsConfig::validate() const {
  if (iterations < 1) throw ParameterError("iterations must be at least 1");
  if (burn_in < 0 || burn_in >= iterations) throw ParameterError("burn_in must lie in [0, iterations)");
  if (store_every < 1) throw ParameterError("store_every must be at least 1");
  hyper.validate();
}

namespace {

using json = nlohmann::json;

Eigen::VectorXd json_vector(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd json_matrix(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != n) {
      throw ParameterError("psi0 must be a square matrix");
    }
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  }
  return m;
}

NiwPrior prior_from_json(const json& j) {
  NiwPrior prior;
  bool has_mean = false, has_psi = false, has_dof = false;
  for (const auto& [key, value] : j.items()) {
    if (key == "mean0") prior.mean0 = json_vector(value), has_mean = true;
    else if (key == "scale0") prior.scale0 = value.get<double>();
    else if (key == "dof0") prior.dof0 = value.get<double>(), has_dof = true;
    else if (key == "psi0") prior.psi0 = json_matrix(value), has_psi = true;
    else throw ParameterError("unknown emission_prior key '" + key + "'");
  }
  if (!has_mean || !has_psi) throw ParameterError("emission_prior needs mean0 and psi0");
  if (!has_dof) prior.dof0 = static_cast<double>(prior.dims()) + 2.0;
  prior.validate();
  return prior;
}

HyperParams hyper_from_json(const json& j) {
  HyperParams h;
  for (const auto& [key, value] : j.items()) {
    if (key == "gamma") h.gamma = value.get<double>();
    else if (key == "alpha") h.alpha = value.get<double>();
    else if (key == "kappa") h.kappa = value.get<double>();
    else if (key == "truncation_L") h.truncation = value.get<int>();
    else if (key == "diagonal_covariance") h.diagonal_covariance = value.get<bool>();
    else if (key == "emission_prior") h.emission_prior = prior_from_json(value);
    else throw ParameterError("unknown hyper key '" + key + "'");
  }
  return h;
}

}  // namespace

GibbsConfig GibbsConfig::from_json(const std::string& text) {
  GibbsConfig cfg;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ParameterError("gibbs config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "iterations") cfg.iterations = value.get<int>();
      else if (key == "burn_in") cfg.burn_in = value.get<int>();
      else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
      else if (key == "store_every") cfg.store_every = value.get<int>();
      else if (key == "hyper") cfg.hyper = hyper_from_json(value);
      else throw ParameterError("unknown gibbs config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("invalid gibbs config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

GibbsConfig GibbsConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open gibbs config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

NiwPosterior niw_posterior(const NiwPrior& prior, const Eigen::MatrixXd& points) {
  const Eigen::Index d = prior.mean0.size();
  if (points.cols() > 0 && points.rows() != d) throw ParameterError("niw_posterior: dimension mismatch");
  NiwPosterior post{prior.mean0, prior.scale0, prior.dof0, prior.psi0};
  const double n = static_cast<double>(points.cols());
  if (points.cols() == 0) return post;

  const Eigen::VectorXd xbar = points.rowwise().mean();
  const Eigen::MatrixXd centered = points.colwise() - xbar;
  const Eigen::MatrixXd scatter = centered * centered.transpose();
  const Eigen::VectorXd shift = xbar - prior.mean0;

  post.scale = prior.scale0 + n;
  post.dof = prior.dof0 + n;
  post.mean = (prior.scale0 * prior.mean0 + n * xbar) / post.scale;
  post.psi = prior.psi0 + scatter + (prior.scale0 * n / post.scale) * (shift * shift.transpose());
  post.psi = 0.5 * (post.psi + post.psi.transpose());
  return post;
}

GaussianEmission sample_niw(const NiwPosterior& posterior, bool diagonal, Rng& rng) {
  const Eigen::Index d = posterior.mean.size();
  GaussianEmission out;
  if (diagonal) {
    // Univariate marginals of the IW have dof - d + 1 degrees of freedom.
    const double dof = posterior.dof - static_cast<double>(d) + 1.0;
    out.cov = Eigen::MatrixXd::Zero(d, d);
    out.mean.resize(d);
    for (Eigen::Index c = 0; c < d; ++c) {
      const double psi = posterior.psi(c, c);
      if (!(psi > 0.0)) throw NumericError("posterior scale is not positive on channel " + std::to_string(c));
      std::chi_squared_distribution<double> chi2(dof);
      const double var = psi / chi2(rng);
      out.cov(c, c) = var;
      out.mean[c] = posterior.mean[c] + std::sqrt(var / posterior.scale) * standard_normal(rng);
    }
    stabilize_covariance(out.cov, "diagonal emission");
    return out;
  }
  const Eigen::MatrixXd psi_chol = spd_cholesky(posterior.psi, "posterior scale matrix");
  out.cov = inverse_wishart(posterior.dof, psi_chol, rng);
  stabilize_covariance(out.cov, "emission");
  const Eigen::MatrixXd cov_chol = spd_cholesky(out.cov / posterior.scale, "mean covariance");
  out.mean = multivariate_normal(posterior.mean, cov_chol, rng);
  return out;
}

Eigen::MatrixXd transition_counts(const Labels& labels, int num_states) {
  check_labels(labels, num_states);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(num_states, num_states);
  for (std::size_t t = 1; t < labels.size(); ++t) counts(labels[t - 1] - 1, labels[t] - 1) += 1.0;
  return counts;
}

Labels resample_labels(const TimeSeriesBag& bag, const ModelState& state,
                       const Eigen::Ref<const Eigen::VectorXd>& initial, Rng& rng) {
  const int frames = bag.frames();
  const int n = state.num_states();
  if (frames < 1) throw ParameterError("resample_labels: empty bag");
  if (static_cast<int>(state.emissions.size()) != n || initial.size() != n) {
    throw ParameterError("resample_labels: model dimensions disagree");
  }

  const Eigen::MatrixXd loglik = emission_log_likelihoods(bag.data, state.emissions);
  const Eigen::MatrixXd log_pi = state.pi.array().log().matrix();

  // messages(k, t) = log p(o_{t+1:T} | p_t = k) up to a per-frame constant.
  Eigen::MatrixXd messages(n, frames);
  messages.col(frames - 1).setZero();
  Eigen::VectorXd weights(n);
  for (int t = frames - 2; t >= 0; --t) {
    weights = loglik.col(t + 1) + messages.col(t + 1);
    const double top = weights.maxCoeff();
    if (!std::isfinite(top)) {
      throw NumericError("backward message vanished at frame " + std::to_string(t + 1));
    }
    weights = (weights.array() - top).exp();
    const Eigen::VectorXd summed = state.pi * weights;
    messages.col(t) = summed.array().log();
    const double norm = messages.col(t).maxCoeff();
    if (!std::isfinite(norm)) {
      throw NumericError("backward message vanished at frame " + std::to_string(t));
    }
    messages.col(t).array() -= norm;
  }

  Labels labels(static_cast<std::size_t>(frames));
  weights = initial.array().log().matrix() + loglik.col(0) + messages.col(0);
  int current = sample_log_categorical(weights, rng);
  for (int t = 0;; ++t) {
    if (current < 0) throw NumericError("forward sampling weights vanished at frame " + std::to_string(t));
    labels[static_cast<std::size_t>(t)] = current + 1;
    if (t + 1 == frames) break;
    weights = log_pi.row(current).transpose() + loglik.col(t + 1) + messages.col(t + 1);
    current = sample_log_categorical(weights, rng);
  }
  return labels;
}

std::vector<GaussianEmission> resample_emissions(const TimeSeriesBag& bag, const Labels& labels,
                                                 int num_states, const NiwPrior& prior,
                                                 bool diagonal, Rng& rng) {
  if (static_cast<int>(labels.size()) != bag.frames()) {
    throw ParameterError("resample_emissions: label count does not match frame count");
  }
  if (prior.dims() != bag.dims()) throw ParameterError("resample_emissions: prior dimension mismatch");
  check_labels(labels, num_states);

  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(num_states));
  for (std::size_t t = 0; t < labels.size(); ++t) {
    members[static_cast<std::size_t>(labels[t] - 1)].push_back(static_cast<Eigen::Index>(t));
  }

  std::vector<GaussianEmission> out;
  out.reserve(static_cast<std::size_t>(num_states));
  for (int k = 0; k < num_states; ++k) {
    const auto& idx = members[static_cast<std::size_t>(k)];
    Eigen::MatrixXd points(bag.dims(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) points.col(static_cast<Eigen::Index>(j)) = bag.data.col(idx[j]);
    try {
      out.push_back(sample_niw(niw_posterior(prior, points), diagonal, rng));
    } catch (const NumericError& e) {
      throw NumericError("state " + std::to_string(k + 1) + ": " + e.what());
    }
  }
  return out;
}

Eigen::MatrixXd resample_transitions(const Labels& labels, const Eigen::VectorXd& beta,
                                     const HyperParams& hyper, Rng& rng) {
  const int n = hyper.truncation;
  if (beta.size() != n + 1) throw ParameterError("resample_transitions: beta must have L+1 entries");
  const Eigen::MatrixXd counts = transition_counts(labels, n);
  Eigen::MatrixXd pi(n, n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd conc =
        sticky_row_concentration(hyper.alpha, beta.head(n), hyper.kappa, i + 1) + counts.row(i).transpose();
    pi.row(i) = dirichlet(conc, rng).transpose();
  }
  return pi;
}

TableCounts sample_table_counts(const Eigen::MatrixXd& counts, const Eigen::VectorXd& beta,
                                const HyperParams& hyper, Rng& rng) {
  const Eigen::Index n = counts.rows();
  if (counts.cols() != n || beta.size() < n) throw ParameterError("sample_table_counts: shape mismatch");
  TableCounts out{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const int customers = static_cast<int>(counts(j, k));
      if (customers == 0) continue;
      const double conc = hyper.alpha * beta[k] + (j == k ? hyper.kappa : 0.0);
      int tables = 0;
      for (int i = 0; i < customers; ++i) {
        if (sample_bernoulli(conc / (static_cast<double>(i) + conc), rng)) ++tables;
      }
      out.tables(j, k) = tables;
    }
  }
  out.corrected = out.tables;
  const double rho = hyper.rho();
  for (Eigen::Index j = 0; j < n; ++j) {
    const int diag = static_cast<int>(out.tables(j, j));
    if (diag == 0 || rho <= 0.0) continue;
    const double p = rho / (rho + beta[j] * (1.0 - rho));
    const int w = sample_binomial(diag, p, rng);
    out.overrides[j] = w;
    out.corrected(j, j) = diag - w;
  }
  return out;
}

Eigen::VectorXd resample_beta(const Labels& labels, const Eigen::VectorXd& beta,
                              const HyperParams& hyper, Rng& rng) {
  const int n = hyper.truncation;
  if (beta.size() != n + 1) throw ParameterError("resample_beta: beta must have L+1 entries");
  const TableCounts tc = sample_table_counts(transition_counts(labels, n), beta, hyper, rng);
  const Eigen::VectorXd conc =
      tc.corrected.colwise().sum().transpose().array() + hyper.gamma / static_cast<double>(n);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n + 1);
  out.head(n) = dirichlet(conc, rng);
  return out;
}

int count_used_states(const Labels& labels) {
  return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
}

void relabel_by_first_appearance(ModelState& state) {
  const int n = state.num_states();
  std::vector<int> order;  // old 0-based index in new order
  std::vector<bool> placed(static_cast<std::size_t>(n), false);
  for (int label : state.labels) {
    if (!placed[static_cast<std::size_t>(label - 1)]) {
      placed[static_cast<std::size_t>(label - 1)] = true;
      order.push_back(label - 1);
    }
  }
  for (int k = 0; k < n; ++k) {
    if (!placed[static_cast<std::size_t>(k)]) order.push_back(k);
  }
  std::vector<int> new_index(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) new_index[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i;

  Eigen::VectorXd beta = state.beta;
  Eigen::MatrixXd pi(n, n);
  std::vector<GaussianEmission> emissions(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int old_i = order[static_cast<std::size_t>(i)];
    beta[i] = state.beta[old_i];
    emissions[static_cast<std::size_t>(i)] = state.emissions[static_cast<std::size_t>(old_i)];
    for (int j = 0; j < n; ++j) pi(i, j) = state.pi(old_i, order[static_cast<std::size_t>(j)]);
  }
  for (int& label : state.labels) label = new_index[static_cast<std::size_t>(label - 1)] + 1;
  state.beta = std::move(beta);
  state.pi = std::move(pi);
  state.emissions = std::move(emissions);
}

PosteriorSummary fit(const TimeSeriesBag& bag, const GibbsConfig& config, const SweepObserver& observer) {
  bag.validate();
  config.validate();
  const HyperParams& hyper = config.hyper;
  const int n = hyper.truncation;

  const NiwPrior prior =
      hyper.emission_prior.dims() > 0 ? hyper.emission_prior : NiwPrior::from_data(bag.data);
  if (prior.dims() != bag.dims()) throw ParameterError("emission prior dimension does not match bag");
  prior.validate();

  Rng rng(config.seed);
  ModelState state;
  state.beta = stick_breaking(hyper.gamma, n, rng);
  // Start over-segmented: L contiguous blocks, each state fitted to its own
  // block. Surplus states are emptied by the sweeps far more readily than a
  // state straddling two regimes is split.
  const int frames = bag.frames();
  state.labels.resize(static_cast<std::size_t>(frames));
  for (int t = 0; t < frames; ++t) {
    state.labels[static_cast<std::size_t>(t)] =
        static_cast<int>(static_cast<long long>(t) * n / frames) + 1;
  }
  state.emissions = resample_emissions(bag, state.labels, n, prior, hyper.diagonal_covariance, rng);
  state.pi = resample_transitions(state.labels, state.beta, hyper, rng);
  state.beta = resample_beta(state.labels, state.beta, hyper, rng);

  PosteriorSummary summary;
  summary.log_joint_trace.reserve(static_cast<std::size_t>(config.iterations));
  for (int it = 0; it < config.iterations; ++it) {
    try {
      state.labels = resample_labels(bag, state, state.initial_distribution(), rng);
      state.emissions = resample_emissions(bag, state.labels, n, prior, hyper.diagonal_covariance, rng);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " (iteration " + std::to_string(it) + ")");
    }
    state.pi = resample_transitions(state.labels, state.beta, hyper, rng);
    state.beta = resample_beta(state.labels, state.beta, hyper, rng);
    state.log_joint = joint_log_likelihood(bag, state, state.initial_distribution());
    summary.log_joint_trace.push_back(state.log_joint);
    if (observer) observer(it, state);

    if (config.retains(it)) {
      ++summary.samples_kept;
      if (summary.map_iteration < 0 || state.log_joint > summary.map_state.log_joint) {
        summary.map_state = state;
        summary.map_iteration = it;
      }
    }
  }
  relabel_by_first_appearance(summary.map_state);
  summary.used_states = count_used_states(summary.map_state.labels);
  return summary;
}

}  // namespace primseg
