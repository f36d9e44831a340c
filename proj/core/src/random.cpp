#include "primseg/random.hpp"

#include "primseg/errors.hpp"
#include "primseg/linalg.hpp"

#include <cmath>
#include <limits>

namespace primseg {

double uniform_open(Rng& rng) {
  // 53 random mantissa bits, shifted off zero.
  const std::uint64_t bits = rng() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double standard_normal(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return normal(rng);
}

double log_gamma_variate(double shape, Rng& rng) {
  if (!(shape > 0.0)) throw ParameterError("gamma shape must be positive");
  if (shape >= 1.0) {
    std::gamma_distribution<double> gamma(shape, 1.0);
    return std::log(gamma(rng));
  }
  // Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space.
  std::gamma_distribution<double> gamma(shape + 1.0, 1.0);
  const double boosted = std::log(gamma(rng));
  return boosted + std::log(uniform_open(rng)) / shape;
}

Eigen::VectorXd dirichlet(const Eigen::Ref<const Eigen::VectorXd>& concentration, Rng& rng) {
  const Eigen::Index n = concentration.size();
  if (n == 0) throw ParameterError("dirichlet: empty concentration vector");
  Eigen::VectorXd logs(n);
  bool any_positive = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = concentration[i];
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw ParameterError("dirichlet: concentration must be finite and nonnegative");
    }
    if (a == 0.0) {
      logs[i] = -std::numeric_limits<double>::infinity();
    } else {
      logs[i] = log_gamma_variate(a, rng);
      any_positive = true;
    }
  }
  if (!any_positive) throw ParameterError("dirichlet: all concentrations are zero");
  const double top = logs.maxCoeff();
  Eigen::VectorXd w = (logs.array() - top).exp();
  return w / w.sum();
}

int sample_log_categorical(const Eigen::Ref<const Eigen::VectorXd>& log_weights, Rng& rng) {
  const double top = log_weights.maxCoeff();
  if (!std::isfinite(top)) return -1;
  Eigen::VectorXd w = (log_weights.array() - top).exp();
  const double total = w.sum();
  double u = uniform_open(rng) * total;
  const Eigen::Index n = w.size();
  Eigen::Index last_positive = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    if (w[k] <= 0.0) continue;
    last_positive = k;
    u -= w[k];
    if (u <= 0.0) return static_cast<int>(k);
  }
  return static_cast<int>(last_positive);
}

int sample_binomial(int trials, double p, Rng& rng) {
  if (trials <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return trials;
  std::binomial_distribution<int> binom(trials, p);
  return binom(rng);
}

bool sample_bernoulli(double p, Rng& rng) { return uniform_open(rng) < p; }

Eigen::VectorXd multivariate_normal(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol,
                                    Rng& rng) {
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = standard_normal(rng);
  return mean + chol.triangularView<Eigen::Lower>() * z;
}

Eigen::MatrixXd inverse_wishart(double dof, const Eigen::MatrixXd& scale_chol, Rng& rng) {
  const Eigen::Index d = scale_chol.rows();
  if (!(dof > static_cast<double>(d) - 1.0)) {
    throw ParameterError("inverse_wishart: degrees of freedom must exceed d - 1");
  }
  // Bartlett factor A of a Wishart(dof, I) draw W = A A^T.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    std::chi_squared_distribution<double> chi2(dof - static_cast<double>(i));
    a(i, i) = std::sqrt(chi2(rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = standard_normal(rng);
  }
  // Sigma = U W^{-1} U^T = M M^T with M = U A^{-T}.
  Eigen::MatrixXd m = scale_chol;
  a.triangularView<Eigen::Lower>().transpose().solveInPlace<Eigen::OnTheRight>(m);
  Eigen::MatrixXd sigma = m * m.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

}  // namespace primseg
