#include "primseg/types.hpp"

#include "primseg/errors.hpp"
#include "primseg/linalg.hpp"

#include <cmath>
#include <set>
#include <sstream>

namespace primseg {

void TimeSeriesBag::validate() const {
  if (data.rows() < 1 || data.cols() < 1) {
    throw ParameterError("bag '" + bag_id + "' is empty (need at least one channel and one frame)");
  }
  if (static_cast<Eigen::Index>(channels.size()) != data.rows()) {
    throw ParameterError("bag '" + bag_id + "': channel count does not match data rows");
  }
  std::set<std::string> seen;
  for (const auto& c : channels) {
    if (!seen.insert(c).second) throw ParameterError("bag '" + bag_id + "': duplicate channel " + c);
  }
  if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
    throw ParameterError("bag '" + bag_id + "': rate must be positive");
  }
  if (!data.allFinite()) throw ParameterError("bag '" + bag_id + "' contains non-finite values");
}

void NiwPrior::validate() const {
  const int d = dims();
  if (d < 1) throw ParameterError("NIW prior has no dimensions");
  if (psi0.rows() != d || psi0.cols() != d) throw ParameterError("NIW psi0 has wrong shape");
  if (!(scale0 > 0.0)) throw ParameterError("NIW scale0 must be positive");
  if (!(dof0 > d - 1.0)) throw ParameterError("NIW dof0 must exceed d - 1");
  if (!mean0.allFinite() || !psi0.allFinite()) throw ParameterError("NIW prior is not finite");
  if ((psi0 - psi0.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + psi0.cwiseAbs().maxCoeff())) {
    throw ParameterError("NIW psi0 is not symmetric");
  }
  const double lo = smallest_eigenvalue(psi0);
  if (!(lo > 0.0)) {
    std::ostringstream msg;
    msg << "NIW psi0 is not positive definite (smallest eigenvalue " << lo << ")";
    throw ParameterError(msg.str());
  }
}

NiwPrior NiwPrior::from_data(const Eigen::MatrixXd& data) {
  const Eigen::Index d = data.rows();
  const double n = static_cast<double>(data.cols());
  if (d < 1 || data.cols() < 1) throw ParameterError("cannot derive a prior from empty data");
  NiwPrior prior;
  prior.mean0 = data.rowwise().mean();
  const Eigen::MatrixXd centered = data.colwise() - prior.mean0;
  prior.psi0 = (centered * centered.transpose()) / n;
  prior.scale0 = 1.0;
  prior.dof0 = static_cast<double>(d) + 2.0;

  const double level = std::max(prior.psi0.trace() / static_cast<double>(d), 1.0);
  if (smallest_eigenvalue(prior.psi0) <= 1e-8 * level) {
    prior.psi0.diagonal().array() += 1e-6 * level;
  }
  return prior;
}

void HyperParams::validate() const {
  if (!(gamma > 0.0)) throw ParameterError("gamma must be positive");
  if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ParameterError("kappa must be nonnegative");
  if (truncation < 1) throw ParameterError("truncation_L must be at least 1");
  if (emission_prior.dims() > 0) emission_prior.validate();
}

Eigen::VectorXd ModelState::initial_distribution() const {
  const Eigen::Index n = pi.rows();
  Eigen::VectorXd init = beta.head(n);
  const double total = init.sum();
  if (!(total > 0.0)) return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  return init / total;
}

void ModelState::validate(double tol) const {
  const Eigen::Index n = pi.rows();
  if (pi.cols() != n || beta.size() != n + 1 || static_cast<Eigen::Index>(emissions.size()) != n) {
    throw ParameterError("model state has inconsistent dimensions");
  }
  if ((beta.array() < 0.0).any() || std::abs(beta.sum() - 1.0) > tol) {
    throw ParameterError("beta is not a probability vector");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if ((pi.row(i).array() < 0.0).any() || std::abs(pi.row(i).sum() - 1.0) > tol) {
      throw ParameterError("transition row " + std::to_string(i + 1) + " is not stochastic");
    }
  }
  for (int label : labels) {
    if (label < 1 || label > n) throw ParameterError("label out of range: " + std::to_string(label));
  }
}

}  // namespace primseg
