#include "primseg/testkit.hpp"

#include "primseg/csv.hpp"
#include "primseg/errors.hpp"
#include "primseg/model.hpp"
#include "primseg/numfmt.hpp"
#include "primseg/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace primseg::testkit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Dense-formula Gaussian log-density: explicit inverse and determinant, no
// shared code with the sampler's factorized path.
struct NaiveGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
  double log_norm = 0.0;

  explicit NaiveGaussian(const GaussianEmission& e) : mean(e.mean), precision(e.cov.inverse()) {
    const double det = e.cov.determinant();
    if (!(det > 0.0)) throw ParameterError("oracle: covariance is not positive definite");
    log_norm = -0.5 * (static_cast<double>(mean.size()) * std::log(2.0 * M_PI) + std::log(det));
  }
  double operator()(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd r = x - mean;
    return log_norm - 0.5 * r.dot(precision * r);
  }
};

template <typename Label>
double accuracy_impl(const std::vector<Label>& predicted, const Labels& truth) {
  if (predicted.size() != truth.size()) throw ParameterError("match_accuracy: length mismatch");
  if (truth.empty()) throw ParameterError("match_accuracy: empty sequences");
  std::map<Label, int> pred_index;
  std::map<int, int> true_index;
  for (const auto& p : predicted) pred_index.try_emplace(p, static_cast<int>(pred_index.size()));
  for (int t : truth) true_index.try_emplace(t, static_cast<int>(true_index.size()));
  Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pred_index.size()),
                                                    static_cast<Eigen::Index>(true_index.size()));
  for (std::size_t i = 0; i < truth.size(); ++i) confusion(pred_index[predicted[i]], true_index[truth[i]]) += 1.0;
  const auto assignment = max_weight_assignment(confusion);
  double agree = 0.0;
  for (std::size_t r = 0; r < assignment.size(); ++r) {
    if (assignment[r] >= 0) agree += confusion(static_cast<Eigen::Index>(r), assignment[r]);
  }
  return agree / static_cast<double>(truth.size());
}

}  // namespace

Eigen::MatrixXd enumerate_marginals(const TimeSeriesBag& bag, const Eigen::MatrixXd& pi,
                                    const std::vector<GaussianEmission>& emissions,
                                    const Eigen::VectorXd& initial) {
  const int frames = bag.frames();
  const int n = static_cast<int>(pi.rows());
  if (frames < 1 || n < 1) throw ParameterError("enumerate_marginals: empty instance");
  if (static_cast<int>(emissions.size()) != n || initial.size() != n) {
    throw ParameterError("enumerate_marginals: model dimensions disagree");
  }
  if (std::pow(static_cast<double>(n), frames) > 1e7) {
    throw ParameterError("enumerate_marginals: L^T exceeds the 1e7 guard");
  }

  Eigen::MatrixXd emit(n, frames);
  for (int k = 0; k < n; ++k) {
    const NaiveGaussian g(emissions[static_cast<std::size_t>(k)]);
    for (int t = 0; t < frames; ++t) emit(k, t) = g(bag.data.col(t));
  }
  const Eigen::MatrixXd log_pi = pi.array().log();
  const Eigen::VectorXd log_init = initial.array().log();

  auto log_joint = [&](const std::vector<int>& seq) {
    double s = log_init[seq[0]] + emit(seq[0], 0);
    for (int t = 1; t < frames; ++t) s += log_pi(seq[t - 1], seq[t]) + emit(seq[t], t);
    return s;
  };
  auto advance = [&](std::vector<int>& seq) {
    for (int t = frames - 1; t >= 0; --t) {
      if (++seq[static_cast<std::size_t>(t)] < n) return true;
      seq[static_cast<std::size_t>(t)] = 0;
    }
    return false;
  };

  std::vector<int> seq(static_cast<std::size_t>(frames), 0);
  double top = -kInf;
  do {
    top = std::max(top, log_joint(seq));
  } while (advance(seq));
  if (!std::isfinite(top)) throw ParameterError("enumerate_marginals: every sequence has zero probability");

  Eigen::MatrixXd marg = Eigen::MatrixXd::Zero(frames, n);
  std::fill(seq.begin(), seq.end(), 0);
  do {
    const double w = std::exp(log_joint(seq) - top);
    for (int t = 0; t < frames; ++t) marg(t, seq[static_cast<std::size_t>(t)]) += w;
  } while (advance(seq));
  for (int t = 0; t < frames; ++t) marg.row(t) /= marg.row(t).sum();
  return marg;
}

std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights) {
  const int rows = static_cast<int>(weights.rows());
  const int cols = static_cast<int>(weights.cols());
  const int n = std::max(rows, cols);
  if (n == 0) return {};
  const double top = weights.size() > 0 ? weights.maxCoeff() : 0.0;
  // Square min-cost matrix, 1-based for the potential method; padding costs `top`.
  std::vector<std::vector<double>> cost(static_cast<std::size_t>(n + 1), std::vector<double>(static_cast<std::size_t>(n + 1), 0.0));
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      const bool real = i <= rows && j <= cols;
      cost[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = real ? top - weights(i - 1, j - 1) : top;
    }
  }
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<int> match(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), kInf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = match[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) continue;
        const double cur = cost[static_cast<std::size_t>(i0)][sj] - u[static_cast<std::size_t>(i0)] - v[sj];
        if (cur < minv[sj]) {
          minv[sj] = cur;
          way[sj] = j0;
        }
        if (minv[sj] < delta) {
          delta = minv[sj];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        const auto sj = static_cast<std::size_t>(j);
        if (used[sj]) {
          u[static_cast<std::size_t>(match[sj])] += delta;
          v[sj] -= delta;
        } else {
          minv[sj] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= n; ++j) {
    const int i = match[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= rows && j <= cols) out[static_cast<std::size_t>(i - 1)] = j - 1;
  }
  return out;
}

double match_accuracy(const Labels& predicted, const Labels& truth) { return accuracy_impl(predicted, truth); }

double match_accuracy(const std::vector<long long>& predicted, const Labels& truth) {
  return accuracy_impl(predicted, truth);
}

GroundTruthTrace make_synthetic_trace(int states, int dims, int frames, double self_transition,
                                      double separation, std::uint64_t seed, double rate_hz) {
  if (states < 1 || dims < 1 || frames < 1) throw ParameterError("synthetic trace needs states, dims, frames >= 1");
  if (!(self_transition >= 0.0 && self_transition <= 1.0)) throw ParameterError("self_transition must lie in [0, 1]");
  if (!(separation >= 0.0)) throw ParameterError("separation must be nonnegative");
  Rng rng(seed);

  GroundTruthTrace trace;
  // Means drawn in a box and rejected until pairwise separated.
  const double half_width = separation * std::max(1.0, static_cast<double>(states));
  for (int k = 0; k < states; ++k) {
    Eigen::VectorXd mean(dims);
    for (int attempt = 0;; ++attempt) {
      for (int c = 0; c < dims; ++c) mean[c] = (2.0 * uniform_open(rng) - 1.0) * half_width;
      bool ok = true;
      for (const auto& e : trace.emissions) ok = ok && (e.mean - mean).norm() >= separation;
      if (ok) break;
      if (attempt > 100000) throw ParameterError("could not place separated means");
    }
    trace.emissions.push_back({mean, Eigen::MatrixXd::Identity(dims, dims)});
  }
  trace.pi = states == 1 ? Eigen::MatrixXd::Ones(1, 1)
                         : Eigen::MatrixXd::Constant(states, states, (1.0 - self_transition) / (states - 1));
  if (states > 1) trace.pi.diagonal().setConstant(self_transition);
  trace.initial = Eigen::VectorXd::Constant(states, 1.0 / states);

  const SimulatedSequence sim = simulate(trace.pi, trace.emissions, trace.initial, frames, rng);
  trace.true_labels = sim.labels;

  trace.behavior.name = "synth";
  trace.behavior.target_rate_hz = rate_hz;
  RawTopic topic;
  topic.topic_name = "synth";
  for (int c = 0; c < dims; ++c) {
    const std::string column = "x" + std::to_string(c + 1);
    trace.behavior.required_channels.push_back("synth." + column);
    topic.column_names.push_back(column);
    topic.columns.emplace_back(sim.data.row(c).begin(), sim.data.row(c).end());
  }
  trace.bag.bag_id = "synth-" + std::to_string(seed);
  trace.bag.channels = trace.behavior.required_channels;
  trace.bag.rate_hz = rate_hz;
  trace.bag.start_time = 1600000000.0;
  trace.bag.data = sim.data;
  for (int t = 0; t < frames; ++t) topic.timestamps.push_back(frame_time(trace.bag.start_time, rate_hz, t));
  trace.raw_topics.push_back(std::move(topic));
  return trace;
}

GroundTruthTrace make_maneuver_trace(std::uint64_t seed) {
  constexpr int kFrames = 1180;
  constexpr double kDuration = 34.405;
  const double rate = kFrames / kDuration;
  Rng rng(seed);

  // angle [deg], command [deg], torque [Nm], speed [m/s]
  const std::vector<std::vector<double>> means = {
      {180.0, 180.0, 2.0, 4.0},     // start, left turn
      {0.0, 0.0, 0.0, 10.0},        // straight, following
      {35.0, 35.0, 0.8, 14.0},      // accelerate, change lane left
      {0.0, 0.0, 0.0, 16.5},        // straight, overtaking
      {-170.0, -170.0, -2.0, 5.0},  // slow down, right turn
  };
  const std::vector<double> noise = {8.0, 8.0, 0.3, 0.6};
  const std::vector<double> base_share = {0.16, 0.22, 0.16, 0.26, 0.20};

  std::vector<double> share;
  double total = 0.0;
  for (double s : base_share) {
    share.push_back(s * (0.8 + 0.4 * uniform_open(rng)));
    total += share.back();
  }
  std::vector<int> lengths;
  int used = 0;
  for (std::size_t r = 0; r + 1 < share.size(); ++r) {
    lengths.push_back(static_cast<int>(std::lround(kFrames * share[r] / total)));
    used += lengths.back();
  }
  lengths.push_back(kFrames - used);

  GroundTruthTrace trace;
  const int d = 4;
  for (std::size_t r = 0; r < means.size(); ++r) {
    Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXd>(means[r].data(), d);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (int c = 0; c < d; ++c) cov(c, c) = noise[static_cast<std::size_t>(c)] * noise[static_cast<std::size_t>(c)];
    trace.emissions.push_back({mean, cov});
  }
  const int regimes = static_cast<int>(means.size());
  trace.pi = Eigen::MatrixXd::Zero(regimes, regimes);
  for (int r = 0; r < regimes; ++r) {
    const double stay = 1.0 - 1.0 / lengths[static_cast<std::size_t>(r)];
    trace.pi(r, r) = r + 1 < regimes ? stay : 1.0;
    if (r + 1 < regimes) trace.pi(r, r + 1) = 1.0 - stay;
  }
  trace.initial = Eigen::VectorXd::Zero(regimes);
  trace.initial[0] = 1.0;

  Eigen::MatrixXd data(d, kFrames);
  int t = 0;
  for (int r = 0; r < regimes; ++r) {
    for (int i = 0; i < lengths[static_cast<std::size_t>(r)]; ++i, ++t) {
      trace.true_labels.push_back(r + 1);
      const auto& m = means[static_cast<std::size_t>(r)];
      const double angle = m[0] + noise[0] * standard_normal(rng);
      data(0, t) = angle;
      data(1, t) = m[1] + noise[1] * standard_normal(rng);
      data(2, t) = m[2] + noise[2] * standard_normal(rng);
      data(3, t) = m[3] + noise[3] * standard_normal(rng);
    }
  }

  trace.behavior.name = kManeuverBehavior;
  trace.behavior.target_rate_hz = rate;
  trace.behavior.required_channels = {"steering.steering_wheel_angle", "steering.steering_wheel_angle_cmd",
                                      "steering.steering_wheel_torque", "vehicle.speed"};
  trace.bag.bag_id = "maneuver-" + std::to_string(seed);
  trace.bag.channels = trace.behavior.required_channels;
  trace.bag.rate_hz = rate;
  trace.bag.start_time = 1530000000.0;
  trace.bag.data = data;

  // Steering is logged on the grid; speed at twice the grid rate, with the
  // in-between samples halfway between neighbours plus sensor noise.
  RawTopic steering;
  steering.topic_name = "steering";
  steering.column_names = {"steering_wheel_angle", "steering_wheel_angle_cmd", "steering_wheel_torque"};
  steering.columns.resize(3);
  for (int k = 0; k < kFrames; ++k) {
    steering.timestamps.push_back(frame_time(trace.bag.start_time, rate, k));
    for (int c = 0; c < 3; ++c) steering.columns[static_cast<std::size_t>(c)].push_back(data(c, k));
  }
  RawTopic vehicle;
  vehicle.topic_name = "vehicle";
  vehicle.column_names = {"speed"};
  vehicle.columns.resize(1);
  for (int j = 0; j < 2 * kFrames - 1; ++j) {
    vehicle.timestamps.push_back(frame_time(trace.bag.start_time, 2.0 * rate, j));
    const double v = j % 2 == 0 ? data(3, j / 2)
                                : 0.5 * (data(3, j / 2) + data(3, j / 2 + 1)) + 0.1 * standard_normal(rng);
    vehicle.columns[0].push_back(v);
  }
  trace.raw_topics = {std::move(steering), std::move(vehicle)};
  return trace;
}

void write_trace_bag(const GroundTruthTrace& trace, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  BagManifest manifest;
  manifest.bag_id = trace.bag.bag_id;
  manifest.start_time = trace.bag.start_time;
  manifest.behaviors.push_back(trace.behavior);
  for (const auto& topic : trace.raw_topics) {
    const std::string file = topic.topic_name + ".csv";
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw ParameterError("cannot write " + (dir / file).string());
    write_topic_csv(out, topic);
    manifest.topics.push_back({topic.topic_name, file});
  }
  write_bag_manifest(dir / "manifest.json", manifest);

  std::ofstream truth(dir / "truth.csv", std::ios::binary | std::ios::trunc);
  truth << "frame_index,label\n";
  for (std::size_t t = 0; t < trace.true_labels.size(); ++t) truth << t << ',' << trace.true_labels[t] << '\n';
}

Labels read_label_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ":0: cannot open file");
  const csv::Document doc = csv::read(in, path.string());
  if (doc.header != std::vector<std::string>{"frame_index", "label"}) {
    throw ParseError(path.string() + ":1: expected header frame_index,label");
  }
  Labels labels(doc.rows.size());
  for (const auto& row : doc.rows) {
    const auto idx = parse_integer(row.fields[0]);
    const auto label = parse_integer(row.fields[1]);
    if (!idx || !label || *idx < 0 || *idx >= static_cast<long long>(labels.size())) {
      throw ParseError(path.string() + ":" + std::to_string(row.line) + ": bad label row");
    }
    labels[static_cast<std::size_t>(*idx)] = static_cast<int>(*label);
  }
  return labels;
}

}  // namespace primseg::testkit
