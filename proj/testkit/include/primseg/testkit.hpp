#ifndef PRIMSEG_TESTKIT_HPP_
#define PRIMSEG_TESTKIT_HPP_

// Independent oracles and ground-truth generators. Nothing here calls the
// sampler; the enumeration oracle evaluates densities with its own code.

#include "primseg/ingest.hpp"
#include "primseg/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace primseg::testkit {

struct GroundTruthTrace {
  TimeSeriesBag bag;
  Labels true_labels;
  // Generator
  Eigen::MatrixXd pi;
  std::vector<GaussianEmission> emissions;
  Eigen::VectorXd initial;
  // The bag as recorded: per-topic series that resample back onto bag.data.
  std::vector<RawTopic> raw_topics;
  BehaviorDef behavior;
};

// Exact per-frame posterior marginals (T x L) by summing the joint over all
// L^T label sequences. Throws ParameterError when L^T exceeds 1e7.
Eigen::MatrixXd enumerate_marginals(const TimeSeriesBag& bag, const Eigen::MatrixXd& pi,
                                    const std::vector<GaussianEmission>& emissions,
                                    const Eigen::VectorXd& initial);

// Maximum-weight assignment of rows to columns. Returns, for each row, the
// assigned column or -1 (when there are more rows than columns).
std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights);

// Fraction of frames on which `predicted` agrees with `truth` under the best
// one-to-one matching of predicted labels to true labels.
double match_accuracy(const Labels& predicted, const Labels& truth);
double match_accuracy(const std::vector<long long>& predicted, const Labels& truth);

// Sticky Gaussian HMM sample: `states` unit-covariance Gaussians whose means
// are pairwise at least `separation` apart, self-transition probability
// `self_transition`, uniform elsewhere. Channels are "synth.x1".."synth.xD".
GroundTruthTrace make_synthetic_trace(int states, int dims, int frames, double self_transition,
                                      double separation, std::uint64_t seed, double rate_hz = 10.0);

// Four-channel steering/speed trace at 1180 / 34.405 Hz with five piecewise
// constant regimes: start and left turn, straight following, accelerate and
// change lane left, straight overtaking, slow down and right turn.
GroundTruthTrace make_maneuver_trace(std::uint64_t seed);

inline constexpr const char* kManeuverBehavior = "steering_speed";

// Writes manifest.json (with the trace's behavior), one CSV per raw topic, and
// truth.csv (frame_index,label) into `dir`.
void write_trace_bag(const GroundTruthTrace& trace, const std::filesystem::path& dir);

// Reads a frame_index,label CSV such as truth.csv or a segmentation file.
Labels read_label_csv(const std::filesystem::path& path);

}  // namespace primseg::testkit

#endif  // PRIMSEG_TESTKIT_HPP_
