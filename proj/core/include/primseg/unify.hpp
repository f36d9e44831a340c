#ifndef PRIMSEG_UNIFY_HPP_
#define PRIMSEG_UNIFY_HPP_

#include "primseg/store.hpp"
#include "primseg/types.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace primseg {

struct UnifyConfig {
  double min_duration_s = 0.5;
  int min_occurrences = 2;
  double merge_threshold = 1.0;  // symmetric KL cutoff
  int window_runs = 1;           // consecutive runs per scenario window

  void validate() const;
  // Keys: min_duration_s, min_occurrences, merge_threshold, window_runs; all
  // optional, unknown keys rejected with ParameterError.
  static UnifyConfig from_json(const std::string& text);
  static UnifyConfig from_file(const std::filesystem::path& path);
};

// Maximal run of equal labels; frames [start, end] inclusive.
template <typename Label>
struct Run {
  Label label;
  long long start;
  long long end;

  long long length() const { return end - start + 1; }
};

template <typename Label>
std::vector<Run<Label>> run_length_encode(const std::vector<Label>& labels) {
  std::vector<Run<Label>> runs;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (!runs.empty() && runs.back().label == labels[t]) {
      runs.back().end = static_cast<long long>(t);
    } else {
      runs.push_back({labels[t], static_cast<long long>(t), static_cast<long long>(t)});
    }
  }
  return runs;
}

// Absorbs every run shorter than ceil(min_duration_s * rate_hz) frames into the
// preceding run (a short leading run into the following one) until none is
// left. A sequence with a single run is returned unchanged.
Labels filter_short_runs(const Labels& labels, double rate_hz, double min_duration_s);
std::vector<RowId> filter_short_runs(const std::vector<RowId>& labels, double rate_hz, double min_duration_s);

// KL(a||b) + KL(b||a) for Gaussians. Exactly symmetric in its arguments.
double primitive_distance(const GaussianEmission& a, const GaussianEmission& b);

struct PrimitiveStats {
  RowId primitive_id = 0;
  GaussianEmission emission;
  long long frames = 0;
};

// Frame-weighted moment-matched Gaussian of the members: pooled mean and
// pooled second moment minus the outer product of the pooled mean.
GaussianEmission pooled_gaussian(const std::vector<PrimitiveStats>& members);

struct MergeResult {
  std::map<RowId, RowId> mapping;               // every input id -> canonical id
  std::map<RowId, PrimitiveStats> canonical;    // canonical id -> pooled stats
};

// Single-linkage agglomeration: pairs closer than `threshold` are merged in
// order of (distance, lower id, higher id). The canonical id of a cluster is
// its lowest primitive id.
MergeResult merge_primitives(const std::vector<PrimitiveStats>& primitives, double threshold);

struct ScenarioCandidate {
  std::vector<RowId> label_sequence;
  long long start_frame = 0;
  long long end_frame = 0;
};

// Chunks the run sequence of one bag into consecutive windows of
// `window_runs` runs (the last window may hold fewer). The windows tile the bag.
std::vector<ScenarioCandidate> compose_scenarios(const std::vector<RowId>& frame_labels, int window_runs);

struct UnifyReport {
  int bags = 0;
  int primitives_before = 0;
  int primitives_after = 0;
  int scenarios = 0;
  int scenario_instances = 0;
  int new_scenarios = 0;
};

// Runs the whole unification stage for one behavior: duration filter,
// similarity merge, occurrence filter, and scenario composition/matching,
// rewriting the behavior's Primitive, PrimitiveInstance, Scenario and
// ScenarioInstance rows.
UnifyReport unify_behavior(Catalog& catalog, RowId behavior_id, const UnifyConfig& config);

// Per-frame primitive ids of one bag under one behavior, rebuilt from its
// PrimitiveInstance rows. Throws IntegrityError unless the instances tile the bag.
std::vector<RowId> bag_primitive_labels(const Catalog& catalog, const std::string& bag_id, RowId behavior_id);

}  // namespace primseg

#endif  // PRIMSEG_UNIFY_HPP_
