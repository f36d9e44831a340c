#ifndef PRIMSEG_INGEST_HPP_
#define PRIMSEG_INGEST_HPP_

#include "primseg/types.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace primseg {

// One sensor topic as exported from a recording: a strictly increasing
// timestamp column and any number of named numeric series.
struct RawTopic {
  std::string topic_name;
  std::vector<double> timestamps;
  std::vector<std::string> column_names;
  std::vector<std::vector<double>> columns;

  int frames() const { return static_cast<int>(timestamps.size()); }
  // Index of `name` in column_names, or -1.
  int column_index(const std::string& name) const;

  bool operator==(const RawTopic&) const = default;
};

// A named channel subset ("topic.column" selectors) and the grid rate it is
// segmented at.
struct BehaviorDef {
  std::string name;
  std::vector<std::string> required_channels;
  double target_rate_hz = 0.0;

  void validate() const;
};

inline constexpr double kDefaultMaxGapSeconds = 0.5;

// Parses a topic CSV: header with a `timestamp` column and at least one other
// numeric column. Rows are sorted by timestamp; for duplicate timestamps the
// last row in file order wins. `source` names the input in error messages.
RawTopic parse_topic_csv(std::istream& in, const std::string& topic_name,
                         const std::string& source = "<stream>");
RawTopic parse_topic_csv(const std::filesystem::path& path, const std::string& topic_name);

// Writes `timestamp,<columns...>` with shortest round-trip number rendering.
void write_topic_csv(std::ostream& out, const RawTopic& topic);

// Timestamp of grid frame k: start + k / rate.
inline double frame_time(double start, double rate_hz, int k) {
  return start + static_cast<double>(k) / rate_hz;
}

// Linearly interpolates every required channel onto the uniform grid spanning
// the common window of the topics involved. Throws RangeError for an empty
// overlap and GapError when a topic has consecutive samples further apart
// than max_gap_s inside the window.
TimeSeriesBag resample_uniform(const std::vector<RawTopic>& topics, const BehaviorDef& behavior,
                               const std::string& bag_id, double max_gap_s = kDefaultMaxGapSeconds);

struct NormalizationRecord {
  std::vector<double> mean;
  std::vector<double> stddev;  // population (N) denominator
  std::vector<bool> constant;

  // Multiplier used when inverting channel c: stddev, or 1 for constant channels.
  double scale(std::size_t c) const { return constant[c] ? 1.0 : stddev[c]; }
};

std::pair<TimeSeriesBag, NormalizationRecord> normalize_zscore(const TimeSeriesBag& bag);
TimeSeriesBag denormalize(const TimeSeriesBag& bag, const NormalizationRecord& record);
GaussianEmission denormalize_emission(const GaussianEmission& emission, const NormalizationRecord& record);

// JSON bag manifest: {bag_id, start_time, topics: [{topic_name, file}]} with
// an optional `behaviors: [{name, required_channels, target_rate_hz}]` list.
struct BagManifest {
  struct Topic {
    std::string topic_name;
    std::string file;
  };
  std::string bag_id;
  double start_time = 0.0;
  std::vector<Topic> topics;
  std::vector<BehaviorDef> behaviors;
};

BagManifest read_bag_manifest(const std::filesystem::path& path);
void write_bag_manifest(const std::filesystem::path& path, const BagManifest& manifest);

// Parses every topic file, resolving relative paths against the manifest's
// directory.
std::vector<RawTopic> load_manifest_topics(const BagManifest& manifest,
                                           const std::filesystem::path& manifest_dir);

}  // namespace primseg

#endif  // PRIMSEG_INGEST_HPP_
