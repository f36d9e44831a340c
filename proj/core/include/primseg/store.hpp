#ifndef PRIMSEG_STORE_HPP_
#define PRIMSEG_STORE_HPP_

#include "primseg/types.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace primseg {

using RowId = long long;

struct DatasetRow {
  RowId dataset_id = 0;
  std::string name;
};

struct BagRow {
  std::string bag_id;
  RowId dataset_id = 0;
  double start_time = 0.0;
  double duration_s = 0.0;  // frames / rate_hz
  double rate_hz = 0.0;

  int frames() const;
};

// One sensor topic of one bag.
struct SensorRow {
  RowId sensor_id = 0;
  std::string bag_id;
  std::string topic_name;
};

// Long/narrow attribute storage: one row per (sensor, frame, column).
struct SampleRow {
  RowId sensor_id = 0;
  long long frame_index = 0;
  std::string channel;  // column name within the sensor's topic
  double value = 0.0;

  bool operator==(const SampleRow&) const = default;
};

struct BehaviorRow {
  RowId behavior_id = 0;
  std::string name;
  std::vector<std::string> channel_list;
};

struct PrimitiveRow {
  RowId primitive_id = 0;
  RowId behavior_id = 0;
  Eigen::VectorXd mean_vector;
  Eigen::MatrixXd cov_matrix;
  long long total_frames = 0;
  long long occurrence_count = 0;

  GaussianEmission emission() const { return {mean_vector, cov_matrix}; }
};

struct PrimitiveInstanceRow {
  RowId instance_id = 0;
  RowId primitive_id = 0;
  std::string bag_id;
  long long start_frame = 0;
  long long end_frame = 0;  // inclusive
};

struct ScenarioRow {
  RowId scenario_id = 0;
  RowId behavior_id = 0;
  std::vector<RowId> label_sequence;  // primitive ids
  std::optional<std::string> name;
};

struct ScenarioInstanceRow {
  RowId instance_id = 0;
  RowId scenario_id = 0;
  std::string bag_id;
  long long start_frame = 0;
  long long end_frame = 0;  // inclusive
};

// A scenario window returned by a query, with the requested channels' samples
// (channels x frames).
struct ScenarioWindow {
  RowId scenario_id = 0;
  std::string bag_id;
  long long start_frame = 0;
  long long end_frame = 0;
  std::vector<std::string> channels;
  Eigen::MatrixXd data;
};

inline constexpr int kCatalogFormatVersion = 1;

// Canonical comma-separated rendering of a primitive-id sequence.
std::string format_label_sequence(const std::vector<RowId>& seq);
// Parses "3,1,4"; nullopt if the text is not such a list.
std::optional<std::vector<RowId>> parse_label_sequence(const std::string& text);

// The scenario-oriented relational catalog. Tables are plain row vectors kept
// in insertion order; ids are assigned as max(existing) + 1.
class Catalog {
 public:
  std::vector<DatasetRow> datasets;
  std::vector<BagRow> bags;
  std::vector<SensorRow> sensors;
  std::vector<SampleRow> samples;
  std::vector<BehaviorRow> behaviors;
  std::vector<PrimitiveRow> primitives;
  std::vector<PrimitiveInstanceRow> primitive_instances;
  std::vector<ScenarioRow> scenarios;
  std::vector<ScenarioInstanceRow> scenario_instances;

  // Loads `dir` (manifest.json + tables/*.csv). A missing directory or
  // manifest yields an empty catalog. Malformed content throws IntegrityError.
  static Catalog load(const std::filesystem::path& dir);
  // Writes every table and the manifest; each file is replaced atomically.
  void save(const std::filesystem::path& dir) const;

  // Decomposes the bag into Sensor and Sample rows. Channels must be
  // "topic.column" selectors. Re-inserting identical content is a no-op;
  // different content under an existing bag_id throws IntegrityError.
  std::string insert_bag(const TimeSeriesBag& bag, const std::string& dataset);

  // Reassembles a bag; `channels` selects and orders channels (all channels
  // in sensor order when empty). Unknown bag -> NotFoundError, unknown
  // channel -> ParameterError.
  TimeSeriesBag load_bag(const std::string& bag_id, const std::vector<std::string>& channels = {}) const;

  // Channel selectors of the bag in sensor order.
  std::vector<std::string> bag_channels(const std::string& bag_id) const;

  const BagRow& bag(const std::string& bag_id) const;
  const BehaviorRow* find_behavior(const std::string& name) const;
  const BehaviorRow& behavior(RowId behavior_id) const;

  // Registers the behavior, or returns the existing id when it is already
  // known with the same channel list. A different channel list under the same
  // name throws IntegrityError.
  RowId upsert_behavior(const std::string& name, const std::vector<std::string>& channels);

  // Run-length encodes the labels of one bag into PrimitiveInstance rows and
  // creates one Primitive row per distinct label with its Gaussian and
  // occurrence statistics. A previous segmentation of the same bag under the
  // same behavior is replaced. Returns the new instance ids.
  std::vector<RowId> record_primitives(const std::string& bag_id, RowId behavior_id, const Labels& labels,
                                       const std::vector<GaussianEmission>& emissions);

  // Every ScenarioInstance window of the scenario identified by name or by a
  // comma-separated primitive-id sequence, ordered by (bag_id, start_frame).
  std::vector<ScenarioWindow> query_by_scenario(const std::string& scenario,
                                                const std::vector<std::string>& channels) const;

  // Writes one CSV per sensor (timestamp + the sensor's columns) plus a bag
  // manifest into `out_dir`. `channels`, when given, restricts the export and
  // must not be empty. Returns the CSV paths.
  std::vector<std::filesystem::path> export_bag(
      const std::string& bag_id, const std::filesystem::path& out_dir,
      const std::optional<std::vector<std::string>>& channels = std::nullopt) const;

  void name_scenario(RowId scenario_id, const std::string& name);

  // Full-scan referential integrity and instance-range check; throws
  // IntegrityError describing the first violation.
  void check_integrity() const;

  // Sample rows rendered exactly as in tables/sample.csv.
  std::string sample_table_csv() const;

 private:
  std::vector<SampleRow> bag_sample_rows(const TimeSeriesBag& bag, std::vector<SensorRow>& sensors_out,
                                         RowId first_sensor_id) const;
};

// Exclusive writer lock on a catalog directory, held for the object's
// lifetime. Construction fails fast with IntegrityError if another writer
// holds it.
class CatalogLock {
 public:
  explicit CatalogLock(const std::filesystem::path& dir);
  ~CatalogLock();
  CatalogLock(const CatalogLock&) = delete;
  CatalogLock& operator=(const CatalogLock&) = delete;

 private:
  std::filesystem::path path_;
};

}  // namespace primseg

#endif  // PRIMSEG_STORE_HPP_
