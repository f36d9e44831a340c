#include "primseg/store.hpp"

#include "primseg/csv.hpp"
#include "primseg/errors.hpp"
#include "primseg/ingest.hpp"
#include "primseg/numfmt.hpp"

#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unistd.h>

namespace primseg {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TableSpec {
  const char* name;
  std::vector<std::string> columns;
};

const std::vector<TableSpec>& table_specs() {
  static const std::vector<TableSpec> specs = {
      {"Dataset", {"dataset_id", "name"}},
      {"Bag", {"bag_id", "dataset_id", "start_time", "duration_s", "rate_hz"}},
      {"Sensor", {"sensor_id", "bag_id", "topic_name"}},
      {"Sample", {"sensor_id", "frame_index", "channel", "value"}},
      {"Behavior", {"behavior_id", "name", "channel_list"}},
      {"Primitive",
       {"primitive_id", "behavior_id", "mean_vector", "cov_matrix", "total_frames", "occurrence_count"}},
      {"PrimitiveInstance", {"instance_id", "primitive_id", "bag_id", "start_frame", "end_frame"}},
      {"Scenario", {"scenario_id", "behavior_id", "label_sequence", "name"}},
      {"ScenarioInstance", {"instance_id", "scenario_id", "bag_id", "start_frame", "end_frame"}},
  };
  return specs;
}

using Rows = std::vector<std::vector<std::string>>;

std::pair<std::string, std::string> split_selector(const std::string& selector) {
  const auto dot = selector.rfind('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == selector.size()) {
    throw ParameterError("channel '" + selector + "' is not a topic.column selector");
  }
  return {selector.substr(0, dot), selector.substr(dot + 1)};
}

template <typename Row, typename Field>
RowId next_id(const std::vector<Row>& rows, Field Row::*field) {
  RowId top = 0;
  for (const auto& r : rows) top = std::max(top, r.*field);
  return top + 1;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out.push_back(',');
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::string current;
  for (char c : text) {
    if (c == ',') {
      out.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  out.push_back(current);
  return out;
}

std::string format_numbers(const double* data, Eigen::Index n) {
  std::vector<std::string> parts;
  for (Eigen::Index i = 0; i < n; ++i) parts.push_back(format_double(data[i]));
  return join(parts);
}

std::string format_matrix(const Eigen::MatrixXd& m) {
  // Row-major rendering.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  return format_numbers(rm.data(), rm.size());
}

[[noreturn]] void bad_cell(const std::string& table, std::size_t line, const std::string& what) {
  throw IntegrityError("catalog table " + table + " line " + std::to_string(line) + ": " + what);
}

double cell_double(const std::string& table, const csv::Row& row, std::size_t i) {
  const auto v = parse_double(row.fields[i]);
  if (!v) bad_cell(table, row.line, "bad number '" + row.fields[i] + "'");
  return *v;
}

long long cell_int(const std::string& table, const csv::Row& row, std::size_t i) {
  const auto v = parse_integer(row.fields[i]);
  if (!v) bad_cell(table, row.line, "bad integer '" + row.fields[i] + "'");
  return *v;
}

std::vector<double> cell_numbers(const std::string& table, const csv::Row& row, std::size_t i) {
  std::vector<double> out;
  for (const auto& part : split_list(row.fields[i])) {
    const auto v = parse_double(part);
    if (!v) bad_cell(table, row.line, "bad number list '" + row.fields[i] + "'");
    out.push_back(*v);
  }
  return out;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IntegrityError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string render_table(const std::vector<std::string>& header, const Rows& rows) {
  std::ostringstream out;
  csv::write_row(out, header);
  for (const auto& r : rows) csv::write_row(out, r);
  return out.str();
}

Rows sample_rows(const std::vector<SampleRow>& samples) {
  Rows rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    rows.push_back({std::to_string(s.sensor_id), std::to_string(s.frame_index), s.channel,
                    format_double(s.value)});
  }
  return rows;
}

std::string sanitize_file_stem(const std::string& topic) {
  std::string out;
  for (char c : topic) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  const auto first = out.find_first_not_of("_.");
  out = first == std::string::npos ? std::string("topic") : out.substr(first);
  return out;
}

}  // namespace

int BagRow::frames() const { return static_cast<int>(std::llround(duration_s * rate_hz)); }

std::string format_label_sequence(const std::vector<RowId>& seq) {
  std::vector<std::string> parts;
  for (RowId id : seq) parts.push_back(std::to_string(id));
  return join(parts);
}

std::optional<std::vector<RowId>> parse_label_sequence(const std::string& text) {
  if (text.empty()) return std::nullopt;
  std::vector<RowId> out;
  for (const auto& part : split_list(text)) {
    const auto v = parse_integer(part);
    if (!v) return std::nullopt;
    out.push_back(*v);
  }
  return out;
}

// ---------------------------------------------------------------------------
// persistence

Catalog Catalog::load(const fs::path& dir) {
  Catalog cat;
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) return cat;

  std::ifstream mf(manifest_path);
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw IntegrityError("catalog manifest is not valid JSON: " + std::string(e.what()));
  }
  const int version = manifest.value("format_version", -1);
  if (version != kCatalogFormatVersion) {
    throw IntegrityError("unsupported catalog format_version " + std::to_string(version));
  }

  for (const auto& spec : table_specs()) {
    const std::string table = spec.name;
    const fs::path path = dir / "tables" / (table + ".csv");
    if (!fs::exists(path)) continue;
    std::ifstream in(path);
    csv::Document doc;
    try {
      doc = csv::read(in, path.string());
    } catch (const ParseError& e) {
      throw IntegrityError(e.what());
    }
    if (doc.header != spec.columns) throw IntegrityError("catalog table " + table + " has unexpected columns");

    for (const auto& row : doc.rows) {
      const auto& f = row.fields;
      if (table == "Dataset") {
        cat.datasets.push_back({cell_int(table, row, 0), f[1]});
      } else if (table == "Bag") {
        cat.bags.push_back({f[0], cell_int(table, row, 1), cell_double(table, row, 2),
                            cell_double(table, row, 3), cell_double(table, row, 4)});
      } else if (table == "Sensor") {
        cat.sensors.push_back({cell_int(table, row, 0), f[1], f[2]});
      } else if (table == "Sample") {
        cat.samples.push_back({cell_int(table, row, 0), cell_int(table, row, 1), f[2], cell_double(table, row, 3)});
      } else if (table == "Behavior") {
        cat.behaviors.push_back({cell_int(table, row, 0), f[1], split_list(f[2])});
      } else if (table == "Primitive") {
        PrimitiveRow p;
        p.primitive_id = cell_int(table, row, 0);
        p.behavior_id = cell_int(table, row, 1);
        const auto mean = cell_numbers(table, row, 2);
        const auto cov = cell_numbers(table, row, 3);
        const auto d = static_cast<Eigen::Index>(mean.size());
        if (static_cast<Eigen::Index>(cov.size()) != d * d) bad_cell(table, row.line, "cov_matrix is not d x d");
        p.mean_vector = Eigen::Map<const Eigen::VectorXd>(mean.data(), d);
        p.cov_matrix = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            cov.data(), d, d);
        p.total_frames = cell_int(table, row, 4);
        p.occurrence_count = cell_int(table, row, 5);
        cat.primitives.push_back(std::move(p));
      } else if (table == "PrimitiveInstance") {
        cat.primitive_instances.push_back({cell_int(table, row, 0), cell_int(table, row, 1), f[2],
                                           cell_int(table, row, 3), cell_int(table, row, 4)});
      } else if (table == "Scenario") {
        const auto seq = parse_label_sequence(f[2]);
        if (!seq) bad_cell(table, row.line, "bad label_sequence '" + f[2] + "'");
        std::optional<std::string> name;
        if (!f[3].empty()) name = f[3];
        cat.scenarios.push_back({cell_int(table, row, 0), cell_int(table, row, 1), *seq, name});
      } else if (table == "ScenarioInstance") {
        cat.scenario_instances.push_back({cell_int(table, row, 0), cell_int(table, row, 1), f[2],
                                          cell_int(table, row, 3), cell_int(table, row, 4)});
      }
    }
  }
  return cat;
}

void Catalog::save(const fs::path& dir) const {
  fs::create_directories(dir / "tables");
  for (const auto& spec : table_specs()) {
    const std::string table = spec.name;
    Rows rows;
    if (table == "Dataset") {
      for (const auto& r : datasets) rows.push_back({std::to_string(r.dataset_id), r.name});
    } else if (table == "Bag") {
      for (const auto& r : bags) {
        rows.push_back({r.bag_id, std::to_string(r.dataset_id), format_double(r.start_time),
                        format_double(r.duration_s), format_double(r.rate_hz)});
      }
    } else if (table == "Sensor") {
      for (const auto& r : sensors) rows.push_back({std::to_string(r.sensor_id), r.bag_id, r.topic_name});
    } else if (table == "Sample") {
      rows = sample_rows(samples);
    } else if (table == "Behavior") {
      for (const auto& r : behaviors) rows.push_back({std::to_string(r.behavior_id), r.name, join(r.channel_list)});
    } else if (table == "Primitive") {
      for (const auto& r : primitives) {
        rows.push_back({std::to_string(r.primitive_id), std::to_string(r.behavior_id),
                        format_numbers(r.mean_vector.data(), r.mean_vector.size()), format_matrix(r.cov_matrix),
                        std::to_string(r.total_frames), std::to_string(r.occurrence_count)});
      }
    } else if (table == "PrimitiveInstance") {
      for (const auto& r : primitive_instances) {
        rows.push_back({std::to_string(r.instance_id), std::to_string(r.primitive_id), r.bag_id,
                        std::to_string(r.start_frame), std::to_string(r.end_frame)});
      }
    } else if (table == "Scenario") {
      for (const auto& r : scenarios) {
        rows.push_back({std::to_string(r.scenario_id), std::to_string(r.behavior_id),
                        format_label_sequence(r.label_sequence), r.name.value_or("")});
      }
    } else if (table == "ScenarioInstance") {
      for (const auto& r : scenario_instances) {
        rows.push_back({std::to_string(r.instance_id), std::to_string(r.scenario_id), r.bag_id,
                        std::to_string(r.start_frame), std::to_string(r.end_frame)});
      }
    }
    write_file_atomic(dir / "tables" / (table + ".csv"), render_table(spec.columns, rows));
  }

  json manifest;
  manifest["format_version"] = kCatalogFormatVersion;
  manifest["tables"] = json::object();
  for (const auto& spec : table_specs()) {
    manifest["tables"][spec.name] = {{"file", std::string("tables/") + spec.name + ".csv"},
                                     {"columns", spec.columns}};
  }
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string Catalog::sample_table_csv() const {
  const auto& spec = table_specs()[3];
  return render_table(spec.columns, sample_rows(samples));
}

// ---------------------------------------------------------------------------
// bags

std::vector<SampleRow> Catalog::bag_sample_rows(const TimeSeriesBag& bag, std::vector<SensorRow>& sensors_out,
                                                RowId first_sensor_id) const {
  // Group channels by topic, topics in order of first appearance.
  std::vector<std::string> topics;
  std::map<std::string, std::vector<std::pair<std::string, Eigen::Index>>> columns;
  for (std::size_t c = 0; c < bag.channels.size(); ++c) {
    auto [topic, column] = split_selector(bag.channels[c]);
    if (!columns.count(topic)) topics.push_back(topic);
    columns[topic].emplace_back(column, static_cast<Eigen::Index>(c));
  }
  std::vector<SampleRow> rows;
  rows.reserve(static_cast<std::size_t>(bag.data.size()));
  RowId id = first_sensor_id;
  for (const auto& topic : topics) {
    sensors_out.push_back({id, bag.bag_id, topic});
    for (Eigen::Index t = 0; t < bag.data.cols(); ++t) {
      for (const auto& [column, row] : columns[topic]) rows.push_back({id, t, column, bag.data(row, t)});
    }
    ++id;
  }
  return rows;
}

std::string Catalog::insert_bag(const TimeSeriesBag& bag, const std::string& dataset) {
  bag.validate();
  if (bag.bag_id.empty()) throw ParameterError("bag_id is empty");
  if (dataset.empty()) throw ParameterError("dataset name is empty");

  const auto existing = std::find_if(bags.begin(), bags.end(), [&](const BagRow& b) { return b.bag_id == bag.bag_id; });
  if (existing != bags.end()) {
    const auto ds = std::find_if(datasets.begin(), datasets.end(),
                                 [&](const DatasetRow& d) { return d.dataset_id == existing->dataset_id; });
    const bool same_meta = ds != datasets.end() && ds->name == dataset && existing->start_time == bag.start_time &&
                           existing->rate_hz == bag.rate_hz && existing->frames() == bag.frames();
    bool same = same_meta && bag_channels(bag.bag_id) == bag.channels;
    if (same) same = load_bag(bag.bag_id, bag.channels).data == bag.data;
    if (!same) throw IntegrityError("bag '" + bag.bag_id + "' already exists with different content");
    return bag.bag_id;
  }

  auto ds = std::find_if(datasets.begin(), datasets.end(), [&](const DatasetRow& d) { return d.name == dataset; });
  RowId dataset_id = 0;
  if (ds == datasets.end()) {
    dataset_id = next_id(datasets, &DatasetRow::dataset_id);
    datasets.push_back({dataset_id, dataset});
  } else {
    dataset_id = ds->dataset_id;
  }

  std::vector<SensorRow> new_sensors;
  auto rows = bag_sample_rows(bag, new_sensors, next_id(sensors, &SensorRow::sensor_id));
  bags.push_back({bag.bag_id, dataset_id, bag.start_time, static_cast<double>(bag.frames()) / bag.rate_hz,
                  bag.rate_hz});
  sensors.insert(sensors.end(), new_sensors.begin(), new_sensors.end());
  samples.insert(samples.end(), std::make_move_iterator(rows.begin()), std::make_move_iterator(rows.end()));
  return bag.bag_id;
}

const BagRow& Catalog::bag(const std::string& bag_id) const {
  const auto it = std::find_if(bags.begin(), bags.end(), [&](const BagRow& b) { return b.bag_id == bag_id; });
  if (it == bags.end()) throw NotFoundError("unknown bag '" + bag_id + "'");
  return *it;
}

std::vector<std::string> Catalog::bag_channels(const std::string& bag_id) const {
  bag(bag_id);
  std::vector<std::string> out;
  std::map<RowId, std::string> topic_of;
  for (const auto& s : sensors) {
    if (s.bag_id == bag_id) topic_of[s.sensor_id] = s.topic_name;
  }
  std::set<std::pair<RowId, std::string>> seen;
  for (const auto& s : samples) {
    const auto it = topic_of.find(s.sensor_id);
    if (it == topic_of.end() || s.frame_index != 0) continue;
    if (seen.insert({s.sensor_id, s.channel}).second) out.push_back(it->second + "." + s.channel);
  }
  return out;
}

TimeSeriesBag Catalog::load_bag(const std::string& bag_id, const std::vector<std::string>& channels) const {
  const BagRow& row = bag(bag_id);
  const std::vector<std::string> all = bag_channels(bag_id);
  const std::vector<std::string>& wanted = channels.empty() ? all : channels;

  std::map<std::pair<std::string, std::string>, Eigen::Index> slot;  // (topic, column) -> output row
  for (std::size_t c = 0; c < wanted.size(); ++c) {
    if (std::find(all.begin(), all.end(), wanted[c]) == all.end()) {
      throw ParameterError("bag '" + bag_id + "' has no channel '" + wanted[c] + "'");
    }
    slot[split_selector(wanted[c])] = static_cast<Eigen::Index>(c);
  }

  TimeSeriesBag out;
  out.bag_id = bag_id;
  out.channels = wanted;
  out.rate_hz = row.rate_hz;
  out.start_time = row.start_time;
  const int frames = row.frames();
  out.data = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(wanted.size()), frames);

  std::map<RowId, std::string> topic_of;
  for (const auto& s : sensors) {
    if (s.bag_id == bag_id) topic_of[s.sensor_id] = s.topic_name;
  }
  for (const auto& s : samples) {
    const auto t = topic_of.find(s.sensor_id);
    if (t == topic_of.end()) continue;
    const auto it = slot.find({t->second, s.channel});
    if (it == slot.end()) continue;
    if (s.frame_index < 0 || s.frame_index >= frames) {
      throw IntegrityError("sample frame " + std::to_string(s.frame_index) + " outside bag '" + bag_id + "'");
    }
    out.data(it->second, static_cast<Eigen::Index>(s.frame_index)) = s.value;
  }
  return out;
}

std::vector<fs::path> Catalog::export_bag(const std::string& bag_id, const fs::path& out_dir,
                                          const std::optional<std::vector<std::string>>& channels) const {
  if (channels && channels->empty()) throw ParameterError("export requested with an empty channel set");
  const TimeSeriesBag data = load_bag(bag_id, channels.value_or(std::vector<std::string>{}));
  fs::create_directories(out_dir);

  std::vector<std::string> topics;
  std::map<std::string, std::vector<std::pair<std::string, Eigen::Index>>> columns;
  for (std::size_t c = 0; c < data.channels.size(); ++c) {
    auto [topic, column] = split_selector(data.channels[c]);
    if (!columns.count(topic)) topics.push_back(topic);
    columns[topic].emplace_back(column, static_cast<Eigen::Index>(c));
  }

  BagManifest manifest;
  manifest.bag_id = bag_id;
  manifest.start_time = data.start_time;
  std::vector<fs::path> written;
  std::set<std::string> used_names;
  for (const auto& topic : topics) {
    std::string stem = sanitize_file_stem(topic);
    while (!used_names.insert(stem).second) stem += "_";
    RawTopic raw;
    raw.topic_name = topic;
    for (Eigen::Index t = 0; t < data.data.cols(); ++t) {
      raw.timestamps.push_back(frame_time(data.start_time, data.rate_hz, static_cast<int>(t)));
    }
    for (const auto& [column, row] : columns[topic]) {
      raw.column_names.push_back(column);
      raw.columns.emplace_back(data.data.row(row).begin(), data.data.row(row).end());
    }
    const fs::path file = out_dir / (stem + ".csv");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IntegrityError("cannot write " + file.string());
    write_topic_csv(out, raw);
    written.push_back(file);
    manifest.topics.push_back({topic, stem + ".csv"});
  }
  write_bag_manifest(out_dir / "manifest.json", manifest);
  return written;
}

// ---------------------------------------------------------------------------
// behaviors, primitives, scenarios

const BehaviorRow* Catalog::find_behavior(const std::string& name) const {
  const auto it = std::find_if(behaviors.begin(), behaviors.end(), [&](const BehaviorRow& b) { return b.name == name; });
  return it == behaviors.end() ? nullptr : &*it;
}

const BehaviorRow& Catalog::behavior(RowId behavior_id) const {
  const auto it = std::find_if(behaviors.begin(), behaviors.end(),
                               [&](const BehaviorRow& b) { return b.behavior_id == behavior_id; });
  if (it == behaviors.end()) throw NotFoundError("unknown behavior id " + std::to_string(behavior_id));
  return *it;
}

RowId Catalog::upsert_behavior(const std::string& name, const std::vector<std::string>& channels) {
  if (name.empty() || channels.empty()) throw ParameterError("behavior needs a name and at least one channel");
  if (const BehaviorRow* b = find_behavior(name)) {
    if (b->channel_list != channels) {
      throw IntegrityError("behavior '" + name + "' already registered with different channels");
    }
    return b->behavior_id;
  }
  const RowId id = next_id(behaviors, &BehaviorRow::behavior_id);
  behaviors.push_back({id, name, channels});
  return id;
}

std::vector<RowId> Catalog::record_primitives(const std::string& bag_id, RowId behavior_id, const Labels& labels,
                                              const std::vector<GaussianEmission>& emissions) {
  const BagRow& row = bag(bag_id);
  behavior(behavior_id);
  if (static_cast<int>(labels.size()) != row.frames()) {
    throw IntegrityError("label sequence has " + std::to_string(labels.size()) + " frames but bag '" + bag_id +
                         "' has " + std::to_string(row.frames()));
  }
  for (int label : labels) {
    if (label < 1 || label > static_cast<int>(emissions.size())) {
      throw ParameterError("label " + std::to_string(label) + " has no emission");
    }
  }

  std::set<RowId> behavior_prims;
  for (const auto& p : primitives) {
    if (p.behavior_id == behavior_id) behavior_prims.insert(p.primitive_id);
  }
  std::erase_if(primitive_instances, [&](const PrimitiveInstanceRow& r) {
    return r.bag_id == bag_id && behavior_prims.count(r.primitive_id);
  });
  std::set<RowId> behavior_scenarios;
  for (const auto& s : scenarios) {
    if (s.behavior_id == behavior_id) behavior_scenarios.insert(s.scenario_id);
  }
  std::erase_if(scenario_instances, [&](const ScenarioInstanceRow& r) {
    return r.bag_id == bag_id && behavior_scenarios.count(r.scenario_id);
  });

  // Run-length encode; one primitive per distinct label, in order of first use.
  std::map<int, RowId> primitive_of;
  RowId next_primitive = next_id(primitives, &PrimitiveRow::primitive_id);
  RowId next_instance = next_id(primitive_instances, &PrimitiveInstanceRow::instance_id);
  std::vector<PrimitiveRow> created;
  std::vector<RowId> instance_ids;
  std::size_t start = 0;
  for (std::size_t t = 1; t <= labels.size(); ++t) {
    if (t < labels.size() && labels[t] == labels[start]) continue;
    const int label = labels[start];
    auto [it, fresh] = primitive_of.try_emplace(label, next_primitive);
    if (fresh) {
      const auto& e = emissions[static_cast<std::size_t>(label - 1)];
      created.push_back({next_primitive++, behavior_id, e.mean, e.cov, 0, 0});
    }
    primitive_instances.push_back({next_instance, it->second, bag_id, static_cast<long long>(start),
                                   static_cast<long long>(t - 1)});
    instance_ids.push_back(next_instance++);
    start = t;
  }
  primitives.insert(primitives.end(), created.begin(), created.end());

  // Refresh statistics and drop primitives no longer referenced.
  std::map<RowId, std::pair<long long, long long>> stats;
  for (const auto& r : primitive_instances) {
    auto& s = stats[r.primitive_id];
    s.first += r.end_frame - r.start_frame + 1;
    s.second += 1;
  }
  std::erase_if(primitives, [&](const PrimitiveRow& p) {
    return p.behavior_id == behavior_id && !stats.count(p.primitive_id);
  });
  for (auto& p : primitives) {
    if (const auto it = stats.find(p.primitive_id); it != stats.end()) {
      p.total_frames = it->second.first;
      p.occurrence_count = it->second.second;
    }
  }
  std::set<RowId> live_scenarios;
  for (const auto& r : scenario_instances) live_scenarios.insert(r.scenario_id);
  std::erase_if(scenarios, [&](const ScenarioRow& s) {
    return s.behavior_id == behavior_id && !s.name && !live_scenarios.count(s.scenario_id);
  });
  return instance_ids;
}

std::vector<ScenarioWindow> Catalog::query_by_scenario(const std::string& scenario,
                                                       const std::vector<std::string>& channels) const {
  if (channels.empty()) throw ParameterError("query needs at least one channel");
  std::set<RowId> ids;
  for (const auto& s : scenarios) {
    if (s.name && *s.name == scenario) ids.insert(s.scenario_id);
  }
  if (ids.empty()) {
    if (const auto seq = parse_label_sequence(scenario)) {
      for (const auto& s : scenarios) {
        if (s.label_sequence == *seq) ids.insert(s.scenario_id);
      }
    }
  }
  if (ids.empty()) throw NotFoundError("unknown scenario '" + scenario + "'");

  std::set<std::string> known_channels;
  for (const auto& b : bags) {
    for (auto& c : bag_channels(b.bag_id)) known_channels.insert(std::move(c));
  }
  for (const auto& c : channels) {
    if (!known_channels.count(c)) throw ParameterError("unknown channel '" + c + "'");
  }

  std::vector<ScenarioInstanceRow> hits;
  for (const auto& r : scenario_instances) {
    if (ids.count(r.scenario_id)) hits.push_back(r);
  }
  std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
    return std::tie(a.bag_id, a.start_frame, a.scenario_id) < std::tie(b.bag_id, b.start_frame, b.scenario_id);
  });

  std::vector<ScenarioWindow> out;
  std::map<std::string, TimeSeriesBag> cache;
  for (const auto& h : hits) {
    auto it = cache.find(h.bag_id);
    if (it == cache.end()) it = cache.emplace(h.bag_id, load_bag(h.bag_id, channels)).first;
    const auto& data = it->second.data;
    if (h.start_frame < 0 || h.end_frame >= data.cols() || h.end_frame < h.start_frame) {
      throw IntegrityError("scenario instance " + std::to_string(h.instance_id) + " lies outside its bag");
    }
    out.push_back({h.scenario_id, h.bag_id, h.start_frame, h.end_frame, channels,
                   data.middleCols(static_cast<Eigen::Index>(h.start_frame),
                                   static_cast<Eigen::Index>(h.end_frame - h.start_frame + 1))});
  }
  return out;
}

void Catalog::name_scenario(RowId scenario_id, const std::string& name) {
  if (name.empty()) throw ParameterError("scenario name is empty");
  if (parse_label_sequence(name)) throw ParameterError("scenario name must not look like a label sequence");
  ScenarioRow* target = nullptr;
  for (auto& s : scenarios) {
    if (s.scenario_id == scenario_id) target = &s;
    else if (s.name && *s.name == name) throw IntegrityError("scenario name '" + name + "' is already used");
  }
  if (!target) throw NotFoundError("unknown scenario id " + std::to_string(scenario_id));
  target->name = name;
}

void Catalog::check_integrity() const {
  std::set<RowId> dataset_ids, sensor_ids, behavior_ids, primitive_ids, scenario_ids;
  std::set<std::string> bag_ids;
  auto fail = [](const std::string& what) { throw IntegrityError(what); };
  for (const auto& d : datasets) {
    if (!dataset_ids.insert(d.dataset_id).second) fail("duplicate dataset_id " + std::to_string(d.dataset_id));
  }
  std::map<std::string, int> frames;
  for (const auto& b : bags) {
    if (!bag_ids.insert(b.bag_id).second) fail("duplicate bag_id " + b.bag_id);
    if (!dataset_ids.count(b.dataset_id)) fail("bag " + b.bag_id + " references a missing dataset");
    frames[b.bag_id] = b.frames();
  }
  for (const auto& s : sensors) {
    if (!sensor_ids.insert(s.sensor_id).second) fail("duplicate sensor_id " + std::to_string(s.sensor_id));
    if (!bag_ids.count(s.bag_id)) fail("sensor " + std::to_string(s.sensor_id) + " references a missing bag");
  }
  for (const auto& s : samples) {
    if (!sensor_ids.count(s.sensor_id)) fail("sample references missing sensor " + std::to_string(s.sensor_id));
  }
  for (const auto& b : behaviors) {
    if (!behavior_ids.insert(b.behavior_id).second) fail("duplicate behavior_id");
  }
  std::map<RowId, RowId> behavior_of_primitive;
  for (const auto& p : primitives) {
    if (!primitive_ids.insert(p.primitive_id).second) fail("duplicate primitive_id");
    if (!behavior_ids.count(p.behavior_id)) fail("primitive references a missing behavior");
    behavior_of_primitive[p.primitive_id] = p.behavior_id;
  }
  std::map<std::pair<std::string, RowId>, std::vector<std::pair<long long, long long>>> ranges;
  for (const auto& r : primitive_instances) {
    if (!primitive_ids.count(r.primitive_id)) fail("primitive instance references a missing primitive");
    if (!bag_ids.count(r.bag_id)) fail("primitive instance references a missing bag");
    if (r.end_frame < r.start_frame || r.start_frame < 0 || r.end_frame >= frames[r.bag_id]) {
      fail("primitive instance " + std::to_string(r.instance_id) + " has an invalid frame range");
    }
    ranges[{r.bag_id, behavior_of_primitive[r.primitive_id]}].emplace_back(r.start_frame, r.end_frame);
  }
  for (auto& [key, rs] : ranges) {
    std::sort(rs.begin(), rs.end());
    for (std::size_t i = 1; i < rs.size(); ++i) {
      if (rs[i].first <= rs[i - 1].second) fail("overlapping primitive instances in bag " + key.first);
    }
  }
  for (const auto& s : scenarios) {
    if (!scenario_ids.insert(s.scenario_id).second) fail("duplicate scenario_id");
    if (!behavior_ids.count(s.behavior_id)) fail("scenario references a missing behavior");
  }
  for (const auto& r : scenario_instances) {
    if (!scenario_ids.count(r.scenario_id)) fail("scenario instance references a missing scenario");
    if (!bag_ids.count(r.bag_id)) fail("scenario instance references a missing bag");
    if (r.end_frame < r.start_frame || r.start_frame < 0 || r.end_frame >= frames[r.bag_id]) {
      fail("scenario instance " + std::to_string(r.instance_id) + " has an invalid frame range");
    }
  }
}

// ---------------------------------------------------------------------------
// lock

CatalogLock::CatalogLock(const fs::path& dir) : path_(dir / "lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (!f) {
    if (errno == EEXIST) throw IntegrityError("catalog " + dir.string() + " is locked by another writer");
    throw IntegrityError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
  }
  std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
  std::fclose(f);
}

CatalogLock::~CatalogLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace primseg
