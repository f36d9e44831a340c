#include "primseg/ingest.hpp"

#include "primseg/csv.hpp"
#include "primseg/errors.hpp"
#include "primseg/numfmt.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

namespace primseg {

namespace {

using json = nlohmann::json;

struct ChannelRef {
  const RawTopic* topic = nullptr;
  int column = -1;
};

ChannelRef resolve_channel(const std::vector<RawTopic>& topics, const std::string& selector) {
  for (const auto& topic : topics) {
    if (selector.size() <= topic.topic_name.size() + 1) continue;
    if (selector.compare(0, topic.topic_name.size(), topic.topic_name) != 0) continue;
    if (selector[topic.topic_name.size()] != '.') continue;
    const int col = topic.column_index(selector.substr(topic.topic_name.size() + 1));
    if (col >= 0) return {&topic, col};
  }
  throw ParameterError("channel '" + selector + "' not found in any topic");
}

double interpolate(const std::vector<double>& ts, const std::vector<double>& values, double t) {
  const auto upper = std::upper_bound(ts.begin(), ts.end(), t);
  if (upper == ts.begin()) return values.front();
  const auto i = static_cast<std::size_t>(upper - ts.begin()) - 1;
  if (ts[i] == t || i + 1 == ts.size()) return values[i];
  const double w = (t - ts[i]) / (ts[i + 1] - ts[i]);
  const double v = values[i] + w * (values[i + 1] - values[i]);
  return std::clamp(v, std::min(values[i], values[i + 1]), std::max(values[i], values[i + 1]));
}

BehaviorDef behavior_from_json(const json& j) {
  BehaviorDef b;
  b.name = j.at("name").get<std::string>();
  b.required_channels = j.at("required_channels").get<std::vector<std::string>>();
  b.target_rate_hz = j.at("target_rate_hz").get<double>();
  b.validate();
  return b;
}

}  // namespace

int RawTopic::column_index(const std::string& name) const {
  const auto it = std::find(column_names.begin(), column_names.end(), name);
  return it == column_names.end() ? -1 : static_cast<int>(it - column_names.begin());
}

void BehaviorDef::validate() const {
  if (name.empty()) throw ParameterError("behavior name is empty");
  if (required_channels.empty()) throw ParameterError("behavior '" + name + "' has no channels");
  std::set<std::string> seen;
  for (const auto& c : required_channels) {
    if (!seen.insert(c).second) throw ParameterError("behavior '" + name + "' repeats channel " + c);
  }
  if (!(target_rate_hz > 0.0) || !std::isfinite(target_rate_hz)) {
    throw ParameterError("behavior '" + name + "' needs a positive target rate");
  }
}

RawTopic parse_topic_csv(std::istream& in, const std::string& topic_name, const std::string& source) {
  const csv::Document doc = csv::read(in, source);
  const auto ts_it = std::find(doc.header.begin(), doc.header.end(), "timestamp");
  if (ts_it == doc.header.end()) throw ParseError(source + ":1: missing 'timestamp' column");
  const auto ts_col = static_cast<std::size_t>(ts_it - doc.header.begin());

  RawTopic topic;
  topic.topic_name = topic_name;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < doc.header.size(); ++c) {
    if (doc.header[c].empty()) throw ParseError(source + ":1: empty column name");
    if (!seen.insert(doc.header[c]).second) throw ParseError(source + ":1: duplicate column " + doc.header[c]);
    if (c != ts_col) topic.column_names.push_back(doc.header[c]);
  }
  if (topic.column_names.empty()) throw ParseError(source + ":1: no data columns besides timestamp");
  if (doc.rows.empty()) throw ParseError(source + ":2: no data rows");

  const std::size_t n = doc.rows.size();
  std::vector<double> stamps(n);
  std::vector<std::vector<double>> values(topic.column_names.size(), std::vector<double>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = doc.rows[r];
    std::size_t out_col = 0;
    for (std::size_t c = 0; c < row.fields.size(); ++c) {
      const auto v = parse_double(row.fields[c]);
      if (!v) {
        throw ParseError(source + ":" + std::to_string(row.line) + ": non-numeric value '" + row.fields[c] +
                         "' in column " + doc.header[c]);
      }
      if (c == ts_col) {
        stamps[r] = *v;
      } else {
        values[out_col++][r] = *v;
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return stamps[a] < stamps[b]; });
  topic.columns.assign(topic.column_names.size(), {});
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = order[i];
    // Equal stamps are adjacent and in file order after the stable sort; keep the last.
    if (i + 1 < n && stamps[order[i + 1]] == stamps[r]) continue;
    topic.timestamps.push_back(stamps[r]);
    for (std::size_t c = 0; c < values.size(); ++c) topic.columns[c].push_back(values[c][r]);
  }
  return topic;
}

RawTopic parse_topic_csv(const std::filesystem::path& path, const std::string& topic_name) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ":0: cannot open file");
  return parse_topic_csv(in, topic_name, path.string());
}

void write_topic_csv(std::ostream& out, const RawTopic& topic) {
  std::vector<std::string> fields{"timestamp"};
  fields.insert(fields.end(), topic.column_names.begin(), topic.column_names.end());
  csv::write_row(out, fields);
  for (std::size_t r = 0; r < topic.timestamps.size(); ++r) {
    fields.clear();
    fields.push_back(format_double(topic.timestamps[r]));
    for (const auto& col : topic.columns) fields.push_back(format_double(col[r]));
    csv::write_row(out, fields);
  }
}

TimeSeriesBag resample_uniform(const std::vector<RawTopic>& topics, const BehaviorDef& behavior,
                               const std::string& bag_id, double max_gap_s) {
  behavior.validate();
  std::vector<ChannelRef> refs;
  std::vector<const RawTopic*> involved;
  for (const auto& selector : behavior.required_channels) {
    refs.push_back(resolve_channel(topics, selector));
    if (std::find(involved.begin(), involved.end(), refs.back().topic) == involved.end()) {
      involved.push_back(refs.back().topic);
    }
  }

  double start = -std::numeric_limits<double>::infinity();
  double end = std::numeric_limits<double>::infinity();
  for (const RawTopic* topic : involved) {
    if (topic->timestamps.empty()) throw RangeError("topic '" + topic->topic_name + "' has no samples");
    start = std::max(start, topic->timestamps.front());
    end = std::min(end, topic->timestamps.back());
  }
  if (end < start) {
    throw RangeError("topics do not overlap in time (window start " + format_double(start) + " > end " +
                     format_double(end) + ")");
  }
  for (const RawTopic* topic : involved) {
    const auto& ts = topic->timestamps;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      if (ts[i + 1] <= start || ts[i] >= end) continue;
      if (ts[i + 1] - ts[i] > max_gap_s) {
        throw GapError("topic '" + topic->topic_name + "' has a gap of " + format_double(ts[i + 1] - ts[i]) +
                       " s in [" + format_double(ts[i]) + ", " + format_double(ts[i + 1]) + "]");
      }
    }
  }

  const double rate = behavior.target_rate_hz;
  // Absorbs rounding when end lies on a grid point; timestamps near the epoch
  // carry an absolute error of a few ulp of their magnitude.
  const double slack =
      1e-9 + 16.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(start), std::abs(end)) * rate;
  const auto frames = static_cast<int>(std::floor((end - start) * rate + slack)) + 1;

  TimeSeriesBag bag;
  bag.bag_id = bag_id;
  bag.channels = behavior.required_channels;
  bag.rate_hz = rate;
  bag.start_time = start;
  bag.data.resize(static_cast<Eigen::Index>(refs.size()), frames);
  for (int k = 0; k < frames; ++k) {
    const double t = frame_time(start, rate, k);
    for (std::size_t c = 0; c < refs.size(); ++c) {
      const auto& topic = *refs[c].topic;
      bag.data(static_cast<Eigen::Index>(c), k) =
          interpolate(topic.timestamps, topic.columns[static_cast<std::size_t>(refs[c].column)], t);
    }
  }
  return bag;
}

std::pair<TimeSeriesBag, NormalizationRecord> normalize_zscore(const TimeSeriesBag& bag) {
  const Eigen::Index d = bag.data.rows();
  const double n = static_cast<double>(bag.data.cols());
  NormalizationRecord record;
  TimeSeriesBag out = bag;
  for (Eigen::Index c = 0; c < d; ++c) {
    const double mean = bag.data.row(c).mean();
    const double var = (bag.data.row(c).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    const bool constant = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    record.mean.push_back(mean);
    record.stddev.push_back(constant ? 0.0 : sd);
    record.constant.push_back(constant);
    if (constant) {
      out.data.row(c).setZero();
    } else {
      out.data.row(c) = (bag.data.row(c).array() - mean) / sd;
    }
  }
  return {std::move(out), std::move(record)};
}

TimeSeriesBag denormalize(const TimeSeriesBag& bag, const NormalizationRecord& record) {
  if (record.mean.size() != static_cast<std::size_t>(bag.dims())) {
    throw ParameterError("normalization record does not match bag channels");
  }
  TimeSeriesBag out = bag;
  for (std::size_t c = 0; c < record.mean.size(); ++c) {
    const auto row = static_cast<Eigen::Index>(c);
    out.data.row(row) = bag.data.row(row).array() * record.scale(c) + record.mean[c];
  }
  return out;
}

GaussianEmission denormalize_emission(const GaussianEmission& emission, const NormalizationRecord& record) {
  const auto d = static_cast<Eigen::Index>(record.mean.size());
  if (emission.mean.size() != d) throw ParameterError("normalization record does not match emission");
  Eigen::VectorXd scale(d), shift(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    scale[c] = record.scale(static_cast<std::size_t>(c));
    shift[c] = record.mean[static_cast<std::size_t>(c)];
  }
  GaussianEmission out;
  out.mean = emission.mean.cwiseProduct(scale) + shift;
  out.cov = scale.asDiagonal() * emission.cov * scale.asDiagonal();
  return out;
}

BagManifest read_bag_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ":0: cannot open manifest");
  try {
    const json j = json::parse(in);
    BagManifest m;
    m.bag_id = j.at("bag_id").get<std::string>();
    m.start_time = j.at("start_time").get<double>();
    for (const auto& t : j.at("topics")) {
      m.topics.push_back({t.at("topic_name").get<std::string>(), t.at("file").get<std::string>()});
    }
    if (j.contains("behaviors")) {
      for (const auto& b : j.at("behaviors")) m.behaviors.push_back(behavior_from_json(b));
    }
    if (m.bag_id.empty()) throw ParseError(path.string() + ": bag_id is empty");
    if (m.topics.empty()) throw ParseError(path.string() + ": manifest lists no topics");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": invalid manifest: " + e.what());
  } catch (const ParameterError& e) {
    throw ParseError(path.string() + ": invalid behavior: " + e.what());
  }
}

void write_bag_manifest(const std::filesystem::path& path, const BagManifest& manifest) {
  json j;
  j["bag_id"] = manifest.bag_id;
  j["start_time"] = manifest.start_time;
  j["topics"] = json::array();
  for (const auto& t : manifest.topics) j["topics"].push_back({{"topic_name", t.topic_name}, {"file", t.file}});
  if (!manifest.behaviors.empty()) {
    j["behaviors"] = json::array();
    for (const auto& b : manifest.behaviors) {
      j["behaviors"].push_back({{"name", b.name},
                                {"required_channels", b.required_channels},
                                {"target_rate_hz", b.target_rate_hz}});
    }
  }
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<RawTopic> load_manifest_topics(const BagManifest& manifest,
                                           const std::filesystem::path& manifest_dir) {
  std::vector<RawTopic> topics;
  for (const auto& t : manifest.topics) {
    std::filesystem::path file(t.file);
    if (file.is_relative()) file = manifest_dir / file;
    topics.push_back(parse_topic_csv(file, t.topic_name));
  }
  return topics;
}

}  // namespace primseg
