#include "primseg/commands.hpp"

#include "primseg/csv.hpp"
#include "primseg/errors.hpp"
#include "primseg/inference.hpp"
#include "primseg/ingest.hpp"
#include "primseg/numfmt.hpp"
#include "primseg/store.hpp"
#include "primseg/testkit.hpp"
#include "primseg/unify.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace primseg::cli {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) items.push_back(item.substr(b, e - b + 1));
  }
  return items;
}

std::string sanitize(const std::string& name) {
  std::string s = name;
  for (char& c : s) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                      c == '_' || c == '.';
    if (!keep) c = '_';
  }
  return s;
}

// Finest sampling rate among the topics feeding `channels`. A regularly
// sampled topic uses its whole span, otherwise the median gap. Rounded to 7
// significant digits: epoch-scale timestamps resolve nothing finer.
double infer_rate(const std::vector<RawTopic>& topics, const std::vector<std::string>& channels) {
  double rate = 0.0;
  for (const auto& selector : channels) {
    const auto dot = selector.rfind('.');
    const std::string topic_name = dot == std::string::npos ? selector : selector.substr(0, dot);
    for (const auto& topic : topics) {
      const auto& ts = topic.timestamps;
      if (topic.topic_name != topic_name || ts.size() < 2) continue;
      std::vector<double> gaps;
      for (std::size_t i = 1; i < ts.size(); ++i) gaps.push_back(ts[i] - ts[i - 1]);
      std::vector<double> sorted = gaps;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
      const double median = sorted[sorted.size() / 2];
      const bool regular = std::all_of(gaps.begin(), gaps.end(),
                                       [&](double g) { return std::abs(g - median) <= 0.01 * median; });
      rate = std::max(rate, regular ? static_cast<double>(gaps.size()) / (ts.back() - ts.front()) : 1.0 / median);
    }
  }
  if (!(rate > 0.0) || !std::isfinite(rate)) throw RangeError("cannot infer a sampling rate for the behavior's channels");
  const double scale = std::pow(10.0, 6 - static_cast<int>(std::floor(std::log10(rate))));
  return std::round(rate * scale) / scale;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParameterError("cannot write " + path.string());
  out << text;
  if (!out) throw ParameterError("failed writing " + path.string());
}

struct IngestArgs {
  std::string manifest, catalog, behavior, dataset = "default";
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  const fs::path manifest_path = a.manifest;
  const BagManifest manifest = read_bag_manifest(manifest_path);
  const auto topics = load_manifest_topics(manifest, manifest_path.parent_path());

  CatalogLock lock(a.catalog);
  Catalog catalog = Catalog::load(a.catalog);

  std::optional<BehaviorDef> behavior;
  for (const auto& b : manifest.behaviors) {
    if (b.name == a.behavior) behavior = b;
  }
  if (!behavior) {
    const BehaviorRow* known = catalog.find_behavior(a.behavior);
    if (!known) throw ParameterError("behavior '" + a.behavior + "' is defined neither in the manifest nor in the catalog");
    behavior = BehaviorDef{known->name, known->channel_list, infer_rate(topics, known->channel_list)};
  }
  behavior->validate();

  const TimeSeriesBag bag = resample_uniform(topics, *behavior, manifest.bag_id);
  catalog.upsert_behavior(behavior->name, behavior->required_channels);
  const std::string bag_id = catalog.insert_bag(bag, a.dataset);
  catalog.save(a.catalog);
  out << bag_id << '\n';
  return kOk;
}

struct SegmentArgs {
  std::string catalog, bag, behavior, config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_segment(const SegmentArgs& a, std::ostream& out) {
  GibbsConfig config = a.config.empty() ? GibbsConfig{} : GibbsConfig::from_file(a.config);
  if (a.seed) config.seed = *a.seed;

  CatalogLock lock(a.catalog);
  Catalog catalog = Catalog::load(a.catalog);
  const BehaviorRow* behavior = catalog.find_behavior(a.behavior);
  if (!behavior) throw NotFoundError("unknown behavior '" + a.behavior + "'");
  const RowId behavior_id = behavior->behavior_id;
  const TimeSeriesBag bag = catalog.load_bag(a.bag, behavior->channel_list);

  // Segmentation runs on z-scored channels; stored emissions are mapped back.
  const auto [normalized, record] = normalize_zscore(bag);
  const PosteriorSummary summary = fit(normalized, config);
  std::vector<GaussianEmission> emissions;
  for (const auto& e : summary.map_state.emissions) emissions.push_back(denormalize_emission(e, record));
  const Labels& labels = summary.map_state.labels;

  const auto instance_ids = catalog.record_primitives(a.bag, behavior_id, labels, emissions);
  catalog.save(a.catalog);

  std::map<int, RowId> primitive_of;
  std::map<int, long long> frames_of;
  std::size_t run = 0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (t > 0 && labels[t] != labels[t - 1]) ++run;
    frames_of[labels[t]] += 1;
    if (!primitive_of.count(labels[t])) {
      const RowId iid = instance_ids[run];
      for (const auto& r : catalog.primitive_instances) {
        if (r.instance_id == iid) primitive_of[labels[t]] = r.primitive_id;
      }
    }
  }

  std::ostringstream csv;
  csv << "frame_index,label\n";
  for (std::size_t t = 0; t < labels.size(); ++t) csv << t << ',' << labels[t] << '\n';
  const fs::path csv_path = a.out.empty() ? fs::path(a.catalog) / "segmentations" / sanitize(a.behavior) /
                                                (sanitize(a.bag) + ".csv")
                                          : fs::path(a.out);
  write_file(csv_path, csv.str());

  out << "bag_id " << a.bag << '\n';
  out << "used_states " << summary.used_states << '\n';
  out << "map_iteration " << summary.map_iteration << '\n';
  out << "log_joint " << format_double(summary.map_state.log_joint) << '\n';
  for (const auto& [label, frames] : frames_of) {
    out << "primitive " << primitive_of[label] << " label " << label << " frames " << frames << '\n';
  }
  out << "segmentation " << csv_path.string() << '\n';
  return kOk;
}

struct UnifyArgs {
  std::string catalog, behavior, config;
};

int cmd_unify(const UnifyArgs& a, std::ostream& out) {
  const UnifyConfig config = a.config.empty() ? UnifyConfig{} : UnifyConfig::from_file(a.config);
  CatalogLock lock(a.catalog);
  Catalog catalog = Catalog::load(a.catalog);
  const BehaviorRow* behavior = catalog.find_behavior(a.behavior);
  if (!behavior) throw NotFoundError("unknown behavior '" + a.behavior + "'");
  const RowId behavior_id = behavior->behavior_id;
  const UnifyReport report = unify_behavior(catalog, behavior_id, config);
  catalog.save(a.catalog);

  out << "bags " << report.bags << '\n';
  out << "primitives_before " << report.primitives_before << '\n';
  out << "primitives_after " << report.primitives_after << '\n';
  out << "scenarios " << report.scenarios << '\n';
  out << "scenario_instances " << report.scenario_instances << '\n';
  out << "new_scenarios " << report.new_scenarios << '\n';
  for (const auto& s : catalog.scenarios) {
    if (s.behavior_id != behavior_id) continue;
    long long count = 0;
    for (const auto& r : catalog.scenario_instances) count += r.scenario_id == s.scenario_id;
    out << "scenario " << s.scenario_id << " sequence " << format_label_sequence(s.label_sequence) << " instances "
        << count;
    if (s.name) out << " name " << *s.name;
    out << '\n';
  }
  return kOk;
}

struct QueryArgs {
  std::string catalog, scenario, channels, out;
};

int cmd_query(const QueryArgs& a, std::ostream& out) {
  const Catalog catalog = Catalog::load(a.catalog);
  const auto channels = split_list(a.channels);
  const auto windows = catalog.query_by_scenario(a.scenario, channels);
  fs::create_directories(a.out);
  for (const auto& w : windows) {
    const BagRow& bag = catalog.bag(w.bag_id);
    std::ostringstream csv;
    std::vector<std::string> header = {"frame_index", "timestamp"};
    header.insert(header.end(), w.channels.begin(), w.channels.end());
    csv::write_row(csv, header);
    for (long long k = w.start_frame; k <= w.end_frame; ++k) {
      std::vector<std::string> row = {std::to_string(k),
                                      format_double(frame_time(bag.start_time, bag.rate_hz, static_cast<int>(k)))};
      for (Eigen::Index c = 0; c < w.data.rows(); ++c) row.push_back(format_double(w.data(c, k - w.start_frame)));
      csv::write_row(csv, row);
    }
    const std::string name = "scenario" + std::to_string(w.scenario_id) + "_" + sanitize(w.bag_id) + "_" +
                             std::to_string(w.start_frame) + "-" + std::to_string(w.end_frame) + ".csv";
    write_file(fs::path(a.out) / name, csv.str());
    out << "window " << w.scenario_id << ' ' << w.bag_id << ' ' << w.start_frame << ' ' << w.end_frame << ' '
        << name << '\n';
  }
  out << "count " << windows.size() << '\n';
  return kOk;
}

struct SynthArgs {
  int states = 2, dims = 1, frames = 100;
  std::uint64_t seed = 0;
  double self_transition = 0.98, separation = 4.0, rate = 10.0;
  bool maneuver = false;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const testkit::GroundTruthTrace trace =
      a.maneuver ? testkit::make_maneuver_trace(a.seed)
                 : testkit::make_synthetic_trace(a.states, a.dims, a.frames, a.self_transition, a.separation, a.seed,
                                                 a.rate);
  testkit::write_trace_bag(trace, a.out);
  out << "bag_id " << trace.bag.bag_id << '\n';
  out << "behavior " << trace.behavior.name << '\n';
  out << "frames " << trace.bag.frames() << '\n';
  out << "manifest " << (fs::path(a.out) / "manifest.json").string() << '\n';
  return kOk;
}

struct ExportArgs {
  std::string catalog, bag, out, channels;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  const Catalog catalog = Catalog::load(a.catalog);
  std::optional<std::vector<std::string>> channels;
  if (!a.channels.empty()) channels = split_list(a.channels);
  for (const auto& path : catalog.export_bag(a.bag, a.out, channels)) out << path.string() << '\n';
  return kOk;
}

struct NameArgs {
  std::string catalog, name;
  RowId scenario_id = 0;
};

int cmd_name(const NameArgs& a, std::ostream& out) {
  CatalogLock lock(a.catalog);
  Catalog catalog = Catalog::load(a.catalog);
  catalog.name_scenario(a.scenario_id, a.name);
  catalog.save(a.catalog);
  out << "scenario " << a.scenario_id << " name " << a.name << '\n';
  return kOk;
}

}  // namespace

int exit_code_for(const std::string& kind) {
  if (kind == "parameter") return kUsage;
  if (kind == "parse" || kind == "range" || kind == "gap") return kInput;
  if (kind == "numeric") return kNumeric;
  return kCatalog;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Segment multichannel sensor logs into primitives and index them by scenario", "primseg"};
  app.require_subcommand(1);

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Resample a recorded bag and insert it into the catalog");
  ingest_cmd->add_option("--manifest", ingest.manifest, "Bag manifest (JSON)")->required();
  ingest_cmd->add_option("--catalog", ingest.catalog, "Catalog directory")->required();
  ingest_cmd->add_option("--behavior", ingest.behavior, "Behavior name")->required();
  ingest_cmd->add_option("--dataset", ingest.dataset, "Dataset name");

  SegmentArgs segment;
  std::uint64_t segment_seed = 0;
  auto* segment_cmd = app.add_subcommand("segment", "Fit the sticky HDP-HMM to one bag and record primitives");
  segment_cmd->add_option("--catalog", segment.catalog, "Catalog directory")->required();
  segment_cmd->add_option("--bag", segment.bag, "Bag id")->required();
  segment_cmd->add_option("--behavior", segment.behavior, "Behavior name")->required();
  segment_cmd->add_option("--config", segment.config, "Gibbs config (JSON)");
  auto* seed_opt = segment_cmd->add_option("--seed", segment_seed, "RNG seed (overrides the config)");
  segment_cmd->add_option("--out", segment.out, "Segmentation CSV path");

  UnifyArgs unify;
  auto* unify_cmd = app.add_subcommand("unify", "Filter and merge primitives, then compose scenarios");
  unify_cmd->add_option("--catalog", unify.catalog, "Catalog directory")->required();
  unify_cmd->add_option("--behavior", unify.behavior, "Behavior name")->required();
  unify_cmd->add_option("--config", unify.config, "Unify config (JSON)");

  QueryArgs query;
  auto* query_cmd = app.add_subcommand("query", "Write every window of a scenario as CSV");
  query_cmd->add_option("--catalog", query.catalog, "Catalog directory")->required();
  query_cmd->add_option("--scenario", query.scenario, "Scenario name or primitive-id sequence")->required();
  query_cmd->add_option("--channels", query.channels, "Comma-separated channel selectors")->required();
  query_cmd->add_option("--out", query.out, "Output directory")->required();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic bag with ground-truth labels");
  synth_cmd->add_option("--states", synth.states, "Number of hidden states");
  synth_cmd->add_option("--dims", synth.dims, "Number of channels");
  synth_cmd->add_option("--frames", synth.frames, "Number of frames");
  synth_cmd->add_option("--seed", synth.seed, "RNG seed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--self-transition", synth.self_transition, "Self-transition probability");
  synth_cmd->add_option("--separation", synth.separation, "Minimum distance between state means");
  synth_cmd->add_option("--rate", synth.rate, "Sampling rate in Hz");
  synth_cmd->add_flag("--maneuver", synth.maneuver, "Steering/speed trace with five maneuver regimes");

  ExportArgs exporter;
  auto* export_cmd = app.add_subcommand("export", "Write a stored bag back out as topic CSVs and a manifest");
  export_cmd->add_option("--catalog", exporter.catalog, "Catalog directory")->required();
  export_cmd->add_option("--bag", exporter.bag, "Bag id")->required();
  export_cmd->add_option("--out", exporter.out, "Output directory")->required();
  export_cmd->add_option("--channels", exporter.channels, "Comma-separated channel selectors");

  NameArgs naming;
  auto* name_cmd = app.add_subcommand("name", "Attach a name to a scenario");
  name_cmd->add_option("--catalog", naming.catalog, "Catalog directory")->required();
  name_cmd->add_option("--scenario-id", naming.scenario_id, "Scenario id")->required();
  name_cmd->add_option("--name", naming.name, "Scenario name")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(ingest, out);
    if (*segment_cmd) {
      if (*seed_opt) segment.seed = segment_seed;
      return cmd_segment(segment, out);
    }
    if (*unify_cmd) return cmd_unify(unify, out);
    if (*query_cmd) return cmd_query(query, out);
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*export_cmd) return cmd_export(exporter, out);
    if (*name_cmd) return cmd_name(naming, out);
  } catch (const Error& e) {
    err << e.kind() << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "io: " << e.what() << '\n';
    return kInput;
  }
  return kUsage;
}

}  // namespace primseg::cli
