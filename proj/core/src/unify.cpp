#include "primseg/unify.hpp"

#include "primseg/errors.hpp"
#include "primseg/linalg.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

namespace primseg {

namespace {

using json = nlohmann::json;

template <typename Label>
void coalesce(std::vector<Run<Label>>& runs) {
  std::vector<Run<Label>> out;
  for (const auto& r : runs) {
    if (!out.empty() && out.back().label == r.label) {
      out.back().end = r.end;
    } else {
      out.push_back(r);
    }
  }
  runs.swap(out);
}

template <typename Label>
std::vector<Label> expand(const std::vector<Run<Label>>& runs, std::size_t size) {
  std::vector<Label> out(size);
  for (const auto& r : runs) {
    std::fill(out.begin() + r.start, out.begin() + r.end + 1, r.label);
  }
  return out;
}

// Repeatedly relabels the first run matching `absorb` with its predecessor's
// label (successor's for the leading run) until no run matches or one run is left.
template <typename Label, typename Pred>
std::vector<Label> absorb_runs(const std::vector<Label>& labels, Pred absorb) {
  auto runs = run_length_encode(labels);
  while (runs.size() > 1) {
    const auto it = std::find_if(runs.begin(), runs.end(), absorb);
    if (it == runs.end()) break;
    const auto i = static_cast<std::size_t>(it - runs.begin());
    it->label = i == 0 ? runs[1].label : runs[i - 1].label;
    coalesce(runs);
  }
  return expand(runs, labels.size());
}

template <typename Label>
std::vector<Label> filter_short(const std::vector<Label>& labels, double rate_hz, double min_duration_s) {
  if (labels.empty()) throw ParameterError("filter_short_runs: empty label sequence");
  if (!(rate_hz > 0.0)) throw ParameterError("filter_short_runs: rate must be positive");
  if (!(min_duration_s >= 0.0)) throw ParameterError("filter_short_runs: duration must be nonnegative");
  const auto min_len = static_cast<long long>(std::ceil(min_duration_s * rate_hz));
  if (min_len <= 1) return labels;
  return absorb_runs(labels, [min_len](const Run<Label>& r) { return r.length() < min_len; });
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

void UnifyConfig::validate() const {
  if (!(min_duration_s >= 0.0) || !std::isfinite(min_duration_s)) {
    throw ParameterError("min_duration_s must be a nonnegative number");
  }
  if (min_occurrences < 1) throw ParameterError("min_occurrences must be at least 1");
  if (!(merge_threshold >= 0.0) || !std::isfinite(merge_threshold)) {
    throw ParameterError("merge_threshold must be a nonnegative number");
  }
  if (window_runs < 1) throw ParameterError("window_runs must be at least 1");
}

UnifyConfig UnifyConfig::from_json(const std::string& text) {
  UnifyConfig cfg;
  try {
    const json j = json::parse(text);
    if (!j.is_object()) throw ParameterError("unify config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "min_duration_s") cfg.min_duration_s = value.get<double>();
      else if (key == "min_occurrences") cfg.min_occurrences = value.get<int>();
      else if (key == "merge_threshold") cfg.merge_threshold = value.get<double>();
      else if (key == "window_runs") cfg.window_runs = value.get<int>();
      else throw ParameterError("unknown unify config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("invalid unify config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

UnifyConfig UnifyConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open unify config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

Labels filter_short_runs(const Labels& labels, double rate_hz, double min_duration_s) {
  return filter_short(labels, rate_hz, min_duration_s);
}

std::vector<RowId> filter_short_runs(const std::vector<RowId>& labels, double rate_hz, double min_duration_s) {
  return filter_short(labels, rate_hz, min_duration_s);
}

double primitive_distance(const GaussianEmission& a, const GaussianEmission& b) {
  const Eigen::Index d = a.mean.size();
  if (b.mean.size() != d || a.cov.rows() != d || b.cov.rows() != d || a.cov.cols() != d || b.cov.cols() != d) {
    throw ParameterError("primitive_distance: dimension mismatch");
  }
  const Eigen::MatrixXd la = strict_cholesky(a.cov, "primitive covariance");
  const Eigen::MatrixXd lb = strict_cholesky(b.cov, "primitive covariance");
  const double trace_ab = lb.triangularView<Eigen::Lower>().solve(la).squaredNorm();  // tr(Sb^-1 Sa)
  const double trace_ba = la.triangularView<Eigen::Lower>().solve(lb).squaredNorm();  // tr(Sa^-1 Sb)
  const Eigen::VectorXd delta = a.mean - b.mean;
  const double quad_a = la.triangularView<Eigen::Lower>().solve(delta).squaredNorm();
  const double quad_b = lb.triangularView<Eigen::Lower>().solve(delta).squaredNorm();
  // Log-determinant terms cancel in the symmetric sum.
  const double value = 0.5 * ((trace_ab + trace_ba) + (quad_a + quad_b)) - static_cast<double>(d);
  return std::max(value, 0.0);
}

GaussianEmission pooled_gaussian(const std::vector<PrimitiveStats>& members) {
  if (members.empty()) throw ParameterError("pooled_gaussian: no members");
  const Eigen::Index d = members.front().emission.mean.size();
  double total = 0.0;
  for (const auto& m : members) total += static_cast<double>(m.frames);
  const bool equal = !(total > 0.0);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
  for (const auto& m : members) {
    if (m.emission.mean.size() != d) throw ParameterError("pooled_gaussian: dimension mismatch");
    const double w = equal ? 1.0 / static_cast<double>(members.size()) : static_cast<double>(m.frames) / total;
    mean += w * m.emission.mean;
    second += w * (m.emission.cov + m.emission.mean * m.emission.mean.transpose());
  }
  Eigen::MatrixXd cov = second - mean * mean.transpose();
  return {mean, 0.5 * (cov + cov.transpose())};
}

MergeResult merge_primitives(const std::vector<PrimitiveStats>& primitives, double threshold) {
  if (primitives.empty()) throw ParameterError("merge_primitives: no primitives");
  if (!(threshold >= 0.0)) throw ParameterError("merge_primitives: threshold must be nonnegative");
  std::vector<PrimitiveStats> sorted = primitives;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.primitive_id < b.primitive_id; });
  const std::size_t n = sorted.size();

  std::vector<std::tuple<double, RowId, RowId, std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dist = primitive_distance(sorted[i].emission, sorted[j].emission);
      if (dist < threshold) edges.emplace_back(dist, sorted[i].primitive_id, sorted[j].primitive_id, i, j);
    }
  }
  std::sort(edges.begin(), edges.end());
  DisjointSets sets(n);
  for (const auto& e : edges) sets.unite(std::get<3>(e), std::get<4>(e));

  MergeResult result;
  std::map<std::size_t, std::vector<PrimitiveStats>> clusters;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);  // lowest index == lowest id
    result.mapping[sorted[i].primitive_id] = sorted[root].primitive_id;
    clusters[root].push_back(sorted[i]);
  }
  for (const auto& [root, members] : clusters) {
    PrimitiveStats stats;
    stats.primitive_id = sorted[root].primitive_id;
    stats.emission = members.size() == 1 ? members.front().emission : pooled_gaussian(members);
    for (const auto& m : members) stats.frames += m.frames;
    result.canonical[stats.primitive_id] = std::move(stats);
  }
  return result;
}

std::vector<ScenarioCandidate> compose_scenarios(const std::vector<RowId>& frame_labels, int window_runs) {
  if (window_runs < 1) throw ParameterError("compose_scenarios: window_runs must be at least 1");
  const auto runs = run_length_encode(frame_labels);
  std::vector<ScenarioCandidate> out;
  for (std::size_t i = 0; i < runs.size(); i += static_cast<std::size_t>(window_runs)) {
    ScenarioCandidate c;
    const std::size_t stop = std::min(runs.size(), i + static_cast<std::size_t>(window_runs));
    for (std::size_t j = i; j < stop; ++j) c.label_sequence.push_back(runs[j].label);
    c.start_frame = runs[i].start;
    c.end_frame = runs[stop - 1].end;
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<RowId> bag_primitive_labels(const Catalog& catalog, const std::string& bag_id, RowId behavior_id) {
  const int frames = catalog.bag(bag_id).frames();
  std::set<RowId> prims;
  for (const auto& p : catalog.primitives) {
    if (p.behavior_id == behavior_id) prims.insert(p.primitive_id);
  }
  std::vector<PrimitiveInstanceRow> rows;
  for (const auto& r : catalog.primitive_instances) {
    if (r.bag_id == bag_id && prims.count(r.primitive_id)) rows.push_back(r);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.start_frame < b.start_frame; });
  std::vector<RowId> labels(static_cast<std::size_t>(frames));
  long long next = 0;
  for (const auto& r : rows) {
    if (r.start_frame != next || r.end_frame < r.start_frame || r.end_frame >= frames) {
      throw IntegrityError("primitive instances of bag '" + bag_id + "' do not tile the bag");
    }
    std::fill(labels.begin() + r.start_frame, labels.begin() + r.end_frame + 1, r.primitive_id);
    next = r.end_frame + 1;
  }
  if (next != frames) throw IntegrityError("primitive instances of bag '" + bag_id + "' do not tile the bag");
  return labels;
}

UnifyReport unify_behavior(Catalog& catalog, RowId behavior_id, const UnifyConfig& config) {
  config.validate();
  catalog.behavior(behavior_id);
  UnifyReport report;

  std::map<RowId, const PrimitiveRow*> prim_rows;
  for (const auto& p : catalog.primitives) {
    if (p.behavior_id == behavior_id) prim_rows[p.primitive_id] = &p;
  }
  report.primitives_before = static_cast<int>(prim_rows.size());
  if (prim_rows.empty()) return report;

  std::vector<std::string> bag_ids;
  for (const auto& b : catalog.bags) {
    const bool has = std::any_of(catalog.primitive_instances.begin(), catalog.primitive_instances.end(),
                                 [&](const auto& r) { return r.bag_id == b.bag_id && prim_rows.count(r.primitive_id); });
    if (has) bag_ids.push_back(b.bag_id);
  }
  report.bags = static_cast<int>(bag_ids.size());

  // Duration filter.
  std::map<std::string, std::vector<RowId>> labels;
  for (const auto& id : bag_ids) {
    labels[id] = filter_short_runs(bag_primitive_labels(catalog, id, behavior_id), catalog.bag(id).rate_hz,
                                   config.min_duration_s);
  }

  // Similarity merge over the primitives that survived.
  std::map<RowId, long long> frames;
  for (const auto& [id, seq] : labels) {
    for (RowId p : seq) ++frames[p];
  }
  std::vector<PrimitiveStats> stats;
  for (const auto& [pid, count] : frames) stats.push_back({pid, prim_rows.at(pid)->emission(), count});
  const MergeResult merged = merge_primitives(stats, config.merge_threshold);
  for (auto& [id, seq] : labels) {
    for (RowId& p : seq) p = merged.mapping.at(p);
  }

  // Occurrence filter: runs of primitives seen fewer than min_occurrences times
  // are absorbed into their neighbours, unless every primitive is rare.
  std::map<RowId, long long> occurrences;
  for (const auto& [id, seq] : labels) {
    for (const auto& run : run_length_encode(seq)) ++occurrences[run.label];
  }
  std::set<RowId> rare;
  for (const auto& [pid, count] : occurrences) {
    if (count < config.min_occurrences) rare.insert(pid);
  }
  if (rare.size() < occurrences.size()) {
    for (auto& [id, seq] : labels) {
      seq = absorb_runs(seq, [&](const Run<RowId>& r) { return rare.count(r.label) > 0; });
    }
  }

  // Rewrite primitive rows and instances.
  std::set<RowId> old_ids;
  for (const auto& [pid, row] : prim_rows) old_ids.insert(pid);
  std::erase_if(catalog.primitive_instances, [&](const auto& r) { return old_ids.count(r.primitive_id) > 0; });
  std::map<RowId, std::pair<long long, long long>> usage;  // frames, runs
  RowId next_instance = 1;
  for (const auto& r : catalog.primitive_instances) next_instance = std::max(next_instance, r.instance_id + 1);
  for (const auto& id : bag_ids) {
    for (const auto& run : run_length_encode(labels[id])) {
      catalog.primitive_instances.push_back({next_instance++, run.label, id, run.start, run.end});
      usage[run.label].first += run.length();
      usage[run.label].second += 1;
    }
  }
  std::erase_if(catalog.primitives, [&](const PrimitiveRow& p) {
    return p.behavior_id == behavior_id && !usage.count(p.primitive_id);
  });
  for (auto& p : catalog.primitives) {
    const auto u = usage.find(p.primitive_id);
    if (p.behavior_id != behavior_id || u == usage.end()) continue;
    const auto& canon = merged.canonical.at(p.primitive_id);
    p.mean_vector = canon.emission.mean;
    p.cov_matrix = canon.emission.cov;
    p.total_frames = u->second.first;
    p.occurrence_count = u->second.second;
  }
  report.primitives_after = static_cast<int>(usage.size());

  // Scenarios: remap stored sequences, then match or create candidates.
  for (auto& s : catalog.scenarios) {
    if (s.behavior_id != behavior_id) continue;
    for (RowId& p : s.label_sequence) {
      if (const auto m = merged.mapping.find(p); m != merged.mapping.end()) p = m->second;
    }
  }
  std::set<RowId> behavior_scenarios;
  for (const auto& s : catalog.scenarios) {
    if (s.behavior_id == behavior_id) behavior_scenarios.insert(s.scenario_id);
  }
  const std::set<std::string> bag_set(bag_ids.begin(), bag_ids.end());
  std::erase_if(catalog.scenario_instances, [&](const auto& r) {
    return bag_set.count(r.bag_id) && behavior_scenarios.count(r.scenario_id);
  });

  RowId next_scenario = 1;
  for (const auto& s : catalog.scenarios) next_scenario = std::max(next_scenario, s.scenario_id + 1);
  RowId next_window = 1;
  for (const auto& r : catalog.scenario_instances) next_window = std::max(next_window, r.instance_id + 1);
  for (const auto& id : bag_ids) {
    for (const auto& cand : compose_scenarios(labels[id], config.window_runs)) {
      // Prefer a named scenario, then the lowest id.
      const ScenarioRow* match = nullptr;
      for (const auto& s : catalog.scenarios) {
        if (s.behavior_id != behavior_id || s.label_sequence != cand.label_sequence) continue;
        if (!match || (s.name && !match->name)) match = &s;
      }
      RowId scenario_id = 0;
      if (match) {
        scenario_id = match->scenario_id;
      } else {
        scenario_id = next_scenario++;
        catalog.scenarios.push_back({scenario_id, behavior_id, cand.label_sequence, std::nullopt});
        ++report.new_scenarios;
      }
      catalog.scenario_instances.push_back({next_window++, scenario_id, id, cand.start_frame, cand.end_frame});
      ++report.scenario_instances;
    }
  }
  std::set<RowId> live;
  for (const auto& r : catalog.scenario_instances) live.insert(r.scenario_id);
  std::erase_if(catalog.scenarios, [&](const ScenarioRow& s) {
    return s.behavior_id == behavior_id && !s.name && !live.count(s.scenario_id);
  });
  for (const auto& s : catalog.scenarios) {
    if (s.behavior_id == behavior_id) ++report.scenarios;
  }
  return report;
}

}  // namespace primseg
