#include "twostage/data.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "twostage/error.hpp"

namespace twostage {

std::vector<int> ExperimentData::clusters_per_mechanism() const {
  std::vector<int> counts(mechanisms, 0);
  for (const auto& c : clusters) ++counts[c.mechanism];
  return counts;
}

std::vector<double> ExperimentData::shares() const {
  const auto counts = clusters_per_mechanism();
  std::vector<double> q(counts.size());
  for (std::size_t a = 0; a < counts.size(); ++a) {
    q[a] = static_cast<double>(counts[a]) / static_cast<double>(clusters.size());
  }
  return q;
}

GroupingResult enforce_arms(ExperimentData data, ArmPolicy policy) {
  GroupingResult out;
  std::vector<ClusterData> kept;
  kept.reserve(data.clusters.size());
  for (auto& c : data.clusters) {
    if (!c.treated.empty() && !c.control.empty()) {
      kept.push_back(std::move(c));
      continue;
    }
    if (policy == ArmPolicy::Strict) {
      throw Error(ErrorCode::EmptyArm, "cluster '" + c.id + "' has no " +
                                           (c.treated.empty() ? "treated" : "control") +
                                           " units");
    }
    out.dropped.push_back(c.id);
  }
  data.clusters = std::move(kept);
  const auto counts = data.clusters_per_mechanism();
  for (int a = 0; a < data.mechanisms; ++a) {
    if (counts[a] == 0) {
      const int label = a < static_cast<int>(data.mechanism_labels.size())
                            ? data.mechanism_labels[a]
                            : a + 1;
      throw Error(ErrorCode::MissingMechanism,
                  "mechanism " + std::to_string(label) + " has no usable clusters");
    }
  }
  out.data = std::move(data);
  return out;
}

GroupingResult group_records(const std::vector<Record>& records, ArmPolicy policy) {
  std::map<int, int> dense;
  for (const auto& r : records) dense.emplace(r.mechanism, 0);
  ExperimentData data;
  for (auto& [label, index] : dense) {
    index = static_cast<int>(data.mechanism_labels.size());
    data.mechanism_labels.push_back(label);
  }
  data.mechanisms = static_cast<int>(dense.size());

  std::unordered_map<std::string, std::size_t> position;
  for (const auto& r : records) {
    auto [it, inserted] = position.emplace(r.cluster_id, data.clusters.size());
    if (inserted) {
      ClusterData c;
      c.id = r.cluster_id;
      c.mechanism = dense.at(r.mechanism);
      data.clusters.push_back(std::move(c));
    }
    auto& cluster = data.clusters[it->second];
    if (cluster.mechanism != dense.at(r.mechanism)) {
      throw Error(ErrorCode::MixedMechanism,
                  "cluster '" + r.cluster_id + "' appears under mechanisms " +
                      std::to_string(data.mechanism_labels[cluster.mechanism]) + " and " +
                      std::to_string(r.mechanism));
    }
    (r.treated == 1 ? cluster.treated : cluster.control).push_back(r.outcome);
  }
  return enforce_arms(std::move(data), policy);
}

std::vector<Record> to_records(const ExperimentData& data) {
  std::vector<Record> out;
  for (const auto& c : data.clusters) {
    const int label = c.mechanism < static_cast<int>(data.mechanism_labels.size())
                          ? data.mechanism_labels[c.mechanism]
                          : c.mechanism + 1;
    for (double y : c.treated) out.push_back({c.id, label, 1, y});
    for (double y : c.control) out.push_back({c.id, label, 0, y});
  }
  return out;
}

}  // namespace twostage
