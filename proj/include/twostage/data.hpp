#pragma once

#include <string>
#include <vector>

namespace twostage {

// Observed outcomes of one cluster, split by arm.
struct ClusterData {
  std::string id;
  int mechanism = 0;  // zero-based, dense
  std::vector<double> treated;
  std::vector<double> control;

  int size() const noexcept { return static_cast<int>(treated.size() + control.size()); }
};

// One realized two-stage experiment. Every cluster carries exactly one
// mechanism; `mechanism_labels[a]` is the label mechanism a had on input.
struct ExperimentData {
  int mechanisms = 0;
  std::vector<ClusterData> clusters;
  std::vector<int> mechanism_labels;

  int cluster_count() const noexcept { return static_cast<int>(clusters.size()); }
  std::vector<int> clusters_per_mechanism() const;
  // q_a = J_a / J from the observed cluster counts.
  std::vector<double> shares() const;
};

// A single observation as it appears in a flat table.
struct Record {
  std::string cluster_id;
  int mechanism = 0;  // label as given (not necessarily dense)
  int treated = 0;
  double outcome = 0.0;
};

enum class ArmPolicy { Strict, AllowDrop };

struct GroupingResult {
  ExperimentData data;
  std::vector<std::string> dropped;  // ids of clusters removed under AllowDrop
};

// Groups records by cluster (first-appearance order) and relabels mechanisms
// densely in ascending label order. Throws MixedMechanism, EmptyArm (Strict)
// or MissingMechanism (a mechanism lost every cluster after dropping).
GroupingResult group_records(const std::vector<Record>& records, ArmPolicy policy);

// Applies the both-arms rule to already grouped data.
GroupingResult enforce_arms(ExperimentData data, ArmPolicy policy);

std::vector<Record> to_records(const ExperimentData& data);

}  // namespace twostage
