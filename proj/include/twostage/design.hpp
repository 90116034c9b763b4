#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "twostage/rng.hpp"

namespace twostage {

// The fixed randomization frame of a two-stage experiment. Mechanisms and
// clusters are zero-based throughout the library.
struct DesignSpec {
  std::vector<int> cluster_counts;       // J_a, one per mechanism
  std::vector<int> cluster_sizes;        // n_j, one per cluster
  std::vector<double> treated_fraction;  // p_a, one per mechanism
  // treated_counts[j][a] = n_{j1} if cluster j draws mechanism a.
  // Left empty, validate_design derives round(n_j * p_a) (half up).
  std::vector<std::vector<int>> treated_counts;
  // Set by validate_design when some n_j * p_a was not an integer.
  std::vector<std::string> notes;

  int mechanisms() const noexcept { return static_cast<int>(cluster_counts.size()); }
  int clusters() const noexcept { return static_cast<int>(cluster_sizes.size()); }
  double share(int a) const noexcept {
    return static_cast<double>(cluster_counts[a]) / static_cast<double>(clusters());
  }
  int treated(int j, int a) const { return treated_counts[j][a]; }
  int controls(int j, int a) const { return cluster_sizes[j] - treated_counts[j][a]; }
};

// Throws Error{BadCounts} for inconsistent counts and Error{EmptyArm} when a
// cluster would have no treated or no control units under some mechanism.
DesignSpec validate_design(DesignSpec spec);

// Equal-size design: J_a = counts[a], every cluster of size n.
DesignSpec make_design(std::vector<int> cluster_counts, std::vector<int> cluster_sizes,
                       std::vector<double> treated_fraction);

struct AssignmentRealization {
  std::vector<int> mechanisms;                     // A_j
  std::vector<std::vector<std::uint8_t>> treated;  // Z_ij, row j has n_j entries
};

// Uniform over all vectors with exactly J_a clusters on mechanism a.
std::vector<int> draw_first_stage(const DesignSpec& spec, Rng& rng);

// Per cluster a uniformly random treated subset of size n_{j1}(A_j).
std::vector<std::vector<std::uint8_t>> draw_second_stage(const DesignSpec& spec,
                                                         const std::vector<int>& mechanisms,
                                                         Rng& rng);

AssignmentRealization draw_assignment(const DesignSpec& spec, Rng& rng);

// Position of (z, a) in the 2m-vector: treated slot 2a, control slot 2a + 1.
std::size_t index_of(int z, int a, int mechanisms);

}  // namespace twostage
