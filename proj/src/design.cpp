#include "twostage/design.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "twostage/error.hpp"

namespace twostage {

namespace {

// Half-up rounding; values within 1e-9 of an integer count as exact.
int round_count(double x, bool& was_rounded) {
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9) {
    was_rounded = false;
    return static_cast<int>(nearest);
  }
  was_rounded = true;
  return static_cast<int>(std::floor(x + 0.5));
}

}  // namespace

DesignSpec validate_design(DesignSpec spec) {
  const int m = spec.mechanisms();
  if (m < 1) throw Error(ErrorCode::BadCounts, "design needs at least one mechanism");
  if (static_cast<int>(spec.treated_fraction.size()) != m && spec.treated_counts.empty()) {
    throw Error(ErrorCode::BadCounts, "treated_fraction must have one entry per mechanism");
  }
  for (int a = 0; a < m; ++a) {
    if (spec.cluster_counts[a] < 1) {
      throw Error(ErrorCode::BadCounts, "mechanism " + std::to_string(a + 1) + " has no clusters");
    }
  }
  const int total = std::accumulate(spec.cluster_counts.begin(), spec.cluster_counts.end(), 0);
  if (total != spec.clusters()) {
    std::ostringstream msg;
    msg << "cluster counts sum to " << total << " but " << spec.clusters()
        << " cluster sizes were given";
    throw Error(ErrorCode::BadCounts, msg.str());
  }
  for (int j = 0; j < spec.clusters(); ++j) {
    if (spec.cluster_sizes[j] < 2) {
      throw Error(ErrorCode::BadCounts, "cluster " + std::to_string(j) + " has fewer than 2 units");
    }
  }

  if (spec.treated_counts.empty()) {
    for (double p : spec.treated_fraction) {
      if (!(p >= 0.0 && p <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "treated fractions must lie in [0, 1]");
      }
    }
    int rounded = 0;
    spec.treated_counts.assign(spec.clusters(), std::vector<int>(m, 0));
    for (int j = 0; j < spec.clusters(); ++j) {
      for (int a = 0; a < m; ++a) {
        bool was_rounded = false;
        spec.treated_counts[j][a] =
            round_count(spec.cluster_sizes[j] * spec.treated_fraction[a], was_rounded);
        rounded += was_rounded ? 1 : 0;
      }
    }
    if (rounded > 0) {
      spec.notes.push_back("treated counts rounded half-up from n_j * p_a for " +
                           std::to_string(rounded) + " (cluster, mechanism) pairs");
    }
  } else if (static_cast<int>(spec.treated_counts.size()) != spec.clusters()) {
    throw Error(ErrorCode::BadCounts, "treated_counts must have one row per cluster");
  }

  for (int j = 0; j < spec.clusters(); ++j) {
    if (static_cast<int>(spec.treated_counts[j].size()) != m) {
      throw Error(ErrorCode::BadCounts, "treated_counts row must have one entry per mechanism");
    }
    for (int a = 0; a < m; ++a) {
      const int n1 = spec.treated_counts[j][a];
      if (n1 < 1 || n1 > spec.cluster_sizes[j] - 1) {
        std::ostringstream msg;
        msg << "cluster " << j << " under mechanism " << a + 1 << " would have " << n1
            << " of " << spec.cluster_sizes[j] << " units treated";
        throw Error(ErrorCode::EmptyArm, msg.str());
      }
    }
  }
  return spec;
}

DesignSpec make_design(std::vector<int> cluster_counts, std::vector<int> cluster_sizes,
                       std::vector<double> treated_fraction) {
  DesignSpec spec;
  spec.cluster_counts = std::move(cluster_counts);
  spec.cluster_sizes = std::move(cluster_sizes);
  spec.treated_fraction = std::move(treated_fraction);
  return validate_design(std::move(spec));
}

std::vector<int> draw_first_stage(const DesignSpec& spec, Rng& rng) {
  std::vector<int> mechanisms;
  mechanisms.reserve(spec.clusters());
  for (int a = 0; a < spec.mechanisms(); ++a) {
    mechanisms.insert(mechanisms.end(), spec.cluster_counts[a], a);
  }
  // Fisher-Yates; every arrangement of the multiset is equally likely.
  for (std::size_t i = mechanisms.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(mechanisms[i - 1], mechanisms[pick(rng)]);
  }
  return mechanisms;
}

std::vector<std::vector<std::uint8_t>> draw_second_stage(const DesignSpec& spec,
                                                         const std::vector<int>& mechanisms,
                                                         Rng& rng) {
  if (static_cast<int>(mechanisms.size()) != spec.clusters()) {
    throw Error(ErrorCode::ShapeMismatch, "mechanism vector length differs from cluster count");
  }
  std::vector<std::vector<std::uint8_t>> treated(spec.clusters());
  for (int j = 0; j < spec.clusters(); ++j) {
    const int n = spec.cluster_sizes[j];
    const int n1 = spec.treated(j, mechanisms[j]);
    auto& row = treated[j];
    row.assign(n, 0);
    std::fill(row.begin(), row.begin() + n1, std::uint8_t{1});
    for (int i = n; i > 1; --i) {
      std::uniform_int_distribution<int> pick(0, i - 1);
      std::swap(row[i - 1], row[pick(rng)]);
    }
  }
  return treated;
}

AssignmentRealization draw_assignment(const DesignSpec& spec, Rng& rng) {
  AssignmentRealization out;
  out.mechanisms = draw_first_stage(spec, rng);
  out.treated = draw_second_stage(spec, out.mechanisms, rng);
  return out;
}

std::size_t index_of(int z, int a, int mechanisms) {
  if ((z != 0 && z != 1) || a < 0 || a >= mechanisms) {
    throw Error(ErrorCode::OutOfRange, "(z, a) = (" + std::to_string(z) + ", " +
                                           std::to_string(a) + ") outside a design with " +
                                           std::to_string(mechanisms) + " mechanisms");
  }
  return static_cast<std::size_t>(2 * a + (z == 1 ? 0 : 1));
}

}  // namespace twostage
