#pragma once

#include <iosfwd>
#include <string>

#include "twostage/data.hpp"

namespace twostage {

inline constexpr const char* kCsvHeader = "cluster_id,mechanism,treated,outcome";

// Header must be exactly kCsvHeader (a UTF-8 BOM and CRLF line ends are
// tolerated). Throws ParseError citing row and column, then the grouping
// errors of group_records.
GroupingResult read_csv(std::istream& in, ArmPolicy policy = ArmPolicy::Strict);
GroupingResult read_csv(const std::string& path, ArmPolicy policy = ArmPolicy::Strict);

// Round-trip writer; outcomes use the shortest exact decimal form.
void write_csv(std::ostream& out, const ExperimentData& data);
void write_csv(const std::string& path, const ExperimentData& data);

}  // namespace twostage
