#pragma once

#include <string>
#include <vector>

namespace rs {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool property_holds = false;
  double seconds = 0.0;
  double limit_seconds = 0.0;
  std::string detail;
  // the measured property and the runtime budget both count
  bool passed() const { return property_holds && seconds < limit_seconds; }
};

// Criteria 1-4, 8 and 9 (the quick ones).
std::vector<int> default_criteria();
// 1 through 9.
std::vector<int> all_criteria();

// Runs one acceptance criterion. Throws std::out_of_range for an unknown id; any other
// exception inside a criterion is reported as a failed property.
CriterionResult run_criterion(int id);

// "PASS  5 headline scaling  812.3 s / 1200 s  <detail>"
std::string format_result(const CriterionResult& r);

}  // namespace rs
