// One line per acceptance criterion. Exit status 1 when any criterion fails.
// Usage: acceptance [ids...]   (default: all nine)
#include "robust_sparse/acceptance.hpp"

#include <cstdlib>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) ids.push_back(std::atoi(argv[i]));
  if (ids.empty()) ids = rs::all_criteria();
  int failed = 0;
  for (int id : ids) {
    auto r = rs::run_criterion(id);
    std::cout << rs::format_result(r) << std::endl;
    failed += !r.passed();
  }
  std::cout << (ids.size() - size_t(failed)) << "/" << ids.size() << " criteria passed" << std::endl;
  return failed ? 1 : 0;
}
