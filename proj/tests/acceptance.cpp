// One line per criterion; nonzero exit if any criterion fails.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "thermochaos/experiments/acceptance.hpp"
#include "thermochaos/parallel.hpp"

int main(int argc, char** argv) {
  using namespace thermochaos::acceptance;
  Options o;
  o.threads = thermochaos::default_threads();
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  std::printf("acceptance: %zu worker thread(s)\n", o.threads);
  const auto results = run_all(
      o,
      [](const CriterionResult& r) {
        std::printf("%s\n", format_line(r).c_str());
        std::fflush(stdout);
      },
      only);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::printf("%zu/%zu criteria passed\n", results.size() - failed, results.size());
  return failed == 0 ? 0 : 1;
}
