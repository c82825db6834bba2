#include <cstdlib>
#include <iostream>

#include "fragbench/acceptance.hpp"

// Runs every acceptance criterion with the default seed; exit 1 on any failure.
int main() {
  fragbench::AcceptanceOptions options;
  if (const char* env = std::getenv("FRAGBENCH_THREADS"); env && *env) options.threads = std::atoi(env);
  bool all = true;
  double total = 0.0;
  fragbench::run_acceptance(options, [&](const fragbench::CriterionResult& r) {
    std::cout << fragbench::format_result_line(r) << std::endl;
    all = all && r.passed;
    total += r.seconds;
  });
  std::cout << (all ? "all criteria passed" : "acceptance FAILED") << " (" << std::fixed << std::setprecision(1)
            << total << "s)" << std::endl;
  return all ? 0 : 1;
}
