// Runs every acceptance experiment at its stated tolerances and prints one
// line per criterion. Exit status is nonzero if any criterion fails.

#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>

#include "pinchlab/lab.hpp"

int main(int argc, char** argv) {
  using namespace pinchlab;
  const std::string only = argc > 1 ? argv[1] : "";
  int failed = 0;
  for (const auto& name : experiment_names()) {
    if (!only.empty() && name != only) continue;
    ExperimentConfig config;
    config.experiment = name;
    std::ostringstream line;
    line << "criterion " << criterion_of(name) << " [" << name << "]: ";
    try {
      const ExperimentReport r = run_experiment(config);
      int passed = 0;
      std::ostringstream failures;
      for (const auto& c : r.checks) {
        if (c.pass) {
          ++passed;
        } else {
          failures << "; " << c.name << " = " << c.value << " (needs " << c.relation << ' ' << c.threshold << ")";
          if (!c.detail.empty()) failures << " [" << c.detail << "]";
        }
      }
      char elapsed[32];
      std::snprintf(elapsed, sizeof elapsed, "%.1f", r.elapsed_seconds);
      line << (r.pass ? "PASS" : "FAIL") << " (" << passed << '/' << r.checks.size() << " checks, " << elapsed
           << " s)" << failures.str();
      if (!r.pass) ++failed;
    } catch (const std::exception& e) {
      line << "FAIL (error: " << e.what() << ')';
      ++failed;
    }
    std::cout << line.str() << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
