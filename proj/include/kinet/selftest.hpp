#pragma once

// Built-in verification suites: gradient checks, FK/IK round trips and loss
// branch cases.

#include <iosfwd>
#include <string>
#include <vector>

namespace kinet {

struct SelftestCase {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  int round_trips = 1000;
  unsigned long long seed = 1;
  /// Name of a gradient case whose reverse-mode result is perturbed before
  /// comparison; used to prove the suite can fail. Empty for none.
  std::string inject_fault;
};

struct SelftestReport {
  std::vector<SelftestCase> cases;

  bool passed() const;
  /// One line per suite ("suite passed/total") then one line per failure.
  void print(std::ostream& os) const;
};

SelftestReport run_selftest(const SelftestOptions& options = {});

/// Names accepted by SelftestOptions::inject_fault.
std::vector<std::string> gradient_case_names();

}  // namespace kinet
