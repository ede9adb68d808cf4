#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace curvelight {

struct GradCheckComponent {
  std::string name;
  double max_rel_err = 0;
  int64_t checked = 0;
  int64_t skipped = 0;  // coordinates straddling a kink, excluded from comparison
};

/// Runs the 64-bit central finite-difference suite on small tensors: every
/// core op, the iterated curve application, each of the four losses, and the
/// full composite objective for both network variants. inject_fault flips the
/// sign of one analytic gradient (test hook for the failure path).
std::vector<GradCheckComponent> run_gradcheck_suite(uint64_t seed, bool inject_fault = false);

bool gradcheck_passes(const std::vector<GradCheckComponent>& components, double tol = 1e-4);

}  // namespace curvelight
