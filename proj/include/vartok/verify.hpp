#pragma once

// Self-contained release gate. Re-derives the numeric invariants every
// module promises (ball identities, gradient agreement, length-allocation
// oracles, volume growth, tree embedding quality, registry uniqueness,
// constrained decoding) on fresh random draws and reports one pass/fail
// line per check. The CLI turns any failure into a nonzero exit.

#include <cstdint>
#include <string>
#include <vector>

#include "vartok/harq.hpp"

namespace vartok::verify {

struct VerifyCheck {
  std::string name;
  bool passed = false;
  std::string detail;  // measured value on pass, diagnostic on fail
};

struct VerifyReport {
  std::vector<VerifyCheck> checks;

  bool all_passed() const;
  int failures() const;
};

// Every codeword inside the safe ball and every network parameter finite.
// Callers can corrupt a model to confirm the gate notices.
VerifyCheck check_model_safety(const harq::HarqModel& model);

// The full battery (at least 20 checks). Deterministic per seed.
VerifyReport verify_suite(std::uint64_t seed = 0);

}  // namespace vartok::verify
