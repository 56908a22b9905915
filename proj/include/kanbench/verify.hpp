// SPDX-License-Identifier: Apache-2.0
//
// Self-check suite behind `kanbench verify`: the library's invariants,
// evaluated on seeded random inputs in a few seconds.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kanbench::verify {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<Check> run_all(std::uint64_t seed = 0);

}  // namespace kanbench::verify
