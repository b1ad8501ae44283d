#pragma once

#include <functional>
#include <string>
#include <vector>

namespace hsseg::testing {

/// A randomised invariant check. `run` returns an empty string on success,
/// otherwise a description of the first counterexample.
struct Property {
  std::string module;
  std::string name;
  std::function<std::string()> run;
};

/// Every module invariant, each exercised over seeded random inputs.
const std::vector<Property>& all_properties();

}  // namespace hsseg::testing
