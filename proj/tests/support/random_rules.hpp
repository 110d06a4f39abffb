#pragma once

#include "medsafe/indicator.hpp"
#include "medsafe/util.hpp"

namespace medsafe::fixture {

/// Random well-formed condition over the shipped code sets, depth-bounded.
Condition random_condition(Rng& rng, int depth);
IndicatorRule random_rule(Rng& rng, int index);

}  // namespace medsafe::fixture
