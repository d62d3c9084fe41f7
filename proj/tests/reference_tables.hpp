// SPDX-License-Identifier: Apache-2.0
//
// Reference difficulty partition and precondition counts for the registry.

#pragma once

#include <set>
#include <string>
#include <vector>

namespace leir::fixtures {

// Difficulty partition, by prompt name; everything else is Difficult.
inline const std::set<std::string> kEasy = {
    "operator fission", "factorization", "expand factorization", "cancellation", "expand cancellation",
    "apart", "together", "powsimp", "expand powsimp", "logsimp", "expand log", "collect", "expand collect"};
inline const std::set<std::string> kMedium = {
    "operator fusion", "compute inline", "expression splitting", "expression reorder", "loop reorder",
    "loop unrolling", "loop parallelization", "loop vectorization", "loop binding", "exponential split",
    "multiplicative split", "additive split"};

// Precondition counts, in registry order.
inline const std::vector<int> kPreconditionCounts = {2, 2, 2, 0, 2, 0, 2, 1, 1, 2, 1, 2, 0, 1, 1, 1, 1, 0, 0, 1, 1, 1,
                                                     1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1, 0, 0, 1, 1, 1, 1, 1};

}  // namespace leir::fixtures
