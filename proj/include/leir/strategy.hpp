// SPDX-License-Identifier: Apache-2.0
//
// The 43 atomic strategies: registry metadata, feasibility, parameter
// sampling and application.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "leir/ast.hpp"

namespace leir {

enum class StrategyId {
    // graph
    OperatorFusion, OperatorFission, ComputeInline, ExpressionSplitting, TensorConcatFuse,
    TensorSplitDecouple, CommonSubexprElim, ExpressionReorder,
    // operator
    LoopReorder, LoopTiling, LoopSplit, LoopFusion, LoopUnrolling, LoopParallelization,
    LoopVectorization, LoopBinding, ReductionFactorization,
    // memory
    CacheReadWrite, LayoutTransformation, SetStorageScope, SetStorageLayout, PrecomputeIndices,
    // math
    Factorization, ExpandFactorization, Cancellation, ExpandCancellation, Apart, Together,
    PowSimp, ExpandPowSimp, LogSimp, ExpandLog, Collect, ExpandCollect,
    PartiallyEquivalentThenCorrect, ExponentialSplit, MultiplicativeSplit, AdditiveSplit,
    PrefixMax, PrefixExpSum, OnlineSoftmax, FlashAttentionNoTiling, PrefixMatmulOnlineSoftmax,
};

constexpr size_t kStrategyCount = 43;

enum class Level { Graph, Operator, Memory, Math };
enum class Precondition {
    PatternMatch, Dependency, OperationIdentity, LoopNestConsistency, EquationCount,
    LoopAxisCount, LoopRangeFactorization, ReductionAxis, IntermediateVariable,
};
enum class Bucket { Easy, Medium, Difficult };

std::string_view to_string(Level l);
std::string_view to_string(Precondition p);
std::string_view to_string(Bucket b);

struct StrategyMeta {
    StrategyId id;
    std::string_view name;  // canonical lowercase prompt name
    std::string_view key;   // snake_case identifier
    Level level;
    std::vector<Precondition> preconditions;
    int K = 0;
    int P = 1;
    int S = 0;
    bool simplification = false;
    std::string_view description;  // one-line summary used in traces
};

const std::vector<StrategyMeta>& registry();
const StrategyMeta& meta(StrategyId id);
std::vector<StrategyId> all_strategies();
// Accepts the canonical name or the snake_case key.
std::optional<StrategyId> strategy_from_name(std::string_view name);

// 0.1K + 0.5(P-1) + S.
double difficulty_score(const StrategyMeta& m);
Bucket bucket_of(double score);
Bucket bucket_of(StrategyId id);

// Registered inverse; loop fusion reverses both split and tiling, so
// `inverses_of` lists every partner and `inverse_of` returns the first.
std::optional<StrategyId> inverse_of(StrategyId id);
std::vector<StrategyId> inverses_of(StrategyId id);
bool are_inverse(StrategyId a, StrategyId b);

// Where a strategy applies. Fields not used by a strategy stay empty.
struct Site {
    StrategyId strategy{};
    std::vector<size_t> exprs;   // top-level expression indices
    std::vector<size_t> path;    // body-item path to an equation in exprs[0]
    std::vector<size_t> loops;   // loop positions in exprs[0]
    std::vector<size_t> term;    // argument path inside the equation rhs
    std::vector<std::string> names;
    int64_t option = 0;          // rule or pattern variant

    std::string describe() const;
    nlohmann::json to_json() const;
    static Site from_json(const nlohmann::json& j);
};

using Params = nlohmann::json;

struct Diff {
    size_t modified_exprs = 0;
    size_t modified_loops = 0;
    size_t modified_equations = 0;
    size_t modified_vars = 0;
    size_t modified_ranges = 0;
    size_t modified_index_segments = 0;
    std::vector<std::string> new_vars;
    std::vector<std::string> new_index_calcs;
    std::vector<std::string> new_exprs;

    nlohmann::json to_json() const;
};

Diff diff(const Program& before, const Program& after);

struct Outcome {
    Program transformed;
    StrategyId strategy{};
    Site site;
    Params params;
    Diff diff;
};

std::map<StrategyId, std::vector<Site>> feasible(const Program& p);
std::vector<Site> feasible(const Program& p, StrategyId id);

// Throws Error("NoVariant") when the only variant is the identity.
Params sample_params(const Program& p, const Site& site, std::mt19937_64& rng);

// Throws Error("ApplyFailed") on invalid params or a non-validating result.
Outcome apply(const Program& p, const Site& site, const Params& params);

// Fresh names not used by `p`: tensors are one uppercase letter plus
// optional lowercase letters; loop indices avoid e and binding prefixes.
std::vector<std::string> fresh_tensor_names(const Program& p, size_t n,
                                            const std::vector<std::string>& taken = {});
std::string fresh_index_name(const std::set<std::string>& used);

}  // namespace leir
