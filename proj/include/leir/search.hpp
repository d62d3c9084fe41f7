// SPDX-License-Identifier: Apache-2.0
//
// Multi-step search over one-step transformations with pluggable proposers
// and cost backends. Every candidate is checked against the root program
// before it may join the search tree.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "leir/ast.hpp"
#include "leir/dataset.hpp"
#include "leir/process.hpp"

namespace leir {

enum class Algo { Greedy, BFS, DFS, Beam, MCTS, ChainParent, ChainNoParent };
std::string_view to_string(Algo a);
std::optional<Algo> algo_from_name(std::string_view name);
const std::vector<Algo>& all_algos();

struct SearchBudget {
    int max_iterations = 20;     // greedy/beam/MCTS/chain steps; beam spends beam_width per level
    int children_per_node = 2;   // proposals per expansion
    int beam_width = 2;
    int max_depth = 20;          // BFS/DFS
    int max_samples = 40;        // BFS/DFS node budget
    double exploration = 1.4142135623730951;  // MCTS UCT constant

    static SearchBudget defaults(Algo a);
    nlohmann::json to_json() const;
    // Missing keys keep the per-algorithm defaults.
    static SearchBudget from_json(const nlohmann::json& j, Algo a);
};

struct SearchNode {
    Program program;
    std::string text;  // canonical print
    std::optional<size_t> parent;
    int depth = 0;
    std::optional<std::string> via_strategy;
    double cost = 0.0;
    double speedup = 1.0;  // root cost / this cost
    bool verified = true;
};

struct Candidate {
    Program program;
    std::string strategy;
};

struct ProposalContext {
    const SearchNode& node;
    const SearchNode* parent = nullptr;  // set only when the algorithm feeds it
    const SearchNode& root;
    Algo algo = Algo::Greedy;
    std::string program_name;
};

struct Proposals {
    std::vector<Candidate> candidates;
    std::vector<std::string> dropped;  // one reason per rejected answer
};

using Proposer = std::function<Proposals(const ProposalContext&, size_t k, std::mt19937_64& rng)>;
using CostFn = std::function<double(const Program&)>;

// Random feasible (site, params) draws; never proposes the inverse of the
// strategy that produced the node, the node itself, or its parent.
Proposals builtin_propose(const ProposalContext& ctx, size_t k, std::mt19937_64& rng);
Proposer builtin_proposer();

struct PromptConfig {
    std::string hardware_note = "a CUDA-capable NVIDIA GPU";
};
std::string render_search_prompt(const ProposalContext& ctx, size_t k, const PromptConfig& cfg = {});

// Parses a proposer reply {"answers":[{idx, transformed_IR, applied_strategies}]}.
Proposals parse_answers(const nlohmann::json& reply, const ProposalContext& ctx);
Proposals external_propose(const ProposalContext& ctx, size_t k, LineProcess& endpoint,
                           const PromptConfig& cfg = {});
Proposer external_proposer(std::shared_ptr<LineProcess> endpoint, PromptConfig cfg = {});

struct CostConfig {
    double op_weight = 1.0;
    int64_t vector_width = 4;
    int64_t parallel_cap = 64;
    double global_weight = 4.0;
    double shared_weight = 2.0;
    double local_weight = 1.0;
};
double analytic_cost(const Program& p, const CostConfig& cfg = {});
CostFn analytic_cost_fn(CostConfig cfg = {});

// Timing through the bridge line protocol; failures raise Error("CostError").
CostFn bridge_cost(std::shared_ptr<LineProcess> bridge, int trials = 3);
// Lowering through the bridge; nullopt when the bridge reports ok=false.
std::optional<Lowered> bridge_lower(LineProcess& bridge, const Program& original, const Program& transformed);

struct SearchReport {
    Algo algo = Algo::Greedy;
    std::vector<SearchNode> nodes;  // nodes[0] is the root
    size_t best = 0;
    std::vector<std::pair<std::string, size_t>> trajectory;  // root to best, (strategy, node)
    size_t samples = 0;           // every gated candidate
    size_t verified_samples = 0;  // candidates that passed
    size_t distinct_strategies = 0;
    double efficiency = 0.0;      // best speedup / samples, 0 without samples
    std::vector<std::string> dropped;

    const SearchNode& best_node() const { return nodes.at(best); }
    nlohmann::json to_json() const;
};

// Carries the partial report when a proposer or cost backend fails.
class SearchError : public Error {
  public:
    SearchError(const Error& cause, SearchReport partial)
        : Error(cause.code(), cause.what()), partial_(std::make_shared<SearchReport>(std::move(partial))) {}
    const SearchReport& partial() const { return *partial_; }

  private:
    std::shared_ptr<SearchReport> partial_;
};

struct SearchOptions {
    std::string program_name = "program";
    int verify_trials = 3;
};

SearchReport search(const Program& root, Algo algo, const Proposer& proposer, const CostFn& cost,
                    const SearchBudget& budget, uint64_t seed, const SearchOptions& options = {});

struct Metrics {
    size_t cases = 0;
    double avg_speedup = 0.0;
    double median_speedup = 0.0;
    double max_speedup = 0.0;
    double avg_samples = 0.0;
    double max_samples = 0.0;
    double avg_distinct = 0.0;
    double max_distinct = 0.0;
    double efficiency = 0.0;  // avg speedup / avg samples

    nlohmann::json to_json() const;
};
Metrics metrics(const std::vector<SearchReport>& reports);
Metrics metrics(const std::vector<double>& speedups, const std::vector<double>& samples,
                const std::vector<double>& distinct = {});

}  // namespace leir
