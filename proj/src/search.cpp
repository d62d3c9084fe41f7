// SPDX-License-Identifier: Apache-2.0

#include "leir/search.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <sstream>

#include "leir/analysis.hpp"
#include "leir/hash.hpp"
#include "leir/interp.hpp"
#include "leir/strategy.hpp"
#include "leir/syntax.hpp"

namespace leir {

namespace {

struct AlgoName {
    Algo algo;
    std::string_view name;
};
constexpr AlgoName kAlgoNames[] = {
    {Algo::Greedy, "greedy"},         {Algo::BFS, "bfs"},   {Algo::DFS, "dfs"},
    {Algo::Beam, "beam"},             {Algo::MCTS, "mcts"}, {Algo::ChainParent, "chain_parent"},
    {Algo::ChainNoParent, "chain_no_parent"},
};

std::string_view algo_sentence(Algo a) {
    switch (a) {
        case Algo::Greedy:
            return "A greedy search is optimizing the program below: every step asks for several candidates and "
                   "moves to the fastest verified one.";
        case Algo::BFS:
            return "A breadth-first search is optimizing the program below: each state is expanded into a fixed "
                   "number of children, level by level.";
        case Algo::DFS:
            return "A depth-first search is optimizing the program below: each state is expanded into a fixed "
                   "number of children, deepest state first.";
        case Algo::Beam:
            return "A beam search is optimizing the program below: every state on the frontier is expanded and "
                   "only the fastest verified candidates survive.";
        case Algo::MCTS:
            return "A Monte Carlo tree search is optimizing the program below: promising states are revisited and "
                   "expanded one candidate at a time.";
        case Algo::ChainParent:
            return "A chain search is optimizing the program below: it refines the latest verified program one "
                   "step at a time and shows its parent.";
        case Algo::ChainNoParent:
            return "A chain search is optimizing the program below: it refines the latest verified program one "
                   "step at a time.";
    }
    return "";
}

std::string torch_dtype(DType d) {
    switch (d) {
        case DType::F16: return "float16";
        case DType::F32: return "float32";
        case DType::F64: return "float64";
        case DType::I64: return "int64";
        case DType::B8: return "bool";
    }
    return "float32";
}

std::string known_tensors(const Program& p) {
    std::vector<std::string> parts;
    for (const auto& [name, e] : p.io) {
        if (e.role == Role::Intermediate) continue;
        std::vector<std::string> dims;
        for (auto x : e.shape) dims.push_back(std::to_string(x));
        parts.push_back(fmt::format("'{}' ({}, shape [{}])", name, torch_dtype(e.dtype), fmt::join(dims, ", ")));
    }
    return fmt::format("{}", fmt::join(parts, ", "));
}

std::string strategy_key(const std::string& name) {
    auto id = strategy_from_name(name);
    return id ? std::string(meta(*id).key) : name;
}

bool is_undo(const std::optional<std::string>& via, const std::string& next) {
    if (!via) return false;
    auto a = strategy_from_name(*via);
    auto b = strategy_from_name(next);
    return a && b && are_inverse(*a, *b);
}

bool same_signature(const Program& root, const Program& cand) {
    for (const auto& [name, e] : root.io) {
        if (e.role == Role::Intermediate) continue;
        auto it = cand.io.find(name);
        if (it == cand.io.end() || it->second.dtype != e.dtype || it->second.shape != e.shape ||
            it->second.role != e.role) {
            return false;
        }
    }
    for (const auto& [name, e] : cand.io) {
        if (e.role != Role::Intermediate && !root.io.count(name)) return false;
    }
    return true;
}

double scope_weight(MemScope s, const CostConfig& cfg) {
    switch (s) {
        case MemScope::Global: return cfg.global_weight;
        case MemScope::Shared: return cfg.shared_weight;
        case MemScope::Local: return cfg.local_weight;
    }
    return cfg.global_weight;
}

size_t op_count(const Value& v) {
    if (!v) return 0;
    size_t n = 0;
    switch (v->op) {
        case ValueOp::Const:
        case ValueOp::Read:
        case ValueOp::Var: break;
        default: n = 1;
    }
    for (const auto& a : v->args) n += op_count(a);
    return n;
}

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

// ---- search state ----

class Searcher {
  public:
    Searcher(const Program& root, Algo algo, const Proposer& proposer, const CostFn& cost,
             const SearchBudget& budget, uint64_t seed, const SearchOptions& options)
        : proposer_(proposer), cost_(cost), budget_(budget), options_(options), rng_(seed), seed_(seed) {
        report_.algo = algo;
        SearchNode r;
        r.program = root;
        r.text = print(root);
        r.cost = cost_(root);
        if (!(r.cost > 0.0)) throw Error("CostError", "root cost must be positive");
        report_.nodes.push_back(std::move(r));
    }

    SearchReport run() {
        try {
            switch (report_.algo) {
                case Algo::Greedy: greedy(); break;
                case Algo::BFS: tree(false); break;
                case Algo::DFS: tree(true); break;
                case Algo::Beam: beam(); break;
                case Algo::MCTS: mcts(); break;
                case Algo::ChainParent: chain(true); break;
                case Algo::ChainNoParent: chain(false); break;
            }
        } catch (const SearchError&) {
            throw;
        } catch (const Error& e) {
            throw SearchError(e, finish());
        }
        return finish();
    }

  private:
    const SearchNode& node(size_t i) const { return report_.nodes[i]; }

    Proposals propose(size_t at, size_t k, bool with_parent) {
        const SearchNode& n = node(at);
        const SearchNode* parent = with_parent && n.parent ? &node(*n.parent) : nullptr;
        ProposalContext ctx{n, parent, node(0), report_.algo, options_.program_name};
        Proposals p = proposer_(ctx, k, rng_);
        for (auto& d : p.dropped) report_.dropped.push_back(std::move(d));
        return p;
    }

    // Verifies one candidate against the root; returns the new node id.
    std::optional<size_t> gate(size_t parent, Candidate c) {
        ++report_.samples;
        const SearchNode& p = node(parent);
        std::string text = print(c.program);
        auto reject = [&](const std::string& why) {
            report_.dropped.push_back(c.strategy + ": " + why);
            return std::nullopt;
        };
        if (text == p.text) return reject("identical to the current program");
        if (is_undo(p.via_strategy, c.strategy)) return reject("undoes the previous step");
        if (!validate(c.program).empty()) return reject("invalid program");
        try {
            uint64_t s = fnv1a(static_cast<uint64_t>(report_.samples), fnv1a(seed_));
            if (!equivalent(node(0).program, c.program, options_.verify_trials, s).equivalent) {
                return reject("not equivalent to the root");
            }
        } catch (const Error& e) {
            return reject(e.what());
        }
        double cost = cost_(c.program);
        if (!(cost > 0.0)) throw Error("CostError", "cost backend returned a non-positive cost");
        SearchNode n;
        n.program = std::move(c.program);
        n.text = std::move(text);
        n.parent = parent;
        n.depth = p.depth + 1;
        n.via_strategy = c.strategy;
        n.cost = cost;
        n.speedup = node(0).cost / cost;
        report_.nodes.push_back(std::move(n));
        ++report_.verified_samples;
        return report_.nodes.size() - 1;
    }

    std::vector<size_t> expand(size_t at, size_t k, bool with_parent = true, size_t sample_cap = SIZE_MAX) {
        std::vector<size_t> kids;
        for (auto& c : propose(at, k, with_parent).candidates) {
            if (report_.samples >= sample_cap) break;
            if (auto id = gate(at, std::move(c))) kids.push_back(*id);
        }
        return kids;
    }

    void greedy() {
        size_t cur = 0;
        for (int it = 0; it < budget_.max_iterations; ++it) {
            auto kids = expand(cur, static_cast<size_t>(budget_.children_per_node));
            if (kids.empty()) break;
            size_t best = kids[0];
            for (size_t k : kids) {
                if (node(k).speedup > node(best).speedup) best = k;
            }
            // Worse children are kept in the tree but never accepted.
            if (node(best).speedup >= node(cur).speedup) cur = best;
        }
    }

    void tree(bool depth_first) {
        std::deque<size_t> open{0};
        size_t cap = static_cast<size_t>(budget_.max_samples);
        while (!open.empty() && report_.samples < cap) {
            size_t at = depth_first ? open.back() : open.front();
            depth_first ? open.pop_back() : open.pop_front();
            if (node(at).depth >= budget_.max_depth) continue;
            auto kids = expand(at, static_cast<size_t>(budget_.children_per_node), true, cap);
            if (depth_first) {
                for (auto it = kids.rbegin(); it != kids.rend(); ++it) open.push_back(*it);
            } else {
                for (size_t k : kids) open.push_back(k);
            }
        }
    }

    // Each level expands up to beam_width nodes, so the iteration budget
    // buys max_iterations / beam_width levels.
    void beam() {
        std::vector<size_t> frontier{0};
        int levels = budget_.max_iterations / budget_.beam_width;
        for (int level = 0; level < levels && !frontier.empty(); ++level) {
            std::vector<size_t> next;
            for (size_t f : frontier) {
                for (size_t k : expand(f, static_cast<size_t>(budget_.children_per_node))) next.push_back(k);
            }
            std::stable_sort(next.begin(), next.end(),
                             [&](size_t a, size_t b) { return node(a).speedup > node(b).speedup; });
            if (next.size() > static_cast<size_t>(budget_.beam_width)) next.resize(budget_.beam_width);
            frontier = std::move(next);
        }
    }

    void mcts() {
        std::vector<double> visits, total;
        std::vector<int> tries;
        std::vector<bool> exhausted;
        std::vector<std::vector<size_t>> children;
        auto sync = [&] {
            size_t n = report_.nodes.size();
            visits.resize(n, 0.0);
            total.resize(n, 0.0);
            tries.resize(n, 0);
            exhausted.resize(n, false);
            children.resize(n);
        };
        sync();
        for (int it = 0; it < budget_.max_iterations; ++it) {
            std::vector<size_t> path{0};
            size_t at = 0;
            for (;;) {
                bool expandable = !exhausted[at] && tries[at] < budget_.children_per_node &&
                                  node(at).depth < budget_.max_depth;
                if (expandable || children[at].empty()) break;
                size_t pick = children[at][0];
                double best = -std::numeric_limits<double>::infinity();
                for (size_t c : children[at]) {
                    double score = visits[c] == 0.0 ? std::numeric_limits<double>::infinity()
                                                    : total[c] / visits[c] +
                                                          budget_.exploration *
                                                              std::sqrt(std::log(std::max(visits[at], 1.0)) / visits[c]);
                    if (score > best) {
                        best = score;
                        pick = c;
                    }
                }
                at = pick;
                path.push_back(at);
            }
            double value = node(at).speedup;
            if (!exhausted[at] && tries[at] < budget_.children_per_node && node(at).depth < budget_.max_depth) {
                ++tries[at];
                auto props = propose(at, 1, true);
                if (props.candidates.empty()) {
                    exhausted[at] = true;
                } else if (auto id = gate(at, std::move(props.candidates[0]))) {
                    sync();
                    children[at].push_back(*id);
                    path.push_back(*id);
                    value = node(*id).speedup;  // depth-1 rollout: the cost of the expanded node
                } else {
                    value = 0.0;
                }
            } else if (children[at].empty()) {
                exhausted[at] = true;
                if (at == 0) break;
            }
            for (size_t p : path) {
                visits[p] += 1.0;
                total[p] += value;
            }
        }
    }

    void chain(bool with_parent) {
        size_t cur = 0;
        for (int it = 0; it < budget_.max_iterations; ++it) {
            auto props = propose(cur, static_cast<size_t>(budget_.children_per_node), with_parent);
            if (props.candidates.empty()) break;
            std::optional<size_t> next;
            for (auto& c : props.candidates) {
                auto id = gate(cur, std::move(c));
                if (id && !next) next = id;
            }
            if (next) cur = *next;
        }
    }

    SearchReport finish() {
        SearchReport r = report_;
        r.best = 0;
        for (size_t i = 1; i < r.nodes.size(); ++i) {
            if (r.nodes[i].speedup > r.nodes[r.best].speedup) r.best = i;
        }
        std::vector<std::pair<std::string, size_t>> steps;
        for (size_t i = r.best; r.nodes[i].parent; i = *r.nodes[i].parent) {
            steps.emplace_back(r.nodes[i].via_strategy.value_or(""), i);
        }
        std::reverse(steps.begin(), steps.end());
        r.trajectory = std::move(steps);
        std::set<std::string> distinct;
        for (const auto& [s, i] : r.trajectory) distinct.insert(s);
        r.distinct_strategies = distinct.size();
        r.efficiency = r.samples ? r.best_node().speedup / static_cast<double>(r.samples) : 0.0;
        return r;
    }

    const Proposer& proposer_;
    const CostFn& cost_;
    SearchBudget budget_;
    SearchOptions options_;
    std::mt19937_64 rng_;
    uint64_t seed_;
    SearchReport report_;
};

}  // namespace

std::string_view to_string(Algo a) {
    for (const auto& n : kAlgoNames) {
        if (n.algo == a) return n.name;
    }
    return "greedy";
}

std::optional<Algo> algo_from_name(std::string_view name) {
    std::string s(name);
    std::replace(s.begin(), s.end(), '-', '_');
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    for (const auto& n : kAlgoNames) {
        if (n.name == s) return n.algo;
    }
    return std::nullopt;
}

const std::vector<Algo>& all_algos() {
    static const std::vector<Algo> v = {Algo::Greedy, Algo::BFS,         Algo::DFS,          Algo::Beam,
                                        Algo::MCTS,   Algo::ChainParent, Algo::ChainNoParent};
    return v;
}

// ---- budget ----

SearchBudget SearchBudget::defaults(Algo a) {
    SearchBudget b;
    switch (a) {
        case Algo::Greedy: b.children_per_node = 2; break;
        case Algo::BFS:
        case Algo::DFS: b.children_per_node = 2; break;
        case Algo::Beam:
            b.children_per_node = 3;
            b.beam_width = 2;
            break;
        case Algo::MCTS: b.children_per_node = 2; break;
        case Algo::ChainParent:
        case Algo::ChainNoParent: b.children_per_node = 1; break;
    }
    return b;
}

nlohmann::json SearchBudget::to_json() const {
    return {{"max_iterations", max_iterations}, {"children_per_node", children_per_node},
            {"beam_width", beam_width},         {"max_depth", max_depth},
            {"max_samples", max_samples},       {"exploration", exploration}};
}

SearchBudget SearchBudget::from_json(const nlohmann::json& j, Algo a) {
    SearchBudget b = defaults(a);
    b.max_iterations = j.value("max_iterations", b.max_iterations);
    b.children_per_node = j.value("children_per_node", b.children_per_node);
    b.beam_width = j.value("beam_width", b.beam_width);
    b.max_depth = j.value("max_depth", b.max_depth);
    b.max_samples = j.value("max_samples", b.max_samples);
    b.exploration = j.value("exploration", b.exploration);
    if (b.max_iterations < 0 || b.children_per_node < 1 || b.beam_width < 1 || b.max_depth < 0 ||
        b.max_samples < 0) {
        throw Error("InvalidBudget", "budget values must be non-negative with at least one child per node");
    }
    return b;
}

// ---- proposers ----

Proposals builtin_propose(const ProposalContext& ctx, size_t k, std::mt19937_64& rng) {
    Proposals out;
    const Program& p = ctx.node.program;
    std::optional<StrategyId> via;
    if (ctx.node.via_strategy) via = strategy_from_name(*ctx.node.via_strategy);
    std::vector<std::pair<StrategyId, Site>> pool;
    for (auto& [id, sites] : feasible(p)) {
        if (via && are_inverse(*via, id)) continue;
        for (auto& s : sites) pool.emplace_back(id, std::move(s));
    }
    std::shuffle(pool.begin(), pool.end(), rng);
    std::set<std::string> seen{ctx.node.text};
    if (ctx.node.parent) {
        // The parent text is not in the context for every algorithm; the root always is.
        seen.insert(ctx.root.text);
    }
    if (ctx.parent) seen.insert(ctx.parent->text);
    for (const auto& [id, site] : pool) {
        if (out.candidates.size() >= k) break;
        try {
            Params params = sample_params(p, site, rng);
            Outcome o = apply(p, site, params);
            if (!seen.insert(print(o.transformed)).second) continue;
            out.candidates.push_back({std::move(o.transformed), std::string(meta(id).name)});
        } catch (const Error& e) {
            spdlog::debug("proposal {} failed: {}", meta(id).name, e.what());
        }
    }
    if (out.candidates.size() < k) {
        out.dropped.push_back(fmt::format("Exhausted: {} of {} proposals available", out.candidates.size(), k));
    }
    return out;
}

Proposer builtin_proposer() { return builtin_propose; }

std::string render_search_prompt(const ProposalContext& ctx, size_t k, const PromptConfig& cfg) {
    const SearchNode& n = ctx.node;
    std::ostringstream out;
    out << algo_sentence(ctx.algo) << " Each program is a search state that records the transformation that "
        << "produced it and its speedup.\n\n";
    out << "Current program of " << ctx.program_name << ": " << n.text << "\n";
    out << "Known tensors: " << known_tensors(n.program)
        << ". Their names, shapes and dtypes must stay unchanged.\n\n";
    out << "History:\n";
    if (!n.parent) {
        out << "The current program is the root program, depth: 0, speedup value: 1.\n\n";
    } else {
        if (ctx.parent) {
            if (!ctx.parent->parent) {
                out << "Parent program: the root program, depth: 0, speedup value: 1.\n";
            } else {
                out << fmt::format("Parent program: {}, depth: {}, speedup value: {}.\n", ctx.parent->text,
                                   ctx.parent->depth, ctx.parent->speedup);
            }
        }
        out << fmt::format(
            "Current program: speedup value: {}, depth: {}, obtained from its parent with the strategy '{}'.\n\n",
            n.speedup, n.depth, strategy_key(n.via_strategy.value_or("")));
    }
    out << "Target hardware: " << cfg.hardware_note << ".\n\n";
    out << "Binding rules: a loop bound to GPU blocks along x, y or z takes an index starting with bx, by or bz "
           "(extent limits 2^31-1, 65535, 65535); a loop bound to threads along x, y or z takes an index starting "
           "with tx, ty or tz (extent limits 1024, 1024, 64). The rest of each bound index is unique lowercase "
           "letters.\n\n";
    out << "Memory rules: tensors indexed by block loops may live in shared (s) or global (g) memory; tensors "
           "indexed by thread loops may also live in local (l) memory.\n\n";
    std::vector<std::string> names;
    for (const auto& m : registry()) names.emplace_back(m.name);
    out << "Strategies to consider, along with any other mathematically sound rewrite:\n"
        << fmt::format("{}", fmt::join(names, ", ")) << ".\n\n";
    out << "Task: give at least " << k << " different transformed programs that produce the same outputs as the "
        << "current program for any floating-point input and run faster (speedup above 1). Name the strategies "
        << "applied for each.\n\n";
    out << "Answer with one JSON object only: {\"answers\": [{\"idx\": 0, \"transformed_IR\": \"...\", "
           "\"applied_strategies\": [\"...\"]}]}.\n\n";
    out << "CRITICAL:\n";
    out << "1. Build every answer on top of the current program. An answer identical to the current program is "
           "rejected, and every part you did not transform must stay byte-identical to the current program.\n";
    out << "2. Never return the current or the parent program and never undo the step that produced the current "
           "program, e.g. operator fusion vs operator fission, loop tiling or loop split vs loop fusion, apart vs "
           "together, collect vs expand collect.\n";
    return out.str();
}

Proposals parse_answers(const nlohmann::json& reply, const ProposalContext& ctx) {
    if (!reply.is_object() || !reply.contains("answers") || !reply["answers"].is_array()) {
        throw Error("ProtocolError", "reply lacks an 'answers' array");
    }
    Proposals out;
    static const std::set<std::string> keys = {"idx", "transformed_IR", "applied_strategies"};
    size_t slot = 0;
    for (const auto& a : reply["answers"]) {
        ++slot;
        auto drop = [&](const std::string& why) {
            std::string msg = fmt::format("answer {}: {}", slot, why);
            spdlog::info("dropped {}", msg);
            out.dropped.push_back(std::move(msg));
        };
        std::set<std::string> got;
        if (a.is_object()) {
            for (const auto& [k, v] : a.items()) got.insert(k);
        }
        if (got != keys || !a["idx"].is_number_integer() || !a["transformed_IR"].is_string() ||
            !a["applied_strategies"].is_array()) {
            drop("expected exactly idx, transformed_IR and applied_strategies");
            continue;
        }
        std::string text = a["transformed_IR"].get<std::string>();
        Program p;
        try {
            p = parse(text);
        } catch (const Error& e) {
            drop(std::string("unparseable LEIR: ") + e.what());
            continue;
        }
        if (print(p) == ctx.node.text) {
            drop("identical to the current program");
            continue;
        }
        if (!validate(p).empty()) {
            drop("invalid program");
            continue;
        }
        if (!same_signature(ctx.root.program, p)) {
            drop("known tensors changed");
            continue;
        }
        std::string strategy = "unknown";
        for (const auto& s : a["applied_strategies"]) {
            if (!s.is_string()) continue;
            auto id = strategy_from_name(s.get<std::string>());
            strategy = id ? std::string(meta(*id).name) : s.get<std::string>();
            break;
        }
        out.candidates.push_back({std::move(p), strategy});
    }
    return out;
}

Proposals external_propose(const ProposalContext& ctx, size_t k, LineProcess& endpoint, const PromptConfig& cfg) {
    nlohmann::json reply = endpoint.request({{"prompt", render_search_prompt(ctx, k, cfg)}, {"k", k}});
    return parse_answers(reply, ctx);
}

Proposer external_proposer(std::shared_ptr<LineProcess> endpoint, PromptConfig cfg) {
    return [endpoint, cfg](const ProposalContext& ctx, size_t k, std::mt19937_64&) {
        return external_propose(ctx, k, *endpoint, cfg);
    };
}

// ---- cost ----

double analytic_cost(const Program& p, const CostConfig& cfg) {
    double total = 0.0;
    for (const auto& v : equations(p)) {
        double trips = 1.0;
        for (const LoopHeader* l : v.loops) {
            int64_t e = std::max<int64_t>(l->extent, 1);
            switch (l->kind) {
                case LoopKind::Binding:
                    e = ceil_div(e, std::min(e, l->bind ? bind_cap(*l->bind) : e));
                    break;
                case LoopKind::Parallel: e = ceil_div(e, std::min(e, cfg.parallel_cap)); break;
                case LoopKind::Vectorized: e = ceil_div(e, std::min(e, cfg.vector_width)); break;
                case LoopKind::Serial:
                case LoopKind::Unrolled: break;
            }
            trips *= static_cast<double>(e);
        }
        std::vector<const TensorRef*> reads;
        collect_reads(v.eq->rhs, reads);
        for (const auto& ix : v.eq->lhs.indices) collect_reads(ix, reads);
        double weight = cfg.op_weight * static_cast<double>(op_count(v.eq->rhs)) + scope_weight(v.eq->lhs.scope, cfg);
        for (const TensorRef* r : reads) weight += scope_weight(r->scope, cfg);
        total += weight * trips;
    }
    return std::max(total, 1.0);
}

CostFn analytic_cost_fn(CostConfig cfg) {
    return [cfg](const Program& p) { return analytic_cost(p, cfg); };
}

CostFn bridge_cost(std::shared_ptr<LineProcess> bridge, int trials) {
    return [bridge, trials](const Program& p) {
        nlohmann::json reply;
        try {
            reply = bridge->request({{"cmd", "time"}, {"leir", print(p)}, {"trials", trials}});
        } catch (const Error& e) {
            throw Error("CostError", std::string("bridge unavailable: ") + e.what());
        }
        if (!reply.is_object() || !reply.value("ok", false)) {
            std::string why = reply.is_object() ? reply.value("error", std::string("unknown failure")) : "bad reply";
            throw Error("CostError", "bridge timing failed: " + why);
        }
        if (!reply.contains("mean_ms") || !reply["mean_ms"].is_number() || !(reply["mean_ms"].get<double>() > 0)) {
            throw Error("CostError", "bridge reply lacks a positive mean_ms");
        }
        return reply["mean_ms"].get<double>();
    };
}

std::optional<Lowered> bridge_lower(LineProcess& bridge, const Program& original, const Program& transformed) {
    auto lower = [&](const Program& p) -> std::optional<nlohmann::json> {
        nlohmann::json reply = bridge.request({{"cmd", "lower"}, {"leir", print(p)}, {"trials", 0}});
        if (!reply.is_object() || !reply.value("ok", false) || !reply.contains("tir")) return std::nullopt;
        return reply;
    };
    auto a = lower(original);
    if (!a) return std::nullopt;
    auto b = lower(transformed);
    if (!b) return std::nullopt;
    return Lowered{(*a)["tir"].get<std::string>(), (*b)["tir"].get<std::string>(),
                   b->value("cuda", std::string())};
}

// ---- search ----

nlohmann::json SearchReport::to_json() const {
    nlohmann::json traj = nlohmann::json::array();
    for (const auto& [s, i] : trajectory) {
        traj.push_back({{"strategy", s}, {"depth", nodes[i].depth}, {"speedup", nodes[i].speedup},
                        {"leir", nodes[i].text}});
    }
    const SearchNode& b = best_node();
    return {{"algo", std::string(to_string(algo))},
            {"best", {{"leir", b.text}, {"speedup", b.speedup}, {"depth", b.depth}, {"cost", b.cost}}},
            {"root_cost", nodes[0].cost},
            {"trajectory", traj},
            {"samples", samples},
            {"verified_samples", verified_samples},
            {"distinct_strategies", distinct_strategies},
            {"efficiency", efficiency},
            {"nodes", nodes.size()},
            {"dropped", dropped.size()}};
}

SearchReport search(const Program& root, Algo algo, const Proposer& proposer, const CostFn& cost,
                    const SearchBudget& budget, uint64_t seed, const SearchOptions& options) {
    if (auto d = validate(root); !d.empty()) throw Error(d[0].code, "root program is invalid: " + d[0].message);
    Searcher s(root, algo, proposer, cost, budget, seed, options);
    return s.run();
}

// ---- metrics ----

nlohmann::json Metrics::to_json() const {
    return {{"cases", cases},           {"avg_speedup", avg_speedup},   {"median_speedup", median_speedup},
            {"max_speedup", max_speedup}, {"avg_samples", avg_samples}, {"max_samples", max_samples},
            {"avg_distinct", avg_distinct}, {"max_distinct", max_distinct}, {"efficiency", efficiency}};
}

Metrics metrics(const std::vector<double>& speedups, const std::vector<double>& samples,
                const std::vector<double>& distinct) {
    Metrics m;
    m.cases = speedups.size();
    if (speedups.empty()) return m;
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    auto top = [](const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); };
    std::vector<double> sorted = speedups;
    std::sort(sorted.begin(), sorted.end());
    size_t n = sorted.size();
    m.median_speedup = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    m.avg_speedup = mean(speedups);
    m.max_speedup = top(speedups);
    m.avg_samples = mean(samples);
    m.max_samples = top(samples);
    m.avg_distinct = mean(distinct);
    m.max_distinct = top(distinct);
    m.efficiency = m.avg_samples > 0.0 ? m.avg_speedup / m.avg_samples : 0.0;
    return m;
}

Metrics metrics(const std::vector<SearchReport>& reports) {
    std::vector<double> speedups, samples, distinct;
    for (const auto& r : reports) {
        speedups.push_back(r.best_node().speedup);
        samples.push_back(static_cast<double>(r.samples));
        distinct.push_back(static_cast<double>(r.distinct_strategies));
    }
    return metrics(speedups, samples, distinct);
}

}  // namespace leir
