// SPDX-License-Identifier: Apache-2.0

#include "leir/strategy.hpp"

#include <algorithm>
#include <cmath>

#include "leir/syntax.hpp"
#include "strategy_impl.hpp"

namespace leir {

std::string_view to_string(Level l) {
    switch (l) {
        case Level::Graph: return "graph";
        case Level::Operator: return "operator";
        case Level::Memory: return "memory";
        case Level::Math: return "math";
    }
    return "graph";
}

std::string_view to_string(Precondition p) {
    switch (p) {
        case Precondition::PatternMatch: return "pattern_match";
        case Precondition::Dependency: return "dependency";
        case Precondition::OperationIdentity: return "operation_identity";
        case Precondition::LoopNestConsistency: return "loop_nest_consistency";
        case Precondition::EquationCount: return "equation_count";
        case Precondition::LoopAxisCount: return "loop_axis_count";
        case Precondition::LoopRangeFactorization: return "loop_range_factorization";
        case Precondition::ReductionAxis: return "reduction_axis";
        case Precondition::IntermediateVariable: return "intermediate_variable";
    }
    return "pattern_match";
}

std::string_view to_string(Bucket b) {
    switch (b) {
        case Bucket::Easy: return "easy";
        case Bucket::Medium: return "medium";
        case Bucket::Difficult: return "difficult";
    }
    return "easy";
}

namespace {

using S = StrategyId;
using L = Level;
using PC = Precondition;

std::vector<StrategyMeta> build_registry() {
    const std::vector<PC> none;
    const std::vector<PC> pm = {PC::PatternMatch};
    const std::vector<PC> dep_lnc = {PC::Dependency, PC::LoopNestConsistency};
    const std::vector<PC> red = {PC::ReductionAxis};
    // clang-format off
    return {
        {S::OperatorFusion, "operator fusion", "operator_fusion", L::Graph, dep_lnc, 2, 3, 0, false,
         "merge two adjacent expressions that share identical loop headers into one loop body"},
        {S::OperatorFission, "operator fission", "operator_fission", L::Graph, {PC::Dependency, PC::EquationCount}, 2, 2, 0, true,
         "separate the equations of one loop body into two expressions with the same loops"},
        {S::ComputeInline, "compute inline", "compute_inline", L::Graph, dep_lnc, 2, 3, 0, false,
         "substitute a single-use producer equation directly into its consumer and drop the producer"},
        {S::ExpressionSplitting, "expression splitting", "expression_splitting", L::Graph, none, 0, 2, 1, false,
         "hoist a subterm of an equation into a new intermediate tensor computed just before it"},
        {S::TensorConcatFuse, "tensor concat to fuse operators", "tensor_concat_fuse", L::Graph, {PC::Dependency, PC::OperationIdentity}, 2, 2, 3, false,
         "pack the inputs of two identical elementwise operators into one tensor, run one operator, then unpack"},
        {S::TensorSplitDecouple, "tensor split to decouple operators", "tensor_split_decouple", L::Graph, none, 0, 2, 3, false,
         "cut one elementwise operator along an axis into two independent halves and stitch the results"},
        {S::CommonSubexprElim, "common subexpression elimination", "common_subexpression_elimination", L::Graph, {PC::OperationIdentity, PC::LoopNestConsistency}, 2, 2, 2, false,
         "compute a repeated subterm once into a new tensor and read it at each former occurrence"},
        {S::ExpressionReorder, "expression reorder", "expression_reorder", L::Graph, {PC::Dependency}, 1, 3, 0, false,
         "swap two neighbouring expressions that do not depend on each other"},
        {S::LoopReorder, "loop reorder", "loop_reorder", L::Operator, {PC::LoopAxisCount}, 1, 3, 0, false,
         "permute the loops of an order-independent nest"},
        {S::LoopTiling, "loop tiling", "loop_tiling", L::Operator, {PC::LoopAxisCount, PC::LoopRangeFactorization}, 2, 3, 2, false,
         "break two neighbouring loops into outer tile loops and inner tile loops"},
        {S::LoopSplit, "loop split", "loop_split", L::Operator, {PC::LoopRangeFactorization}, 1, 2, 2, false,
         "break one loop into an outer and an inner loop whose extents multiply to the original"},
        {S::LoopFusion, "loop fusion", "loop_fusion", L::Operator, {PC::LoopAxisCount, PC::ReductionAxis}, 2, 2, 2, true,
         "collapse an outer and inner loop pair that only appear as outer*inner_extent+inner into one loop"},
        {S::LoopUnrolling, "loop unrolling", "loop_unrolling", L::Operator, none, 0, 3, 0, false,
         "mark a serial loop to be unrolled"},
        {S::LoopParallelization, "loop parallelization", "loop_parallelization", L::Operator, red, 1, 3, 0, false,
         "mark a dependence-free serial loop as parallel"},
        {S::LoopVectorization, "loop vectorization", "loop_vectorization", L::Operator, red, 1, 3, 0, false,
         "mark the dependence-free innermost loop as vectorized"},
        {S::LoopBinding, "loop binding", "loop_binding", L::Operator, red, 1, 3, 0, false,
         "map a dependence-free serial loop onto an unused block or thread axis"},
        {S::ReductionFactorization, "reduction factorization", "reduction_factorization", L::Operator, red, 1, 2, 3, false,
         "split one reduction range into two partial reductions and combine the partial results"},
        {S::CacheReadWrite, "cache read write", "cache_read_write", L::Memory, none, 0, 2, 2, false,
         "stage a result in a faster scope before copying it to its destination"},
        {S::LayoutTransformation, "layout transformation", "layout_transformation", L::Memory, none, 0, 2, 3, false,
         "copy an input into a tensor with reordered axes and read the copy instead"},
        {S::SetStorageScope, "set storage scope", "set_storage_scope", L::Memory, {PC::IntermediateVariable}, 1, 6, 0, false,
         "move an intermediate tensor to a different memory scope"},
        {S::SetStorageLayout, "set storage layout", "set_storage_layout", L::Memory, {PC::IntermediateVariable}, 1, 4, 1, false,
         "permute or flatten the axes of an intermediate tensor"},
        {S::PrecomputeIndices, "precompute indices", "precompute_indices", L::Memory, pm, 1, 2, 3, false,
         "tabulate a compound index expression into an integer tensor and gather through it"},
        {S::Factorization, "factorization", "factorization", L::Math, pm, 1, 1, 0, true,
         "distribute a shared denominator over a sum or fold an expanded square back into a power"},
        {S::ExpandFactorization, "expand factorization", "expand_factorization", L::Math, pm, 1, 2, 0, false,
         "multiply out a squared binomial or merge fractions over a shared denominator"},
        {S::Cancellation, "cancellation", "cancellation", L::Math, pm, 1, 2, 0, true,
         "bring a product with a fraction over one common denominator"},
        {S::ExpandCancellation, "expand cancellation", "expand_cancellation", L::Math, pm, 1, 2, 0, false,
         "pull a common factor out of a fraction's numerator"},
        {S::Apart, "apart", "apart", L::Math, pm, 1, 1, 0, false,
         "separate a fraction into a whole part plus a simpler fraction"},
        {S::Together, "together", "together", L::Math, pm, 1, 2, 0, true,
         "combine a term and a fraction into a single fraction"},
        {S::PowSimp, "powsimp", "powsimp", L::Math, pm, 1, 1, 0, true,
         "merge products of powers and reciprocals into simpler powers or quotients"},
        {S::ExpandPowSimp, "expand powsimp", "expand_powsimp", L::Math, pm, 1, 1, 0, false,
         "rewrite a quotient as a product with a reciprocal"},
        {S::LogSimp, "logsimp", "logsimp", L::Math, pm, 1, 1, 0, true,
         "turn the log of a product, quotient or power of positive terms into sums and scalings of logs"},
        {S::ExpandLog, "expand log", "expand_log", L::Math, pm, 1, 1, 0, false,
         "merge sums and scalings of logs of positive terms into one log"},
        {S::Collect, "collect", "collect", L::Math, pm, 1, 2, 0, true,
         "move a scalar coefficient across a sum or a quotient"},
        {S::ExpandCollect, "expand collect", "expand_collect", L::Math, pm, 1, 2, 0, false,
         "regroup a scaled quotient through reciprocal factors or gather a shared coefficient"},
        {S::PartiallyEquivalentThenCorrect, "partially equivalent then correct", "partially_equivalent_then_correct", L::Math, none, 0, 3, 3, false,
         "run two strided operators once over a concatenated input, then recompute the positions that straddle the seam"},
        {S::ExponentialSplit, "exponential split", "exponential_split", L::Math, pm, 1, 1, 1, false,
         "rewrite exp(x) as exp(x - y) * exp(y) using a neighbouring element as y"},
        {S::MultiplicativeSplit, "multiplicative split", "multiplicative_split", L::Math, none, 0, 1, 1, false,
         "divide a term by an existing tensor element and multiply it back"},
        {S::AdditiveSplit, "additive split", "additive_split", L::Math, none, 0, 1, 1, false,
         "add an existing tensor element to a term and subtract it again"},
        {S::PrefixMax, "normal loop max to prefix max", "prefix_max", L::Math, pm, 1, 2, 3, false,
         "replace a max reduction by a running max along the reduced axis and keep its last element"},
        {S::PrefixExpSum, "normal loop summation on exp to prefix summation on exp", "prefix_exp_sum", L::Math, pm, 1, 2, 3, false,
         "replace a max followed by a shifted exp-sum with one pass that rescales the running sum when the max grows"},
        {S::OnlineSoftmax, "online softmax", "online_softmax", L::Math, pm, 1, 3, 3, false,
         "compute softmax with a single running max and rescaled running sum, then normalize with their final values"},
        {S::FlashAttentionNoTiling, "flashattention wo tiling", "flashattention_wo_tiling", L::Math, pm, 1, 4, 3, false,
         "fold a softmax and the following matmul into one pass that rescales a running weighted sum"},
        {S::PrefixMatmulOnlineSoftmax, "normal matmul to prefix matmul based on online softmax", "prefix_matmul_online_softmax", L::Math, pm, 1, 3, 3, false,
         "turn the matmul after an online softmax into a running product updated with the softmax recurrence"},
    };
    // clang-format on
}

}  // namespace

const std::vector<StrategyMeta>& registry() {
    static const std::vector<StrategyMeta> r = build_registry();
    return r;
}

const StrategyMeta& meta(StrategyId id) { return registry().at(static_cast<size_t>(id)); }

std::vector<StrategyId> all_strategies() {
    std::vector<StrategyId> out;
    for (const auto& m : registry()) out.push_back(m.id);
    return out;
}

std::optional<StrategyId> strategy_from_name(std::string_view name) {
    for (const auto& m : registry()) {
        if (m.name == name || m.key == name) return m.id;
    }
    return std::nullopt;
}

double difficulty_score(const StrategyMeta& m) { return 0.1 * m.K + 0.5 * (m.P - 1) + m.S; }

Bucket bucket_of(double score) {
    if (score < 1.0) return Bucket::Easy;
    if (score < 2.5) return Bucket::Medium;
    return Bucket::Difficult;
}

Bucket bucket_of(StrategyId id) { return bucket_of(difficulty_score(meta(id))); }

namespace {

const std::vector<std::pair<StrategyId, StrategyId>>& inverse_pairs() {
    static const std::vector<std::pair<StrategyId, StrategyId>> pairs = {
        {S::OperatorFusion, S::OperatorFission},
        {S::LoopTiling, S::LoopFusion},
        {S::LoopSplit, S::LoopFusion},
        {S::Apart, S::Together},
        {S::Collect, S::ExpandCollect},
        {S::Factorization, S::ExpandFactorization},
        {S::Cancellation, S::ExpandCancellation},
        {S::PowSimp, S::ExpandPowSimp},
        {S::LogSimp, S::ExpandLog},
    };
    return pairs;
}

}  // namespace

std::vector<StrategyId> inverses_of(StrategyId id) {
    std::vector<StrategyId> out;
    for (const auto& [a, b] : inverse_pairs()) {
        if (a == id) out.push_back(b);
        if (b == id) out.push_back(a);
    }
    return out;
}

std::optional<StrategyId> inverse_of(StrategyId id) {
    auto v = inverses_of(id);
    if (v.empty()) return std::nullopt;
    return v.front();
}

bool are_inverse(StrategyId a, StrategyId b) {
    auto v = inverses_of(a);
    return std::find(v.begin(), v.end(), b) != v.end();
}

// ---- sites ----

std::string Site::describe() const {
    std::string s(meta(strategy).name);
    auto list = [](const std::vector<size_t>& v) {
        std::string r;
        for (size_t i = 0; i < v.size(); ++i) r += (i ? "," : "") + std::to_string(v[i]);
        return r;
    };
    if (!exprs.empty()) s += " exprs[" + list(exprs) + "]";
    if (!path.empty()) s += " eq[" + list(path) + "]";
    if (!loops.empty()) s += " loops[" + list(loops) + "]";
    if (!term.empty()) s += " term[" + list(term) + "]";
    for (const auto& n : names) s += " " + n;
    if (option) s += " option " + std::to_string(option);
    return s;
}

nlohmann::json Site::to_json() const {
    return {{"strategy", std::string(meta(strategy).name)},
            {"exprs", exprs},
            {"path", path},
            {"loops", loops},
            {"term", term},
            {"names", names},
            {"option", option}};
}

Site Site::from_json(const nlohmann::json& j) {
    Site s;
    auto id = strategy_from_name(j.at("strategy").get<std::string>());
    if (!id) throw Error("UnknownStrategy", "unknown strategy " + j.at("strategy").get<std::string>());
    s.strategy = *id;
    s.exprs = j.value("exprs", std::vector<size_t>{});
    s.path = j.value("path", std::vector<size_t>{});
    s.loops = j.value("loops", std::vector<size_t>{});
    s.term = j.value("term", std::vector<size_t>{});
    s.names = j.value("names", std::vector<std::string>{});
    s.option = j.value("option", int64_t{0});
    return s;
}

// ---- fresh names ----

std::vector<std::string> fresh_tensor_names(const Program& p, size_t n, const std::vector<std::string>& taken) {
    std::set<std::string> used = free_symbols(p).tensors;
    used.insert(taken.begin(), taken.end());
    std::vector<std::string> out;
    auto consider = [&](const std::string& s) {
        if (out.size() < n && !is_reserved_name(s) && !used.count(s)) {
            out.push_back(s);
            used.insert(s);
        }
    };
    for (char u = 'A'; u <= 'Z'; ++u) consider(std::string(1, u));
    for (char u = 'A'; u <= 'Z' && out.size() < n; ++u) {
        for (char l = 'a'; l <= 'z'; ++l) consider(std::string{u, l});
    }
    for (char u = 'A'; u <= 'Z' && out.size() < n; ++u) {
        for (char l = 'a'; l <= 'z'; ++l) {
            for (char m = 'a'; m <= 'z'; ++m) consider(std::string{u, l, m});
        }
    }
    if (out.size() < n) throw Error("ApplyFailed", "out of fresh tensor names");
    return out;
}

std::string fresh_index_name(const std::set<std::string>& used) {
    static const std::string letters = "acdfghijklmnopqrsuvw";
    for (char c : letters) {
        std::string s(1, c);
        if (!used.count(s)) return s;
    }
    for (char c : letters) {
        for (char d : letters) {
            std::string s{c, d};
            if (!used.count(s)) return s;
        }
    }
    throw Error("ApplyFailed", "out of fresh index names");
}

// ---- diff ----

namespace {

struct Inventory {
    std::multiset<std::string> exprs, loops, ranges, eqs, segments;
    std::set<std::string> indices, tensors;
};

void inventory_index(const Index& ix, Inventory& inv);

void inventory_ref(const TensorRef& r, Inventory& inv) {
    inv.tensors.insert(r.name);
    for (const auto& ix : r.indices) inventory_index(ix, inv);
}

void inventory_index(const Index& ix, Inventory& inv) {
    inv.segments.insert(print(ix));
    if (ix->op == IndexNode::Op::Read) {
        for (const auto& s : ix->ref->indices) inventory_index(s, inv);
    }
}

void inventory_value(const Value& v, Inventory& inv) {
    if (v->op == ValueOp::Read) inventory_ref(v->ref, inv);
    for (const auto& a : v->args) inventory_value(a, inv);
}

void inventory_nest(const Nest& n, Inventory& inv) {
    for (const auto& l : n.loops) {
        inv.loops.insert(print(l));
        inv.ranges.insert(l.index + ":" + std::to_string(l.start) + ":" + std::to_string(l.extent));
        inv.indices.insert(l.index);
    }
    for (const auto& it : n.body) {
        if (it.is_eq) {
            inv.eqs.insert(print(it.eq));
            inventory_ref(it.eq.lhs, inv);
            inventory_value(it.eq.rhs, inv);
        } else {
            inventory_nest(it.nest(), inv);
        }
    }
}

Inventory inventory(const Program& p) {
    Inventory inv;
    for (const auto& n : p.exprs) {
        inv.exprs.insert(print(n));
        inventory_nest(n, inv);
    }
    return inv;
}

std::vector<std::string> minus(const std::multiset<std::string>& a, const std::multiset<std::string>& b) {
    std::vector<std::string> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

size_t changed(const std::multiset<std::string>& a, const std::multiset<std::string>& b) {
    return std::max(minus(a, b).size(), minus(b, a).size());
}

}  // namespace

Diff diff(const Program& before, const Program& after) {
    Inventory a = inventory(before), b = inventory(after);
    Diff d;
    d.modified_exprs = changed(a.exprs, b.exprs);
    d.modified_loops = changed(a.loops, b.loops);
    d.modified_ranges = changed(a.ranges, b.ranges);
    d.modified_equations = changed(a.eqs, b.eqs);
    d.modified_index_segments = changed(a.segments, b.segments);
    for (const auto& s : b.indices) {
        if (!a.indices.count(s)) d.new_vars.push_back(s);
    }
    for (const auto& s : b.tensors) {
        if (!a.tensors.count(s)) d.new_vars.push_back(s);
    }
    size_t removed = 0;
    for (const auto& s : a.indices) removed += b.indices.count(s) ? 0 : 1;
    for (const auto& s : a.tensors) removed += b.tensors.count(s) ? 0 : 1;
    d.modified_vars = d.new_vars.size() + removed;
    std::set<std::string> seen;
    for (const auto& s : minus(b.segments, a.segments)) {
        if (s.find_first_of("+-*") != std::string::npos && seen.insert(s).second) d.new_index_calcs.push_back(s);
    }
    d.new_exprs = minus(b.exprs, a.exprs);
    return d;
}

nlohmann::json Diff::to_json() const {
    return {{"modified_exprs", modified_exprs},
            {"modified_loops", modified_loops},
            {"modified_equations", modified_equations},
            {"modified_vars", modified_vars},
            {"modified_ranges", modified_ranges},
            {"modified_index_segments", modified_index_segments},
            {"new_vars", new_vars},
            {"new_index_calcs", new_index_calcs},
            {"new_exprs", new_exprs}};
}

// ---- dispatch ----

namespace {

const detail::ImplTable& table() {
    static const detail::ImplTable t = [] {
        detail::ImplTable t;
        detail::register_graph(t);
        detail::register_operator(t);
        detail::register_memory(t);
        detail::register_math(t);
        detail::register_prefix(t);
        return t;
    }();
    return t;
}

const detail::Impl& impl_of(StrategyId id) {
    auto it = table().find(id);
    if (it == table().end()) throw Error("UnknownStrategy", std::string(meta(id).name) + " is not implemented");
    return it->second;
}

}  // namespace

std::vector<Site> feasible(const Program& p, StrategyId id) {
    std::vector<Site> sites;
    try {
        sites = impl_of(id).sites(p);
    } catch (const Error& e) {
        if (e.code() == "UnknownStrategy") throw;
        return {};
    }
    for (auto& s : sites) s.strategy = id;
    return sites;
}

std::map<StrategyId, std::vector<Site>> feasible(const Program& p) {
    std::map<StrategyId, std::vector<Site>> out;
    for (const auto& m : registry()) {
        auto s = feasible(p, m.id);
        if (!s.empty()) out[m.id] = std::move(s);
    }
    return out;
}

Params sample_params(const Program& p, const Site& site, std::mt19937_64& rng) {
    return impl_of(site.strategy).sample(p, site, rng);
}

Outcome apply(const Program& p, const Site& site, const Params& params) {
    const auto& impl = impl_of(site.strategy);
    auto sites = feasible(p, site.strategy);
    nlohmann::json want = site.to_json();
    bool known = std::any_of(sites.begin(), sites.end(), [&](const Site& s) { return s.to_json() == want; });
    if (!known) detail::fail("site is not feasible for " + std::string(meta(site.strategy).name));
    Program q = impl.apply(p, site, params.is_null() ? Params::object() : params);
    std::map<std::string, IoEntry> declared;
    for (const auto& [name, e] : p.io) {
        if (e.role != Role::Intermediate) declared[name] = e;
    }
    q.io = infer_io(q, declared);
    // Gathers hide their bounds, so surviving tensors keep at least their old extents.
    for (auto& [name, e] : q.io) {
        auto it = p.io.find(name);
        if (it == p.io.end() || it->second.shape.size() != e.shape.size()) continue;
        for (size_t k = 0; k < e.shape.size(); ++k) e.shape[k] = std::max(e.shape[k], it->second.shape[k]);
    }
    auto diags = validate(q);
    if (!diags.empty()) {
        detail::fail(std::string(meta(site.strategy).name) + " produced an invalid program: " + diags.front().code +
                     " at " + diags.front().path + ": " + diags.front().message);
    }
    if (print(q) == print(p) && q.io == p.io) detail::fail("transformation is the identity");
    Outcome o;
    o.diff = diff(p, q);
    o.transformed = std::move(q);
    o.strategy = site.strategy;
    o.site = site;
    o.params = params.is_null() ? Params::object() : params;
    return o;
}

}  // namespace leir
