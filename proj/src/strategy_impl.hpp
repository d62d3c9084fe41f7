// SPDX-License-Identifier: Apache-2.0
//
// Internal helpers shared by the strategy implementations.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "leir/analysis.hpp"
#include "leir/strategy.hpp"

namespace leir::detail {

// ---- rewriting ----

using VarMap = std::map<std::string, Index>;

Index subst(const Index& ix, const VarMap& m);
TensorRef subst(const TensorRef& r, const VarMap& m);
Value subst(const Value& v, const VarMap& m);
Equation subst(const Equation& e, const VarMap& m);
Nest subst_body(const Nest& n, const VarMap& m);

Value index_to_value(const Index& ix);

using RefFn = std::function<TensorRef(const TensorRef&)>;
Value map_refs(const Value& v, const RefFn& f);
Equation map_refs(const Equation& e, const RefFn& f);
Nest map_refs(const Nest& n, const RefFn& f);
Program map_refs(const Program& p, const RefFn& f);

const Value& value_at(const Value& root, const std::vector<size_t>& path);
Value replace_at(const Value& root, const std::vector<size_t>& path, Value repl);
// Pre-order argument paths of every node; `skip_ite_branches` omits
// nodes under if_then_else branches.
std::vector<std::vector<size_t>> node_paths(const Value& v, bool skip_ite_branches = false);
size_t node_count(const Value& v);

// ---- locating equations ----

struct EqLoc {
    size_t expr = 0;
    std::vector<size_t> path;  // item indices from the top-level body
    const Equation* eq = nullptr;
    std::vector<const LoopHeader*> loops;
};
std::vector<EqLoc> eq_locs(const Program& p);
Equation& eq_at(Program& p, size_t expr, const std::vector<size_t>& path);
const Equation& eq_at(const Program& p, size_t expr, const std::vector<size_t>& path);

// ---- queries ----

bool is_flat(const Nest& n);
std::vector<const Equation*> flat_eqs(const Nest& n);
std::set<std::string> loop_vars(const Nest& n);
std::set<std::string> index_vars(const TensorRef& r);
std::set<std::string> value_vars(const Value& v);
std::vector<const TensorRef*> reads(const Value& v);
std::vector<const TensorRef*> reads(const Equation& e);  // rhs plus lhs gathers
bool reads_tensor(const Value& v, const std::string& name);
bool is_plain_var(const Index& ix, const std::string& name);
std::optional<std::string> plain_var(const Index& ix);
bool same_indices(const TensorRef& a, const TensorRef& b);

// Reduction info that treats an ambiguous combiner as "not a reduction".
ReductionInfo classify_safe(const Equation& eq, const std::vector<const LoopHeader*>& loops);
ReductionInfo classify_safe(const Equation& eq, const std::vector<LoopHeader>& loops);
bool reads_own_lhs(const Equation& eq);

// Every loop var in `vars` either indexes the lhs plainly or is unused by
// the equation, so each iteration writes its own element.
bool injective_write(const Equation& eq, const std::set<std::string>& vars);
// Pointwise: not a reduction and no read of its own lhs tensor.
bool pointwise(const Equation& eq, const std::vector<LoopHeader>& loops);

// Each write in the nest hits a distinct element per iteration, reads of
// tensors written in the nest use the written index, and reductions stand
// alone. Loop order then does not change the result.
bool order_free(const Nest& n);
// True when loop `pos` of top-level nest `n` carries no dependence.
bool parallel_safe(const Nest& n, size_t pos);

// Product factor pairs f*g = n with f,g >= 2.
std::vector<std::pair<int64_t, int64_t>> factor_pairs(int64_t n);

std::set<std::string> all_index_names(const Program& p);
std::set<std::string> tensors_of(const Program& p);
std::set<std::string> readers_outside(const Program& p, const std::string& tensor,
                                      const std::set<size_t>& exprs);
bool read_anywhere_except(const Program& p, const std::string& tensor,
                          const std::set<size_t>& exprs);

// Role of a tensor as currently declared or inferred.
Role role_of(const Program& p, const std::string& name);

// ---- registration ----

struct Impl {
    std::function<std::vector<Site>(const Program&)> sites;
    // Empty json object when there is nothing to choose.
    std::function<Params(const Program&, const Site&, std::mt19937_64&)> sample;
    std::function<Program(const Program&, const Site&, const Params&)> apply;
};

using ImplTable = std::map<StrategyId, Impl>;
void register_graph(ImplTable& t);
void register_operator(ImplTable& t);
void register_memory(ImplTable& t);
void register_math(ImplTable& t);
void register_prefix(ImplTable& t);

[[noreturn]] void fail(const std::string& msg);
[[noreturn]] void no_variant(const std::string& msg);

Params no_params(const Program&, const Site&, std::mt19937_64&);

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    return v[std::uniform_int_distribution<size_t>(0, v.size() - 1)(rng)];
}

}  // namespace leir::detail
