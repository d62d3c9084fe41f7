// SPDX-License-Identifier: Apache-2.0
//
// Memory-level strategies: staging through a faster scope, layout copies,
// storage scope and layout of intermediates, and index precomputation.

#include <algorithm>
#include <numeric>

#include "leir/syntax.hpp"
#include "strategy_impl.hpp"

namespace leir::detail {

namespace {

using Id = StrategyId;

Nest single(const std::vector<LoopHeader>& loops, Equation eq) {
    Nest n;
    n.loops = loops;
    n.body.push_back(Item::of(std::move(eq)));
    return n;
}

std::vector<LoopHeader> loops_over(const Nest& n, const std::set<std::string>& vars) {
    std::vector<LoopHeader> out;
    for (const auto& l : n.loops) {
        if (vars.count(l.index)) out.push_back(l);
    }
    return out;
}

// ---- cache read write ----

bool cacheable(const Nest& n) {
    if (!is_flat(n) || n.body.size() != 1) return false;
    const Equation& eq = n.body[0].eq;
    if (pointwise(eq, n.loops)) return true;
    if (!classify_safe(eq, n.loops).is_reduction) return false;
    for (const auto* r : reads(eq)) {
        if (r->name == eq.lhs.name && !equal(*r, eq.lhs)) return false;
    }
    return true;
}

std::vector<Site> cache_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        if (!cacheable(p.exprs[i])) continue;
        Site s;
        s.exprs = {i};
        out.push_back(s);
    }
    return out;
}

Params cache_sample(const Program&, const Site&, std::mt19937_64& rng) {
    return {{"scope", std::bernoulli_distribution(0.5)(rng) ? "l" : "s"}};
}

Program cache_apply(const Program& p, const Site& s, const Params& params) {
    size_t i = s.exprs.at(0);
    const Nest& n = p.exprs[i];
    if (!cacheable(n)) fail("expression cannot be staged");
    auto scope = parse_scope(params.value("scope", std::string("l")));
    if (!scope || *scope == MemScope::Global) fail("staging scope must be l or s");
    const Equation& eq = n.body[0].eq;
    std::string stage = fresh_tensor_names(p, 1)[0];
    Nest compute = map_refs(n, [&](const TensorRef& r) {
        TensorRef o = r;
        if (o.name == eq.lhs.name) {
            o.name = stage;
            o.scope = *scope;
        }
        return o;
    });
    TensorRef staged = eq.lhs;
    staged.name = stage;
    staged.scope = *scope;
    std::vector<LoopHeader> copy_loops = loops_over(n, index_vars(eq.lhs));
    if (copy_loops.empty()) copy_loops.push_back(n.loops.front());
    Program q = p;
    q.exprs[i] = compute;
    q.exprs.insert(q.exprs.begin() + static_cast<long>(i + 1), single(copy_loops, {eq.lhs, v_read(staged)}));
    return q;
}

// ---- layout transformation ----

struct LayoutCand {
    const TensorRef* ref;
    std::vector<std::string> vars;  // distinct vars in first-appearance order
    bool plain;                     // index is exactly `vars`
};

std::vector<std::string> ordered_vars(const TensorRef& r) {
    std::vector<std::string> out;
    std::function<void(const Index&)> rec = [&](const Index& ix) {
        if (!ix) return;
        if (ix->op == IndexNode::Op::Var) {
            if (std::find(out.begin(), out.end(), ix->name) == out.end()) out.push_back(ix->name);
            return;
        }
        rec(ix->a);
        rec(ix->b);
    };
    for (const auto& ix : r.indices) rec(ix);
    return out;
}

bool has_gather(const TensorRef& r) {
    std::vector<const TensorRef*> inner;
    for (const auto& ix : r.indices) collect_reads(ix, inner);
    return !inner.empty();
}

std::map<std::string, LayoutCand> layout_cands(const Program& p, size_t i) {
    std::map<std::string, LayoutCand> out;
    const Nest& n = p.exprs[i];
    if (!is_flat(n)) return out;
    std::set<std::string> written = writes_of(n);
    std::map<std::string, const TensorRef*> first;
    std::set<std::string> bad;
    for (const auto* eq : flat_eqs(n)) {
        for (const auto* r : reads(*eq)) {
            if (written.count(r->name) || has_gather(*r) || r->indices.empty()) {
                bad.insert(r->name);
                continue;
            }
            auto it = first.find(r->name);
            if (it == first.end()) {
                first[r->name] = r;
            } else if (!equal(*it->second, *r)) {
                bad.insert(r->name);
            }
        }
    }
    auto io = infer_io(p, p.io);
    std::map<std::string, Interval> ranges;
    for (const auto& l : n.loops) ranges[l.index] = {l.start, l.start + l.extent - 1};
    for (const auto& [name, r] : first) {
        if (bad.count(name)) continue;
        const auto& shape = io.at(name).shape;
        bool inside = shape.size() == r->indices.size();
        for (size_t k = 0; inside && k < r->indices.size(); ++k) {
            auto iv = index_interval(r->indices[k], ranges);
            inside = iv && iv->lo >= 0 && iv->hi < shape[k];
        }
        if (!inside) continue;
        LayoutCand c{r, ordered_vars(*r), true};
        if (c.vars.empty()) continue;
        c.plain = c.vars.size() == r->indices.size();
        for (size_t k = 0; c.plain && k < r->indices.size(); ++k) c.plain = is_plain_var(r->indices[k], c.vars[k]);
        if (c.plain && c.vars.size() < 2) continue;
        out[name] = c;
    }
    return out;
}

std::vector<Site> layout_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        for (const auto& [name, c] : layout_cands(p, i)) {
            Site s;
            s.exprs = {i};
            s.names = {name};
            out.push_back(s);
        }
    }
    return out;
}

Params layout_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    auto cands = layout_cands(p, s.exprs.at(0));
    const LayoutCand& c = cands.at(s.names.at(0));
    std::vector<std::string> perm = c.vars;
    if (c.plain) {
        while (perm == c.vars) std::shuffle(perm.begin(), perm.end(), rng);
    } else {
        std::shuffle(perm.begin(), perm.end(), rng);
    }
    return {{"order", perm}};
}

Program layout_apply(const Program& p, const Site& s, const Params& params) {
    size_t i = s.exprs.at(0);
    auto cands = layout_cands(p, i);
    auto it = cands.find(s.names.at(0));
    if (it == cands.end()) fail("tensor has no layout candidate");
    const LayoutCand& c = it->second;
    auto order = params.at("order").get<std::vector<std::string>>();
    auto sorted_a = order, sorted_b = c.vars;
    std::sort(sorted_a.begin(), sorted_a.end());
    std::sort(sorted_b.begin(), sorted_b.end());
    if (sorted_a != sorted_b) fail("order must permute the index variables");
    if (c.plain && order == c.vars) fail("layout unchanged");
    TensorRef copy;
    copy.name = fresh_tensor_names(p, 1)[0];
    copy.dtype = c.ref->dtype;
    copy.scope = c.ref->scope;
    for (const auto& v : order) copy.indices.push_back(ix_var(v));
    const Nest& n = p.exprs[i];
    std::vector<LoopHeader> loops = loops_over(n, std::set<std::string>(c.vars.begin(), c.vars.end()));
    TensorRef original = *c.ref;
    Nest nn = map_refs(n, [&](const TensorRef& r) { return r.name == original.name ? copy : r; });
    Program q = p;
    q.exprs[i] = nn;
    q.exprs.insert(q.exprs.begin() + static_cast<long>(i), single(loops, {copy, v_read(original)}));
    return q;
}

// ---- set storage scope ----

std::vector<std::string> intermediates(const Program& p, size_t min_rank) {
    std::vector<std::string> out;
    auto io = infer_io(p, p.io);
    for (const auto& [name, e] : io) {
        if (e.role == Role::Intermediate && e.shape.size() >= min_rank) out.push_back(name);
    }
    return out;
}

std::optional<MemScope> scope_of(const Program& p, const std::string& name) {
    for (const auto& vis : equations(p)) {
        if (vis.eq->lhs.name == name) return vis.eq->lhs.scope;
    }
    return std::nullopt;
}

std::vector<Site> scope_sites(const Program& p) {
    std::vector<Site> out;
    for (const auto& name : intermediates(p, 0)) {
        Site s;
        s.names = {name};
        out.push_back(s);
    }
    return out;
}

Params scope_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    auto cur = scope_of(p, s.names.at(0));
    std::vector<std::string> opts;
    for (const char* c : {"g", "s", "l"}) {
        if (!cur || parse_scope(c) != *cur) opts.push_back(c);
    }
    return {{"scope", pick(opts, rng)}};
}

Program scope_apply(const Program& p, const Site& s, const Params& params) {
    auto scope = parse_scope(params.at("scope").get<std::string>());
    if (!scope) fail("unknown scope");
    const std::string& name = s.names.at(0);
    if (scope_of(p, name) == scope) fail("scope unchanged");
    return map_refs(p, [&](const TensorRef& r) {
        TensorRef o = r;
        if (o.name == name) o.scope = *scope;
        return o;
    });
}

// ---- set storage layout ----

std::vector<Site> storage_layout_sites(const Program& p) {
    std::vector<Site> out;
    for (const auto& name : intermediates(p, 2)) {
        Site s;
        s.names = {name};
        out.push_back(s);
    }
    return out;
}

Params storage_layout_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    auto io = infer_io(p, p.io);
    size_t rank = io.at(s.names.at(0)).shape.size();
    std::vector<size_t> id(rank), perm(rank);
    std::iota(id.begin(), id.end(), 0);
    perm = id;
    bool flatten = std::bernoulli_distribution(0.5)(rng);
    std::shuffle(perm.begin(), perm.end(), rng);
    if (perm == id && !flatten) {
        while (perm == id) std::shuffle(perm.begin(), perm.end(), rng);
    }
    return {{"order", perm}, {"flatten", flatten}};
}

Program storage_layout_apply(const Program& p, const Site& s, const Params& params) {
    const std::string& name = s.names.at(0);
    auto io = infer_io(p, p.io);
    auto shape = io.at(name).shape;
    auto perm = params.at("order").get<std::vector<size_t>>();
    bool flatten = params.value("flatten", false);
    std::vector<size_t> sorted = perm;
    std::sort(sorted.begin(), sorted.end());
    for (size_t k = 0; k < sorted.size(); ++k) {
        if (sorted[k] != k) fail("order must permute the axes");
    }
    if (perm.size() != shape.size()) fail("order must list every axis");
    bool identity = std::is_sorted(perm.begin(), perm.end());
    if (identity && !flatten) fail("layout unchanged");
    std::vector<int64_t> stride(perm.size(), 1);
    for (size_t k = perm.size(); k-- > 1;) stride[k - 1] = stride[k] * shape[perm[k]];
    return map_refs(p, [&](const TensorRef& r) {
        if (r.name != name) return r;
        TensorRef o = r;
        o.indices.clear();
        for (size_t k : perm) o.indices.push_back(r.indices[k]);
        if (flatten) {
            Index flat;
            for (size_t k = 0; k < o.indices.size(); ++k) {
                Index term = stride[k] == 1 ? o.indices[k] : ix_mul(o.indices[k], ix_const(stride[k]));
                flat = flat ? ix_add(flat, term) : term;
            }
            o.indices = {flat};
        }
        return o;
    });
}

// ---- precompute indices ----

bool precomputable(const Index& ix) {
    if (ix->op == IndexNode::Op::Var || ix->op == IndexNode::Op::Const) return false;
    std::vector<const TensorRef*> g;
    collect_reads(ix, g);
    if (!g.empty()) return false;
    std::set<std::string> vars;
    collect_index_vars(ix, vars);
    return vars.size() >= 2;
}

std::vector<Index> precompute_cands(const Equation& eq) {
    std::vector<Index> out;
    auto add = [&](const TensorRef& r) {
        for (const auto& ix : r.indices) {
            if (!precomputable(ix)) continue;
            if (std::none_of(out.begin(), out.end(), [&](const Index& o) { return equal(o, ix); })) out.push_back(ix);
        }
    };
    add(eq.lhs);
    for (const auto* r : reads(eq.rhs)) add(*r);
    return out;
}

std::vector<Site> precompute_sites(const Program& p) {
    std::vector<Site> out;
    for (const auto& loc : eq_locs(p)) {
        for (const auto& ix : precompute_cands(*loc.eq)) {
            Site s;
            s.exprs = {loc.expr};
            s.path = loc.path;
            s.names = {print(ix)};
            out.push_back(s);
        }
    }
    return out;
}

Program precompute_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    const EqLoc* loc = nullptr;
    auto locs = eq_locs(p);
    for (const auto& l : locs) {
        if (l.expr == i && l.path == s.path) loc = &l;
    }
    if (!loc) fail("equation not found");
    Index target;
    for (const auto& ix : precompute_cands(*loc->eq)) {
        if (print(ix) == s.names.at(0)) target = ix;
    }
    if (!target) fail("index expression not found");
    std::set<std::string> vars;
    collect_index_vars(target, vars);
    std::vector<LoopHeader> loops;
    for (const auto* l : loc->loops) {
        if (vars.count(l->index)) loops.push_back(*l);
    }
    TensorRef table;
    table.name = fresh_tensor_names(p, 1)[0];
    table.dtype = DType::I64;
    for (const auto& l : loops) table.indices.push_back(ix_var(l.index));
    Index gather = ix_read(table);
    std::function<Index(const Index&)> swap = [&](const Index& ix) -> Index {
        if (!ix) return ix;
        if (equal(ix, target)) return gather;
        return ix;
    };
    RefFn f = [&](const TensorRef& r) {
        TensorRef o = r;
        for (auto& ix : o.indices) ix = swap(ix);
        return o;
    };
    Program q = p;
    Equation& eq = eq_at(q, i, s.path);
    eq = map_refs(eq, f);
    q.exprs.insert(q.exprs.begin() + static_cast<long>(i), single(loops, {table, index_to_value(target)}));
    return q;
}

}  // namespace

void register_memory(ImplTable& t) {
    t[Id::CacheReadWrite] = {cache_sites, cache_sample, cache_apply};
    t[Id::LayoutTransformation] = {layout_sites, layout_sample, layout_apply};
    t[Id::SetStorageScope] = {scope_sites, scope_sample, scope_apply};
    t[Id::SetStorageLayout] = {storage_layout_sites, storage_layout_sample, storage_layout_apply};
    t[Id::PrecomputeIndices] = {precompute_sites, no_params, precompute_apply};
}

}  // namespace leir::detail
