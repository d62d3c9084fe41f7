// SPDX-License-Identifier: Apache-2.0
//
// Operator-level strategies: loop reorder, tiling, split, fusion, loop
// annotations, binding and reduction factorization.

#include <algorithm>
#include <numeric>

#include "strategy_impl.hpp"

namespace leir::detail {

namespace {

using Id = StrategyId;

std::set<std::string> nest_index_names(const Nest& n) {
    std::set<std::string> out;
    std::function<void(const Nest&)> rec = [&](const Nest& x) {
        for (const auto& l : x.loops) out.insert(l.index);
        for (const auto& it : x.body) {
            if (!it.is_eq) rec(it.nest());
        }
    };
    rec(n);
    return out;
}

// Loop var `v` indexes every lhs in the nest as a plain entry.
bool output_axis(const Nest& n, const std::string& v) {
    for (const auto& vis : equations(n, 0)) {
        bool plain = std::any_of(vis.eq->lhs.indices.begin(), vis.eq->lhs.indices.end(),
                                 [&](const Index& ix) { return is_plain_var(ix, v); });
        if (!plain) return false;
    }
    return true;
}

// ---- loop reorder ----

std::vector<size_t> free_positions(const Nest& n) {
    std::vector<size_t> out;
    for (size_t k = 0; k < n.loops.size(); ++k) {
        if (n.loops[k].kind != LoopKind::Binding) out.push_back(k);
    }
    return out;
}

std::vector<Site> loop_reorder_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        const Nest& n = p.exprs[i];
        if (free_positions(n).size() < 2 || !order_free(n)) continue;
        Site s;
        s.exprs = {i};
        out.push_back(s);
    }
    return out;
}

Params loop_reorder_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    const Nest& n = p.exprs.at(s.exprs.at(0));
    std::vector<size_t> pos = free_positions(n);
    std::vector<size_t> perm = pos;
    while (perm == pos) std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> order;
    for (const auto& l : n.loops) order.push_back(l.index);
    for (size_t k = 0; k < pos.size(); ++k) order[pos[k]] = n.loops[perm[k]].index;
    return {{"order", order}};
}

Program loop_reorder_apply(const Program& p, const Site& s, const Params& params) {
    size_t i = s.exprs.at(0);
    const Nest& n = p.exprs[i];
    auto order = params.at("order").get<std::vector<std::string>>();
    if (order.size() != n.loops.size()) fail("order must list every loop");
    std::vector<LoopHeader> loops;
    for (size_t k = 0; k < order.size(); ++k) {
        auto it = std::find_if(n.loops.begin(), n.loops.end(), [&](const LoopHeader& l) { return l.index == order[k]; });
        if (it == n.loops.end()) fail("unknown loop " + order[k]);
        if ((it->kind == LoopKind::Binding) != (n.loops[k].kind == LoopKind::Binding)) fail("binding loops stay in place");
        loops.push_back(*it);
    }
    Program q = p;
    q.exprs[i].loops = loops;
    return q;
}

// ---- loop tiling ----

bool tileable_axis(const Nest& n, size_t k) {
    const LoopHeader& l = n.loops[k];
    return l.start == 0 && !factor_pairs(l.extent).empty() && output_axis(n, l.index);
}

std::vector<Site> tiling_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        const Nest& n = p.exprs[i];
        if (!order_free(n)) continue;
        for (size_t k = 0; k + 1 < n.loops.size(); ++k) {
            if (!tileable_axis(n, k) || !tileable_axis(n, k + 1)) continue;
            Site s;
            s.exprs = {i};
            s.loops = {k, k + 1};
            out.push_back(s);
        }
    }
    return out;
}

Params tiling_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    const Nest& n = p.exprs.at(s.exprs.at(0));
    nlohmann::json outer = nlohmann::json::array();
    for (size_t k : s.loops) outer.push_back(pick(factor_pairs(n.loops[k].extent), rng).first);
    return {{"outer", outer}};
}

// Splits loop `k` of `n` into a fresh outer loop of extent `outer` and the
// original loop with the remaining extent; returns the new outer header.
LoopHeader split_loop(Nest& n, size_t k, int64_t outer, std::set<std::string>& used) {
    LoopHeader& l = n.loops[k];
    if (l.start != 0 || outer < 2 || l.extent % outer != 0 || l.extent / outer < 2) fail("bad split factor");
    int64_t inner = l.extent / outer;
    LoopHeader o;
    o.kind = LoopKind::Serial;
    o.index = fresh_index_name(used);
    used.insert(o.index);
    o.extent = outer;
    VarMap m = {{l.index, ix_add(ix_mul(ix_var(o.index), ix_const(inner)), ix_var(l.index))}};
    l.extent = inner;
    Nest body = subst_body(n, m);
    n.body = body.body;
    return o;
}

Program tiling_apply(const Program& p, const Site& s, const Params& params) {
    size_t i = s.exprs.at(0);
    auto outer = params.at("outer").get<std::vector<int64_t>>();
    if (outer.size() != s.loops.size()) fail("one outer extent per tiled loop");
    Program q = p;
    Nest& n = q.exprs[i];
    std::set<std::string> used = all_index_names(p);
    std::vector<LoopHeader> front;
    for (size_t k = 0; k < s.loops.size(); ++k) front.push_back(split_loop(n, s.loops[k], outer[k], used));
    n.loops.insert(n.loops.begin(), front.begin(), front.end());
    return q;
}

// ---- loop split ----

std::vector<Site> split_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        const Nest& n = p.exprs[i];
        for (size_t k = 0; k < n.loops.size(); ++k) {
            if (n.loops[k].start != 0 || factor_pairs(n.loops[k].extent).empty()) continue;
            Site s;
            s.exprs = {i};
            s.loops = {k};
            out.push_back(s);
        }
    }
    return out;
}

Params split_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    const Nest& n = p.exprs.at(s.exprs.at(0));
    return {{"outer", pick(factor_pairs(n.loops.at(s.loops.at(0)).extent), rng).first}};
}

Program split_apply(const Program& p, const Site& s, const Params& params) {
    size_t i = s.exprs.at(0);
    size_t k = s.loops.at(0);
    Program q = p;
    Nest& n = q.exprs[i];
    std::set<std::string> used = all_index_names(p);
    LoopHeader o = split_loop(n, k, params.at("outer").get<int64_t>(), used);
    n.loops.insert(n.loops.begin() + static_cast<long>(k), o);
    return q;
}

// ---- loop fusion ----

const std::string kFused = "#fused";

bool fused_pattern(const Index& ix, const std::string& o, int64_t g, const std::string& in) {
    if (ix->op != IndexNode::Op::Add) return false;
    auto mul_ok = [&](const Index& m) {
        if (m->op != IndexNode::Op::Mul) return false;
        return (is_plain_var(m->a, o) && m->b->op == IndexNode::Op::Const && m->b->value == g) ||
               (is_plain_var(m->b, o) && m->a->op == IndexNode::Op::Const && m->a->value == g);
    };
    return (mul_ok(ix->a) && is_plain_var(ix->b, in)) || (mul_ok(ix->b) && is_plain_var(ix->a, in));
}

Index fuse_index(const Index& ix, const std::string& o, int64_t g, const std::string& in) {
    if (!ix) return ix;
    if (fused_pattern(ix, o, g, in)) return ix_var(kFused);
    switch (ix->op) {
        case IndexNode::Op::Const:
        case IndexNode::Op::Var: return ix;
        case IndexNode::Op::Read: {
            TensorRef r = *ix->ref;
            for (auto& s : r.indices) s = fuse_index(s, o, g, in);
            return ix_read(r);
        }
        default: return ix_bin(ix->op, fuse_index(ix->a, o, g, in), fuse_index(ix->b, o, g, in));
    }
}

bool value_pattern(const Value& v, const std::string& o, int64_t g, const std::string& in) {
    if (v->op != ValueOp::Add) return false;
    auto is_var = [](const Value& x, const std::string& n) { return x->op == ValueOp::Var && x->var == n; };
    auto mul_ok = [&](const Value& m) {
        if (m->op != ValueOp::Mul) return false;
        auto is_g = [&](const Value& c) { return c->op == ValueOp::Const && c->num == static_cast<double>(g); };
        return (is_var(m->args[0], o) && is_g(m->args[1])) || (is_var(m->args[1], o) && is_g(m->args[0]));
    };
    return (mul_ok(v->args[0]) && is_var(v->args[1], in)) || (mul_ok(v->args[1]) && is_var(v->args[0], in));
}

Value fuse_value(const Value& v, const std::string& o, int64_t g, const std::string& in) {
    if (value_pattern(v, o, g, in)) return v_var(kFused);
    if (v->op == ValueOp::Read) {
        TensorRef r = v->ref;
        for (auto& s : r.indices) s = fuse_index(s, o, g, in);
        return v_read(r);
    }
    if (v->args.empty()) return v;
    std::vector<Value> args;
    for (const auto& a : v->args) args.push_back(fuse_value(a, o, g, in));
    return v_with_args(*v, std::move(args));
}

Nest fuse_nest(const Nest& n, const std::string& o, int64_t g, const std::string& in) {
    Nest out;
    out.loops = n.loops;
    for (const auto& it : n.body) {
        if (it.is_eq) {
            TensorRef lhs = it.eq.lhs;
            for (auto& s : lhs.indices) s = fuse_index(s, o, g, in);
            out.body.push_back(Item::of(Equation{lhs, fuse_value(it.eq.rhs, o, g, in)}));
        } else {
            out.body.push_back(Item::of(fuse_nest(it.nest(), o, g, in)));
        }
    }
    return out;
}

bool mentions(const Nest& n, const std::string& v) {
    for (const auto& vis : equations(n, 0)) {
        if (index_vars(vis.eq->lhs).count(v) || value_vars(vis.eq->rhs).count(v)) return true;
    }
    return false;
}

std::optional<Nest> fused(const Nest& n, size_t ko, size_t ki) {
    const LoopHeader& o = n.loops[ko];
    const LoopHeader& in = n.loops[ki];
    if (o.start != 0 || in.start != 0) return std::nullopt;
    Nest body = fuse_nest(n, o.index, in.extent, in.index);
    if (mentions(body, o.index) || mentions(body, in.index) || !mentions(body, kFused)) return std::nullopt;
    int64_t ext = o.extent * in.extent;
    if (in.bind && ext > bind_cap(*in.bind)) return std::nullopt;
    Nest out = subst_body(body, {{kFused, ix_var(in.index)}});
    out.loops = n.loops;
    out.loops[ki].extent = ext;
    out.loops.erase(out.loops.begin() + static_cast<long>(ko));
    return out;
}

std::vector<Site> loop_fusion_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        const Nest& n = p.exprs[i];
        bool free = order_free(n);
        for (size_t ko = 0; ko < n.loops.size(); ++ko) {
            for (size_t ki = ko + 1; ki < n.loops.size(); ++ki) {
                if (ki != ko + 1 && !free) continue;
                if (!fused(n, ko, ki)) continue;
                Site s;
                s.exprs = {i};
                s.loops = {ko, ki};
                out.push_back(s);
            }
        }
    }
    return out;
}

Program loop_fusion_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto n = fused(p.exprs[i], s.loops.at(0), s.loops.at(1));
    if (!n) fail("loops do not fuse");
    Program q = p;
    q.exprs[i] = *n;
    return q;
}

// ---- annotations ----

std::vector<Site> kind_sites(const Program& p, bool need_safe, bool innermost_only) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        const Nest& n = p.exprs[i];
        for (size_t k = 0; k < n.loops.size(); ++k) {
            if (n.loops[k].kind != LoopKind::Serial) continue;
            if (innermost_only && (k + 1 != n.loops.size() || !is_flat(n))) continue;
            if (need_safe && !parallel_safe(n, k)) continue;
            Site s;
            s.exprs = {i};
            s.loops = {k};
            out.push_back(s);
        }
    }
    return out;
}

Program set_kind(const Program& p, const Site& s, LoopKind kind) {
    Program q = p;
    LoopHeader& l = q.exprs.at(s.exprs.at(0)).loops.at(s.loops.at(0));
    if (l.kind != LoopKind::Serial) fail("loop is not serial");
    l.kind = kind;
    return q;
}

// ---- binding ----

std::vector<BindTarget> free_targets(const Nest& n, size_t k) {
    static const std::vector<BindTarget> all = {BindTarget::BlockX, BindTarget::BlockY, BindTarget::BlockZ,
                                                BindTarget::ThreadX, BindTarget::ThreadY, BindTarget::ThreadZ};
    std::set<std::string> names = nest_index_names(n);
    std::vector<BindTarget> out;
    for (BindTarget t : all) {
        bool taken = std::any_of(n.loops.begin(), n.loops.end(), [&](const LoopHeader& l) { return l.bind == t; });
        std::string name = std::string(bind_prefix(t)) + n.loops[k].index;
        if (!taken && n.loops[k].extent <= bind_cap(t) && !names.count(name)) out.push_back(t);
    }
    return out;
}

std::vector<Site> binding_sites(const Program& p) {
    std::vector<Site> out;
    for (auto s : kind_sites(p, true, false)) {
        if (!free_targets(p.exprs[s.exprs[0]], s.loops[0]).empty()) out.push_back(s);
    }
    return out;
}

Params binding_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    auto ts = free_targets(p.exprs.at(s.exprs.at(0)), s.loops.at(0));
    return {{"target", std::string(bind_prefix(pick(ts, rng)))}};
}

Program binding_apply(const Program& p, const Site& s, const Params& params) {
    size_t i = s.exprs.at(0), k = s.loops.at(0);
    std::string prefix = params.at("target").get<std::string>();
    auto t = bind_target_of(prefix);
    if (!t || prefix.size() != 2) fail("unknown binding target " + prefix);
    auto ts = free_targets(p.exprs[i], k);
    if (std::find(ts.begin(), ts.end(), *t) == ts.end()) fail("binding target unavailable");
    Program q = p;
    Nest& n = q.exprs[i];
    std::string old = n.loops[k].index;
    std::string name = prefix + old;
    n = subst_body(n, {{old, ix_var(name)}});
    n.loops[k].kind = LoopKind::Binding;
    n.loops[k].bind = t;
    n.loops[k].index = name;
    return q;
}

// ---- reduction factorization ----

std::vector<size_t> factorizable_axes(const Nest& n) {
    std::vector<size_t> out;
    if (!is_flat(n) || n.body.size() != 1) return out;
    ReductionInfo info = classify_safe(n.body[0].eq, n.loops);
    if (!info.is_reduction) return out;
    for (size_t k = 0; k < n.loops.size(); ++k) {
        if (info.reduction_axes.count(n.loops[k].index) && n.loops[k].extent >= 2) out.push_back(k);
    }
    return out;
}

std::vector<Site> rfactor_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        if (factorizable_axes(p.exprs[i]).empty()) continue;
        Site s;
        s.exprs = {i};
        out.push_back(s);
    }
    return out;
}

Params rfactor_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    const Nest& n = p.exprs.at(s.exprs.at(0));
    size_t axis = pick(factorizable_axes(n), rng);
    int64_t at = std::uniform_int_distribution<int64_t>(1, n.loops[axis].extent - 1)(rng);
    return {{"axis", axis}, {"split", at}};
}

Value combine(Combiner c, Value a, Value b) {
    switch (c) {
        case Combiner::Sum: return v_add(std::move(a), std::move(b));
        case Combiner::Product: return v_mul(std::move(a), std::move(b));
        case Combiner::Max: return v_bin(ValueOp::Max, std::move(a), std::move(b));
        case Combiner::Min: return v_bin(ValueOp::Min, std::move(a), std::move(b));
    }
    return a;
}

Program rfactor_apply(const Program& p, const Site& s, const Params& params) {
    size_t i = s.exprs.at(0);
    const Nest& n = p.exprs[i];
    auto axes = factorizable_axes(n);
    size_t axis = params.at("axis").get<size_t>();
    int64_t at = params.at("split").get<int64_t>();
    if (std::find(axes.begin(), axes.end(), axis) == axes.end()) fail("not a reduction axis");
    if (at < 1 || at >= n.loops[axis].extent) fail("bad split point");
    const Equation& eq = n.body[0].eq;
    Combiner comb = *classify_safe(eq, n.loops).combiner;
    auto names = fresh_tensor_names(p, 2);
    auto rename = [&](const std::string& to) {
        return [&eq, to](const TensorRef& r) {
            TensorRef o = r;
            if (o.name == eq.lhs.name) o.name = to;
            return o;
        };
    };
    const std::string& v = n.loops[axis].index;
    Nest first = n, second = n;
    first.loops[axis].extent = at;
    second.loops[axis].extent = n.loops[axis].extent - at;
    first = map_refs(first, rename(names[0]));
    second = map_refs(subst_body(second, {{v, ix_add(ix_var(v), ix_const(at))}}), rename(names[1]));
    TensorRef k = eq.lhs, m = eq.lhs;
    k.name = names[0];
    m.name = names[1];
    std::set<std::string> lhs_vars = index_vars(eq.lhs);
    Nest join;
    for (const auto& l : n.loops) {
        if (lhs_vars.count(l.index)) join.loops.push_back(l);
    }
    if (join.loops.empty()) {
        LoopHeader one;
        one.index = fresh_index_name(all_index_names(p));
        one.extent = 1;
        join.loops.push_back(one);
    }
    join.body.push_back(Item::of(Equation{eq.lhs, combine(comb, v_read(k), v_read(m))}));
    Program q = p;
    q.exprs[i] = first;
    q.exprs.insert(q.exprs.begin() + static_cast<long>(i + 1), {second, join});
    return q;
}

}  // namespace

void register_operator(ImplTable& t) {
    t[Id::LoopReorder] = {loop_reorder_sites, loop_reorder_sample, loop_reorder_apply};
    t[Id::LoopTiling] = {tiling_sites, tiling_sample, tiling_apply};
    t[Id::LoopSplit] = {split_sites, split_sample, split_apply};
    t[Id::LoopFusion] = {loop_fusion_sites, no_params, loop_fusion_apply};
    t[Id::LoopUnrolling] = {[](const Program& p) { return kind_sites(p, false, false); }, no_params,
                            [](const Program& p, const Site& s, const Params&) { return set_kind(p, s, LoopKind::Unrolled); }};
    t[Id::LoopParallelization] = {[](const Program& p) { return kind_sites(p, true, false); }, no_params,
                                  [](const Program& p, const Site& s, const Params&) { return set_kind(p, s, LoopKind::Parallel); }};
    t[Id::LoopVectorization] = {[](const Program& p) { return kind_sites(p, true, true); }, no_params,
                                [](const Program& p, const Site& s, const Params&) { return set_kind(p, s, LoopKind::Vectorized); }};
    t[Id::LoopBinding] = {binding_sites, binding_sample, binding_apply};
    t[Id::ReductionFactorization] = {rfactor_sites, rfactor_sample, rfactor_apply};
}

}  // namespace leir::detail
