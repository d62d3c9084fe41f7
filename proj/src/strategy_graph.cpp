// SPDX-License-Identifier: Apache-2.0
//
// Graph-level strategies: expression fusion, fission, inlining, splitting,
// concatenation, decoupling, subexpression elimination and reordering.

#include <algorithm>

#include "leir/syntax.hpp"
#include "strategy_impl.hpp"

namespace leir::detail {

namespace {

using Id = StrategyId;

// Loop vars of `n` in loop order as plain indices.
std::vector<Index> loop_index_list(const std::vector<const LoopHeader*>& loops) {
    std::vector<Index> out;
    for (const auto* l : loops) out.push_back(ix_var(l->index));
    return out;
}

bool in_condition(const Value& root, const std::vector<size_t>& path) {
    const Value* cur = &root;
    for (size_t k : path) {
        if ((*cur)->op == ValueOp::Ite && k == 0) return true;
        cur = &(*cur)->args[k];
    }
    return false;
}

bool hoistable(const Value& v) {
    switch (v->op) {
        case ValueOp::Const: case ValueOp::Read: case ValueOp::Var:
        case ValueOp::Cmp: case ValueOp::Range: case ValueOp::And:
            return false;
        default: return true;
    }
}

// Candidate subterm paths: non-leaf, not the root, outside guards and branches.
std::vector<std::vector<size_t>> hoist_candidates(const Value& rhs) {
    std::vector<std::vector<size_t>> out;
    for (auto& path : node_paths(rhs, true)) {
        if (path.empty() || in_condition(rhs, path)) continue;
        if (!hoistable(value_at(rhs, path))) continue;
        out.push_back(path);
    }
    return out;
}

// A single-equation top-level expression hoists into a new expression;
// otherwise the new equation goes right before the original one.
bool hoists_to_new_expr(const Program& p, const EqLoc& loc) {
    const Nest& n = p.exprs[loc.expr];
    return loc.path.size() == 1 && n.body.size() == 1;
}

bool hoist_reads_ok(const Program& p, const EqLoc& loc, const Value& sub) {
    if (!hoists_to_new_expr(p, loc)) return true;
    return !reads_tensor(sub, loc.eq->lhs.name);
}

Program hoist(const Program& p, size_t expr, const std::vector<size_t>& path, const Value& sub) {
    Program q = p;
    std::vector<const LoopHeader*> loops;
    for (const auto& loc : eq_locs(p)) {
        if (loc.expr == expr && loc.path == path) loops = loc.loops;
    }
    const Equation& eq = eq_at(p, expr, path);
    TensorRef j;
    j.name = fresh_tensor_names(p, 1)[0];
    j.dtype = eq.lhs.dtype;
    j.indices = loop_index_list(loops);
    Equation hoisted{j, sub};
    Equation& target = eq_at(q, expr, path);
    // Replace every unguarded occurrence of `sub`.
    Value rhs = target.rhs;
    std::function<Value(const Value&)> rewrite = [&](const Value& v) -> Value {
        if (equal(v, sub)) return v_read(j);
        if (v->args.empty()) return v;
        std::vector<Value> args;
        for (size_t i = 0; i < v->args.size(); ++i) {
            if (v->op == ValueOp::Ite) {
                args.push_back(v->args[i]);
            } else {
                args.push_back(rewrite(v->args[i]));
            }
        }
        return v_with_args(*v, std::move(args));
    };
    target.rhs = rewrite(rhs);
    if (loops.size() == p.exprs[expr].loops.size() && path.size() == 1 && p.exprs[expr].body.size() == 1) {
        Nest n;
        n.loops = p.exprs[expr].loops;
        n.body.push_back(Item::of(hoisted));
        q.exprs.insert(q.exprs.begin() + static_cast<long>(expr), n);
        return q;
    }
    Nest* n = &q.exprs[expr];
    for (size_t k = 0; k + 1 < path.size(); ++k) n = &n->body[path[k]].nest();
    n->body.insert(n->body.begin() + static_cast<long>(path.back()), Item::of(hoisted));
    return q;
}

// ---- operator fusion ----

// Reads in `b` of tensors written by `a` are safe to interleave: each such
// tensor comes from a single pointwise, injective equation and is read at
// the written index.
bool forward_reads_ok(const std::vector<const Equation*>& a, const std::vector<const Equation*>& b,
                      const std::vector<LoopHeader>& loops) {
    std::set<std::string> vars;
    for (const auto& l : loops) vars.insert(l.index);
    std::map<std::string, std::vector<const Equation*>> writer;
    for (const auto* e : a) writer[e->lhs.name].push_back(e);
    for (const auto* e : b) {
        for (const auto* r : reads(*e)) {
            auto it = writer.find(r->name);
            if (it == writer.end()) continue;
            if (it->second.size() != 1) return false;
            const Equation& w = *it->second.front();
            if (!pointwise(w, loops) || !injective_write(w, vars)) return false;
            if (!same_indices(*r, w.lhs)) return false;
        }
    }
    return true;
}

std::set<std::string> names_written(const std::vector<const Equation*>& eqs) {
    std::set<std::string> s;
    for (const auto* e : eqs) s.insert(e->lhs.name);
    return s;
}

std::set<std::string> names_read(const std::vector<const Equation*>& eqs) {
    std::set<std::string> s;
    for (const auto* e : eqs) {
        for (const auto* r : reads(*e)) s.insert(r->name);
    }
    return s;
}

bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
    return std::none_of(a.begin(), a.end(), [&](const std::string& s) { return b.count(s) > 0; });
}

bool groups_separable(const std::vector<const Equation*>& first, const std::vector<const Equation*>& second,
                      const std::vector<LoopHeader>& loops) {
    if (!disjoint(names_written(first), names_written(second))) return false;
    if (!disjoint(names_read(first), names_written(second))) return false;
    return forward_reads_ok(first, second, loops);
}

std::vector<Site> fusion_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 1 < p.exprs.size(); ++i) {
        const Nest& a = p.exprs[i];
        const Nest& b = p.exprs[i + 1];
        if (!is_flat(a) || !is_flat(b) || a.loops != b.loops) continue;
        if (!groups_separable(flat_eqs(a), flat_eqs(b), a.loops)) continue;
        Site s;
        s.exprs = {i, i + 1};
        out.push_back(s);
    }
    return out;
}

Program fusion_apply(const Program& p, const Site& s, const Params&) {
    Program q = p;
    size_t i = s.exprs.at(0);
    Nest& a = q.exprs[i];
    for (const auto& it : p.exprs[i + 1].body) a.body.push_back(it);
    q.exprs.erase(q.exprs.begin() + static_cast<long>(i + 1));
    return q;
}

// ---- operator fission ----

std::vector<Site> fission_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        const Nest& n = p.exprs[i];
        if (!is_flat(n) || n.body.size() < 2) continue;
        auto eqs = flat_eqs(n);
        for (size_t k = 1; k < eqs.size(); ++k) {
            std::vector<const Equation*> first(eqs.begin(), eqs.begin() + static_cast<long>(k));
            std::vector<const Equation*> second(eqs.begin() + static_cast<long>(k), eqs.end());
            if (!groups_separable(first, second, n.loops)) continue;
            Site s;
            s.exprs = {i};
            s.option = static_cast<int64_t>(k);
            out.push_back(s);
        }
    }
    return out;
}

Program fission_apply(const Program& p, const Site& s, const Params&) {
    Program q = p;
    size_t i = s.exprs.at(0);
    auto k = static_cast<long>(s.option);
    Nest first = p.exprs[i], second = p.exprs[i];
    first.body.assign(p.exprs[i].body.begin(), p.exprs[i].body.begin() + k);
    second.body.assign(p.exprs[i].body.begin() + k, p.exprs[i].body.end());
    q.exprs[i] = first;
    q.exprs.insert(q.exprs.begin() + static_cast<long>(i + 1), second);
    return q;
}

// ---- compute inline ----

struct InlinePlan {
    const Equation* producer;
    std::map<std::string, size_t> var_pos;  // lhs var -> axis
};

std::optional<InlinePlan> inline_plan(const Program& p, size_t i) {
    const Nest& a = p.exprs[i];
    const Nest& b = p.exprs[i + 1];
    if (!is_flat(a) || a.body.size() != 1) return std::nullopt;
    const Equation& eq = a.body[0].eq;
    if (!pointwise(eq, a.loops)) return std::nullopt;
    const std::string& x = eq.lhs.name;
    if (role_of(p, x) != Role::Intermediate) return std::nullopt;
    if (read_anywhere_except(p, x, {i, i + 1})) return std::nullopt;
    for (size_t j = 0; j < p.exprs.size(); ++j) {
        if (j != i && writes_of(p.exprs[j]).count(x)) return std::nullopt;
    }
    InlinePlan plan{&eq, {}};
    std::map<std::string, Interval> ranges;
    for (const auto& l : a.loops) ranges[l.index] = {l.start, l.start + l.extent - 1};
    for (size_t k = 0; k < eq.lhs.indices.size(); ++k) {
        auto v = plain_var(eq.lhs.indices[k]);
        if (!v || plan.var_pos.count(*v) || !ranges.count(*v)) return std::nullopt;
        plan.var_pos[*v] = k;
    }
    for (const auto& v : value_vars(eq.rhs)) {
        if (!plan.var_pos.count(v)) return std::nullopt;
    }
    std::set<std::string> written_b = writes_of(b);
    for (const auto* r : reads(eq.rhs)) {
        if (written_b.count(r->name)) return std::nullopt;
    }
    // Every read of x in b must stay inside the produced region.
    bool any = false;
    for (const auto& vis : equations(b, i + 1)) {
        std::map<std::string, Interval> bvars;
        for (const auto* l : vis.loops) bvars[l->index] = {l->start, l->start + l->extent - 1};
        std::vector<const TensorRef*> rs = reads(*vis.eq);
        for (const auto* r : rs) {
            if (r->name != x) continue;
            any = true;
            for (size_t k = 0; k < r->indices.size(); ++k) {
                auto iv = index_interval(r->indices[k], bvars);
                auto v = plain_var(eq.lhs.indices[k]);
                if (!iv || iv->lo < ranges[*v].lo || iv->hi > ranges[*v].hi) return std::nullopt;
            }
        }
        if (vis.eq->lhs.name == x) return std::nullopt;
    }
    if (!any) return std::nullopt;
    return plan;
}

std::vector<Site> inline_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 1 < p.exprs.size(); ++i) {
        if (!inline_plan(p, i)) continue;
        Site s;
        s.exprs = {i, i + 1};
        s.names = {p.exprs[i].body[0].eq.lhs.name};
        out.push_back(s);
    }
    return out;
}

Program inline_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto plan = inline_plan(p, i);
    if (!plan) fail("inline precondition no longer holds");
    const Equation& prod = *plan->producer;
    std::function<Value(const Value&)> rw = [&](const Value& v) -> Value {
        if (v->op == ValueOp::Read && v->ref.name == prod.lhs.name) {
            VarMap m;
            for (const auto& [var, k] : plan->var_pos) m[var] = v->ref.indices[k];
            return subst(prod.rhs, m);
        }
        if (v->args.empty()) return v;
        std::vector<Value> args;
        for (const auto& a : v->args) args.push_back(rw(a));
        return v_with_args(*v, std::move(args));
    };
    std::function<Nest(const Nest&)> rn = [&](const Nest& n) -> Nest {
        Nest out;
        out.loops = n.loops;
        for (const auto& it : n.body) {
            if (it.is_eq) {
                out.body.push_back(Item::of(Equation{it.eq.lhs, rw(it.eq.rhs)}));
            } else {
                out.body.push_back(Item::of(rn(it.nest())));
            }
        }
        return out;
    };
    Program q = p;
    q.exprs[i + 1] = rn(p.exprs[i + 1]);
    q.exprs.erase(q.exprs.begin() + static_cast<long>(i));
    return q;
}

// ---- expression splitting ----

std::vector<Site> splitting_sites(const Program& p) {
    std::vector<Site> out;
    for (const auto& loc : eq_locs(p)) {
        for (const auto& path : hoist_candidates(loc.eq->rhs)) {
            if (!hoist_reads_ok(p, loc, value_at(loc.eq->rhs, path))) continue;
            Site s;
            s.exprs = {loc.expr};
            s.path = loc.path;
            s.term = path;
            out.push_back(s);
        }
    }
    return out;
}

Program splitting_apply(const Program& p, const Site& s, const Params&) {
    const Equation& eq = eq_at(p, s.exprs.at(0), s.path);
    return hoist(p, s.exprs[0], s.path, value_at(eq.rhs, s.term));
}

// ---- common subexpression elimination ----

std::vector<Site> cse_sites(const Program& p) {
    std::vector<Site> out;
    for (const auto& loc : eq_locs(p)) {
        auto cands = hoist_candidates(loc.eq->rhs);
        std::set<std::string> seen;
        for (const auto& path : cands) {
            const Value& sub = value_at(loc.eq->rhs, path);
            std::string key = print(sub);
            if (seen.count(key)) continue;
            size_t hits = 0;
            for (const auto& other : cands) hits += equal(value_at(loc.eq->rhs, other), sub) ? 1 : 0;
            if (hits < 2) continue;
            seen.insert(key);
            if (!hoist_reads_ok(p, loc, sub)) continue;
            Site s;
            s.exprs = {loc.expr};
            s.path = loc.path;
            s.term = path;
            out.push_back(s);
        }
    }
    return out;
}

// ---- expression reorder ----

std::vector<Site> reorder_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 1 < p.exprs.size(); ++i) {
        auto wa = writes_of(p.exprs[i]), wb = writes_of(p.exprs[i + 1]);
        auto ra = reads_of(p.exprs[i]), rb = reads_of(p.exprs[i + 1]);
        if (!disjoint(wa, wb) || !disjoint(wa, rb) || !disjoint(wb, ra)) continue;
        if (print(p.exprs[i]) == print(p.exprs[i + 1])) continue;
        Site s;
        s.exprs = {i, i + 1};
        out.push_back(s);
    }
    return out;
}

Program reorder_apply(const Program& p, const Site& s, const Params&) {
    Program q = p;
    std::swap(q.exprs[s.exprs.at(0)], q.exprs[s.exprs.at(0) + 1]);
    return q;
}

// ---- tensor concat to fuse operators ----

struct ConcatPlan {
    std::string r1, r2;               // renamed input tensors
    std::vector<size_t> offset_axes;  // axes where the second block is shifted
};

bool indices_are_loop_vars(const TensorRef& r, const Nest& n) {
    if (r.indices.size() != n.loops.size()) return false;
    for (size_t k = 0; k < r.indices.size(); ++k) {
        if (!is_plain_var(r.indices[k], n.loops[k].index)) return false;
    }
    return true;
}

std::optional<ConcatPlan> concat_plan(const Program& p, size_t i) {
    const Nest& a = p.exprs[i];
    const Nest& b = p.exprs[i + 1];
    if (!is_flat(a) || !is_flat(b) || a.body.size() != 1 || b.body.size() != 1) return std::nullopt;
    if (a.loops.size() != b.loops.size()) return std::nullopt;
    for (size_t k = 0; k < a.loops.size(); ++k) {
        const auto &la = a.loops[k], &lb = b.loops[k];
        if (la.index != lb.index || la.kind != lb.kind || la.bind != lb.bind || la.start != 0 || lb.start != 0) {
            return std::nullopt;
        }
    }
    const Equation& ea = a.body[0].eq;
    const Equation& eb = b.body[0].eq;
    if (!pointwise(ea, a.loops) || !pointwise(eb, b.loops)) return std::nullopt;
    if (ea.lhs.name == eb.lhs.name || ea.lhs.dtype != eb.lhs.dtype || ea.lhs.scope != eb.lhs.scope) return std::nullopt;
    if (!indices_are_loop_vars(ea.lhs, a) || !indices_are_loop_vars(eb.lhs, b)) return std::nullopt;
    auto ra = reads(ea.rhs), rb = reads(eb.rhs);
    if (ra.empty() || ra.size() != rb.size()) return std::nullopt;
    ConcatPlan plan;
    plan.r1 = ra[0]->name;
    plan.r2 = rb[0]->name;
    if (plan.r1 == plan.r2) return std::nullopt;
    for (size_t k = 0; k < ra.size(); ++k) {
        if (ra[k]->name != plan.r1 || rb[k]->name != plan.r2) return std::nullopt;
        if (!indices_are_loop_vars(*ra[k], a) || !indices_are_loop_vars(*rb[k], b)) return std::nullopt;
    }
    if (ra[0]->dtype != rb[0]->dtype || ra[0]->scope != rb[0]->scope) return std::nullopt;
    if (role_of(p, plan.r1) != Role::Input || role_of(p, plan.r2) != Role::Input) return std::nullopt;
    // No position-dependent values: the rhs may only use loop vars inside reads.
    std::function<bool(const Value&)> has_var = [&](const Value& v) {
        if (v->op == ValueOp::Var) return true;
        return std::any_of(v->args.begin(), v->args.end(), has_var);
    };
    if (has_var(ea.rhs) || has_var(eb.rhs)) return std::nullopt;
    Value renamed = map_refs(eb.rhs, [&](const TensorRef& r) {
        TensorRef o = r;
        if (o.name == plan.r2) o.name = plan.r1;
        return o;
    });
    if (!equal(renamed, ea.rhs)) return std::nullopt;
    for (size_t k = 0; k < a.loops.size(); ++k) {
        if (a.loops[k].extent != b.loops[k].extent) plan.offset_axes.push_back(k);
    }
    if (plan.offset_axes.empty()) {
        for (size_t k = 0; k < a.loops.size(); ++k) {
            if (a.loops[k].kind != LoopKind::Binding) {
                plan.offset_axes.push_back(k);
                break;
            }
        }
        if (plan.offset_axes.empty()) plan.offset_axes.push_back(0);
    }
    for (size_t k = 0; k < a.loops.size(); ++k) {
        bool off = std::count(plan.offset_axes.begin(), plan.offset_axes.end(), k) > 0;
        int64_t ext = off ? a.loops[k].extent + b.loops[k].extent : a.loops[k].extent;
        if (a.loops[k].bind && ext > bind_cap(*a.loops[k].bind)) return std::nullopt;
    }
    return plan;
}

std::vector<Site> concat_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 1 < p.exprs.size(); ++i) {
        if (!concat_plan(p, i)) continue;
        Site s;
        s.exprs = {i, i + 1};
        out.push_back(s);
    }
    return out;
}

Nest single(const std::vector<LoopHeader>& loops, Equation eq) {
    Nest n;
    n.loops = loops;
    n.body.push_back(Item::of(std::move(eq)));
    return n;
}

TensorRef make_ref(const std::string& name, DType dt, MemScope sc, std::vector<Index> ix) {
    TensorRef r;
    r.name = name;
    r.dtype = dt;
    r.scope = sc;
    r.indices = std::move(ix);
    return r;
}

Program concat_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto plan = concat_plan(p, i);
    if (!plan) fail("concat precondition no longer holds");
    const Nest& a = p.exprs[i];
    const Nest& b = p.exprs[i + 1];
    const Equation& ea = a.body[0].eq;
    const Equation& eb = b.body[0].eq;
    auto names = fresh_tensor_names(p, 2);
    const TensorRef& in1 = *reads(ea.rhs)[0];
    std::vector<Index> plain, shifted;
    std::vector<LoopHeader> box = a.loops;
    for (size_t k = 0; k < a.loops.size(); ++k) {
        plain.push_back(ix_var(a.loops[k].index));
        bool off = std::count(plan->offset_axes.begin(), plan->offset_axes.end(), k) > 0;
        shifted.push_back(off ? ix_add(ix_var(a.loops[k].index), ix_const(a.loops[k].extent)) : ix_var(a.loops[k].index));
        if (off) box[k].extent = a.loops[k].extent + b.loops[k].extent;
    }
    TensorRef g = make_ref(names[0], in1.dtype, in1.scope, plain);
    TensorRef g_shift = make_ref(names[0], in1.dtype, in1.scope, shifted);
    TensorRef h = make_ref(names[1], ea.lhs.dtype, ea.lhs.scope, plain);
    TensorRef h_shift = make_ref(names[1], ea.lhs.dtype, ea.lhs.scope, shifted);
    Value compute = map_refs(ea.rhs, [&](const TensorRef& r) { return r.name == plan->r1 ? g : r; });
    std::vector<Nest> seq = {
        single(a.loops, {g, v_read(*reads(ea.rhs)[0])}),
        single(b.loops, {g_shift, v_read(*reads(eb.rhs)[0])}),
        single(box, {h, compute}),
        single(a.loops, {ea.lhs, v_read(h)}),
        single(b.loops, {eb.lhs, v_read(h_shift)}),
    };
    Program q = p;
    q.exprs.erase(q.exprs.begin() + static_cast<long>(i), q.exprs.begin() + static_cast<long>(i + 2));
    q.exprs.insert(q.exprs.begin() + static_cast<long>(i), seq.begin(), seq.end());
    return q;
}

// ---- tensor split to decouple operators ----

bool decouple_ok(const Nest& n) {
    if (!is_flat(n) || n.body.size() != 1) return false;
    const Equation& eq = n.body[0].eq;
    if (!pointwise(eq, n.loops) || !indices_are_loop_vars(eq.lhs, n)) return false;
    for (const auto& l : n.loops) {
        if (l.start != 0) return false;
    }
    for (const auto* r : reads(eq.rhs)) {
        if (indices_are_loop_vars(*r, n)) continue;
        // Reads that do not follow the lhs index may not use loop vars.
        if (!index_vars(*r).empty()) return false;
    }
    return true;
}

std::vector<size_t> decouple_axes(const Nest& n) {
    std::vector<size_t> out;
    for (size_t k = 0; k < n.loops.size(); ++k) {
        if (n.loops[k].extent >= 2) out.push_back(k);
    }
    return out;
}

std::vector<Site> decouple_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        if (!decouple_ok(p.exprs[i]) || decouple_axes(p.exprs[i]).empty()) continue;
        Site s;
        s.exprs = {i};
        out.push_back(s);
    }
    return out;
}

Params decouple_sample(const Program& p, const Site& s, std::mt19937_64& rng) {
    const Nest& n = p.exprs.at(s.exprs.at(0));
    size_t axis = pick(decouple_axes(n), rng);
    int64_t e = n.loops[axis].extent;
    int64_t at = std::uniform_int_distribution<int64_t>(1, e - 1)(rng);
    return {{"axis", axis}, {"split", at}};
}

Program decouple_apply(const Program& p, const Site& s, const Params& params) {
    size_t i = s.exprs.at(0);
    const Nest& n = p.exprs[i];
    if (!decouple_ok(n)) fail("decouple precondition no longer holds");
    size_t axis = params.at("axis").get<size_t>();
    int64_t at = params.at("split").get<int64_t>();
    if (axis >= n.loops.size() || at < 1 || at >= n.loops[axis].extent) fail("bad split parameters");
    const Equation& eq = n.body[0].eq;
    const std::string& v = n.loops[axis].index;
    std::vector<LoopHeader> lo = n.loops, hi = n.loops;
    lo[axis].extent = at;
    hi[axis].extent = n.loops[axis].extent - at;
    VarMap shift = {{v, ix_add(ix_var(v), ix_const(at))}};
    std::vector<std::string> split_inputs;
    for (const auto* r : reads(eq.rhs)) {
        if (indices_are_loop_vars(*r, n) &&
            std::find(split_inputs.begin(), split_inputs.end(), r->name) == split_inputs.end()) {
            split_inputs.push_back(r->name);
        }
    }
    auto names = fresh_tensor_names(p, 2 * split_inputs.size() + 2);
    std::vector<Index> plain;
    for (const auto& l : n.loops) plain.push_back(ix_var(l.index));
    std::vector<Nest> seq;
    std::map<std::string, std::pair<TensorRef, TensorRef>> parts;
    for (size_t k = 0; k < split_inputs.size(); ++k) {
        const TensorRef* src = nullptr;
        for (const auto* r : reads(eq.rhs)) {
            if (r->name == split_inputs[k]) src = r;
        }
        TensorRef p1 = make_ref(names[2 * k], src->dtype, src->scope, plain);
        TensorRef p2 = make_ref(names[2 * k + 1], src->dtype, src->scope, plain);
        seq.push_back(single(lo, {p1, v_read(*src)}));
        seq.push_back(single(hi, {p2, v_read(subst(*src, shift))}));
        parts[src->name] = {p1, p2};
    }
    auto swap_in = [&](bool second) {
        return [&, second](const TensorRef& r) {
            auto it = parts.find(r.name);
            if (it == parts.end() || !indices_are_loop_vars(r, n)) return r;
            return second ? it->second.second : it->second.first;
        };
    };
    TensorRef o1 = make_ref(names[names.size() - 2], eq.lhs.dtype, eq.lhs.scope, plain);
    TensorRef o2 = make_ref(names[names.size() - 1], eq.lhs.dtype, eq.lhs.scope, plain);
    Value f1 = map_refs(eq.rhs, swap_in(false));
    // Position-dependent values in the second half see the shifted index.
    Value f2 = map_refs(eq.rhs, swap_in(true));
    std::function<Value(const Value&)> shift_vars = [&](const Value& x) -> Value {
        if (x->op == ValueOp::Var && x->var == v) return v_add(v_var(v), v_const(static_cast<double>(at)));
        if (x->args.empty()) return x;
        std::vector<Value> args;
        for (const auto& a : x->args) args.push_back(shift_vars(a));
        return v_with_args(*x, std::move(args));
    };
    f2 = shift_vars(f2);
    seq.push_back(single(lo, {o1, f1}));
    seq.push_back(single(hi, {o2, f2}));
    seq.push_back(single(lo, {eq.lhs, v_read(o1)}));
    seq.push_back(single(hi, {subst(eq.lhs, shift), v_read(o2)}));
    Program q = p;
    q.exprs.erase(q.exprs.begin() + static_cast<long>(i));
    q.exprs.insert(q.exprs.begin() + static_cast<long>(i), seq.begin(), seq.end());
    return q;
}

}  // namespace

void register_graph(ImplTable& t) {
    t[Id::OperatorFusion] = {fusion_sites, no_params, fusion_apply};
    t[Id::OperatorFission] = {fission_sites, no_params, fission_apply};
    t[Id::ComputeInline] = {inline_sites, no_params, inline_apply};
    t[Id::ExpressionSplitting] = {splitting_sites, no_params, splitting_apply};
    t[Id::TensorConcatFuse] = {concat_sites, no_params, concat_apply};
    t[Id::TensorSplitDecouple] = {decouple_sites, decouple_sample, decouple_apply};
    t[Id::CommonSubexprElim] = {cse_sites, no_params, splitting_apply};
    t[Id::ExpressionReorder] = {reorder_sites, no_params, reorder_apply};
}

}  // namespace leir::detail
