// SPDX-License-Identifier: Apache-2.0
//
// Recurrence rewrites (running max, rescaled exp-sum, online softmax, fused
// softmax-matmul) and the concatenate-then-correct rewrite.

#include <algorithm>
#include <cmath>
#include <limits>

#include "strategy_impl.hpp"

namespace leir::detail {

namespace {

using Id = StrategyId;

constexpr double kInf = std::numeric_limits<double>::infinity();

Nest single(const std::vector<LoopHeader>& loops, Equation eq) {
    Nest n;
    n.loops = loops;
    n.body.push_back(Item::of(std::move(eq)));
    return n;
}

TensorRef appended(const TensorRef& base, const std::string& name, std::vector<Index> extra) {
    TensorRef r = base;
    r.name = name;
    for (auto& e : extra) r.indices.push_back(std::move(e));
    return r;
}

// r with its last index entry replaced.
TensorRef at_last(const TensorRef& r, Index last) {
    TensorRef o = r;
    o.indices.back() = std::move(last);
    return o;
}

Index prev(const std::string& d) { return ix_sub(ix_var(d), ix_const(1)); }

Value first_step(const std::string& d) { return v_cmp(CmpOp::Lt, v_sub(v_var(d), v_const(1)), v_const(0)); }

Value guarded_prev(const TensorRef& r_d, const std::string& d, double fallback) {
    return v_ite(first_step(d), v_const(fallback), v_read(at_last(r_d, prev(d))));
}

Equation running_max(const TensorRef& m_d, const Value& x, const std::string& d) {
    return {m_d, v_bin(ValueOp::Max, guarded_prev(m_d, d, -kInf), x)};
}

Equation running_sum(const TensorRef& l_d, const TensorRef& m_d, const Value& x, const std::string& d) {
    Value rescale = v_unary(ValueOp::Exp, v_sub(guarded_prev(m_d, d, -kInf), v_read(m_d)));
    Value fresh = v_unary(ValueOp::Exp, v_sub(x, v_read(m_d)));
    return {l_d, v_add(v_mul(guarded_prev(l_d, d, 1), rescale), fresh)};
}

Equation running_product(const TensorRef& o_d, const TensorRef& l_d, const TensorRef& m_d, const Value& x,
                         const Value& v, const std::string& d) {
    Value rescale = v_unary(ValueOp::Exp, v_sub(guarded_prev(m_d, d, -kInf), v_read(m_d)));
    Value carried = v_div(v_mul(v_mul(guarded_prev(o_d, d, 1), guarded_prev(l_d, d, 1)), rescale), v_read(l_d));
    Value fresh = v_mul(v_div(v_unary(ValueOp::Exp, v_sub(x, v_read(m_d))), v_read(l_d)), v);
    return {o_d, v_add(carried, fresh)};
}

std::vector<LoopHeader> without(const std::vector<LoopHeader>& loops, const std::string& d, const Program& p) {
    std::vector<LoopHeader> out;
    for (const auto& l : loops) {
        if (l.index != d) out.push_back(l);
    }
    if (out.empty()) {
        LoopHeader one;
        one.index = fresh_index_name(all_index_names(p));
        out.push_back(one);
    }
    return out;
}

bool needs_writeback(const Program& p, const std::string& name, const std::set<size_t>& exprs) {
    return role_of(p, name) == Role::Output || read_anywhere_except(p, name, exprs);
}

// ---- pattern pieces ----

struct MaxPart {
    TensorRef lhs;
    Value x;
    std::string d;
    int64_t n = 0;
    std::vector<LoopHeader> loops;
};

const Equation* only_eq(const Nest& n) {
    if (!is_flat(n) || n.body.size() != 1) return nullptr;
    return &n.body[0].eq;
}

std::optional<std::string> single_axis(const Equation& eq, const std::vector<LoopHeader>& loops, Combiner want) {
    ReductionInfo info = classify_safe(eq, loops);
    if (!info.is_reduction || info.combiner != want || info.reduction_axes.size() != 1) return std::nullopt;
    std::string d = *info.reduction_axes.begin();
    for (const auto& l : loops) {
        if (l.index == d && l.start != 0) return std::nullopt;
    }
    return d;
}

std::optional<MaxPart> match_max(const Program& p, size_t i) {
    if (i >= p.exprs.size()) return std::nullopt;
    const Nest& n = p.exprs[i];
    const Equation* eq = only_eq(n);
    if (!eq || eq->rhs->op != ValueOp::Max) return std::nullopt;
    auto d = single_axis(*eq, n.loops, Combiner::Max);
    if (!d) return std::nullopt;
    const Value& a = eq->rhs->args[0];
    const Value& b = eq->rhs->args[1];
    Value x;
    if (a->op == ValueOp::Read && equal(a->ref, eq->lhs)) x = b;
    if (b->op == ValueOp::Read && equal(b->ref, eq->lhs)) x = a;
    if (!x || reads_tensor(x, eq->lhs.name)) return std::nullopt;
    MaxPart m{eq->lhs, x, *d, 0, n.loops};
    for (const auto& l : n.loops) {
        if (l.index == *d) m.n = l.extent;
    }
    return m;
}

// J = J + exp(X - I) over the same loops as the max.
std::optional<TensorRef> match_expsum(const Program& p, size_t i, const MaxPart& m) {
    if (i >= p.exprs.size()) return std::nullopt;
    const Nest& n = p.exprs[i];
    const Equation* eq = only_eq(n);
    if (!eq || n.loops != m.loops || eq->rhs->op != ValueOp::Add) return std::nullopt;
    if (eq->lhs.name == m.lhs.name || !same_indices(eq->lhs, m.lhs)) return std::nullopt;
    auto d = single_axis(*eq, n.loops, Combiner::Sum);
    if (!d || *d != m.d) return std::nullopt;
    Value e;
    const Value& a = eq->rhs->args[0];
    const Value& b = eq->rhs->args[1];
    if (a->op == ValueOp::Read && equal(a->ref, eq->lhs)) e = b;
    if (b->op == ValueOp::Read && equal(b->ref, eq->lhs)) e = a;
    if (!e || e->op != ValueOp::Exp || e->args[0]->op != ValueOp::Sub) return std::nullopt;
    const Value& s = e->args[0];
    if (!equal(s->args[0], m.x)) return std::nullopt;
    if (s->args[1]->op != ValueOp::Read || !equal(s->args[1]->ref, m.lhs)) return std::nullopt;
    return eq->lhs;
}

// E = exp(X - I) / J over the same loops.
std::optional<TensorRef> match_normalize(const Program& p, size_t i, const MaxPart& m, const TensorRef& j) {
    if (i >= p.exprs.size()) return std::nullopt;
    const Nest& n = p.exprs[i];
    const Equation* eq = only_eq(n);
    if (!eq || n.loops != m.loops || !pointwise(*eq, n.loops)) return std::nullopt;
    if (eq->lhs.name == m.lhs.name || eq->lhs.name == j.name) return std::nullopt;
    Value want = v_div(v_unary(ValueOp::Exp, v_sub(m.x, v_read(m.lhs))), v_read(j));
    if (!equal(eq->rhs, want)) return std::nullopt;
    return eq->lhs;
}

// Matmul consuming the softmax output P over its softmax axis.
struct MatmulPart {
    TensorRef out;
    Value v;                      // the other operand, renamed into the softmax nest
    std::vector<Index> p_nond;    // P read entries except the softmax axis, matmul names
    std::string col;              // matmul output-column var
    int64_t col_extent = 0;
    std::vector<LoopHeader> loops;  // matmul loops minus the reduction axis
};

std::optional<MatmulPart> match_matmul(const Program& p, size_t i, const TensorRef& p_lhs,
                                       const std::vector<LoopHeader>& soft_loops, const std::string& d,
                                       const std::string& fresh_col) {
    if (i >= p.exprs.size()) return std::nullopt;
    const Nest& n = p.exprs[i];
    const Equation* eq = only_eq(n);
    if (!eq || eq->rhs->op != ValueOp::Add) return std::nullopt;
    auto f = single_axis(*eq, n.loops, Combiner::Sum);
    if (!f) return std::nullopt;
    Value prod;
    const Value& a = eq->rhs->args[0];
    const Value& b = eq->rhs->args[1];
    if (a->op == ValueOp::Read && equal(a->ref, eq->lhs)) prod = b;
    if (b->op == ValueOp::Read && equal(b->ref, eq->lhs)) prod = a;
    if (!prod || prod->op != ValueOp::Mul) return std::nullopt;
    Value pread, other;
    for (int k = 0; k < 2; ++k) {
        const Value& c = prod->args[k];
        if (c->op == ValueOp::Read && c->ref.name == p_lhs.name) {
            pread = c;
            other = prod->args[1 - k];
        }
    }
    if (!pread || reads_tensor(other, p_lhs.name) || reads_tensor(other, eq->lhs.name)) return std::nullopt;
    if (pread->ref.indices.size() != p_lhs.indices.size()) return std::nullopt;
    std::map<std::string, int64_t> mm_ext, soft_ext;
    for (const auto& l : n.loops) mm_ext[l.index] = l.extent;
    for (const auto& l : soft_loops) soft_ext[l.index] = l.extent;
    for (const auto& l : n.loops) {
        if (l.start != 0) return std::nullopt;
    }
    VarMap rename;
    MatmulPart out;
    std::set<std::string> mapped;
    bool saw_axis = false;
    for (size_t k = 0; k < p_lhs.indices.size(); ++k) {
        auto u = plain_var(p_lhs.indices[k]);
        auto w = plain_var(pread->ref.indices[k]);
        if (!u || !w || !soft_ext.count(*u) || !mm_ext.count(*w) || mapped.count(*w)) return std::nullopt;
        if (soft_ext[*u] != mm_ext[*w]) return std::nullopt;
        if ((*u == d) != (*w == *f)) return std::nullopt;
        if (*u == d) {
            saw_axis = true;
        } else {
            out.p_nond.push_back(ix_var(*w));
        }
        rename[*w] = ix_var(*u);
        mapped.insert(*w);
    }
    if (!saw_axis) return std::nullopt;
    std::vector<std::string> extra;
    for (const auto& l : n.loops) {
        if (!mapped.count(l.index)) extra.push_back(l.index);
    }
    if (extra.size() != 1) return std::nullopt;
    out.col = extra[0];
    out.col_extent = mm_ext[out.col];
    rename[out.col] = ix_var(fresh_col);
    out.v = subst(other, rename);
    out.out = eq->lhs;
    for (const auto& l : n.loops) {
        if (l.index != *f) out.loops.push_back(l);
    }
    return out;
}

std::string fresh_var(const Program& p) { return fresh_index_name(all_index_names(p)); }

// ---- prefix max ----

std::vector<Site> prefix_max_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        if (!match_max(p, i)) continue;
        Site s;
        s.exprs = {i};
        out.push_back(s);
    }
    return out;
}

Program prefix_max_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto m = match_max(p, i);
    if (!m) fail("not a max reduction");
    std::string k = fresh_tensor_names(p, 1)[0];
    TensorRef k_d = appended(m->lhs, k, {ix_var(m->d)});
    Nest rec = single(m->loops, running_max(k_d, m->x, m->d));
    Nest back = single(without(m->loops, m->d, p), {m->lhs, v_read(at_last(k_d, ix_const(m->n - 1)))});
    Program q = p;
    q.exprs[i] = rec;
    q.exprs.insert(q.exprs.begin() + static_cast<long>(i + 1), back);
    return q;
}

// ---- prefix exp sum ----

std::vector<Site> expsum_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 1 < p.exprs.size(); ++i) {
        auto m = match_max(p, i);
        if (!m || !match_expsum(p, i + 1, *m)) continue;
        Site s;
        s.exprs = {i, i + 1};
        out.push_back(s);
    }
    return out;
}

struct Recurrence {
    TensorRef m_d, l_d;
    Nest nest;
};

Recurrence recurrence(const Program& p, const MaxPart& m, const std::vector<std::string>& taken = {}) {
    auto names = fresh_tensor_names(p, 2, taken);
    Recurrence r;
    r.m_d = appended(m.lhs, names[0], {ix_var(m.d)});
    r.l_d = appended(m.lhs, names[1], {ix_var(m.d)});
    r.l_d.dtype = m.lhs.dtype;
    r.nest.loops = m.loops;
    r.nest.body.push_back(Item::of(running_max(r.m_d, m.x, m.d)));
    r.nest.body.push_back(Item::of(running_sum(r.l_d, r.m_d, m.x, m.d)));
    return r;
}

// Final-element copies back into the original tensors that are still used.
std::optional<Nest> writebacks(const Program& p, const MaxPart& m, const std::vector<std::pair<TensorRef, TensorRef>>& pairs,
                               const std::set<size_t>& exprs) {
    Nest n;
    n.loops = without(m.loops, m.d, p);
    for (const auto& [orig, rec] : pairs) {
        if (!needs_writeback(p, orig.name, exprs)) continue;
        n.body.push_back(Item::of(Equation{orig, v_read(at_last(rec, ix_const(m.n - 1)))}));
    }
    if (n.body.empty()) return std::nullopt;
    return n;
}

Program replace_range(const Program& p, size_t first, size_t count, const std::vector<Nest>& seq) {
    Program q = p;
    q.exprs.erase(q.exprs.begin() + static_cast<long>(first), q.exprs.begin() + static_cast<long>(first + count));
    q.exprs.insert(q.exprs.begin() + static_cast<long>(first), seq.begin(), seq.end());
    return q;
}

Program expsum_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto m = match_max(p, i);
    if (!m) fail("not a max reduction");
    auto j = match_expsum(p, i + 1, *m);
    if (!j) fail("no exp-sum after the max");
    Recurrence r = recurrence(p, *m);
    std::vector<Nest> seq = {r.nest};
    TensorRef j_total = *j;
    Nest back;
    back.loops = without(m->loops, m->d, p);
    back.body.push_back(Item::of(Equation{j_total, v_read(at_last(r.l_d, ix_const(m->n - 1)))}));
    if (needs_writeback(p, m->lhs.name, {i, i + 1})) {
        back.body.insert(back.body.begin(), Item::of(Equation{m->lhs, v_read(at_last(r.m_d, ix_const(m->n - 1)))}));
    }
    seq.push_back(back);
    return replace_range(p, i, 2, seq);
}

// ---- online softmax ----

std::vector<Site> softmax_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 2 < p.exprs.size(); ++i) {
        auto m = match_max(p, i);
        if (!m) continue;
        auto j = match_expsum(p, i + 1, *m);
        if (!j || !match_normalize(p, i + 2, *m, *j)) continue;
        Site s;
        s.exprs = {i, i + 1, i + 2};
        out.push_back(s);
    }
    return out;
}

Program softmax_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto m = match_max(p, i);
    if (!m) fail("not a max reduction");
    auto j = match_expsum(p, i + 1, *m);
    if (!j) fail("no exp-sum after the max");
    auto e = match_normalize(p, i + 2, *m, *j);
    if (!e) fail("no normalization after the exp-sum");
    Recurrence r = recurrence(p, *m);
    TensorRef m_last = at_last(r.m_d, ix_const(m->n - 1));
    TensorRef l_last = at_last(r.l_d, ix_const(m->n - 1));
    Value norm = v_div(v_unary(ValueOp::Exp, v_sub(m->x, v_read(m_last))), v_read(l_last));
    std::vector<Nest> seq = {r.nest, single(m->loops, {*e, norm})};
    if (auto back = writebacks(p, *m, {{m->lhs, r.m_d}, {*j, r.l_d}}, {i, i + 1, i + 2})) seq.push_back(*back);
    return replace_range(p, i, 3, seq);
}

// ---- flashattention without tiling ----

struct FlashPlan {
    MaxPart m;
    TensorRef j, e;
    MatmulPart mm;
    std::string col_var;
};

std::optional<FlashPlan> flash_plan(const Program& p, size_t i) {
    auto m = match_max(p, i);
    if (!m) return std::nullopt;
    auto j = match_expsum(p, i + 1, *m);
    if (!j) return std::nullopt;
    auto e = match_normalize(p, i + 2, *m, *j);
    if (!e) return std::nullopt;
    if (role_of(p, e->name) != Role::Intermediate || read_anywhere_except(p, e->name, {i + 3})) return std::nullopt;
    std::string col = fresh_var(p);
    auto mm = match_matmul(p, i + 3, *e, m->loops, m->d, col);
    if (!mm) return std::nullopt;
    for (size_t k = 0; k < p.exprs.size(); ++k) {
        if (k != i + 2 && writes_of(p.exprs[k]).count(e->name)) return std::nullopt;
    }
    return FlashPlan{*m, *j, *e, *mm, col};
}

std::vector<Site> flash_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 3 < p.exprs.size(); ++i) {
        if (!flash_plan(p, i)) continue;
        Site s;
        s.exprs = {i, i + 1, i + 2, i + 3};
        out.push_back(s);
    }
    return out;
}

// Running weighted sum O nested under the recurrence nest, plus the copy of
// its final element into the matmul output.
std::pair<Nest, Nest> accumulate(const Program& p, const MaxPart& m, const TensorRef& e, const MatmulPart& mm,
                                 const std::string& col, const TensorRef& m_d, const TensorRef& l_d,
                                 const std::string& o_name) {
    TensorRef o_d;
    o_d.name = o_name;
    o_d.dtype = mm.out.dtype;
    o_d.scope = mm.out.scope;
    for (const auto& ix : e.indices) {
        if (!is_plain_var(ix, m.d)) o_d.indices.push_back(ix);
    }
    o_d.indices.push_back(ix_var(col));
    o_d.indices.push_back(ix_var(m.d));
    Nest inner;
    LoopHeader c;
    c.index = col;
    c.extent = mm.col_extent;
    inner.loops.push_back(c);
    inner.body.push_back(Item::of(running_product(o_d, l_d, m_d, m.x, mm.v, m.d)));
    TensorRef o_last = o_d;
    o_last.indices = mm.p_nond;
    o_last.indices.push_back(ix_var(mm.col));
    o_last.indices.push_back(ix_const(m.n - 1));
    Nest back = single(mm.loops, {mm.out, v_read(o_last)});
    (void)p;
    return {inner, back};
}

Program flash_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto plan = flash_plan(p, i);
    if (!plan) fail("softmax-matmul pattern not found");
    Recurrence r = recurrence(p, plan->m);
    std::string o = fresh_tensor_names(p, 1, {r.m_d.name, r.l_d.name})[0];
    auto [inner, back] = accumulate(p, plan->m, plan->e, plan->mm, plan->col_var, r.m_d, r.l_d, o);
    Nest rec = r.nest;
    rec.body.push_back(Item::of(inner));
    std::vector<Nest> seq = {rec, back};
    if (auto wb = writebacks(p, plan->m, {{plan->m.lhs, r.m_d}, {plan->j, r.l_d}}, {i, i + 1, i + 2, i + 3})) {
        seq.push_back(*wb);
    }
    return replace_range(p, i, 4, seq);
}

// ---- prefix matmul on top of an online softmax ----

struct PrefixMatmulPlan {
    MaxPart m;  // lhs is the running max at d, x the softmax input
    TensorRef m_d, l_d, z;
    MatmulPart mm;
    std::string col_var;
};

std::optional<PrefixMatmulPlan> prefix_matmul_plan(const Program& p, size_t i) {
    if (i + 2 >= p.exprs.size()) return std::nullopt;
    const Nest& n = p.exprs[i];
    if (!is_flat(n) || n.body.size() != 2) return std::nullopt;
    const Equation& e0 = n.body[0].eq;
    const Equation& e1 = n.body[1].eq;
    if (e0.lhs.indices.empty() || e0.rhs->op != ValueOp::Max) return std::nullopt;
    auto d = plain_var(e0.lhs.indices.back());
    if (!d) return std::nullopt;
    PrefixMatmulPlan plan;
    plan.m.d = *d;
    plan.m.loops = n.loops;
    bool found = false;
    for (const auto& l : n.loops) {
        if (l.index == *d && l.start == 0) {
            plan.m.n = l.extent;
            found = true;
        }
    }
    if (!found) return std::nullopt;
    plan.m.x = e0.rhs->args[1];
    plan.m_d = e0.lhs;
    plan.l_d = e1.lhs;
    if (plan.m_d.name == plan.l_d.name || !equal(e0, running_max(plan.m_d, plan.m.x, *d)) ||
        !equal(e1, running_sum(plan.l_d, plan.m_d, plan.m.x, *d))) {
        return std::nullopt;
    }
    if (reads_tensor(plan.m.x, plan.m_d.name) || reads_tensor(plan.m.x, plan.l_d.name)) return std::nullopt;
    const Nest& zn = p.exprs[i + 1];
    const Equation* ze = only_eq(zn);
    if (!ze || zn.loops != n.loops) return std::nullopt;
    Value want = v_div(v_unary(ValueOp::Exp, v_sub(plan.m.x, v_read(at_last(plan.m_d, ix_const(plan.m.n - 1))))),
                       v_read(at_last(plan.l_d, ix_const(plan.m.n - 1))));
    if (!equal(ze->rhs, want)) return std::nullopt;
    plan.z = ze->lhs;
    if (role_of(p, plan.z.name) != Role::Intermediate || read_anywhere_except(p, plan.z.name, {i + 2})) {
        return std::nullopt;
    }
    for (size_t k = 0; k < p.exprs.size(); ++k) {
        if (k != i + 1 && writes_of(p.exprs[k]).count(plan.z.name)) return std::nullopt;
    }
    plan.col_var = fresh_var(p);
    auto mm = match_matmul(p, i + 2, plan.z, n.loops, *d, plan.col_var);
    if (!mm) return std::nullopt;
    plan.mm = *mm;
    return plan;
}

std::vector<Site> prefix_matmul_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 2 < p.exprs.size(); ++i) {
        if (!prefix_matmul_plan(p, i)) continue;
        Site s;
        s.exprs = {i, i + 1, i + 2};
        out.push_back(s);
    }
    return out;
}

Program prefix_matmul_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto plan = prefix_matmul_plan(p, i);
    if (!plan) fail("online softmax followed by matmul not found");
    std::string o = fresh_tensor_names(p, 1)[0];
    auto [inner, back] = accumulate(p, plan->m, plan->z, plan->mm, plan->col_var, plan->m_d, plan->l_d, o);
    Nest rec = p.exprs[i];
    rec.body.push_back(Item::of(inner));
    return replace_range(p, i, 3, {rec, back});
}

// ---- partially equivalent then correct ----

struct PetcPlan {
    std::string h, in;       // concatenated inputs
    size_t axis = 0;         // concatenated axis of h
    std::string v;           // loop var striding that axis
    int64_t stride = 1;
    int64_t rmax = 0;
    int64_t nv = 0;
    int64_t off = 0;         // output shift in units of v
    int64_t vlo = 0;         // first v that reads across the seam
    std::vector<int64_t> h_shape, i_shape;
};

// Splits `ix` into v*s + r with r free of v.
std::optional<std::pair<int64_t, Index>> stride_form(const Index& ix, const std::string& v) {
    auto scaled = [&](const Index& t) -> std::optional<int64_t> {
        if (is_plain_var(t, v)) return 1;
        if (t->op != IndexNode::Op::Mul) return std::nullopt;
        if (is_plain_var(t->a, v) && t->b->op == IndexNode::Op::Const) return t->b->value;
        if (is_plain_var(t->b, v) && t->a->op == IndexNode::Op::Const) return t->a->value;
        return std::nullopt;
    };
    if (auto s = scaled(ix)) return std::make_pair(*s, ix_const(0));
    if (ix->op != IndexNode::Op::Add) return std::nullopt;
    std::set<std::string> va, vb;
    collect_index_vars(ix->a, va);
    collect_index_vars(ix->b, vb);
    if (auto s = scaled(ix->a); s && !vb.count(v)) return std::make_pair(*s, ix->b);
    if (auto s = scaled(ix->b); s && !va.count(v)) return std::make_pair(*s, ix->a);
    return std::nullopt;
}

std::optional<PetcPlan> petc_plan(const Program& p, size_t i) {
    if (i + 1 >= p.exprs.size()) return std::nullopt;
    const Nest& a = p.exprs[i];
    const Nest& b = p.exprs[i + 1];
    const Equation* ea = only_eq(a);
    const Equation* eb = only_eq(b);
    if (!ea || !eb || a.loops != b.loops || ea->lhs.name == eb->lhs.name) return std::nullopt;
    ReductionInfo ia = classify_safe(*ea, a.loops);
    if (!ia.is_reduction && !pointwise(*ea, a.loops)) return std::nullopt;
    if (ia.is_reduction) {
        for (const auto* r : reads(ea->rhs)) {
            if (r->name == ea->lhs.name && !equal(*r, ea->lhs)) return std::nullopt;
        }
    }
    std::vector<const TensorRef*> ra, rb;
    for (const auto* r : reads(ea->rhs)) {
        if (r->name != ea->lhs.name) ra.push_back(r);
    }
    for (const auto* r : reads(eb->rhs)) {
        if (r->name != eb->lhs.name) rb.push_back(r);
    }
    if (ra.size() != rb.size()) return std::nullopt;
    PetcPlan plan;
    for (size_t k = 0; k < ra.size(); ++k) {
        if (ra[k]->name != rb[k]->name) {
            if (!plan.h.empty()) return std::nullopt;
            plan.h = ra[k]->name;
            plan.in = rb[k]->name;
        }
    }
    if (plan.h.empty() || plan.h == plan.in) return std::nullopt;
    if (role_of(p, plan.h) != Role::Input || role_of(p, plan.in) != Role::Input) return std::nullopt;
    Equation renamed = map_refs(*eb, [&](const TensorRef& r) {
        TensorRef o = r;
        if (o.name == plan.in) o.name = plan.h;
        if (o.name == eb->lhs.name) o.name = ea->lhs.name;
        return o;
    });
    if (!equal(renamed, *ea)) return std::nullopt;
    const TensorRef* hr = nullptr;
    for (const auto* r : ra) {
        if (r->name == plan.h) {
            if (hr) return std::nullopt;
            hr = r;
        }
    }
    if (hr->dtype != rb[0]->dtype) return std::nullopt;
    std::map<std::string, Interval> ranges;
    std::map<std::string, int64_t> ext;
    for (const auto& l : a.loops) {
        ranges[l.index] = {l.start, l.start + l.extent - 1};
        ext[l.index] = l.extent;
    }
    auto io = infer_io(p, p.io);
    plan.h_shape = io.at(plan.h).shape;
    plan.i_shape = io.at(plan.in).shape;
    if (plan.h_shape.size() != plan.i_shape.size()) return std::nullopt;
    for (size_t k = 0; k < hr->indices.size(); ++k) {
        std::set<std::string> vars;
        collect_index_vars(hr->indices[k], vars);
        for (const auto& v : vars) {
            // v must stride only this axis, appear plainly in the lhs, and nowhere else.
            bool in_lhs = std::any_of(ea->lhs.indices.begin(), ea->lhs.indices.end(),
                                      [&](const Index& ix) { return is_plain_var(ix, v); });
            if (!in_lhs || !ranges.count(v) || ranges[v].lo != 0) continue;
            auto form = stride_form(hr->indices[k], v);
            if (!form || form->first < 1) continue;
            size_t uses = 0;
            for (const auto* r : reads(*ea)) {
                if (r->name == ea->lhs.name) continue;
                for (const auto& ix : r->indices) {
                    std::set<std::string> s;
                    collect_index_vars(ix, s);
                    uses += s.count(v);
                }
            }
            if (uses != 1 || value_vars(ea->rhs).count(v) != 1) continue;
            std::function<bool(const Value&)> bare = [&](const Value& x) {
                if (x->op == ValueOp::Var && x->var == v) return true;
                return std::any_of(x->args.begin(), x->args.end(), bare);
            };
            if (bare(ea->rhs)) continue;
            auto r = index_interval(form->second, ranges);
            if (!r || r->lo < 0) continue;
            PetcPlan c = plan;
            c.axis = k;
            c.v = v;
            c.stride = form->first;
            c.rmax = r->hi;
            c.nv = ext[v];
            int64_t umax = (c.nv - 1) * c.stride + c.rmax;
            c.off = umax / c.stride;
            if (c.off < 1) continue;
            int64_t seam = c.off * c.stride;
            int64_t need = seam - c.rmax;
            c.vlo = need <= 0 ? 0 : (need + c.stride - 1) / c.stride;
            return c;
        }
    }
    return std::nullopt;
}

std::vector<Site> petc_sites(const Program& p) {
    std::vector<Site> out;
    for (size_t i = 0; i + 1 < p.exprs.size(); ++i) {
        if (!petc_plan(p, i)) continue;
        Site s;
        s.exprs = {i, i + 1};
        out.push_back(s);
    }
    return out;
}

std::vector<LoopHeader> copy_loops(const std::vector<int64_t>& shape, std::set<std::string>& used) {
    std::vector<LoopHeader> out;
    for (int64_t e : shape) {
        LoopHeader l;
        l.index = fresh_index_name(used);
        used.insert(l.index);
        l.extent = e;
        out.push_back(l);
    }
    return out;
}

Program petc_apply(const Program& p, const Site& s, const Params&) {
    size_t i = s.exprs.at(0);
    auto plan = petc_plan(p, i);
    if (!plan) fail("concatenation pattern not found");
    const Nest& a = p.exprs[i];
    const Equation& ea = a.body[0].eq;
    const Equation& eb = p.exprs[i + 1].body[0].eq;
    auto names = fresh_tensor_names(p, 2);
    const std::string& jn = names[0];
    const std::string& mn = names[1];
    const TensorRef* hr = nullptr;
    for (const auto* r : reads(ea.rhs)) {
        if (r->name == plan->h) hr = r;
    }
    int64_t seam = plan->off * plan->stride;
    std::set<std::string> used = all_index_names(p);
    std::vector<Nest> seq;
    // Concatenate: the second input overwrites the tail of the first.
    {
        auto lh = copy_loops(plan->h_shape, used);
        TensorRef src;
        src.name = plan->h;
        src.dtype = hr->dtype;
        src.scope = hr->scope;
        TensorRef dst = src;
        dst.name = jn;
        dst.scope = MemScope::Global;
        for (const auto& l : lh) {
            src.indices.push_back(ix_var(l.index));
            dst.indices.push_back(ix_var(l.index));
        }
        seq.push_back(single(lh, {dst, v_read(src)}));
        auto li = copy_loops(plan->i_shape, used);
        TensorRef src2 = src, dst2 = dst;
        src2.name = plan->in;
        for (const auto* r : reads(eb.rhs)) {
            if (r->name == plan->in) src2.scope = r->scope;
        }
        src2.indices.clear();
        dst2.indices.clear();
        for (size_t k = 0; k < li.size(); ++k) {
            src2.indices.push_back(ix_var(li[k].index));
            Index d = ix_var(li[k].index);
            dst2.indices.push_back(k == plan->axis ? ix_add(d, ix_const(seam)) : d);
        }
        seq.push_back(single(li, {dst2, v_read(src2)}));
    }
    // One pass over the concatenated input.
    TensorRef m_lhs = ea.lhs;
    m_lhs.name = mn;
    Nest compute = map_refs(a, [&](const TensorRef& r) {
        TensorRef o = r;
        if (o.name == plan->h) {
            o.name = jn;
            o.scope = MemScope::Global;
        }
        if (o.name == ea.lhs.name) o.name = mn;
        return o;
    });
    for (auto& l : compute.loops) {
        if (l.index == plan->v) l.extent = plan->off + plan->nv;
    }
    seq.push_back(compute);
    // Split the two halves back out.
    std::set<std::string> lhs_vars = index_vars(ea.lhs);
    Nest split;
    for (const auto& l : a.loops) {
        if (lhs_vars.count(l.index)) split.loops.push_back(l);
    }
    split.body.push_back(Item::of(Equation{ea.lhs, v_read(m_lhs)}));
    TensorRef e_lhs = eb.lhs;
    e_lhs.indices = ea.lhs.indices;
    TensorRef m_shift = subst(m_lhs, {{plan->v, ix_add(ix_var(plan->v), ix_const(plan->off))}});
    split.body.push_back(Item::of(Equation{subst(eb.lhs, {}), v_read(m_shift)}));
    seq.push_back(split);
    // Recompute the first output where its window crosses the seam.
    if (plan->vlo < plan->nv) {
        VarMap shift = {{plan->v, ix_add(ix_var(plan->v), ix_const(plan->vlo))}};
        ReductionInfo info = classify_safe(ea, a.loops);
        Nest fix;
        Nest inner;
        for (const auto& l : a.loops) {
            LoopHeader h = l;
            if (h.index == plan->v) h.extent = plan->nv - plan->vlo;
            if (lhs_vars.count(l.index)) {
                fix.loops.push_back(h);
            } else {
                inner.loops.push_back(h);
            }
        }
        Equation shifted = subst(ea, shift);
        if (info.is_reduction) {
            fix.body.push_back(Item::of(Equation{shifted.lhs, v_const(info.identity)}));
            inner.body.push_back(Item::of(shifted));
            fix.body.push_back(Item::of(inner));
        } else {
            for (const auto& l : inner.loops) fix.loops.push_back(l);
            fix.body.push_back(Item::of(shifted));
        }
        seq.push_back(fix);
    }
    return replace_range(p, i, 2, seq);
}

}  // namespace

void register_prefix(ImplTable& t) {
    t[Id::PartiallyEquivalentThenCorrect] = {petc_sites, no_params, petc_apply};
    t[Id::PrefixMax] = {prefix_max_sites, no_params, prefix_max_apply};
    t[Id::PrefixExpSum] = {expsum_sites, no_params, expsum_apply};
    t[Id::OnlineSoftmax] = {softmax_sites, no_params, softmax_apply};
    t[Id::FlashAttentionNoTiling] = {flash_sites, no_params, flash_apply};
    t[Id::PrefixMatmulOnlineSoftmax] = {prefix_matmul_sites, no_params, prefix_matmul_apply};
}

}  // namespace leir::detail
