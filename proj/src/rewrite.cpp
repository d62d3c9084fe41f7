// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "strategy_impl.hpp"

namespace leir::detail {

Index subst(const Index& ix, const VarMap& m) {
    if (!ix) return ix;
    switch (ix->op) {
        case IndexNode::Op::Const: return ix;
        case IndexNode::Op::Var: {
            auto it = m.find(ix->name);
            return it == m.end() ? ix : it->second;
        }
        case IndexNode::Op::Read: return ix_read(subst(*ix->ref, m));
        default: return ix_bin(ix->op, subst(ix->a, m), subst(ix->b, m));
    }
}

TensorRef subst(const TensorRef& r, const VarMap& m) {
    TensorRef out = r;
    for (auto& ix : out.indices) ix = subst(ix, m);
    return out;
}

Value subst(const Value& v, const VarMap& m) {
    if (v->op == ValueOp::Var) {
        auto it = m.find(v->var);
        return it == m.end() ? v : index_to_value(it->second);
    }
    if (v->op == ValueOp::Read) return v_read(subst(v->ref, m));
    if (v->args.empty()) return v;
    std::vector<Value> args;
    for (const auto& a : v->args) args.push_back(subst(a, m));
    return v_with_args(*v, std::move(args));
}

Equation subst(const Equation& e, const VarMap& m) { return {subst(e.lhs, m), subst(e.rhs, m)}; }

Nest subst_body(const Nest& n, const VarMap& m) {
    Nest out;
    out.loops = n.loops;
    for (const auto& it : n.body) {
        if (it.is_eq) {
            out.body.push_back(Item::of(subst(it.eq, m)));
        } else {
            out.body.push_back(Item::of(subst_body(it.nest(), m)));
        }
    }
    return out;
}

Value index_to_value(const Index& ix) {
    switch (ix->op) {
        case IndexNode::Op::Const: return v_const(static_cast<double>(ix->value));
        case IndexNode::Op::Var: return v_var(ix->name);
        case IndexNode::Op::Read: return v_read(*ix->ref);
        case IndexNode::Op::Add: return v_add(index_to_value(ix->a), index_to_value(ix->b));
        case IndexNode::Op::Sub: return v_sub(index_to_value(ix->a), index_to_value(ix->b));
        case IndexNode::Op::Mul: return v_mul(index_to_value(ix->a), index_to_value(ix->b));
    }
    return v_const(0);
}

namespace {

Index map_index_refs(const Index& ix, const RefFn& f) {
    if (!ix) return ix;
    switch (ix->op) {
        case IndexNode::Op::Const:
        case IndexNode::Op::Var: return ix;
        case IndexNode::Op::Read: {
            TensorRef r = *ix->ref;
            for (auto& s : r.indices) s = map_index_refs(s, f);
            return ix_read(f(r));
        }
        default: return ix_bin(ix->op, map_index_refs(ix->a, f), map_index_refs(ix->b, f));
    }
}

TensorRef map_ref_deep(const TensorRef& r, const RefFn& f) {
    TensorRef out = r;
    for (auto& s : out.indices) s = map_index_refs(s, f);
    return f(out);
}

}  // namespace

Value map_refs(const Value& v, const RefFn& f) {
    if (v->op == ValueOp::Read) return v_read(map_ref_deep(v->ref, f));
    if (v->args.empty()) return v;
    std::vector<Value> args;
    for (const auto& a : v->args) args.push_back(map_refs(a, f));
    return v_with_args(*v, std::move(args));
}

Equation map_refs(const Equation& e, const RefFn& f) { return {map_ref_deep(e.lhs, f), map_refs(e.rhs, f)}; }

Nest map_refs(const Nest& n, const RefFn& f) {
    Nest out;
    out.loops = n.loops;
    for (const auto& it : n.body) {
        if (it.is_eq) {
            out.body.push_back(Item::of(map_refs(it.eq, f)));
        } else {
            out.body.push_back(Item::of(map_refs(it.nest(), f)));
        }
    }
    return out;
}

Program map_refs(const Program& p, const RefFn& f) {
    Program out;
    out.io = p.io;
    for (const auto& n : p.exprs) out.exprs.push_back(map_refs(n, f));
    return out;
}

const Value& value_at(const Value& root, const std::vector<size_t>& path) {
    const Value* cur = &root;
    for (size_t k : path) {
        if (k >= (*cur)->args.size()) fail("term path out of range");
        cur = &(*cur)->args[k];
    }
    return *cur;
}

Value replace_at(const Value& root, const std::vector<size_t>& path, Value repl) {
    if (path.empty()) return repl;
    std::vector<Value> args = root->args;
    if (path[0] >= args.size()) fail("term path out of range");
    args[path[0]] = replace_at(args[path[0]], std::vector<size_t>(path.begin() + 1, path.end()), std::move(repl));
    return v_with_args(*root, std::move(args));
}

namespace {

void paths_rec(const Value& v, std::vector<size_t>& cur, bool skip, std::vector<std::vector<size_t>>& out) {
    out.push_back(cur);
    for (size_t i = 0; i < v->args.size(); ++i) {
        if (skip && v->op == ValueOp::Ite && i > 0) break;
        cur.push_back(i);
        paths_rec(v->args[i], cur, skip, out);
        cur.pop_back();
    }
}

void locs_rec(const Nest& n, size_t expr, std::vector<size_t>& path, std::vector<const LoopHeader*>& stack,
              std::vector<EqLoc>& out) {
    for (const auto& l : n.loops) stack.push_back(&l);
    for (size_t i = 0; i < n.body.size(); ++i) {
        path.push_back(i);
        if (n.body[i].is_eq) {
            out.push_back({expr, path, &n.body[i].eq, stack});
        } else {
            locs_rec(n.body[i].nest(), expr, path, stack, out);
        }
        path.pop_back();
    }
    stack.resize(stack.size() - n.loops.size());
}

}  // namespace

std::vector<std::vector<size_t>> node_paths(const Value& v, bool skip_ite_branches) {
    std::vector<std::vector<size_t>> out;
    std::vector<size_t> cur;
    paths_rec(v, cur, skip_ite_branches, out);
    return out;
}

size_t node_count(const Value& v) {
    size_t n = 1;
    for (const auto& a : v->args) n += node_count(a);
    return n;
}

std::vector<EqLoc> eq_locs(const Program& p) {
    std::vector<EqLoc> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        std::vector<size_t> path;
        std::vector<const LoopHeader*> stack;
        locs_rec(p.exprs[i], i, path, stack, out);
    }
    return out;
}

Equation& eq_at(Program& p, size_t expr, const std::vector<size_t>& path) {
    if (expr >= p.exprs.size() || path.empty()) fail("equation path out of range");
    Nest* n = &p.exprs[expr];
    for (size_t k = 0; k + 1 < path.size(); ++k) {
        if (path[k] >= n->body.size() || n->body[path[k]].is_eq) fail("equation path out of range");
        n = &n->body[path[k]].nest();
    }
    if (path.back() >= n->body.size() || !n->body[path.back()].is_eq) fail("equation path out of range");
    return n->body[path.back()].eq;
}

const Equation& eq_at(const Program& p, size_t expr, const std::vector<size_t>& path) {
    return eq_at(const_cast<Program&>(p), expr, path);
}

bool is_flat(const Nest& n) {
    return std::all_of(n.body.begin(), n.body.end(), [](const Item& it) { return it.is_eq; });
}

std::vector<const Equation*> flat_eqs(const Nest& n) {
    std::vector<const Equation*> out;
    for (const auto& it : n.body) {
        if (it.is_eq) out.push_back(&it.eq);
    }
    return out;
}

std::set<std::string> loop_vars(const Nest& n) {
    std::set<std::string> s;
    for (const auto& l : n.loops) s.insert(l.index);
    return s;
}

std::set<std::string> index_vars(const TensorRef& r) {
    std::set<std::string> s;
    for (const auto& ix : r.indices) collect_index_vars(ix, s);
    return s;
}

std::set<std::string> value_vars(const Value& v) {
    std::set<std::string> s;
    collect_value_vars(v, s);
    return s;
}

std::vector<const TensorRef*> reads(const Value& v) {
    std::vector<const TensorRef*> out;
    collect_reads(v, out);
    return out;
}

std::vector<const TensorRef*> reads(const Equation& e) {
    std::vector<const TensorRef*> out;
    collect_reads(e.rhs, out);
    for (const auto& ix : e.lhs.indices) collect_reads(ix, out);
    return out;
}

bool reads_tensor(const Value& v, const std::string& name) {
    for (const auto* r : reads(v)) {
        if (r->name == name) return true;
    }
    return false;
}

bool is_plain_var(const Index& ix, const std::string& name) {
    return ix->op == IndexNode::Op::Var && ix->name == name;
}

std::optional<std::string> plain_var(const Index& ix) {
    if (ix->op == IndexNode::Op::Var) return ix->name;
    return std::nullopt;
}

bool same_indices(const TensorRef& a, const TensorRef& b) {
    if (a.indices.size() != b.indices.size()) return false;
    for (size_t i = 0; i < a.indices.size(); ++i) {
        if (!equal(a.indices[i], b.indices[i])) return false;
    }
    return true;
}

ReductionInfo classify_safe(const Equation& eq, const std::vector<const LoopHeader*>& loops) {
    try {
        return classify_reduction(eq, loops);
    } catch (const Error&) {
        ReductionInfo r;
        return r;
    }
}

ReductionInfo classify_safe(const Equation& eq, const std::vector<LoopHeader>& loops) {
    std::vector<const LoopHeader*> ptrs;
    for (const auto& l : loops) ptrs.push_back(&l);
    return classify_safe(eq, ptrs);
}

bool reads_own_lhs(const Equation& eq) { return reads_tensor(eq.rhs, eq.lhs.name); }

bool injective_write(const Equation& eq, const std::set<std::string>& vars) {
    std::set<std::string> used = value_vars(eq.rhs);
    for (const auto& v : index_vars(eq.lhs)) used.insert(v);
    for (const auto& v : vars) {
        bool plain = std::any_of(eq.lhs.indices.begin(), eq.lhs.indices.end(),
                                 [&](const Index& ix) { return is_plain_var(ix, v); });
        if (!plain && used.count(v)) return false;
    }
    return true;
}

bool pointwise(const Equation& eq, const std::vector<LoopHeader>& loops) {
    return !classify_safe(eq, loops).is_reduction && !reads_own_lhs(eq);
}

bool order_free(const Nest& n) {
    if (!is_flat(n) || n.body.empty()) return false;
    auto eqs = flat_eqs(n);
    std::set<std::string> vars = loop_vars(n);
    for (const auto* eq : eqs) {
        ReductionInfo info = classify_safe(*eq, n.loops);
        if (info.is_reduction) {
            if (eqs.size() != 1) return false;
            size_t self = 0;
            for (const auto* r : reads(eq->rhs)) {
                if (r->name != eq->lhs.name) continue;
                if (!equal(*r, eq->lhs)) return false;
                ++self;
            }
            return self == 1;
        }
    }
    std::map<std::string, const TensorRef*> written;
    for (const auto* eq : eqs) {
        if (written.count(eq->lhs.name)) return false;
        written[eq->lhs.name] = &eq->lhs;
        if (!injective_write(*eq, vars)) return false;
    }
    for (const auto* eq : eqs) {
        for (const auto* r : reads(*eq)) {
            auto it = written.find(r->name);
            if (it != written.end() && !same_indices(*r, *it->second)) return false;
        }
    }
    return true;
}

bool parallel_safe(const Nest& n, size_t pos) {
    if (pos >= n.loops.size()) return false;
    const std::string& v = n.loops[pos].index;
    auto visits = equations(n, 0);
    std::map<std::string, std::vector<const TensorRef*>> writes;
    for (const auto& vis : visits) {
        const Equation& eq = *vis.eq;
        bool plain = std::any_of(eq.lhs.indices.begin(), eq.lhs.indices.end(),
                                 [&](const Index& ix) { return is_plain_var(ix, v); });
        if (!plain) return false;
        writes[eq.lhs.name].push_back(&eq.lhs);
    }
    for (const auto& vis : visits) {
        for (const auto* r : reads(*vis.eq)) {
            auto it = writes.find(r->name);
            if (it == writes.end()) continue;
            for (const auto* w : it->second) {
                if (w->indices.size() != r->indices.size()) return false;
                for (size_t k = 0; k < w->indices.size(); ++k) {
                    if (equal(w->indices[k], r->indices[k])) continue;
                    std::set<std::string> s;
                    collect_index_vars(w->indices[k], s);
                    collect_index_vars(r->indices[k], s);
                    if (s.count(v)) return false;
                }
            }
        }
    }
    return true;
}

std::vector<std::pair<int64_t, int64_t>> factor_pairs(int64_t n) {
    std::vector<std::pair<int64_t, int64_t>> out;
    for (int64_t f = 2; f * 2 <= n; ++f) {
        if (n % f == 0) out.emplace_back(f, n / f);
    }
    return out;
}

std::set<std::string> all_index_names(const Program& p) { return free_symbols(p).indices; }

std::set<std::string> tensors_of(const Program& p) { return free_symbols(p).tensors; }

bool read_anywhere_except(const Program& p, const std::string& tensor, const std::set<size_t>& exprs) {
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        if (exprs.count(i)) continue;
        if (reads_of(p.exprs[i]).count(tensor)) return true;
    }
    return false;
}

std::set<std::string> readers_outside(const Program& p, const std::string& tensor, const std::set<size_t>& exprs) {
    std::set<std::string> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        if (exprs.count(i)) continue;
        for (const auto& v : equations(p.exprs[i], i)) {
            if (reads_tensor(v.eq->rhs, tensor)) out.insert(v.eq->lhs.name);
        }
    }
    return out;
}

Role role_of(const Program& p, const std::string& name) {
    auto it = p.io.find(name);
    if (it != p.io.end()) return it->second.role;
    auto io = infer_io(p);
    auto jt = io.find(name);
    return jt == io.end() ? Role::Input : jt->second.role;
}

void fail(const std::string& msg) { throw Error("ApplyFailed", msg); }
void no_variant(const std::string& msg) { throw Error("NoVariant", msg); }

Params no_params(const Program&, const Site&, std::mt19937_64&) { return Params::object(); }

}  // namespace leir::detail
