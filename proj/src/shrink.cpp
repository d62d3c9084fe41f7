// SPDX-License-Identifier: Apache-2.0
//
// Extent shrinking for interpreter-sized instances.

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <tuple>

#include "leir/interp.hpp"
#include "leir/syntax.hpp"

namespace leir {

namespace {

bool is_prime(int64_t n) {
    if (n < 2) return false;
    for (int64_t d = 2; d * d <= n; ++d) {
        if (n % d == 0) return false;
    }
    return true;
}

using Relation = std::tuple<int64_t, int64_t, int64_t>;  // product = a * b

void additive_terms(const Index& ix, std::vector<Index>& out) {
    if (ix->op == IndexNode::Op::Add || ix->op == IndexNode::Op::Sub) {
        additive_terms(ix->a, out);
        additive_terms(ix->b, out);
    } else {
        out.push_back(ix);
    }
}

class Shrinker {
  public:
    Shrinker(const Program& p, int64_t cap) : p_(p), cap_(cap) {}

    Program shrink() { return finish(mapped(), p_.io); }

    std::vector<Nest> mapped() {
        collect();
        solve();
        std::vector<Nest> out;
        for (const Nest& n : p_.exprs) out.push_back(map_nest(n));
        return out;
    }

    static Program finish(std::vector<Nest> exprs, const std::map<std::string, IoEntry>& old) {
        Program out;
        out.exprs = std::move(exprs);
        out.io = infer_io(out);
        for (auto& [name, e] : out.io) {
            auto it = old.find(name);
            if (it != old.end()) {
                e.dtype = it->second.dtype;
                e.role = it->second.role;
            }
        }
        auto diags = validate(out);
        if (!diags.empty()) {
            throw Error("ShrinkFailed", "shrunk program does not validate: " + diags[0].code + " " + diags[0].message);
        }
        return out;
    }

  private:
    const Program& p_;
    int64_t cap_;
    std::set<int64_t> extents_;
    std::set<int64_t> tied_;
    std::set<Relation> relations_;
    std::map<int64_t, int64_t> map_;

    void scan_index(const Index& ix, const std::map<std::string, int64_t>& ext) {
        if (!ix) return;
        if (ix->op == IndexNode::Op::Read) {
            scan_ref(*ix->ref, ext);
            return;
        }
        std::vector<Index> terms;
        additive_terms(ix, terms);
        for (const auto& t : terms) {
            if (t->op != IndexNode::Op::Mul) continue;
            Index var = t->a, c = t->b;
            if (var->op == IndexNode::Op::Const) std::swap(var, c);
            if (var->op != IndexNode::Op::Var || c->op != IndexNode::Op::Const) continue;
            auto ov = ext.find(var->name);
            if (ov == ext.end()) continue;
            for (const auto& u : terms) {
                if (u->op != IndexNode::Op::Var) continue;
                auto iv = ext.find(u->name);
                if (iv == ext.end() || iv->second != c->value || c->value < 2) continue;
                tied_.insert(c->value);
                int64_t prod = ov->second * c->value;
                if (extents_.count(prod) && ov->second >= 2) relations_.insert({prod, ov->second, c->value});
            }
        }
        if (ix->op != IndexNode::Op::Const && ix->op != IndexNode::Op::Var) {
            scan_index(ix->a, ext);
            scan_index(ix->b, ext);
        }
    }

    void scan_ref(const TensorRef& r, const std::map<std::string, int64_t>& ext) {
        for (const auto& ix : r.indices) scan_index(ix, ext);
    }

    void scan_value(const Value& v, const std::map<std::string, int64_t>& ext) {
        if (v->op == ValueOp::Read) scan_ref(v->ref, ext);
        for (const auto& a : v->args) scan_value(a, ext);
    }

    void collect() {
        for (const auto& v : equations(p_)) {
            for (const auto* l : v.loops) extents_.insert(l->extent);
        }
        for (const auto& v : equations(p_)) {
            std::map<std::string, int64_t> ext;
            for (const auto* l : v.loops) ext[l->index] = l->extent;
            scan_ref(v.eq->lhs, ext);
            scan_value(v.eq->rhs, ext);
        }
    }

    // Preferred targets: primes to primes, composites to composites,
    // distinct where the cap allows it.
    std::map<int64_t, int64_t> defaults() {
        std::vector<int64_t> primes, composites;
        for (int64_t k = cap_; k >= 2; --k) (is_prime(k) ? primes : composites).push_back(k);
        std::set<int64_t> used;
        std::map<int64_t, int64_t> out;
        for (auto it = extents_.rbegin(); it != extents_.rend(); ++it) {
            int64_t e = *it;
            if (e <= cap_) {
                out[e] = e;
                used.insert(e);
                continue;
            }
            const auto& pool = is_prime(e) ? primes : composites;
            const auto& other = is_prime(e) ? composites : primes;
            int64_t pick = 0;
            for (int64_t c : pool) {
                if (!used.count(c)) {
                    pick = c;
                    break;
                }
            }
            if (!pick && !pool.empty()) pick = pool.front();
            if (!pick && !other.empty()) pick = other.front();
            if (!pick) pick = 1;
            out[e] = pick;
            used.insert(pick);
        }
        return out;
    }

    void solve() {
        auto pref = defaults();
        std::set<int64_t> in_rel;
        for (const auto& [prod, a, b] : relations_) {
            in_rel.insert(prod);
            in_rel.insert(a);
            in_rel.insert(b);
        }
        std::vector<int64_t> vars(in_rel.rbegin(), in_rel.rend());
        std::map<int64_t, int64_t> assign;
        // Factors of 1 degenerate a split, so they are a last resort.
        for (int64_t floor_value : {2, 1}) {
            std::map<int64_t, std::vector<int64_t>> domain;
            for (int64_t e : vars) {
                std::vector<int64_t> d;
                if (pref[e] >= floor_value || e < floor_value) d.push_back(pref[e]);
                for (int64_t k = std::min(e, cap_); k >= std::min(e, floor_value); --k) {
                    if (k != pref[e]) d.push_back(k);
                }
                domain[e] = d;
            }
            assign.clear();
            std::function<bool(size_t)> search = [&](size_t i) {
                if (i == vars.size()) return true;
                for (int64_t v : domain[vars[i]]) {
                    assign[vars[i]] = v;
                    bool ok = true;
                    for (const auto& [prod, a, b] : relations_) {
                        auto ip = assign.find(prod), ia = assign.find(a), ib = assign.find(b);
                        if (ip != assign.end() && ia != assign.end() && ib != assign.end() &&
                            ip->second != ia->second * ib->second) {
                            ok = false;
                            break;
                        }
                    }
                    if (ok && search(i + 1)) return true;
                }
                assign.erase(vars[i]);
                return false;
            };
            if (search(0)) break;
            if (floor_value == 1) throw Error("ShrinkFailed", "no consistent rescaling of product relations");
        }
        map_ = pref;
        for (const auto& [e, v] : assign) map_[e] = v;
    }

    int64_t map_extent(int64_t e) const {
        auto it = map_.find(e);
        return it == map_.end() ? e : it->second;
    }

    // Constants in index or comparison positions.
    int64_t map_const(int64_t k, bool multiplier) const {
        if (k < 0) return -map_const(-k, multiplier);
        if (multiplier && tied_.count(k)) return map_extent(k);
        if (k <= cap_) return k;
        int64_t best = -1;
        for (int64_t e : extents_) {
            if (e > cap_ && std::llabs(k - e) <= 3 && (best < 0 || std::llabs(k - e) < std::llabs(k - best))) best = e;
        }
        if (best >= 0) return std::max<int64_t>(0, map_extent(best) + (k - best));
        int64_t ref = -1;
        for (int64_t e : extents_) {
            if (e >= k) {
                ref = e;
                break;
            }
        }
        if (ref < 0) ref = *extents_.rbegin();
        return std::max<int64_t>(1, static_cast<int64_t>(std::llround(static_cast<double>(k) * map_extent(ref) / ref)));
    }

    Index map_index(const Index& ix, bool multiplier) const {
        switch (ix->op) {
            case IndexNode::Op::Const: return ix_const(map_const(ix->value, multiplier));
            case IndexNode::Op::Var: return ix;
            case IndexNode::Op::Read: return ix_read(map_ref(*ix->ref));
            case IndexNode::Op::Mul: {
                bool var_a = ix->a->op == IndexNode::Op::Var, var_b = ix->b->op == IndexNode::Op::Var;
                return ix_mul(map_index(ix->a, var_b), map_index(ix->b, var_a));
            }
            default: return ix_bin(ix->op, map_index(ix->a, false), map_index(ix->b, false));
        }
    }

    TensorRef map_ref(const TensorRef& r) const {
        TensorRef out = r;
        for (auto& ix : out.indices) ix = map_index(ix, false);
        return out;
    }

    bool integral(const Value& v) const {
        return v->op == ValueOp::Const && std::isfinite(v->num) && std::floor(v->num) == v->num;
    }

    Value map_value(const Value& v, bool in_cmp) const {
        if (v->op == ValueOp::Read) return v_read(map_ref(v->ref));
        if (v->op == ValueOp::Const) {
            if (in_cmp && integral(v)) return v_const(static_cast<double>(map_const(static_cast<int64_t>(v->num), false)));
            return v;
        }
        if (v->args.empty()) return v;
        bool cmp = v->op == ValueOp::Cmp || v->op == ValueOp::Range;
        std::vector<Value> args;
        for (const auto& a : v->args) args.push_back(map_value(a, cmp));
        return v_with_args(*v, std::move(args));
    }

    Nest map_nest(const Nest& n) const {
        Nest out;
        for (const auto& l : n.loops) {
            LoopHeader h = l;
            h.extent = map_extent(l.extent);
            h.start = map_const(l.start, false);
            out.loops.push_back(h);
        }
        for (const auto& item : n.body) {
            if (item.is_eq) {
                out.body.push_back(Item::of(Equation{map_ref(item.eq.lhs), map_value(item.eq.rhs, false)}));
            } else {
                out.body.push_back(Item::of(map_nest(item.nest())));
            }
        }
        return out;
    }
};

}  // namespace

Program shrink_shapes(const Program& program, int64_t cap) {
    if (cap < 1) throw Error("ShrinkFailed", "cap must be positive");
    bool over = false;
    for (const auto& v : equations(program)) {
        for (const auto* l : v.loops) over = over || l->extent > cap;
    }
    if (!over) return program;
    return Shrinker(program, cap).shrink();
}

std::pair<Program, Program> shrink_pair(const Program& a, const Program& b, int64_t cap) {
    if (cap < 1) throw Error("ShrinkFailed", "cap must be positive");
    // One extent mapping for both programs keeps shared tensors the same shape.
    Program joint;
    joint.exprs = a.exprs;
    joint.exprs.insert(joint.exprs.end(), b.exprs.begin(), b.exprs.end());
    joint.io = a.io;
    for (const auto& [name, e] : b.io) joint.io.emplace(name, e);
    auto exprs = Shrinker(joint, cap).mapped();
    std::vector<Nest> first(exprs.begin(), exprs.begin() + static_cast<std::ptrdiff_t>(a.exprs.size()));
    std::vector<Nest> second(exprs.begin() + static_cast<std::ptrdiff_t>(a.exprs.size()), exprs.end());
    return {Shrinker::finish(std::move(first), a.io), Shrinker::finish(std::move(second), b.io)};
}

}  // namespace leir
