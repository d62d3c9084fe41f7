// SPDX-License-Identifier: Apache-2.0
//
// Algebraic rewrites on equation right-hand sides plus the split rewrites
// that introduce an existing element and cancel it again.

#include <algorithm>
#include <cmath>
#include <numeric>

#include "leir/syntax.hpp"
#include "strategy_impl.hpp"

namespace leir::detail {

namespace {

using Id = StrategyId;

struct Ctx {
    const Program& p;
    const EqLoc& loc;
};

using Rule = std::function<std::optional<Value>(const Value&, const Ctx&)>;

bool is(const Value& v, ValueOp op) { return v->op == op; }
bool is_const(const Value& v, double c) { return v->op == ValueOp::Const && v->num == c; }
bool is_int_const(const Value& v) {
    return v->op == ValueOp::Const && std::isfinite(v->num) && v->num == std::floor(v->num) && std::fabs(v->num) < 1e9;
}
const Value& A(const Value& v, size_t i) { return v->args[i]; }
bool eq(const Value& a, const Value& b) { return equal(a, b); }

Value pow2(Value x) { return v_bin(ValueOp::Pow, std::move(x), v_const(2)); }

// Positive by construction, or a read of an input assumed to lie in the
// domain of the log that consumes it.
bool positive(const Value& v, const Ctx& c) {
    switch (v->op) {
        case ValueOp::Const: return v->num > 0;
        case ValueOp::Exp: return true;
        case ValueOp::Sqrt: return positive(A(v, 0), c);
        case ValueOp::Read: return role_of(c.p, v->ref.name) == Role::Input;
        case ValueOp::Add:
        case ValueOp::Mul:
        case ValueOp::Div: return positive(A(v, 0), c) && positive(A(v, 1), c);
        case ValueOp::Pow: return positive(A(v, 0), c);
        default: return false;
    }
}

// ---- factorization / expand factorization ----

// c/d reduced to lowest terms for integer constants.
Value reduced_fraction(const Value& num, const Value& den) {
    if (is_int_const(num) && is_int_const(den) && den->num != 0) {
        auto n = static_cast<int64_t>(num->num), d = static_cast<int64_t>(den->num);
        int64_t g = std::gcd(n, d);
        if (g > 1) {
            n /= g;
            d /= g;
        }
        if (d < 0) {
            n = -n;
            d = -d;
        }
        if (d == 1) return v_const(static_cast<double>(n));
        return v_div(v_const(static_cast<double>(n)), v_const(static_cast<double>(d)));
    }
    return v_div(num, den);
}

std::optional<Value> distribute_denominator(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Div)) return std::nullopt;
    const Value& n = A(v, 0);
    if (!is(n, ValueOp::Add) && !is(n, ValueOp::Sub)) return std::nullopt;
    const Value& z = A(v, 1);
    return v_bin(n->op, reduced_fraction(A(n, 0), z), reduced_fraction(A(n, 1), z));
}

// X**2 -/+ 2*X*Y + Y**2 -> (X -/+ Y)**2
std::optional<Value> fold_square(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Add)) return std::nullopt;
    const Value& head = A(v, 0);
    const Value& y2 = A(v, 1);
    if (!is(head, ValueOp::Add) && !is(head, ValueOp::Sub)) return std::nullopt;
    const Value& x2 = A(head, 0);
    const Value& mid = A(head, 1);
    if (!is(x2, ValueOp::Pow) || !is_const(A(x2, 1), 2) || !is(y2, ValueOp::Pow) || !is_const(A(y2, 1), 2)) {
        return std::nullopt;
    }
    const Value& x = A(x2, 0);
    const Value& y = A(y2, 0);
    if (!is(mid, ValueOp::Mul) || !is(A(mid, 0), ValueOp::Mul)) return std::nullopt;
    const Value& two_x = A(mid, 0);
    if (!is_const(A(two_x, 0), 2) || !eq(A(two_x, 1), x) || !eq(A(mid, 1), y)) return std::nullopt;
    return pow2(v_bin(head->op, x, y));
}

std::optional<Value> expand_square(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Pow) || !is_const(A(v, 1), 2)) return std::nullopt;
    const Value& b = A(v, 0);
    if (!is(b, ValueOp::Add) && !is(b, ValueOp::Sub)) return std::nullopt;
    const Value& x = A(b, 0);
    const Value& y = A(b, 1);
    Value mid = v_mul(v_mul(v_const(2), x), y);
    return v_add(v_bin(b->op, pow2(x), mid), pow2(y));
}

std::optional<Value> merge_fractions(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Add) && !is(v, ValueOp::Sub)) return std::nullopt;
    const Value& a = A(v, 0);
    const Value& b = A(v, 1);
    if (!is(a, ValueOp::Div) || !is(b, ValueOp::Div) || !eq(A(a, 1), A(b, 1))) return std::nullopt;
    return v_div(v_bin(v->op, A(a, 0), A(b, 0)), A(a, 1));
}

// ---- cancellation / expand cancellation ----

// X*((P-Q)/Z)+W -> (P*X-X*Q+W*Z)/Z
std::optional<Value> cancel_product(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Add) || !is(A(v, 0), ValueOp::Mul)) return std::nullopt;
    const Value& m = A(v, 0);
    const Value& w = A(v, 1);
    const Value& x = A(m, 0);
    const Value& f = A(m, 1);
    if (!is(f, ValueOp::Div) || !is(A(f, 0), ValueOp::Sub)) return std::nullopt;
    const Value& z = A(f, 1);
    const Value& pp = A(A(f, 0), 0);
    const Value& qq = A(A(f, 0), 1);
    Value num = v_add(v_sub(v_mul(pp, x), v_mul(x, qq)), v_mul(w, z));
    return v_div(num, z);
}

// X*(1+Y/Z) -> (X*Y+X*Z)/Z
std::optional<Value> cancel_unit(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Mul) || !is(A(v, 1), ValueOp::Add)) return std::nullopt;
    const Value& x = A(v, 0);
    const Value& s = A(v, 1);
    if (!is_const(A(s, 0), 1) || !is(A(s, 1), ValueOp::Div)) return std::nullopt;
    const Value& y = A(A(s, 1), 0);
    const Value& z = A(A(s, 1), 1);
    return v_div(v_add(v_mul(x, y), v_mul(x, z)), z);
}

// [1*](X*Y+X*Z)/Z -> X*(1+Y/Z)
std::optional<Value> pull_factor(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Div)) return std::nullopt;
    Value n = A(v, 0);
    const Value& z = A(v, 1);
    if (is(n, ValueOp::Mul) && is_const(A(n, 0), 1)) n = A(n, 1);
    if (!is(n, ValueOp::Add) || !is(A(n, 0), ValueOp::Mul) || !is(A(n, 1), ValueOp::Mul)) return std::nullopt;
    const Value& l = A(n, 0);
    const Value& r = A(n, 1);
    if (!eq(A(l, 0), A(r, 0)) || !eq(A(r, 1), z)) return std::nullopt;
    return v_mul(A(l, 0), v_add(v_const(1.0), v_div(A(l, 1), z)));
}

// ---- apart / together ----

std::optional<Value> apart(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Div) || !is(A(v, 0), ValueOp::Add)) return std::nullopt;
    const Value& z = A(v, 1);
    const Value& n = A(v, 0);
    if (eq(A(n, 1), z)) return v_add(v_const(1.0), v_div(A(n, 0), z));
    if (eq(A(n, 0), z)) return v_add(v_const(1.0), v_div(A(n, 1), z));
    return std::nullopt;
}

// X*(Y/Z)+W -> (X*Y+W*Z)/Z
std::optional<Value> together_product(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Add) || !is(A(v, 0), ValueOp::Mul) || !is(A(A(v, 0), 1), ValueOp::Div)) return std::nullopt;
    const Value& x = A(A(v, 0), 0);
    const Value& f = A(A(v, 0), 1);
    const Value& w = A(v, 1);
    return v_div(v_add(v_mul(x, A(f, 0)), v_mul(w, A(f, 1))), A(f, 1));
}

// Y/Z+W -> (Y+W*Z)/Z and W+Y/Z -> (W*Z+Y)/Z
std::optional<Value> together_sum(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Add)) return std::nullopt;
    if (is(A(v, 0), ValueOp::Div)) {
        const Value& f = A(v, 0);
        return v_div(v_add(A(f, 0), v_mul(A(v, 1), A(f, 1))), A(f, 1));
    }
    if (is(A(v, 1), ValueOp::Div)) {
        const Value& f = A(v, 1);
        return v_div(v_add(v_mul(A(v, 0), A(f, 1)), A(f, 0)), A(f, 1));
    }
    return std::nullopt;
}

// ---- powsimp / expand powsimp ----

std::optional<Value> reciprocal_product(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Mul) || !is(A(v, 1), ValueOp::Div) || !is_const(A(A(v, 1), 0), 1)) return std::nullopt;
    return v_div(A(v, 0), A(A(v, 1), 1));
}

std::optional<Value> add_exponents(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Mul)) return std::nullopt;
    const Value& a = A(v, 0);
    const Value& b = A(v, 1);
    if (is(a, ValueOp::Pow) && is(b, ValueOp::Pow) && eq(A(a, 0), A(b, 0)) && is_int_const(A(a, 1)) &&
        is_int_const(A(b, 1))) {
        return v_bin(ValueOp::Pow, A(a, 0), v_const(A(a, 1)->num + A(b, 1)->num));
    }
    if (eq(a, b) && !is(a, ValueOp::Const)) return pow2(a);
    return std::nullopt;
}

std::optional<Value> expand_quotient(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Div) || is_const(A(v, 0), 1)) return std::nullopt;
    return v_mul(A(v, 0), v_div(v_const(1), A(v, 1)));
}

// ---- logsimp / expand log ----

std::optional<Value> split_log(const Value& v, const Ctx& c) {
    if (!is(v, ValueOp::Log)) return std::nullopt;
    const Value& a = A(v, 0);
    auto lg = [](const Value& x) { return v_unary(ValueOp::Log, x); };
    if ((is(a, ValueOp::Mul) || is(a, ValueOp::Div)) && positive(A(a, 0), c) && positive(A(a, 1), c)) {
        return v_bin(is(a, ValueOp::Mul) ? ValueOp::Add : ValueOp::Sub, lg(A(a, 0)), lg(A(a, 1)));
    }
    if (is(a, ValueOp::Pow) && is(A(a, 1), ValueOp::Const) && positive(A(a, 0), c)) {
        return v_mul(A(a, 1), lg(A(a, 0)));
    }
    return std::nullopt;
}

std::optional<Value> join_log(const Value& v, const Ctx& c) {
    auto lg = [](const Value& x) { return v_unary(ValueOp::Log, x); };
    if ((is(v, ValueOp::Add) || is(v, ValueOp::Sub)) && is(A(v, 0), ValueOp::Log) && is(A(v, 1), ValueOp::Log)) {
        const Value& x = A(A(v, 0), 0);
        const Value& y = A(A(v, 1), 0);
        if (!positive(x, c) || !positive(y, c)) return std::nullopt;
        return lg(v_bin(is(v, ValueOp::Add) ? ValueOp::Mul : ValueOp::Div, x, y));
    }
    if (is(v, ValueOp::Mul) && is(A(v, 0), ValueOp::Const) && is(A(v, 1), ValueOp::Log) &&
        positive(A(A(v, 1), 0), c)) {
        return lg(v_bin(ValueOp::Pow, A(A(v, 1), 0), A(v, 0)));
    }
    return std::nullopt;
}

// ---- collect / expand collect ----

// c*(X+Y) -> c*X+c*Y
std::optional<Value> distribute_coefficient(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Mul) || !is(A(v, 0), ValueOp::Const)) return std::nullopt;
    const Value& s = A(v, 1);
    if (!is(s, ValueOp::Add) && !is(s, ValueOp::Sub)) return std::nullopt;
    return v_bin(s->op, v_mul(A(v, 0), A(s, 0)), v_mul(A(v, 0), A(s, 1)));
}

// (X*(1/Y))/m -> ((1/m)*X)/Y
std::optional<Value> coefficient_to_front(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Div) || !is(A(v, 1), ValueOp::Const) || A(v, 1)->num == 0) return std::nullopt;
    const Value& n = A(v, 0);
    if (!is(n, ValueOp::Mul) || !is(A(n, 1), ValueOp::Div) || !is_const(A(A(n, 1), 0), 1)) return std::nullopt;
    return v_div(v_mul(v_const(1.0 / A(v, 1)->num), A(n, 0)), A(A(n, 1), 1));
}

// (k*X)/Y -> (X*(1/Y))/(1/k)
std::optional<Value> coefficient_to_back(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Div) || !is(A(v, 0), ValueOp::Mul)) return std::nullopt;
    const Value& k = A(A(v, 0), 0);
    if (!is(k, ValueOp::Const) || k->num == 0) return std::nullopt;
    return v_div(v_mul(A(A(v, 0), 1), v_div(v_const(1), A(v, 1))), v_const(1.0 / k->num));
}

// c*X+c*Y -> c*(X+Y)
std::optional<Value> gather_coefficient(const Value& v, const Ctx&) {
    if (!is(v, ValueOp::Add) && !is(v, ValueOp::Sub)) return std::nullopt;
    const Value& a = A(v, 0);
    const Value& b = A(v, 1);
    if (!is(a, ValueOp::Mul) || !is(b, ValueOp::Mul) || !is(A(a, 0), ValueOp::Const) || !eq(A(a, 0), A(b, 0))) {
        return std::nullopt;
    }
    return v_mul(A(a, 0), v_bin(v->op, A(a, 1), A(b, 1)));
}

// ---- rule-driven strategies ----

bool in_condition(const Value& root, const std::vector<size_t>& path) {
    const Value* cur = &root;
    for (size_t k : path) {
        if ((*cur)->op == ValueOp::Ite && k == 0) return true;
        cur = &(*cur)->args[k];
    }
    return false;
}

// Rewrites that keep the equation's combiner shape valid.
bool still_valid(const EqLoc& loc, const Value& rhs) {
    Equation e{loc.eq->lhs, rhs};
    try {
        auto before = classify_reduction(*loc.eq, loc.loops);
        auto after = classify_reduction(e, loc.loops);
        return before.is_reduction == after.is_reduction && before.combiner == after.combiner;
    } catch (const Error&) {
        return false;
    }
}

std::vector<Site> rule_sites(const Program& p, const std::vector<Rule>& rules) {
    std::vector<Site> out;
    for (const auto& loc : eq_locs(p)) {
        Ctx c{p, loc};
        for (const auto& path : node_paths(loc.eq->rhs)) {
            if (in_condition(loc.eq->rhs, path)) continue;
            const Value& node = value_at(loc.eq->rhs, path);
            for (size_t r = 0; r < rules.size(); ++r) {
                auto res = rules[r](node, c);
                if (!res || equal(*res, node)) continue;
                if (!still_valid(loc, replace_at(loc.eq->rhs, path, *res))) continue;
                Site s;
                s.exprs = {loc.expr};
                s.path = loc.path;
                s.term = path;
                s.option = static_cast<int64_t>(r);
                out.push_back(s);
            }
        }
    }
    return out;
}

Program rule_apply(const Program& p, const Site& s, const std::vector<Rule>& rules) {
    if (s.option < 0 || static_cast<size_t>(s.option) >= rules.size()) fail("unknown rule");
    EqLoc loc;
    for (const auto& l : eq_locs(p)) {
        if (l.expr == s.exprs.at(0) && l.path == s.path) loc = l;
    }
    if (!loc.eq) fail("equation not found");
    Ctx c{p, loc};
    auto res = rules[static_cast<size_t>(s.option)](value_at(loc.eq->rhs, s.term), c);
    if (!res) fail("rule does not match");
    Program q = p;
    Equation& e = eq_at(q, s.exprs[0], s.path);
    e.rhs = replace_at(e.rhs, s.term, *res);
    return q;
}

Impl rule_impl(std::vector<Rule> rules) {
    auto shared = std::make_shared<std::vector<Rule>>(std::move(rules));
    return {[shared](const Program& p) { return rule_sites(p, *shared); }, no_params,
            [shared](const Program& p, const Site& s, const Params&) { return rule_apply(p, s, *shared); }};
}

// ---- split rewrites ----

bool float_dtype(DType d) { return d == DType::F16 || d == DType::F32 || d == DType::F64; }

// Unguarded input reads usable as the inserted element, keyed by text.
std::vector<TensorRef> split_partners(const Program& p, const EqLoc& loc) {
    std::map<std::string, TensorRef> found;
    for (const auto& path : node_paths(loc.eq->rhs, true)) {
        if (in_condition(loc.eq->rhs, path)) continue;
        const Value& v = value_at(loc.eq->rhs, path);
        if (!is(v, ValueOp::Read) || v->ref.name == loc.eq->lhs.name || !float_dtype(v->ref.dtype)) continue;
        if (role_of(p, v->ref.name) != Role::Input) continue;
        found.emplace(print(v->ref), v->ref);
    }
    std::vector<TensorRef> out;
    for (auto& [_, r] : found) out.push_back(r);
    return out;
}

std::vector<std::vector<size_t>> split_targets(const EqLoc& loc) {
    std::vector<std::vector<size_t>> out;
    if (!float_dtype(loc.eq->lhs.dtype)) return out;
    for (const auto& path : node_paths(loc.eq->rhs, true)) {
        if (in_condition(loc.eq->rhs, path)) continue;
        const Value& v = value_at(loc.eq->rhs, path);
        if (!is(v, ValueOp::Read) || v->ref.name == loc.eq->lhs.name || !float_dtype(v->ref.dtype)) continue;
        out.push_back(path);
    }
    return out;
}

Value split_value(bool multiplicative, const Value& t, const TensorRef& r) {
    if (multiplicative) return v_mul(v_div(t, v_read(r)), v_read(r));
    return v_sub(v_add(t, v_read(r)), v_read(r));
}

std::vector<Site> split_sites(const Program& p, bool multiplicative) {
    std::vector<Site> out;
    for (const auto& loc : eq_locs(p)) {
        auto partners = split_partners(p, loc);
        for (const auto& path : split_targets(loc)) {
            for (size_t k = 0; k < partners.size(); ++k) {
                Value repl = split_value(multiplicative, value_at(loc.eq->rhs, path), partners[k]);
                if (!still_valid(loc, replace_at(loc.eq->rhs, path, repl))) continue;
                Site s;
                s.exprs = {loc.expr};
                s.path = loc.path;
                s.term = path;
                s.option = static_cast<int64_t>(k);
                out.push_back(s);
            }
        }
    }
    return out;
}

Program split_apply(const Program& p, const Site& s, bool multiplicative) {
    EqLoc loc;
    for (const auto& l : eq_locs(p)) {
        if (l.expr == s.exprs.at(0) && l.path == s.path) loc = l;
    }
    if (!loc.eq) fail("equation not found");
    auto partners = split_partners(p, loc);
    if (s.option < 0 || static_cast<size_t>(s.option) >= partners.size()) fail("unknown partner");
    Program q = p;
    Equation& e = eq_at(q, s.exprs[0], s.path);
    e.rhs = replace_at(e.rhs, s.term, split_value(multiplicative, value_at(e.rhs, s.term), partners[s.option]));
    return q;
}

// ---- exponential split ----

struct ShiftChoice {
    TensorRef ref;
    std::string var;
};

// Reads inside exp(X) with an axis that is a plain enclosing loop var used
// nowhere else in the index.
std::vector<ShiftChoice> shift_choices(const EqLoc& loc, const Value& x) {
    std::set<std::string> scope;
    for (const auto* l : loc.loops) scope.insert(l->index);
    std::map<std::string, ShiftChoice> found;
    for (const auto& path : node_paths(x, true)) {
        if (in_condition(x, path)) continue;
        const Value& v = value_at(x, path);
        if (!is(v, ValueOp::Read)) continue;
        for (const auto& ix : v->ref.indices) {
            auto var = plain_var(ix);
            if (!var || !scope.count(*var)) continue;
            bool only_plain = true;
            for (const auto& other : v->ref.indices) {
                std::set<std::string> s;
                collect_index_vars(other, s);
                if (s.count(*var) && !is_plain_var(other, *var)) only_plain = false;
            }
            if (!only_plain) continue;
            found.emplace(print(v->ref) + "@" + *var, ShiftChoice{v->ref, *var});
        }
    }
    std::vector<ShiftChoice> out;
    for (auto& [_, c] : found) out.push_back(c);
    return out;
}

Value shifted_guard(const ShiftChoice& c) {
    Value cond = v_cmp(CmpOp::Lt, v_sub(v_var(c.var), v_const(1)), v_const(0));
    TensorRef prev = subst(c.ref, {{c.var, ix_sub(ix_var(c.var), ix_const(1))}});
    return v_ite(cond, v_const(0), v_read(prev));
}

std::vector<Site> exp_split_sites(const Program& p) {
    std::vector<Site> out;
    for (const auto& loc : eq_locs(p)) {
        for (const auto& path : node_paths(loc.eq->rhs, true)) {
            if (in_condition(loc.eq->rhs, path)) continue;
            const Value& v = value_at(loc.eq->rhs, path);
            if (!is(v, ValueOp::Exp)) continue;
            auto choices = shift_choices(loc, A(v, 0));
            for (size_t k = 0; k < choices.size(); ++k) {
                Site s;
                s.exprs = {loc.expr};
                s.path = loc.path;
                s.term = path;
                s.option = static_cast<int64_t>(k);
                out.push_back(s);
            }
        }
    }
    return out;
}

Program exp_split_apply(const Program& p, const Site& s, const Params&) {
    EqLoc loc;
    for (const auto& l : eq_locs(p)) {
        if (l.expr == s.exprs.at(0) && l.path == s.path) loc = l;
    }
    if (!loc.eq) fail("equation not found");
    const Value& node = value_at(loc.eq->rhs, s.term);
    if (!is(node, ValueOp::Exp)) fail("term is not exp");
    auto choices = shift_choices(loc, A(node, 0));
    if (s.option < 0 || static_cast<size_t>(s.option) >= choices.size()) fail("unknown shift");
    Value y = shifted_guard(choices[s.option]);
    Value repl = v_mul(v_unary(ValueOp::Exp, v_sub(A(node, 0), y)), v_unary(ValueOp::Exp, y));
    Program q = p;
    Equation& e = eq_at(q, s.exprs[0], s.path);
    e.rhs = replace_at(e.rhs, s.term, repl);
    return q;
}

}  // namespace

void register_math(ImplTable& t) {
    t[Id::Factorization] = rule_impl({distribute_denominator, fold_square});
    t[Id::ExpandFactorization] = rule_impl({expand_square, merge_fractions});
    t[Id::Cancellation] = rule_impl({cancel_product, cancel_unit});
    t[Id::ExpandCancellation] = rule_impl({pull_factor});
    t[Id::Apart] = rule_impl({apart});
    t[Id::Together] = rule_impl({together_product, together_sum});
    t[Id::PowSimp] = rule_impl({reciprocal_product, add_exponents});
    t[Id::ExpandPowSimp] = rule_impl({expand_quotient});
    t[Id::LogSimp] = rule_impl({split_log});
    t[Id::ExpandLog] = rule_impl({join_log});
    t[Id::Collect] = rule_impl({distribute_coefficient, coefficient_to_front});
    t[Id::ExpandCollect] = rule_impl({coefficient_to_back, gather_coefficient});
    t[Id::ExponentialSplit] = {exp_split_sites, no_params, exp_split_apply};
    t[Id::MultiplicativeSplit] = {[](const Program& p) { return split_sites(p, true); }, no_params,
                                  [](const Program& p, const Site& s, const Params&) { return split_apply(p, s, true); }};
    t[Id::AdditiveSplit] = {[](const Program& p) { return split_sites(p, false); }, no_params,
                            [](const Program& p, const Site& s, const Params&) { return split_apply(p, s, false); }};
}

}  // namespace leir::detail
