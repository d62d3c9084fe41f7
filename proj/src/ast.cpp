// SPDX-License-Identifier: Apache-2.0

#include "leir/ast.hpp"

#include <array>
#include <cmath>

namespace leir {

std::string_view to_string(DType d) {
    switch (d) {
        case DType::F16: return "f16";
        case DType::F32: return "f32";
        case DType::F64: return "f64";
        case DType::I64: return "i64";
        case DType::B8: return "b8";
    }
    return "f32";
}

std::string_view to_string(MemScope s) {
    switch (s) {
        case MemScope::Global: return "g";
        case MemScope::Shared: return "s";
        case MemScope::Local: return "l";
    }
    return "g";
}

std::string_view to_string(Role r) {
    switch (r) {
        case Role::Input: return "input";
        case Role::Output: return "output";
        case Role::Intermediate: return "intermediate";
    }
    return "input";
}

std::string_view to_string(CmpOp op) {
    switch (op) {
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
        case CmpOp::Eq: return "==";
    }
    return "<";
}

std::optional<DType> parse_dtype(std::string_view s) {
    if (s == "f16") return DType::F16;
    if (s == "f32") return DType::F32;
    if (s == "f64") return DType::F64;
    if (s == "i64") return DType::I64;
    if (s == "b8") return DType::B8;
    return std::nullopt;
}

std::optional<MemScope> parse_scope(std::string_view s) {
    if (s == "g") return MemScope::Global;
    if (s == "s") return MemScope::Shared;
    if (s == "l") return MemScope::Local;
    return std::nullopt;
}

char loop_kind_char(LoopKind k) {
    switch (k) {
        case LoopKind::Serial: return 'L';
        case LoopKind::Parallel: return 'P';
        case LoopKind::Vectorized: return 'V';
        case LoopKind::Unrolled: return 'U';
        case LoopKind::Binding: return 'B';
    }
    return 'L';
}

std::string_view bind_prefix(BindTarget t) {
    switch (t) {
        case BindTarget::BlockX: return "bx";
        case BindTarget::BlockY: return "by";
        case BindTarget::BlockZ: return "bz";
        case BindTarget::ThreadX: return "tx";
        case BindTarget::ThreadY: return "ty";
        case BindTarget::ThreadZ: return "tz";
    }
    return "tx";
}

std::optional<BindTarget> bind_target_of(std::string_view index) {
    static constexpr std::array<BindTarget, 6> all = {
        BindTarget::BlockX, BindTarget::BlockY, BindTarget::BlockZ,
        BindTarget::ThreadX, BindTarget::ThreadY, BindTarget::ThreadZ};
    for (BindTarget t : all) {
        if (index.substr(0, 2) == bind_prefix(t)) return t;
    }
    return std::nullopt;
}

int64_t bind_cap(BindTarget t) {
    switch (t) {
        case BindTarget::BlockX: return 2147483647;
        case BindTarget::BlockY: return 65535;
        case BindTarget::BlockZ: return 65535;
        case BindTarget::ThreadX: return 1024;
        case BindTarget::ThreadY: return 1024;
        case BindTarget::ThreadZ: return 64;
    }
    return 1;
}

bool is_reserved_name(std::string_view name) {
    return name == "L" || name == "P" || name == "V" || name == "U" || name == "B" || name == "T";
}

Index ix_const(int64_t v) {
    auto n = std::make_shared<IndexNode>();
    n->op = IndexNode::Op::Const;
    n->value = v;
    return n;
}

Index ix_var(std::string name) {
    auto n = std::make_shared<IndexNode>();
    n->op = IndexNode::Op::Var;
    n->name = std::move(name);
    return n;
}

Index ix_bin(IndexNode::Op op, Index a, Index b) {
    auto n = std::make_shared<IndexNode>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

Index ix_add(Index a, Index b) { return ix_bin(IndexNode::Op::Add, std::move(a), std::move(b)); }
Index ix_sub(Index a, Index b) { return ix_bin(IndexNode::Op::Sub, std::move(a), std::move(b)); }
Index ix_mul(Index a, Index b) { return ix_bin(IndexNode::Op::Mul, std::move(a), std::move(b)); }

Index ix_read(const TensorRef& ref) {
    auto n = std::make_shared<IndexNode>();
    n->op = IndexNode::Op::Read;
    n->ref = std::make_shared<TensorRef>(ref);
    return n;
}

Value v_const(double v) {
    auto n = std::make_shared<ValueNode>();
    n->op = ValueOp::Const;
    n->num = v;
    return n;
}

Value v_read(TensorRef ref) {
    auto n = std::make_shared<ValueNode>();
    n->op = ValueOp::Read;
    n->ref = std::move(ref);
    return n;
}

Value v_var(std::string name) {
    auto n = std::make_shared<ValueNode>();
    n->op = ValueOp::Var;
    n->var = std::move(name);
    return n;
}

Value v_unary(ValueOp op, Value a) {
    auto n = std::make_shared<ValueNode>();
    n->op = op;
    n->args = {std::move(a)};
    return n;
}

Value v_bin(ValueOp op, Value a, Value b) {
    auto n = std::make_shared<ValueNode>();
    n->op = op;
    n->args = {std::move(a), std::move(b)};
    return n;
}

Value v_add(Value a, Value b) { return v_bin(ValueOp::Add, std::move(a), std::move(b)); }
Value v_sub(Value a, Value b) { return v_bin(ValueOp::Sub, std::move(a), std::move(b)); }
Value v_mul(Value a, Value b) { return v_bin(ValueOp::Mul, std::move(a), std::move(b)); }
Value v_div(Value a, Value b) { return v_bin(ValueOp::Div, std::move(a), std::move(b)); }

Value v_cmp(CmpOp op, Value a, Value b) {
    auto n = std::make_shared<ValueNode>();
    n->op = ValueOp::Cmp;
    n->cmp = op;
    n->args = {std::move(a), std::move(b)};
    return n;
}

Value v_range(CmpOp op1, Value lo, Value x, CmpOp op2, Value hi) {
    auto n = std::make_shared<ValueNode>();
    n->op = ValueOp::Range;
    n->cmp = op1;
    n->cmp2 = op2;
    n->args = {std::move(lo), std::move(x), std::move(hi)};
    return n;
}

Value v_ite(Value c, Value t, Value f) {
    auto n = std::make_shared<ValueNode>();
    n->op = ValueOp::Ite;
    n->args = {std::move(c), std::move(t), std::move(f)};
    return n;
}

Value v_with_args(const ValueNode& base, std::vector<Value> args) {
    auto n = std::make_shared<ValueNode>(base);
    n->args = std::move(args);
    return n;
}

Item Item::of(Equation e) {
    Item it;
    it.is_eq = true;
    it.eq = std::move(e);
    return it;
}

Item Item::of(Nest n) {
    Item it;
    it.is_eq = false;
    it.sub.push_back(std::move(n));
    return it;
}

Nest& Item::nest() { return sub.front(); }
const Nest& Item::nest() const { return sub.front(); }

bool equal(const Index& a, const Index& b) {
    if (a == b) return true;
    if (!a || !b || a->op != b->op) return false;
    switch (a->op) {
        case IndexNode::Op::Const: return a->value == b->value;
        case IndexNode::Op::Var: return a->name == b->name;
        case IndexNode::Op::Read: return equal(*a->ref, *b->ref);
        default: return equal(a->a, b->a) && equal(a->b, b->b);
    }
}

bool equal(const TensorRef& a, const TensorRef& b) {
    if (a.name != b.name || a.dtype != b.dtype || a.scope != b.scope ||
        a.indices.size() != b.indices.size()) {
        return false;
    }
    for (size_t i = 0; i < a.indices.size(); ++i) {
        if (!equal(a.indices[i], b.indices[i])) return false;
    }
    return true;
}

bool equal(const Value& a, const Value& b) {
    if (a == b) return true;
    if (!a || !b || a->op != b->op || a->args.size() != b->args.size()) return false;
    switch (a->op) {
        case ValueOp::Const:
            if (std::isnan(a->num) && std::isnan(b->num)) return true;
            return a->num == b->num && std::signbit(a->num) == std::signbit(b->num);
        case ValueOp::Read: return equal(a->ref, b->ref);
        case ValueOp::Var: return a->var == b->var;
        case ValueOp::Cmp:
            if (a->cmp != b->cmp) return false;
            break;
        case ValueOp::Range:
            if (a->cmp != b->cmp || a->cmp2 != b->cmp2) return false;
            break;
        default: break;
    }
    for (size_t i = 0; i < a->args.size(); ++i) {
        if (!equal(a->args[i], b->args[i])) return false;
    }
    return true;
}

bool equal(const Equation& a, const Equation& b) {
    return equal(a.lhs, b.lhs) && equal(a.rhs, b.rhs);
}

bool equal(const Nest& a, const Nest& b) {
    if (a.loops != b.loops || a.body.size() != b.body.size()) return false;
    for (size_t i = 0; i < a.body.size(); ++i) {
        const Item& x = a.body[i];
        const Item& y = b.body[i];
        if (x.is_eq != y.is_eq) return false;
        if (x.is_eq ? !equal(x.eq, y.eq) : !equal(x.nest(), y.nest())) return false;
    }
    return true;
}

bool structural_eq(const Program& a, const Program& b) {
    if (a.exprs.size() != b.exprs.size()) return false;
    for (size_t i = 0; i < a.exprs.size(); ++i) {
        if (!equal(a.exprs[i], b.exprs[i])) return false;
    }
    return true;
}

void collect_index_vars(const Index& ix, std::set<std::string>& out) {
    if (!ix) return;
    switch (ix->op) {
        case IndexNode::Op::Const: return;
        case IndexNode::Op::Var: out.insert(ix->name); return;
        case IndexNode::Op::Read:
            for (const auto& s : ix->ref->indices) collect_index_vars(s, out);
            return;
        default:
            collect_index_vars(ix->a, out);
            collect_index_vars(ix->b, out);
    }
}

void collect_value_vars(const Value& v, std::set<std::string>& out) {
    if (v->op == ValueOp::Var) out.insert(v->var);
    if (v->op == ValueOp::Read) {
        for (const auto& ix : v->ref.indices) collect_index_vars(ix, out);
    }
    for (const auto& a : v->args) collect_value_vars(a, out);
}

void collect_reads(const Index& ix, std::vector<const TensorRef*>& out) {
    if (!ix) return;
    if (ix->op == IndexNode::Op::Read) {
        out.push_back(ix->ref.get());
        for (const auto& s : ix->ref->indices) collect_reads(s, out);
        return;
    }
    collect_reads(ix->a, out);
    collect_reads(ix->b, out);
}

void collect_reads(const Value& v, std::vector<const TensorRef*>& out) {
    if (v->op == ValueOp::Read) {
        out.push_back(&v->ref);
        for (const auto& ix : v->ref.indices) collect_reads(ix, out);
    }
    for (const auto& a : v->args) collect_reads(a, out);
}

namespace {

void walk_nest(const Nest& n, std::vector<const LoopHeader*>& stack, size_t expr,
               std::vector<EqVisit>& out) {
    for (const auto& l : n.loops) stack.push_back(&l);
    for (const auto& it : n.body) {
        if (it.is_eq) {
            out.push_back({&it.eq, stack, expr});
        } else {
            walk_nest(it.nest(), stack, expr, out);
        }
    }
    stack.resize(stack.size() - n.loops.size());
}

}  // namespace

std::vector<EqVisit> equations(const Nest& n, size_t expr_index) {
    std::vector<EqVisit> out;
    std::vector<const LoopHeader*> stack;
    walk_nest(n, stack, expr_index, out);
    return out;
}

std::vector<EqVisit> equations(const Program& p) {
    std::vector<EqVisit> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        auto part = equations(p.exprs[i], i);
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

namespace {

void nest_indices(const Nest& n, std::set<std::string>& out) {
    for (const auto& l : n.loops) out.insert(l.index);
    for (const auto& it : n.body) {
        if (!it.is_eq) nest_indices(it.nest(), out);
    }
}

}  // namespace

Symbols free_symbols(const Program& p) {
    Symbols s;
    for (const auto& n : p.exprs) nest_indices(n, s.indices);
    for (const auto& v : equations(p)) {
        s.tensors.insert(v.eq->lhs.name);
        std::vector<const TensorRef*> refs;
        collect_reads(v.eq->rhs, refs);
        for (const auto& ix : v.eq->lhs.indices) collect_reads(ix, refs);
        for (const auto* r : refs) s.tensors.insert(r->name);
    }
    for (const auto& [name, _] : p.io) s.tensors.insert(name);
    return s;
}

}  // namespace leir
