// SPDX-License-Identifier: Apache-2.0

#include "leir/syntax.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

#include "leir/analysis.hpp"

namespace leir {

ParseError::ParseError(const std::string& message, SourceSpan span,
                       std::vector<std::string> expected, std::string kind)
    : Error(kind, message), span_(span), expected_(std::move(expected)), kind_(std::move(kind)) {}

namespace {

// Input with LaTeX residue and whitespace removed; origin maps back to input bytes.
struct Stripped {
    std::string text;
    std::vector<size_t> origin;
};

Stripped strip(std::string_view in) {
    Stripped out;
    std::vector<int> text_close;  // brace depths whose closing brace is dropped
    int depth = 0;
    for (size_t i = 0; i < in.size(); ++i) {
        char c = in[i];
        if (std::isspace(static_cast<unsigned char>(c)) || c == '$') continue;
        if (c == '\\') {
            if (in.substr(i, 6) == "\\text{") {
                ++depth;
                text_close.push_back(depth);
                i += 5;
                continue;
            }
            if (i + 1 < in.size() && std::string_view("_&{}%").find(in[i + 1]) != std::string_view::npos) {
                out.text.push_back(in[i + 1]);
                out.origin.push_back(i + 1);
                ++i;
            }
            continue;
        }
        if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (!text_close.empty() && text_close.back() == depth) {
                text_close.pop_back();
                --depth;
                continue;
            }
            --depth;
        }
        out.text.push_back(c);
        out.origin.push_back(i);
    }
    out.origin.push_back(in.size());
    return out;
}

bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Parser {
  public:
    explicit Parser(std::string_view input) : src_(strip(input)), s_(src_.text) {}

    Program program() {
        Program p;
        if (at_end()) fail("expected expr", {"expr"});
        while (!at_end()) p.exprs.push_back(expr());
        return p;
    }

    Value whole_value() {
        Value v = value();
        if (!at_end()) fail("unexpected trailing input", {"end"});
        return v;
    }

  private:
    Stripped src_;
    std::string_view s_;
    size_t pos_ = 0;

    bool at_end() const { return pos_ >= s_.size(); }
    char peek(size_t k = 0) const { return pos_ + k < s_.size() ? s_[pos_ + k] : '\0'; }
    bool starts(std::string_view t) const { return s_.substr(pos_, t.size()) == t; }

    SourceSpan span(size_t a, size_t b) const {
        a = std::min(a, s_.size());
        b = std::min(std::max(a, b), s_.size());
        return {src_.origin[a], b > a ? src_.origin[b - 1] + 1 : src_.origin[a]};
    }

    [[noreturn]] void fail(const std::string& msg, std::vector<std::string> expected,
                           std::string kind = "ParseError") const {
        std::string where = " at byte " + std::to_string(span(pos_, pos_ + 1).byte_start);
        throw ParseError(msg + where, span(pos_, pos_ + 1), std::move(expected), std::move(kind));
    }

    void expect(std::string_view t) {
        if (!starts(t)) fail("expected '" + std::string(t) + "'", {std::string(t)});
        pos_ += t.size();
    }

    int64_t integer() {
        size_t b = pos_;
        if (peek() == '-') ++pos_;
        if (!is_digit(peek())) fail("expected integer", {"integer"});
        while (is_digit(peek())) ++pos_;
        int64_t v = 0;
        auto r = std::from_chars(s_.data() + b, s_.data() + pos_, v);
        if (r.ec != std::errc()) fail("integer out of range", {"integer"});
        return v;
    }

    std::string lower_ident() {
        size_t b = pos_;
        if (!is_lower(peek())) fail("expected identifier", {"identifier"});
        while (is_lower(peek()) || is_digit(peek()) || peek() == '_') ++pos_;
        return std::string(s_.substr(b, pos_ - b));
    }

    bool loop_start() const {
        char c = peek();
        if (c != 'L' && c != 'P' && c != 'V' && c != 'U' && c != 'B') return false;
        if (peek(1) != '^' || peek(2) != '{') return false;
        return is_digit(peek(3)) || peek(3) == '-';
    }

    LoopHeader loop() {
        LoopHeader l;
        switch (peek()) {
            case 'L': l.kind = LoopKind::Serial; break;
            case 'P': l.kind = LoopKind::Parallel; break;
            case 'V': l.kind = LoopKind::Vectorized; break;
            case 'U': l.kind = LoopKind::Unrolled; break;
            default: l.kind = LoopKind::Binding; break;
        }
        ++pos_;
        expect("^{");
        l.extent = integer();
        expect("}");
        expect("_{");
        l.index = lower_ident();
        expect("=");
        l.start = integer();
        expect("}");
        if (l.kind == LoopKind::Binding) l.bind = bind_target_of(l.index);
        return l;
    }

    Nest expr() {
        if (!loop_start()) fail("expected loop header", {"L", "P", "V", "U", "B"});
        Nest first = segment();
        while (!at_end() && peek() != ';') first.body.push_back(Item::of(segment()));
        expect(";");
        return first;
    }

    Nest segment() {
        Nest n;
        while (loop_start()) n.loops.push_back(loop());
        expect("[");
        do {
            n.body.push_back(item());
        } while (!at_end() && peek() != ']');
        expect("]");
        return n;
    }

    Item item() {
        if (loop_start() || peek() == '[') {
            Item it = Item::of(segment());
            if (peek() == ';') ++pos_;
            return it;
        }
        Equation e;
        e.lhs = tensor();
        expect("=");
        e.rhs = value();
        expect(";");
        return Item::of(std::move(e));
    }

    TensorRef tensor() {
        size_t b = pos_;
        if (!is_upper(peek())) fail("expected tensor name", {"tensor"});
        ++pos_;
        while (is_lower(peek())) ++pos_;
        TensorRef r;
        r.name = std::string(s_.substr(b, pos_ - b));
        expect("^{");
        if (is_reserved_name(r.name)) {
            pos_ = b;
            fail("reserved name '" + r.name + "' used as tensor", {"tensor"}, "ReservedName");
        }
        size_t d = pos_;
        while (!at_end() && peek() != ',' && peek() != '}') ++pos_;
        auto dt = parse_dtype(s_.substr(d, pos_ - d));
        if (!dt) {
            pos_ = d;
            fail("unknown dtype", {"f16", "f32", "f64", "i64", "b8"});
        }
        r.dtype = *dt;
        expect(",");
        size_t sc = pos_;
        while (!at_end() && peek() != '}') ++pos_;
        auto scope = parse_scope(s_.substr(sc, pos_ - sc));
        if (!scope) {
            pos_ = sc;
            fail("unknown memory scope", {"g", "s", "l"});
        }
        r.scope = *scope;
        expect("}");
        if (starts("_{")) {
            pos_ += 2;
            r.indices.push_back(index_add());
            while (peek() == ',') {
                ++pos_;
                r.indices.push_back(index_add());
            }
            expect("}");
        }
        return r;
    }

    Index index_add() {
        Index a = index_mul();
        while (peek() == '+' || peek() == '-') {
            char op = peek();
            ++pos_;
            Index b = index_mul();
            a = op == '+' ? ix_add(a, b) : ix_sub(a, b);
        }
        return a;
    }

    Index index_mul() {
        Index a = index_primary();
        while (peek() == '*') {
            ++pos_;
            a = ix_mul(a, index_primary());
        }
        return a;
    }

    Index index_primary() {
        char c = peek();
        if (c == '(') {
            ++pos_;
            Index a = index_add();
            expect(")");
            return a;
        }
        if (c == '-' && is_digit(peek(1))) return ix_const(integer());
        if (c == '-') {
            ++pos_;
            return ix_sub(ix_const(0), index_primary());
        }
        if (is_digit(c)) return ix_const(integer());
        if (is_lower(c)) return ix_var(lower_ident());
        if (is_upper(c)) return ix_read(tensor());
        fail("expected index expression", {"integer", "identifier", "(", "tensor"});
    }

    Value value() {
        Value a = cmp_expr();
        while (peek() == '&') {
            ++pos_;
            if (peek() == '&') ++pos_;
            a = v_bin(ValueOp::And, a, cmp_expr());
        }
        return a;
    }

    bool cmp_op(CmpOp& op) {
        if (starts("<=")) { op = CmpOp::Le; pos_ += 2; return true; }
        if (starts(">=")) { op = CmpOp::Ge; pos_ += 2; return true; }
        if (starts("==")) { op = CmpOp::Eq; pos_ += 2; return true; }
        if (starts("<")) { op = CmpOp::Lt; pos_ += 1; return true; }
        if (starts(">")) { op = CmpOp::Gt; pos_ += 1; return true; }
        return false;
    }

    Value cmp_expr() {
        Value a = add_expr();
        CmpOp op1;
        if (!cmp_op(op1)) return a;
        Value b = add_expr();
        CmpOp op2;
        if (!cmp_op(op2)) return v_cmp(op1, a, b);
        Value c = add_expr();
        return v_range(op1, a, b, op2, c);
    }

    Value add_expr() {
        Value a = mul_expr();
        while (peek() == '+' || peek() == '-') {
            char op = peek();
            ++pos_;
            Value b = mul_expr();
            a = op == '+' ? v_add(a, b) : v_sub(a, b);
        }
        return a;
    }

    Value mul_expr() {
        Value a = unary();
        while ((peek() == '*' && peek(1) != '*') || peek() == '/') {
            char op = peek();
            ++pos_;
            Value b = unary();
            a = op == '*' ? v_mul(a, b) : v_div(a, b);
        }
        return a;
    }

    Value unary() {
        if (peek() == '-') {
            ++pos_;
            if (is_digit(peek()) || peek() == '.' || starts("inf")) {
                Value c = number_or_inf();
                c = v_const(-c->num);
                return pow_tail(c);
            }
            return v_unary(ValueOp::Neg, unary());
        }
        return pow_tail(primary());
    }

    Value pow_tail(Value base) {
        if (starts("**")) {
            pos_ += 2;
            return v_bin(ValueOp::Pow, base, unary());
        }
        return base;
    }

    Value number_or_inf() {
        if (starts("inf") && !is_lower(peek(3)) && !is_digit(peek(3))) {
            pos_ += 3;
            return v_const(std::numeric_limits<double>::infinity());
        }
        size_t b = pos_;
        while (is_digit(peek())) ++pos_;
        if (peek() == '.') {
            ++pos_;
            while (is_digit(peek())) ++pos_;
        }
        if ((peek() == 'e' || peek() == 'E') &&
            (is_digit(peek(1)) || ((peek(1) == '-' || peek(1) == '+') && is_digit(peek(2))))) {
            pos_ += 2;
            while (is_digit(peek())) ++pos_;
        }
        if (pos_ == b) fail("expected number", {"number"});
        double v = 0;
        std::string tok(s_.substr(b, pos_ - b));
        if (tok.front() == '.') tok.insert(tok.begin(), '0');
        auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (r.ec != std::errc() && r.ec != std::errc::result_out_of_range) {
            pos_ = b;
            fail("malformed number", {"number"});
        }
        return v_const(v);
    }

    Value call(ValueOp op, size_t arity) {
        expect("(");
        std::vector<Value> args;
        args.push_back(value());
        while (peek() == ',') {
            ++pos_;
            args.push_back(value());
        }
        expect(")");
        if (args.size() != arity) fail("wrong number of arguments", {std::to_string(arity) + " args"});
        auto n = std::make_shared<ValueNode>();
        n->op = op;
        n->args = std::move(args);
        return n;
    }

    Value primary() {
        char c = peek();
        if (c == '(') {
            ++pos_;
            Value v = value();
            expect(")");
            return v;
        }
        if (is_digit(c) || c == '.') return number_or_inf();
        if (is_upper(c)) return v_read(tensor());
        if (is_lower(c)) {
            size_t b = pos_;
            if (starts("inf") && !is_lower(peek(3)) && !is_digit(peek(3)) && peek(3) != '_') {
                return number_or_inf();
            }
            std::string id = lower_ident();
            if (peek() == '(') {
                if (id == "exp") return call(ValueOp::Exp, 1);
                if (id == "log") return call(ValueOp::Log, 1);
                if (id == "sqrt") return call(ValueOp::Sqrt, 1);
                if (id == "abs") return call(ValueOp::Abs, 1);
                if (id == "max") return call(ValueOp::Max, 2);
                if (id == "min") return call(ValueOp::Min, 2);
                if (id == "if_then_else") return call(ValueOp::Ite, 3);
                pos_ = b;
                fail("unknown function '" + id + "'",
                     {"exp", "log", "sqrt", "abs", "max", "min", "if_then_else"});
            }
            return v_var(id);
        }
        fail("expected value", {"number", "tensor", "identifier", "(", "-"});
    }
};

enum Prec { kAnd = 1, kCmp = 2, kAdd = 3, kMul = 4, kNeg = 5, kPow = 6, kAtom = 7 };

int prec(const Value& v) {
    switch (v->op) {
        case ValueOp::And: return kAnd;
        case ValueOp::Cmp:
        case ValueOp::Range: return kCmp;
        case ValueOp::Add:
        case ValueOp::Sub: return kAdd;
        case ValueOp::Mul:
        case ValueOp::Div: return kMul;
        case ValueOp::Neg: return kNeg;
        case ValueOp::Pow: return kPow;
        case ValueOp::Const: return v->num < 0 || std::signbit(v->num) ? kNeg : kAtom;
        default: return kAtom;
    }
}

bool leftmost_is_number(const Value& v) {
    switch (v->op) {
        case ValueOp::Const: return true;
        case ValueOp::Add: case ValueOp::Sub: case ValueOp::Mul: case ValueOp::Div:
        case ValueOp::Pow: case ValueOp::Cmp: case ValueOp::Range: case ValueOp::And:
            return leftmost_is_number(v->args[0]);
        default: return false;
    }
}

void emit(const Value& v, std::string& out);

void emit_paren(const Value& v, bool paren, std::string& out) {
    if (paren) out.push_back('(');
    emit(v, out);
    if (paren) out.push_back(')');
}

void emit_call(std::string_view name, const Value& v, std::string& out) {
    out.append(name);
    out.push_back('(');
    for (size_t i = 0; i < v->args.size(); ++i) {
        if (i) out.push_back(',');
        emit(v->args[i], out);
    }
    out.push_back(')');
}

void emit(const Value& v, std::string& out) {
    switch (v->op) {
        case ValueOp::Const: out += format_number(v->num); return;
        case ValueOp::Read: out += print(v->ref); return;
        case ValueOp::Var: out += v->var; return;
        case ValueOp::Neg: {
            out.push_back('-');
            const Value& a = v->args[0];
            emit_paren(a, prec(a) < kPow || leftmost_is_number(a), out);
            return;
        }
        case ValueOp::Add:
        case ValueOp::Sub:
        case ValueOp::Mul:
        case ValueOp::Div: {
            int p = prec(v);
            emit_paren(v->args[0], prec(v->args[0]) < p, out);
            out.push_back(v->op == ValueOp::Add ? '+' : v->op == ValueOp::Sub ? '-'
                          : v->op == ValueOp::Mul ? '*' : '/');
            emit_paren(v->args[1], prec(v->args[1]) <= p && prec(v->args[1]) != kNeg, out);
            return;
        }
        case ValueOp::Pow: {
            const Value& a = v->args[0];
            bool base_paren = prec(a) <= kPow && !(a->op == ValueOp::Const);
            emit_paren(a, base_paren, out);
            out += "**";
            emit_paren(v->args[1], prec(v->args[1]) < kNeg, out);
            return;
        }
        case ValueOp::Exp: emit_call("exp", v, out); return;
        case ValueOp::Log: emit_call("log", v, out); return;
        case ValueOp::Sqrt: emit_call("sqrt", v, out); return;
        case ValueOp::Abs: emit_call("abs", v, out); return;
        case ValueOp::Max: emit_call("max", v, out); return;
        case ValueOp::Min: emit_call("min", v, out); return;
        case ValueOp::Ite: emit_call("if_then_else", v, out); return;
        case ValueOp::Cmp:
            emit_paren(v->args[0], prec(v->args[0]) <= kCmp, out);
            out += to_string(v->cmp);
            emit_paren(v->args[1], prec(v->args[1]) <= kCmp, out);
            return;
        case ValueOp::Range:
            emit_paren(v->args[0], prec(v->args[0]) <= kCmp, out);
            out += to_string(v->cmp);
            emit_paren(v->args[1], prec(v->args[1]) <= kCmp, out);
            out += to_string(v->cmp2);
            emit_paren(v->args[2], prec(v->args[2]) <= kCmp, out);
            return;
        case ValueOp::And:
            emit_paren(v->args[0], prec(v->args[0]) < kAnd, out);
            out.push_back('&');
            emit_paren(v->args[1], prec(v->args[1]) <= kAnd, out);
            return;
    }
}

int iprec(const Index& ix) {
    switch (ix->op) {
        case IndexNode::Op::Add:
        case IndexNode::Op::Sub: return kAdd;
        case IndexNode::Op::Mul: return kMul;
        case IndexNode::Op::Const: return ix->value < 0 ? kNeg : kAtom;
        default: return kAtom;
    }
}

void emit_index(const Index& ix, std::string& out) {
    switch (ix->op) {
        case IndexNode::Op::Const: out += std::to_string(ix->value); return;
        case IndexNode::Op::Var: out += ix->name; return;
        case IndexNode::Op::Read: out += print(*ix->ref); return;
        default: break;
    }
    int p = iprec(ix);
    bool lp = iprec(ix->a) < p && iprec(ix->a) != kNeg;
    // A leading zero-minus is the unary form written by the parser.
    if (ix->op == IndexNode::Op::Sub && ix->a->op == IndexNode::Op::Const && ix->a->value == 0 &&
        iprec(ix->b) >= kMul && ix->b->op != IndexNode::Op::Const) {
        out.push_back('-');
        bool rp = iprec(ix->b) < kAtom;
        if (rp) out.push_back('(');
        emit_index(ix->b, out);
        if (rp) out.push_back(')');
        return;
    }
    if (lp) out.push_back('(');
    emit_index(ix->a, out);
    if (lp) out.push_back(')');
    out.push_back(ix->op == IndexNode::Op::Add ? '+' : ix->op == IndexNode::Op::Sub ? '-' : '*');
    bool rp = iprec(ix->b) <= p || iprec(ix->b) == kNeg;
    if (rp) out.push_back('(');
    emit_index(ix->b, out);
    if (rp) out.push_back(')');
}

void emit_nest(const Nest& n, std::string& out) {
    for (const auto& l : n.loops) out += print(l);
    out.push_back('[');
    for (const auto& it : n.body) {
        if (it.is_eq) {
            out += print(it.eq);
        } else {
            emit_nest(it.nest(), out);
        }
        out.push_back(';');
    }
    out.push_back(']');
}

}  // namespace

std::string format_number(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (std::isnan(v)) return "nan";
    if (v == 0) v = 0;  // drop negative zero
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

Program parse_ast(std::string_view text) { return Parser(text).program(); }

Program parse(std::string_view text) {
    Program p = parse_ast(text);
    p.io = infer_io(p);
    return p;
}

Value parse_value(std::string_view text) { return Parser(text).whole_value(); }

std::string print(const LoopHeader& l) {
    std::string s(1, loop_kind_char(l.kind));
    s += "^{" + std::to_string(l.extent) + "}_{" + l.index + "=" + std::to_string(l.start) + "}";
    return s;
}

std::string print(const Index& ix) {
    std::string s;
    emit_index(ix, s);
    return s;
}

std::string print(const TensorRef& r) {
    std::string s = r.name;
    s += "^{";
    s += to_string(r.dtype);
    s += ',';
    s += to_string(r.scope);
    s += '}';
    if (!r.indices.empty()) {
        s += "_{";
        for (size_t i = 0; i < r.indices.size(); ++i) {
            if (i) s += ',';
            emit_index(r.indices[i], s);
        }
        s += '}';
    }
    return s;
}

std::string print(const Value& v) {
    std::string s;
    emit(v, s);
    return s;
}

std::string print(const Equation& e) { return print(e.lhs) + "=" + print(e.rhs); }

std::string print(const Nest& n) {
    std::string s;
    emit_nest(n, s);
    return s;
}

std::string print(const Program& p) {
    std::string s;
    for (const auto& n : p.exprs) {
        emit_nest(n, s);
        s.push_back(';');
    }
    return s;
}

ByteStats byte_stats(std::string_view text) {
    ByteStats st;
    st.bytes = text.size();
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) ++st.nonspace_bytes;
    }
    return st;
}

}  // namespace leir
