// SPDX-License-Identifier: Apache-2.0
//
// LEIR abstract syntax: loop nests over bracketed bodies of equations.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace leir {

// Base error type; `code` is a stable identifier (ParseError, ApplyFailed, ...).
class Error : public std::runtime_error {
  public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}
    const std::string& code() const { return code_; }

  private:
    std::string code_;
};

enum class DType { F16, F32, F64, I64, B8 };
enum class MemScope { Global, Shared, Local };
enum class LoopKind { Serial, Parallel, Vectorized, Unrolled, Binding };
enum class BindTarget { BlockX, BlockY, BlockZ, ThreadX, ThreadY, ThreadZ };
enum class Role { Input, Output, Intermediate };

std::string_view to_string(DType d);
std::string_view to_string(MemScope s);
std::string_view to_string(Role r);
std::optional<DType> parse_dtype(std::string_view s);
std::optional<MemScope> parse_scope(std::string_view s);
char loop_kind_char(LoopKind k);
std::string_view bind_prefix(BindTarget t);
// Binding target implied by an index name prefix (bx, by, bz, tx, ty, tz).
std::optional<BindTarget> bind_target_of(std::string_view index);
int64_t bind_cap(BindTarget t);

// Tensor names excluded from use: loop kinds plus T.
bool is_reserved_name(std::string_view name);

struct LoopHeader {
    LoopKind kind = LoopKind::Serial;
    std::optional<BindTarget> bind;
    std::string index;
    int64_t start = 0;
    int64_t extent = 1;

    bool operator==(const LoopHeader&) const = default;
};

struct TensorRef;
struct IndexNode;
using Index = std::shared_ptr<const IndexNode>;

// Integer index arithmetic. `Read` is a gather through an I64 tensor.
struct IndexNode {
    enum class Op { Const, Var, Add, Sub, Mul, Read };
    Op op = Op::Const;
    int64_t value = 0;
    std::string name;
    Index a, b;
    std::shared_ptr<const TensorRef> ref;
};

Index ix_const(int64_t v);
Index ix_var(std::string name);
Index ix_bin(IndexNode::Op op, Index a, Index b);
Index ix_add(Index a, Index b);
Index ix_sub(Index a, Index b);
Index ix_mul(Index a, Index b);
Index ix_read(const TensorRef& ref);

struct TensorRef {
    std::string name;
    DType dtype = DType::F32;
    MemScope scope = MemScope::Global;
    std::vector<Index> indices;
};

enum class CmpOp { Lt, Le, Gt, Ge, Eq };
std::string_view to_string(CmpOp op);

enum class ValueOp {
    Const, Read, Var, Neg, Add, Sub, Mul, Div, Pow,
    Exp, Log, Sqrt, Abs, Max, Min, Cmp, Range, And, Ite
};

struct ValueNode;
using Value = std::shared_ptr<const ValueNode>;

// Element-wise expression. Range is `args[0] cmp args[1] cmp2 args[2]`.
struct ValueNode {
    ValueOp op = ValueOp::Const;
    double num = 0.0;
    TensorRef ref;
    std::string var;
    CmpOp cmp = CmpOp::Lt;
    CmpOp cmp2 = CmpOp::Lt;
    std::vector<Value> args;
};

Value v_const(double v);
Value v_read(TensorRef ref);
Value v_var(std::string name);
Value v_unary(ValueOp op, Value a);
Value v_bin(ValueOp op, Value a, Value b);
Value v_add(Value a, Value b);
Value v_sub(Value a, Value b);
Value v_mul(Value a, Value b);
Value v_div(Value a, Value b);
Value v_cmp(CmpOp op, Value a, Value b);
Value v_range(CmpOp op1, Value lo, Value x, CmpOp op2, Value hi);
Value v_ite(Value c, Value t, Value f);
Value v_with_args(const ValueNode& base, std::vector<Value> args);

struct Equation {
    TensorRef lhs;
    Value rhs;
};

struct Nest;

// One body item: an equation or a nested loop group.
struct Item {
    bool is_eq = true;
    Equation eq;
    std::vector<Nest> sub;  // exactly one element when !is_eq

    static Item of(Equation e);
    static Item of(Nest n);
    Nest& nest();
    const Nest& nest() const;
};

struct Nest {
    std::vector<LoopHeader> loops;
    std::vector<Item> body;
};

struct IoEntry {
    DType dtype = DType::F32;
    std::vector<int64_t> shape;
    Role role = Role::Input;

    bool operator==(const IoEntry&) const = default;
};

struct Program {
    std::vector<Nest> exprs;
    std::map<std::string, IoEntry> io;
};

// Structural equality of ASTs; io metadata is not compared.
bool structural_eq(const Program& a, const Program& b);
bool equal(const Index& a, const Index& b);
bool equal(const TensorRef& a, const TensorRef& b);
bool equal(const Value& a, const Value& b);
bool equal(const Equation& a, const Equation& b);
bool equal(const Nest& a, const Nest& b);

struct Symbols {
    std::set<std::string> tensors;
    std::set<std::string> indices;
};
Symbols free_symbols(const Program& p);

// Visitors over every equation with the loop headers enclosing it.
struct EqVisit {
    const Equation* eq;
    std::vector<const LoopHeader*> loops;
    size_t expr;
};
std::vector<EqVisit> equations(const Program& p);
std::vector<EqVisit> equations(const Nest& n, size_t expr_index);

// Every tensor reference (including gather sources) inside a value or index.
void collect_reads(const Value& v, std::vector<const TensorRef*>& out);
void collect_reads(const Index& ix, std::vector<const TensorRef*>& out);
void collect_index_vars(const Index& ix, std::set<std::string>& out);
void collect_value_vars(const Value& v, std::set<std::string>& out);

}  // namespace leir
