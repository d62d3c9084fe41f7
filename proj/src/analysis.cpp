// SPDX-License-Identifier: Apache-2.0

#include "leir/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "leir/syntax.hpp"

namespace leir {

std::optional<Interval> index_interval(const Index& ix,
                                       const std::map<std::string, Interval>& vars) {
    switch (ix->op) {
        case IndexNode::Op::Const: return Interval{ix->value, ix->value};
        case IndexNode::Op::Var: {
            auto it = vars.find(ix->name);
            if (it == vars.end()) return std::nullopt;
            return it->second;
        }
        case IndexNode::Op::Read: return std::nullopt;
        default: break;
    }
    auto a = index_interval(ix->a, vars);
    auto b = index_interval(ix->b, vars);
    if (!a || !b) return std::nullopt;
    switch (ix->op) {
        case IndexNode::Op::Add: return Interval{a->lo + b->lo, a->hi + b->hi};
        case IndexNode::Op::Sub: return Interval{a->lo - b->hi, a->hi - b->lo};
        default: {
            int64_t c[4] = {a->lo * b->lo, a->lo * b->hi, a->hi * b->lo, a->hi * b->hi};
            return Interval{*std::min_element(c, c + 4), *std::max_element(c, c + 4)};
        }
    }
}

namespace {

struct Access {
    const TensorRef* ref;
    bool write;
    bool guarded;  // under an if_then_else branch
    std::map<std::string, Interval> vars;
    const Equation* eq;
    std::string path;
};

void value_accesses(const Value& v, bool guarded, const std::map<std::string, Interval>& vars,
                    const Equation* eq, const std::string& path, std::vector<Access>& out);

void index_accesses(const Index& ix, bool guarded, const std::map<std::string, Interval>& vars,
                    const Equation* eq, const std::string& path, std::vector<Access>& out) {
    if (!ix) return;
    if (ix->op == IndexNode::Op::Read) {
        out.push_back({ix->ref.get(), false, guarded, vars, eq, path});
        for (const auto& s : ix->ref->indices) index_accesses(s, guarded, vars, eq, path, out);
        return;
    }
    index_accesses(ix->a, guarded, vars, eq, path, out);
    index_accesses(ix->b, guarded, vars, eq, path, out);
}

void value_accesses(const Value& v, bool guarded, const std::map<std::string, Interval>& vars,
                    const Equation* eq, const std::string& path, std::vector<Access>& out) {
    if (v->op == ValueOp::Read) {
        out.push_back({&v->ref, false, guarded, vars, eq, path});
        for (const auto& ix : v->ref.indices) index_accesses(ix, guarded, vars, eq, path, out);
        return;
    }
    if (v->op == ValueOp::Ite) {
        value_accesses(v->args[0], guarded, vars, eq, path, out);
        value_accesses(v->args[1], true, vars, eq, path, out);
        value_accesses(v->args[2], true, vars, eq, path, out);
        return;
    }
    for (const auto& a : v->args) value_accesses(a, guarded, vars, eq, path, out);
}

void nest_accesses(const Nest& n, std::map<std::string, Interval> vars, const std::string& path,
                   std::vector<Access>& out) {
    for (const auto& l : n.loops) vars[l.index] = {l.start, l.start + l.extent - 1};
    for (size_t i = 0; i < n.body.size(); ++i) {
        const Item& it = n.body[i];
        if (it.is_eq) {
            std::string p = path + "/eq[" + std::to_string(i) + "]";
            out.push_back({&it.eq.lhs, true, false, vars, &it.eq, p + "/lhs"});
            for (const auto& ix : it.eq.lhs.indices) index_accesses(ix, false, vars, &it.eq, p + "/lhs", out);
            value_accesses(it.eq.rhs, false, vars, &it.eq, p + "/rhs", out);
        } else {
            nest_accesses(it.nest(), vars, path + "/nest[" + std::to_string(i) + "]", out);
        }
    }
}

std::vector<Access> all_accesses(const Program& p) {
    std::vector<Access> out;
    for (size_t i = 0; i < p.exprs.size(); ++i) {
        nest_accesses(p.exprs[i], {}, "expr[" + std::to_string(i) + "]", out);
    }
    return out;
}

}  // namespace

std::map<std::string, IoEntry> infer_io(const Program& p,
                                        const std::map<std::string, IoEntry>& declared) {
    std::map<std::string, IoEntry> io;
    std::set<std::string> written;
    std::set<std::string> read_elsewhere;
    std::set<std::string> read;
    std::map<std::string, std::vector<int64_t>> hi;
    for (const Access& a : all_accesses(p)) {
        const TensorRef& r = *a.ref;
        if (!io.count(r.name)) io[r.name].dtype = r.dtype;
        auto& h = hi[r.name];
        if (h.size() < r.indices.size()) h.resize(r.indices.size(), 0);
        for (size_t k = 0; k < r.indices.size(); ++k) {
            auto iv = index_interval(r.indices[k], a.vars);
            if (iv) h[k] = std::max(h[k], iv->hi);
        }
        if (a.write) {
            written.insert(r.name);
        } else {
            read.insert(r.name);
            if (a.eq->lhs.name != r.name) read_elsewhere.insert(r.name);
        }
    }
    for (auto& [name, e] : io) {
        for (int64_t v : hi[name]) e.shape.push_back(std::max<int64_t>(v + 1, 1));
        if (!written.count(name)) {
            e.role = Role::Input;
        } else if (read_elsewhere.count(name)) {
            e.role = Role::Intermediate;
        } else {
            e.role = Role::Output;
        }
    }
    for (const auto& [name, e] : declared) {
        if (io.count(name)) io[name] = e;
    }
    return io;
}

std::string_view to_string(Combiner c) {
    switch (c) {
        case Combiner::Sum: return "sum";
        case Combiner::Product: return "product";
        case Combiner::Max: return "max";
        case Combiner::Min: return "min";
    }
    return "sum";
}

double identity_of(Combiner c) {
    switch (c) {
        case Combiner::Sum: return 0.0;
        case Combiner::Product: return 1.0;
        case Combiner::Max: return -std::numeric_limits<double>::infinity();
        case Combiner::Min: return std::numeric_limits<double>::infinity();
    }
    return 0.0;
}

namespace {

size_t count_ref(const Value& v, const TensorRef& lhs) {
    size_t n = (v->op == ValueOp::Read && equal(v->ref, lhs)) ? 1 : 0;
    for (const auto& a : v->args) n += count_ref(a, lhs);
    return n;
}

bool is_lhs(const Value& v, const TensorRef& lhs) {
    return v->op == ValueOp::Read && equal(v->ref, lhs);
}

// Counts direct positive-position occurrences of lhs in a flattened chain.
size_t chain_hits(const Value& v, const TensorRef& lhs, ValueOp pos, ValueOp neg, bool positive) {
    if (v->op == pos) {
        return chain_hits(v->args[0], lhs, pos, neg, positive) +
               chain_hits(v->args[1], lhs, pos, neg, positive);
    }
    if (v->op == neg) {
        return chain_hits(v->args[0], lhs, pos, neg, positive) +
               chain_hits(v->args[1], lhs, pos, neg, false);
    }
    return positive && is_lhs(v, lhs) ? 1 : 0;
}

size_t minmax_hits(const Value& v, const TensorRef& lhs, ValueOp op) {
    if (v->op == op) return minmax_hits(v->args[0], lhs, op) + minmax_hits(v->args[1], lhs, op);
    return is_lhs(v, lhs) ? 1 : 0;
}

ReductionInfo classify_impl(const Equation& eq, const std::vector<std::string>& loop_indices) {
    ReductionInfo info;
    size_t total = count_ref(eq.rhs, eq.lhs);
    if (total == 0) return info;
    std::set<std::string> lhs_vars;
    for (const auto& ix : eq.lhs.indices) collect_index_vars(ix, lhs_vars);
    std::set<std::string> axes;
    for (const auto& name : loop_indices) {
        if (!lhs_vars.count(name)) axes.insert(name);
    }
    std::optional<Combiner> comb;
    const Value& r = eq.rhs;
    if (total == 1) {
        if ((r->op == ValueOp::Add || r->op == ValueOp::Sub) &&
            chain_hits(r, eq.lhs, ValueOp::Add, ValueOp::Sub, true) == 1) {
            comb = Combiner::Sum;
        } else if ((r->op == ValueOp::Mul || r->op == ValueOp::Div) &&
                   chain_hits(r, eq.lhs, ValueOp::Mul, ValueOp::Div, true) == 1) {
            comb = Combiner::Product;
        } else if (r->op == ValueOp::Max && minmax_hits(r, eq.lhs, ValueOp::Max) == 1) {
            comb = Combiner::Max;
        } else if (r->op == ValueOp::Min && minmax_hits(r, eq.lhs, ValueOp::Min) == 1) {
            comb = Combiner::Min;
        }
    }
    if (axes.empty()) return info;
    if (!comb) {
        throw Error("AmbiguousCombiner",
                    "left-hand side " + eq.lhs.name + " is not combined through a single top-level operator");
    }
    info.is_reduction = true;
    info.combiner = comb;
    info.identity = identity_of(*comb);
    info.reduction_axes = std::move(axes);
    return info;
}

}  // namespace

ReductionInfo classify_reduction(const Equation& eq, const std::vector<LoopHeader>& scope_loops) {
    std::vector<std::string> names;
    for (const auto& l : scope_loops) names.push_back(l.index);
    return classify_impl(eq, names);
}

ReductionInfo classify_reduction(const Equation& eq, const std::vector<const LoopHeader*>& scope_loops) {
    std::vector<std::string> names;
    for (const auto* l : scope_loops) names.push_back(l->index);
    return classify_impl(eq, names);
}

namespace {

void nest_writes(const Nest& n, std::set<std::string>& out) {
    for (const auto& it : n.body) {
        if (it.is_eq) {
            out.insert(it.eq.lhs.name);
        } else {
            nest_writes(it.nest(), out);
        }
    }
}

void nest_reads(const Nest& n, std::set<std::string>& out) {
    for (const auto& it : n.body) {
        if (it.is_eq) {
            std::vector<const TensorRef*> refs;
            collect_reads(it.eq.rhs, refs);
            for (const auto& ix : it.eq.lhs.indices) collect_reads(ix, refs);
            for (const auto* r : refs) out.insert(r->name);
        } else {
            nest_reads(it.nest(), out);
        }
    }
}

}  // namespace

std::set<std::string> writes_of(const Nest& n) {
    std::set<std::string> s;
    nest_writes(n, s);
    return s;
}

std::set<std::string> reads_of(const Nest& n) {
    std::set<std::string> s;
    nest_reads(n, s);
    return s;
}

DependencyGraph dependency_graph(const Program& p) {
    DependencyGraph g;
    g.nodes = p.exprs.size();
    std::vector<std::set<std::string>> w;
    for (const auto& n : p.exprs) w.push_back(writes_of(n));
    for (size_t j = 0; j < p.exprs.size(); ++j) {
        for (const auto& t : reads_of(p.exprs[j])) {
            for (size_t i = j; i-- > 0;) {
                if (w[i].count(t)) {
                    g.edges.insert({i, j});
                    break;
                }
            }
        }
    }
    return g;
}

namespace {

bool condition_ok(const Value& v) {
    switch (v->op) {
        case ValueOp::Cmp: case ValueOp::Range: case ValueOp::And: case ValueOp::Const:
        case ValueOp::Var: case ValueOp::Add: case ValueOp::Sub: case ValueOp::Mul:
        case ValueOp::Neg:
            break;
        default: return false;
    }
    for (const auto& a : v->args) {
        if (!condition_ok(a)) return false;
    }
    return true;
}

class Validator {
  public:
    explicit Validator(const Program& p) : p_(p) {}

    std::vector<Diagnostic> run() {
        for (size_t i = 0; i < p_.exprs.size(); ++i) {
            std::string path = "expr[" + std::to_string(i) + "]";
            if (p_.exprs[i].loops.empty()) add("EmptyTopLevelLoops", path, "top-level expression has no loops");
            std::vector<const LoopHeader*> stack;
            nest(p_.exprs[i], stack, path);
        }
        tensors();
        return std::move(diags_);
    }

  private:
    const Program& p_;
    std::vector<Diagnostic> diags_;
    std::map<std::string, const TensorRef*> first_ref_;

    void add(std::string code, std::string path, std::string msg) {
        diags_.push_back({std::move(code), std::move(path), std::move(msg)});
    }

    void loop(const LoopHeader& l, const std::string& path) {
        auto target = bind_target_of(l.index);
        if (l.index.find('e') != std::string::npos) {
            add("BadIndexName", path, "index '" + l.index + "' uses the letter e");
        }
        if (l.kind == LoopKind::Binding) {
            if (!target || (l.bind && *l.bind != *target)) {
                add("BindingKindMismatch", path, "binding loop index '" + l.index + "' lacks a bx/by/bz/tx/ty/tz prefix");
            } else if (l.extent > bind_cap(*target)) {
                add("BindingCapExceeded", path,
                    "extent " + std::to_string(l.extent) + " exceeds the " + std::string(bind_prefix(*target)) +
                        " cap " + std::to_string(bind_cap(*target)));
            }
        } else if (target) {
            add("BindingKindMismatch", path, "non-binding loop uses binding index '" + l.index + "'");
        } else if (!l.index.empty() && std::string_view("tbxyz").find(l.index[0]) != std::string_view::npos) {
            add("BadIndexName", path, "index '" + l.index + "' starts with a binding letter");
        }
        if (l.extent < 1) add("NonPositiveExtent", path, "loop extent must be positive");
    }

    void nest(const Nest& n, std::vector<const LoopHeader*>& stack, const std::string& path) {
        for (size_t k = 0; k < n.loops.size(); ++k) {
            const LoopHeader& l = n.loops[k];
            std::string lp = path + "/loop[" + std::to_string(k) + "]";
            loop(l, lp);
            for (const auto* s : stack) {
                if (s->index == l.index) add("DuplicateLoopIndex", lp, "index '" + l.index + "' repeated on a path");
            }
            stack.push_back(&l);
        }
        for (size_t i = 0; i < n.body.size(); ++i) {
            const Item& it = n.body[i];
            if (it.is_eq) {
                equation(it.eq, stack, path + "/eq[" + std::to_string(i) + "]");
            } else {
                nest(it.nest(), stack, path + "/nest[" + std::to_string(i) + "]");
            }
        }
        stack.resize(stack.size() - n.loops.size());
    }

    void ref(const TensorRef& r, const std::set<std::string>& scope, const std::string& path) {
        if (is_reserved_name(r.name)) add("ReservedName", path, "tensor name '" + r.name + "' is reserved");
        auto it = first_ref_.find(r.name);
        if (it == first_ref_.end()) {
            first_ref_[r.name] = &r;
        } else {
            const TensorRef& f = *it->second;
            if (f.indices.size() != r.indices.size()) add("RankMismatch", path, "tensor '" + r.name + "' used with different ranks");
            if (f.dtype != r.dtype) add("DTypeMismatch", path, "tensor '" + r.name + "' used with different dtypes");
            if (f.scope != r.scope) add("ScopeMismatch", path, "tensor '" + r.name + "' used with different scopes");
        }
        std::set<std::string> used;
        for (const auto& ix : r.indices) {
            collect_index_vars(ix, used);
            std::vector<const TensorRef*> gathers;
            collect_reads(ix, gathers);
            for (const auto* g : gathers) {
                if (g->dtype != DType::I64) add("BadGather", path, "index source '" + g->name + "' is not i64");
                ref(*g, scope, path);
            }
        }
        for (const auto& u : used) {
            if (!scope.count(u)) add("UnboundIndex", path, "index '" + u + "' is not bound by an enclosing loop");
        }
    }

    void value(const Value& v, const std::set<std::string>& scope, const std::string& path) {
        if (v->op == ValueOp::Read) {
            ref(v->ref, scope, path);
            return;
        }
        if (v->op == ValueOp::Var && !scope.count(v->var)) {
            add("UnboundIndex", path, "index '" + v->var + "' is not bound by an enclosing loop");
        }
        if (v->op == ValueOp::Ite && !condition_ok(v->args[0])) {
            add("IllegalCondition", path, "if_then_else condition must be index arithmetic and comparisons");
        }
        for (const auto& a : v->args) value(a, scope, path);
    }

    void equation(const Equation& eq, const std::vector<const LoopHeader*>& stack, const std::string& path) {
        std::set<std::string> scope;
        for (const auto* l : stack) scope.insert(l->index);
        ref(eq.lhs, scope, path + "/lhs");
        value(eq.rhs, scope, path + "/rhs");
        try {
            (void)classify_reduction(eq, stack);
        } catch (const Error& e) {
            add(e.code(), path, e.what());
        }
    }

    void tensors() {
        std::set<std::string> written;
        for (const auto& v : equations(p_)) written.insert(v.eq->lhs.name);
        for (const auto& [name, r] : first_ref_) {
            auto it = p_.io.find(name);
            if (it == p_.io.end()) {
                add("UnknownTensor", name, "tensor '" + name + "' has no io entry");
                continue;
            }
            if (it->second.shape.size() != r->indices.size()) {
                add("RankMismatch", name, "io shape rank differs from use of '" + name + "'");
            }
            if (it->second.dtype != r->dtype) add("DTypeMismatch", name, "io dtype differs for '" + name + "'");
        }
        for (const auto& [name, e] : p_.io) {
            if (e.role == Role::Input && written.count(name)) add("RoleViolation", name, "input '" + name + "' is written");
            if (e.role == Role::Output && !written.count(name)) add("UnwrittenOutput", name, "output '" + name + "' is never written");
            for (int64_t d : e.shape) {
                if (d < 1) add("NonPositiveExtent", name, "io shape of '" + name + "' has a non-positive axis");
            }
        }
        for (const Access& a : all_accesses(p_)) {
            if (a.guarded) continue;
            auto it = p_.io.find(a.ref->name);
            if (it == p_.io.end() || it->second.shape.size() != a.ref->indices.size()) continue;
            for (size_t k = 0; k < a.ref->indices.size(); ++k) {
                auto iv = index_interval(a.ref->indices[k], a.vars);
                if (!iv) continue;
                if (iv->lo < 0 || iv->hi >= it->second.shape[k]) {
                    add("ShapeOverflow", a.path,
                        "access to '" + a.ref->name + "' axis " + std::to_string(k) + " spans [" +
                            std::to_string(iv->lo) + "," + std::to_string(iv->hi) + "] outside shape " +
                            std::to_string(it->second.shape[k]));
                }
            }
        }
    }
};

}  // namespace

std::vector<Diagnostic> validate(const Program& p) { return Validator(p).run(); }

nlohmann::json io_to_json(const std::map<std::string, IoEntry>& io) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [name, e] : io) {
        j[name] = {{"dtype", std::string(to_string(e.dtype))},
                   {"shape", e.shape},
                   {"role", std::string(to_string(e.role))}};
    }
    return j;
}

std::map<std::string, IoEntry> io_from_json(const nlohmann::json& j) {
    std::map<std::string, IoEntry> io;
    for (const auto& [name, v] : j.items()) {
        IoEntry e;
        auto dt = parse_dtype(v.at("dtype").get<std::string>());
        if (!dt) throw Error("ParseError", "unknown dtype for io entry '" + name + "'");
        e.dtype = *dt;
        e.shape = v.at("shape").get<std::vector<int64_t>>();
        std::string role = v.value("role", "input");
        e.role = role == "output" ? Role::Output : role == "intermediate" ? Role::Intermediate : Role::Input;
        io[name] = e;
    }
    return io;
}

ProgramFile load_program_text(const std::string& text, const std::string& fallback_name) {
    size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed program JSON: ") + e.what(), {0, text.size()}, {"json"});
        }
        ProgramFile f;
        f.name = j.value("name", fallback_name);
        f.program = parse_ast(j.at("leir").get<std::string>());
        std::map<std::string, IoEntry> declared;
        if (j.contains("io")) declared = io_from_json(j["io"]);
        f.program.io = infer_io(f.program, declared);
        return f;
    }
    return {fallback_name, parse(text)};
}

std::string save_program_json(const std::string& name, const Program& p) {
    nlohmann::json j = {{"name", name}, {"leir", print(p)}, {"io", io_to_json(p.io)}};
    return j.dump();
}

}  // namespace leir
