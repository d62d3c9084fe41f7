// SPDX-License-Identifier: Apache-2.0

#include "leir/interp.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <random>
#include <sstream>

#include "leir/hash.hpp"

namespace leir {

size_t element_count(const std::vector<int64_t>& shape) {
    size_t n = 1;
    for (int64_t d : shape) n *= static_cast<size_t>(std::max<int64_t>(d, 0));
    return n;
}

namespace {

std::string format_index(const std::string& t, const std::vector<int64_t>& ix) {
    std::ostringstream os;
    os << "out-of-bounds access " << t << "[";
    for (size_t i = 0; i < ix.size(); ++i) os << (i ? "," : "") << ix[i];
    os << "]";
    return os.str();
}

}  // namespace

OutOfBounds::OutOfBounds(std::string tensor, std::vector<int64_t> index)
    : Error("OutOfBounds", format_index(tensor, index)), tensor_(std::move(tensor)), index_(std::move(index)) {}

namespace {

constexpr size_t kMaxRank = 16;

struct CRef;

struct CIndex {
    IndexNode::Op op = IndexNode::Op::Const;
    int64_t value = 0;
    int slot = -1;
    const CIndex* a = nullptr;
    const CIndex* b = nullptr;
    const CRef* ref = nullptr;
};

struct CRef {
    int tensor = -1;
    std::vector<const CIndex*> idx;
};

struct CValue {
    ValueOp op = ValueOp::Const;
    double num = 0.0;
    const CRef* ref = nullptr;
    int slot = -1;
    CmpOp cmp = CmpOp::Lt;
    CmpOp cmp2 = CmpOp::Lt;
    std::vector<const CValue*> args;
};

struct CEq {
    const CRef* lhs = nullptr;
    const CValue* rhs = nullptr;
    bool reduction = false;
    double identity = 0.0;
};

struct CNest;

struct CItem {
    const CEq* eq = nullptr;
    const CNest* nest = nullptr;
};

struct CLoop {
    int slot;
    int64_t start;
    int64_t extent;
};

struct CNest {
    std::vector<CLoop> loops;
    std::vector<CItem> body;
};

bool compare(CmpOp op, double a, double b) {
    switch (op) {
        case CmpOp::Lt: return a < b;
        case CmpOp::Le: return a <= b;
        case CmpOp::Gt: return a > b;
        case CmpOp::Ge: return a >= b;
        case CmpOp::Eq: return a == b;
    }
    return false;
}

double nan_max(double a, double b) {
    if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
    return a > b ? a : b;
}

double nan_min(double a, double b) {
    if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
    return a < b ? a : b;
}

class Machine {
  public:
    Machine(const Program& p, Env& env, std::vector<Diagnostic>* warnings)
        : program_(p), env_(env), warnings_(warnings) {
        for (const auto& [name, entry] : p.io) {
            auto it = env_.tensors.find(name);
            if (it == env_.tensors.end()) {
                if (entry.role == Role::Input) throw Error("MissingInput", "missing input tensor " + name);
                Tensor t;
                t.shape = entry.shape;
                t.data.assign(element_count(entry.shape), 0.0);
                it = env_.tensors.emplace(name, std::move(t)).first;
            }
            int id = tensor_id(name);
            inputs_[id] = entry.role == Role::Input;
        }
        for (size_t i = 0; i < names_.size(); ++i) {
            auto it = env_.tensors.find(names_[i]);
            bufs_[i] = &it->second;
            if (it->second.data.size() != element_count(it->second.shape)) {
                throw Error("BadEnv", "buffer size does not match shape for " + names_[i]);
            }
            if (!inputs_[i] && warnings_) written_[i].assign(it->second.data.size(), 0);
        }
        for (const Nest& n : p.exprs) {
            roots_.push_back(compile_nest(n, {}));
            std::set<int> red;
            for (const auto& v : equations(n, 0)) {
                ReductionInfo info = classify_reduction(*v.eq, v.loops);
                if (info.is_reduction) red.insert(tensor_id(v.eq->lhs.name));
            }
            reduction_targets_.push_back(red);
        }
        vars_.assign(slots_.size(), 0);
    }

    void execute() {
        for (size_t e = 0; e < roots_.size(); ++e) {
            for (int t : reduction_targets_[e]) touched_[t].assign(bufs_[t]->data.size(), 0);
            exec(*roots_[e], 0);
            for (int t : reduction_targets_[e]) touched_[t].clear();
        }
    }

  private:
    const Program& program_;
    Env& env_;
    std::vector<Diagnostic>* warnings_;

    std::map<std::string, int> slots_;
    std::map<std::string, int> tensor_ids_;
    std::vector<std::string> names_;
    std::vector<Tensor*> bufs_;
    std::vector<char> inputs_;
    std::vector<std::vector<char>> written_;
    std::vector<std::vector<char>> touched_;
    std::vector<char> warned_;
    std::vector<int64_t> vars_;

    std::deque<CIndex> ixs_;
    std::deque<CRef> refs_;
    std::deque<CValue> vals_;
    std::deque<CEq> eqs_;
    std::deque<CNest> nests_;
    std::vector<const CNest*> roots_;
    std::vector<std::set<int>> reduction_targets_;

    int tensor_id(const std::string& name) {
        auto it = tensor_ids_.find(name);
        if (it != tensor_ids_.end()) return it->second;
        if (!program_.io.count(name)) throw Error("UnknownTensor", "tensor " + name + " has no io entry");
        int id = static_cast<int>(names_.size());
        tensor_ids_.emplace(name, id);
        names_.push_back(name);
        bufs_.push_back(nullptr);
        inputs_.push_back(0);
        written_.emplace_back();
        touched_.emplace_back();
        warned_.push_back(0);
        return id;
    }

    int slot(const std::string& name) {
        auto it = slots_.find(name);
        if (it != slots_.end()) return it->second;
        int s = static_cast<int>(slots_.size());
        slots_.emplace(name, s);
        return s;
    }

    const CIndex* compile(const Index& ix) {
        CIndex c;
        c.op = ix->op;
        c.value = ix->value;
        switch (ix->op) {
            case IndexNode::Op::Const: break;
            case IndexNode::Op::Var: c.slot = slot(ix->name); break;
            case IndexNode::Op::Read: c.ref = compile(*ix->ref); break;
            default:
                c.a = compile(ix->a);
                c.b = compile(ix->b);
        }
        ixs_.push_back(c);
        return &ixs_.back();
    }

    const CRef* compile(const TensorRef& r) {
        CRef c;
        c.tensor = tensor_id(r.name);
        if (r.indices.size() > kMaxRank) throw Error("RankMismatch", "rank too large for " + r.name);
        for (const auto& ix : r.indices) c.idx.push_back(compile(ix));
        refs_.push_back(std::move(c));
        return &refs_.back();
    }

    const CValue* compile(const Value& v) {
        CValue c;
        c.op = v->op;
        c.num = v->num;
        c.cmp = v->cmp;
        c.cmp2 = v->cmp2;
        if (v->op == ValueOp::Read) c.ref = compile(v->ref);
        if (v->op == ValueOp::Var) c.slot = slot(v->var);
        for (const auto& a : v->args) c.args.push_back(compile(a));
        vals_.push_back(std::move(c));
        return &vals_.back();
    }

    const CNest* compile_nest(const Nest& n, std::vector<const LoopHeader*> scope) {
        CNest c;
        for (const auto& l : n.loops) {
            c.loops.push_back({slot(l.index), l.start, l.extent});
            scope.push_back(&l);
        }
        for (const auto& item : n.body) {
            CItem ci;
            if (item.is_eq) {
                CEq e;
                e.lhs = compile(item.eq.lhs);
                e.rhs = compile(item.eq.rhs);
                ReductionInfo info = classify_reduction(item.eq, scope);
                e.reduction = info.is_reduction;
                e.identity = info.identity;
                eqs_.push_back(e);
                ci.eq = &eqs_.back();
            } else {
                ci.nest = compile_nest(item.nest(), scope);
            }
            c.body.push_back(ci);
        }
        nests_.push_back(std::move(c));
        return &nests_.back();
    }

    void exec(const CNest& n, size_t k) {
        if (k == n.loops.size()) {
            for (const auto& item : n.body) {
                if (item.eq) {
                    exec_eq(*item.eq);
                } else {
                    exec(*item.nest, 0);
                }
            }
            return;
        }
        const CLoop& l = n.loops[k];
        for (int64_t i = l.start; i < l.start + l.extent; ++i) {
            vars_[l.slot] = i;
            exec(n, k + 1);
        }
    }

    void exec_eq(const CEq& e) {
        int t = e.lhs->tensor;
        size_t off = offset(*e.lhs);
        auto& touched = touched_[t];
        if (e.reduction && !touched.empty() && !touched[off]) {
            bufs_[t]->data[off] = e.identity;
            touched[off] = 1;
            if (!written_[t].empty()) written_[t][off] = 1;
        }
        double v = eval(*e.rhs);
        bufs_[t]->data[off] = v;
        if (!touched.empty()) touched[off] = 1;
        if (!written_[t].empty()) written_[t][off] = 1;
    }

    size_t offset(const CRef& r) {
        const Tensor& t = *bufs_[r.tensor];
        if (r.idx.size() != t.shape.size()) {
            throw Error("RankMismatch", "rank mismatch on " + names_[r.tensor]);
        }
        int64_t ix[kMaxRank];
        bool bad = false;
        for (size_t k = 0; k < r.idx.size(); ++k) {
            ix[k] = eval(*r.idx[k]);
            if (ix[k] < 0 || ix[k] >= t.shape[k]) bad = true;
        }
        if (bad) throw OutOfBounds(names_[r.tensor], std::vector<int64_t>(ix, ix + r.idx.size()));
        size_t off = 0;
        for (size_t k = 0; k < r.idx.size(); ++k) off = off * static_cast<size_t>(t.shape[k]) + static_cast<size_t>(ix[k]);
        return off;
    }

    double read(const CRef& r) {
        size_t off = offset(r);
        int t = r.tensor;
        if (!written_[t].empty() && !written_[t][off] && !warned_[t]) {
            warned_[t] = 1;
            warnings_->push_back({"WarnUninitialized", names_[t], "read before write of " + names_[t]});
        }
        return bufs_[t]->data[off];
    }

    int64_t eval(const CIndex& c) {
        switch (c.op) {
            case IndexNode::Op::Const: return c.value;
            case IndexNode::Op::Var: return vars_[c.slot];
            case IndexNode::Op::Add: return eval(*c.a) + eval(*c.b);
            case IndexNode::Op::Sub: return eval(*c.a) - eval(*c.b);
            case IndexNode::Op::Mul: return eval(*c.a) * eval(*c.b);
            case IndexNode::Op::Read: return static_cast<int64_t>(std::llround(read(*c.ref)));
        }
        return 0;
    }

    double eval(const CValue& c) {
        const auto& a = c.args;
        switch (c.op) {
            case ValueOp::Const: return c.num;
            case ValueOp::Read: return read(*c.ref);
            case ValueOp::Var: return static_cast<double>(vars_[c.slot]);
            case ValueOp::Neg: return -eval(*a[0]);
            case ValueOp::Add: return eval(*a[0]) + eval(*a[1]);
            case ValueOp::Sub: return eval(*a[0]) - eval(*a[1]);
            case ValueOp::Mul: return eval(*a[0]) * eval(*a[1]);
            case ValueOp::Div: return eval(*a[0]) / eval(*a[1]);
            case ValueOp::Pow: return std::pow(eval(*a[0]), eval(*a[1]));
            case ValueOp::Exp: return std::exp(eval(*a[0]));
            case ValueOp::Log: return std::log(eval(*a[0]));
            case ValueOp::Sqrt: return std::sqrt(eval(*a[0]));
            case ValueOp::Abs: return std::fabs(eval(*a[0]));
            case ValueOp::Max: return nan_max(eval(*a[0]), eval(*a[1]));
            case ValueOp::Min: return nan_min(eval(*a[0]), eval(*a[1]));
            case ValueOp::Cmp: return compare(c.cmp, eval(*a[0]), eval(*a[1])) ? 1.0 : 0.0;
            case ValueOp::Range: {
                double x = eval(*a[1]);
                return compare(c.cmp, eval(*a[0]), x) && compare(c.cmp2, x, eval(*a[2])) ? 1.0 : 0.0;
            }
            case ValueOp::And: return eval(*a[0]) != 0.0 && eval(*a[1]) != 0.0 ? 1.0 : 0.0;
            case ValueOp::Ite: return eval(*a[0]) != 0.0 ? eval(*a[1]) : eval(*a[2]);
        }
        return 0.0;
    }
};

}  // namespace

Env run(const Program& program, Env env, std::vector<Diagnostic>* warnings) {
    Machine m(program, env, warnings);
    m.execute();
    return env;
}

namespace {

struct InputUse {
    bool positive = false;
    std::optional<int64_t> gather_bound;
};

void scan_index(const Index& ix, const Program& p, std::map<std::string, InputUse>& uses);

void scan_ref(const TensorRef& r, const Program& p, std::map<std::string, InputUse>& uses) {
    auto io = p.io.find(r.name);
    for (size_t k = 0; k < r.indices.size(); ++k) {
        const Index& ix = r.indices[k];
        if (ix->op == IndexNode::Op::Read && io != p.io.end() && k < io->second.shape.size()) {
            auto& u = uses[ix->ref->name];
            int64_t bound = io->second.shape[k];
            u.gather_bound = u.gather_bound ? std::min(*u.gather_bound, bound) : bound;
        }
        scan_index(ix, p, uses);
    }
}

void scan_index(const Index& ix, const Program& p, std::map<std::string, InputUse>& uses) {
    if (!ix) return;
    if (ix->op == IndexNode::Op::Read) {
        scan_ref(*ix->ref, p, uses);
        return;
    }
    scan_index(ix->a, p, uses);
    scan_index(ix->b, p, uses);
}

void scan_value(const Value& v, bool positive, const Program& p, std::map<std::string, InputUse>& uses) {
    if (v->op == ValueOp::Read) {
        if (positive) uses[v->ref.name].positive = true;
        scan_ref(v->ref, p, uses);
        return;
    }
    bool pos = positive || v->op == ValueOp::Log || v->op == ValueOp::Sqrt;
    for (size_t i = 0; i < v->args.size(); ++i) {
        bool base_of_frac_pow = v->op == ValueOp::Pow && i == 0 &&
                                !(v->args[1]->op == ValueOp::Const && std::floor(v->args[1]->num) == v->args[1]->num);
        scan_value(v->args[i], pos || base_of_frac_pow, p, uses);
    }
}

}  // namespace

Env random_env(const Program& program, uint64_t seed) {
    std::map<std::string, InputUse> uses;
    for (const auto& v : equations(program)) {
        scan_ref(v.eq->lhs, program, uses);
        scan_value(v.eq->rhs, false, program, uses);
    }
    Env env;
    env.rng_seed = seed;
    for (const auto& [name, entry] : program.io) {
        Tensor t;
        t.shape = entry.shape;
        t.data.assign(element_count(entry.shape), 0.0);
        if (entry.role == Role::Input) {
            std::mt19937_64 rng(fnv1a(name, fnv1a(seed)));
            const InputUse& u = uses[name];
            if (entry.dtype == DType::I64) {
                int64_t hi = u.gather_bound ? std::max<int64_t>(*u.gather_bound, 1) : 8;
                std::uniform_int_distribution<int64_t> d(0, hi - 1);
                for (double& x : t.data) x = static_cast<double>(d(rng));
            } else if (entry.dtype == DType::B8) {
                std::bernoulli_distribution d(0.5);
                for (double& x : t.data) x = d(rng) ? 1.0 : 0.0;
            } else if (u.positive) {
                std::uniform_real_distribution<double> d(0.0, 1.0);
                for (double& x : t.data) x = 1.0 - d(rng);
            } else {
                std::uniform_real_distribution<double> d(-1.0, 1.0);
                for (double& x : t.data) x = d(rng);
            }
        }
        env.tensors.emplace(name, std::move(t));
    }
    return env;
}

Tolerance tolerance_for(DType d) {
    switch (d) {
        case DType::F64: return {1e-9, 1e-12};
        case DType::F32: return {1e-5, 1e-8};
        case DType::F16: return {1e-2, 1e-3};
        default: return {0.0, 0.0};
    }
}

Tolerance tolerance_for(const Program& p) {
    int rank = -1;  // F64=0, F32=1, F16=2
    for (const auto& [name, e] : p.io) {
        if (e.role != Role::Output) continue;
        int r = e.dtype == DType::F64 ? 0 : e.dtype == DType::F32 ? 1 : e.dtype == DType::F16 ? 2 : -1;
        rank = std::max(rank, r);
    }
    if (rank < 0) return {0.0, 0.0};
    return tolerance_for(rank == 0 ? DType::F64 : rank == 1 ? DType::F32 : DType::F16);
}

bool close_enough(double x, double y, const Tolerance& tol) {
    if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y);
    if (x == y) return true;
    if (std::isinf(x) || std::isinf(y)) return false;
    return std::fabs(x - y) <= tol.atol + tol.rtol * std::fabs(y);
}

namespace {

void check_signature(const Program& a, const Program& b) {
    auto boundary = [](const Program& p) {
        std::map<std::string, IoEntry> out;
        for (const auto& [n, e] : p.io) {
            if (e.role != Role::Intermediate) out.emplace(n, e);
        }
        return out;
    };
    auto sa = boundary(a);
    auto sb = boundary(b);
    if (sa == sb) return;
    std::string detail;
    for (const auto& [n, e] : sa) {
        auto it = sb.find(n);
        if (it == sb.end() || !(it->second == e)) {
            detail = n;
            break;
        }
    }
    if (detail.empty()) {
        for (const auto& [n, e] : sb) {
            if (!sa.count(n)) {
                detail = n;
                break;
            }
        }
    }
    throw Error("SignatureMismatch", "io signatures differ at " + detail);
}

}  // namespace

VerifyReport equivalent(const Program& a, const Program& b, int trials, uint64_t seed,
                        std::optional<Tolerance> tol) {
    check_signature(a, b);
    VerifyReport rep;
    rep.tolerance_used = tol ? *tol : tolerance_for(a);
    for (int t = 0; t < trials; ++t) {
        TrialResult tr;
        tr.seed = seed + static_cast<uint64_t>(t);
        Env base = random_env(a, tr.seed);
        Env inputs;
        inputs.rng_seed = base.rng_seed;
        for (const auto& [n, e] : a.io) {
            if (e.role == Role::Input) inputs.tensors.emplace(n, base.tensors.at(n));
        }
        Env ra = run(a, base);
        Env rb = run(b, inputs);
        for (const auto& [n, e] : a.io) {
            if (e.role != Role::Output) continue;
            const auto& x = rb.tensors.at(n).data;
            const auto& y = ra.tensors.at(n).data;
            for (size_t i = 0; i < y.size(); ++i) {
                if (!close_enough(x[i], y[i], rep.tolerance_used)) tr.pass = false;
                if (std::isfinite(x[i]) && std::isfinite(y[i])) {
                    double abs_err = std::fabs(x[i] - y[i]);
                    tr.max_abs_err = std::max(tr.max_abs_err, abs_err);
                    if (abs_err > 0) tr.max_rel_err = std::max(tr.max_rel_err, abs_err / std::max(std::fabs(y[i]), 1e-300));
                }
            }
        }
        rep.equivalent = rep.equivalent && tr.pass;
        rep.trials.push_back(tr);
    }
    return rep;
}

}  // namespace leir
