// SPDX-License-Identifier: Apache-2.0
//
// Random well-formed LEIR programs for property tests.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "leir/analysis.hpp"
#include "leir/ast.hpp"

namespace leir::fixtures {

class RandomProgram {
  public:
    explicit RandomProgram(uint64_t seed, bool annotations = true) : rng_(seed), annotations_(annotations) {}

    Program make() {
        Program p;
        tensors_.clear();
        int n_exprs = pick(1, 3);
        int next_name = 0;
        std::vector<std::pair<std::string, int>> inputs = {{"A", 2}, {"C", 1}, {"D", 2}};
        avail_ = inputs;
        for (int e = 0; e < n_exprs; ++e) {
            Nest n;
            std::vector<std::string> pool = {"a", "c", "d", "f", "g"};
            std::shuffle(pool.begin(), pool.end(), rng_);
            int depth = pick(1, 3);
            if (annotations_ && pick(0, 1)) {
                n.loops.push_back({LoopKind::Binding, BindTarget::ThreadX, "tx", 0, pick(1, 4)});
            }
            for (int k = 0; k < depth; ++k) {
                LoopHeader l;
                l.index = pool[k];
                l.extent = pick(1, 4);
                if (annotations_) {
                    int kind = pick(0, 5);
                    l.kind = kind == 1 ? LoopKind::Parallel : kind == 2 ? LoopKind::Vectorized
                             : kind == 3 ? LoopKind::Unrolled : LoopKind::Serial;
                }
                n.loops.push_back(l);
            }
            vars_.clear();
            for (const auto& l : n.loops) vars_.push_back(l.index);
            int n_eq = pick(1, 2);
            for (int q = 0; q < n_eq; ++q) {
                Equation eq;
                eq.lhs.name = out_name(next_name++);
                eq.lhs.dtype = DType::F64;
                int rank = std::min<int>(2, static_cast<int>(vars_.size()));
                for (int r = 0; r < rank; ++r) eq.lhs.indices.push_back(ix_var(vars_[r]));
                eq.rhs = value(3);
                if (pick(0, 3) == 0 && rank < static_cast<int>(vars_.size())) {
                    eq.rhs = v_add(v_read(eq.lhs), eq.rhs);
                }
                n.body.push_back(Item::of(eq));
                avail_.push_back({eq.lhs.name, rank});
            }
            p.exprs.push_back(std::move(n));
        }
        p.io = infer_io(p);
        return p;
    }

  private:
    std::mt19937_64 rng_;
    bool annotations_;
    std::vector<std::string> vars_;
    std::vector<std::pair<std::string, int>> avail_;
    std::vector<std::string> tensors_;

    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

    static std::string out_name(int i) {
        static const char* names[] = {"E", "F", "G", "H", "I", "J", "K", "M", "N", "O", "Q", "R", "S"};
        return names[i % 13];
    }

    Index index() {
        Index v = ix_var(vars_[pick(0, static_cast<int>(vars_.size()) - 1)]);
        switch (pick(0, 4)) {
            case 0: return ix_mul(v, ix_const(2));
            case 1: return ix_add(v, ix_const(1));
            case 2: return ix_add(ix_mul(v, ix_const(3)), ix_var(vars_.front()));
            default: return v;
        }
    }

    Value read() {
        auto [name, rank] = avail_[pick(0, static_cast<int>(avail_.size()) - 1)];
        TensorRef r;
        r.name = name;
        r.dtype = DType::F64;
        for (int k = 0; k < rank; ++k) r.indices.push_back(index());
        return v_read(r);
    }

    Value value(int depth) {
        if (depth == 0) {
            int k = pick(0, 5);
            if (k == 0) return v_const(pick(-3, 9) * 0.5);
            return read();
        }
        switch (pick(0, 13)) {
            case 0: return v_add(value(depth - 1), value(depth - 1));
            case 1: return v_sub(value(depth - 1), value(depth - 1));
            case 2: return v_mul(value(depth - 1), value(depth - 1));
            case 3: return v_div(value(depth - 1), v_add(v_const(3), v_unary(ValueOp::Abs, value(depth - 1))));
            case 4: return v_unary(ValueOp::Neg, value(depth - 1));
            case 5: return v_unary(ValueOp::Exp, v_mul(v_const(0.25), value(depth - 1)));
            case 6: return v_bin(ValueOp::Max, value(depth - 1), value(depth - 1));
            case 7: return v_bin(ValueOp::Min, value(depth - 1), value(depth - 1));
            case 8: {
                Value var = v_var(vars_[pick(0, static_cast<int>(vars_.size()) - 1)]);
                return v_ite(v_cmp(CmpOp::Ge, var, v_const(1)), value(depth - 1), value(depth - 1));
            }
            case 9: return v_bin(ValueOp::Pow, value(depth - 1), v_const(2));
            case 10: return v_unary(ValueOp::Sqrt, v_add(v_const(1), v_unary(ValueOp::Abs, value(depth - 1))));
            default: return value(depth - 1);
        }
    }
};

}  // namespace leir::fixtures
