// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "corpus.hpp"
#include "leir/analysis.hpp"
#include "leir/syntax.hpp"
#include "random_program.hpp"

namespace {

using namespace leir;

bool has_code(const std::vector<Diagnostic>& d, const std::string& code) {
    return std::any_of(d.begin(), d.end(), [&](const Diagnostic& x) { return x.code == code; });
}

const char* kMatmul =
    "B^{719}_{tx=0}L^{549}_{a=0}L^{128}_{c=0}L^{591}_{d=0}[D^{f64,g}_{tx,a,c}=D^{f64,g}_{tx,a,c}+"
    "A^{f64,g}_{tx,a,d}*C^{f64,g}_{tx,d,c};];";

TEST(validate, matmul_is_clean) {
    EXPECT_TRUE(validate(parse(kMatmul)).empty());
}

TEST(validate, reserved_tensor_name) {
    Program p = parse("L^{2}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a};];");
    p.exprs[0].body[0].eq.lhs.name = "T";
    p.io = infer_io(p);
    EXPECT_TRUE(has_code(validate(p), "ReservedName"));
}

TEST(validate, binding_cap_exceeded_on_z_thread) {
    Program p = parse("B^{2048}_{tzq=0}[C^{f32,g}_{tzq}=A^{f32,g}_{tzq};];");
    EXPECT_TRUE(has_code(validate(p), "BindingCapExceeded"));
    Program ok = parse("B^{64}_{tzq=0}[C^{f32,g}_{tzq}=A^{f32,g}_{tzq};];");
    EXPECT_TRUE(validate(ok).empty());
}

TEST(validate, index_name_rules) {
    EXPECT_TRUE(has_code(validate(parse("L^{2}_{ae=0}[C^{f32,g}_{ae}=A^{f32,g}_{ae};];")), "BadIndexName"));
    EXPECT_TRUE(has_code(validate(parse("L^{2}_{xa=0}[C^{f32,g}_{xa}=A^{f32,g}_{xa};];")), "BadIndexName"));
    EXPECT_TRUE(has_code(validate(parse("L^{2}_{tx=0}[C^{f32,g}_{tx}=A^{f32,g}_{tx};];")), "BindingKindMismatch"));
    EXPECT_TRUE(has_code(validate(parse("B^{2}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a};];")), "BindingKindMismatch"));
}

TEST(validate, scope_and_structure) {
    EXPECT_TRUE(has_code(validate(parse("L^{2}_{a=0}[C^{f32,g}_{c}=A^{f32,g}_{a};];")), "UnboundIndex"));
    EXPECT_TRUE(has_code(validate(parse("L^{2}_{a=0}L^{2}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a};];")),
                         "DuplicateLoopIndex"));
    EXPECT_TRUE(has_code(validate(parse("L^{2}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a}+A^{f32,g};];")), "RankMismatch"));
    EXPECT_TRUE(has_code(validate(parse("L^{2}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a}+A^{f64,g}_{a};];")), "DTypeMismatch"));
    EXPECT_TRUE(has_code(validate(parse("L^{2}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a}+A^{f32,s}_{a};];")), "ScopeMismatch"));
    Program empty = parse("L^{2}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a};];");
    empty.exprs[0].loops.clear();
    EXPECT_TRUE(has_code(validate(empty), "EmptyTopLevelLoops"));
}

TEST(validate, io_roles_and_bounds) {
    Program p = parse("L^{4}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a};];");
    p.io["A"].role = Role::Output;
    p.io["C"].role = Role::Input;
    auto d = validate(p);
    EXPECT_TRUE(has_code(d, "RoleViolation"));
    EXPECT_TRUE(has_code(d, "UnwrittenOutput"));
    Program q = parse("L^{4}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a};];");
    q.io["A"].shape = {3};
    EXPECT_TRUE(has_code(validate(q), "ShapeOverflow"));
    q.io.erase("A");
    EXPECT_TRUE(has_code(validate(q), "UnknownTensor"));
}

TEST(validate, guarded_negative_index_is_legal) {
    Program p = parse(
        "L^{5}_{d=0}[M^{f64,g}_{d}=max(if_then_else(d-1<0,-inf,M^{f64,g}_{d-1}),Y^{f64,g}_{d});];");
    EXPECT_TRUE(validate(p).empty());
}

TEST(infer_io, shapes_and_roles) {
    Program p = parse(
        "L^{4}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a}*3;D^{f32,g}_{a}=A^{f32,g}_{a}*2+1;];"
        "L^{4}_{a=0}[H^{f32,g}_{a}=C^{f32,g}_{a}*2;];");
    EXPECT_EQ(p.io["A"].role, Role::Input);
    EXPECT_EQ(p.io["C"].role, Role::Intermediate);
    EXPECT_EQ(p.io["D"].role, Role::Output);
    EXPECT_EQ(p.io["H"].role, Role::Output);
    EXPECT_EQ(p.io["A"].shape, std::vector<int64_t>{4});
    Program t = parse("L^{15}_{g=0}B^{17}_{tx=0}[D^{f16,g}_{g*17+tx}=A^{f16,g}_{g*17+tx};];");
    EXPECT_EQ(t.io["A"].shape, std::vector<int64_t>{255});
}

TEST(infer_io, declared_entries_win) {
    Program p = parse_ast("L^{4}_{a=0}[C^{f32,g}_{a}=A^{f32,g}_{a};];");
    std::map<std::string, IoEntry> decl = {{"A", {DType::F32, {9}, Role::Input}}};
    auto io = infer_io(p, decl);
    EXPECT_EQ(io["A"].shape, std::vector<int64_t>{9});
    EXPECT_EQ(io["C"].shape, std::vector<int64_t>{4});
}

TEST(classify, matmul_sum) {
    Program p = parse(kMatmul);
    auto info = classify_reduction(p.exprs[0].body[0].eq, p.exprs[0].loops);
    EXPECT_TRUE(info.is_reduction);
    EXPECT_EQ(info.combiner, Combiner::Sum);
    EXPECT_EQ(info.identity, 0.0);
    EXPECT_EQ(info.reduction_axes, std::set<std::string>{"d"});
}

TEST(classify, pointwise_is_not_reduction) {
    Program p = parse("B^{16}_{tx=0}L^{4}_{a=0}[E^{f16,g}_{tx,a}=A^{f16,g}_{tx,a}/D^{f16,g}_{tx,a};];");
    EXPECT_FALSE(classify_reduction(p.exprs[0].body[0].eq, p.exprs[0].loops).is_reduction);
}

TEST(classify, max_min_product) {
    Program p = parse("B^{4}_{tx=0}L^{3}_{d=0}[Am^{f16,g}_{tx}=max(Am^{f16,g}_{tx},Y^{f16,g}_{tx,d});];");
    auto info = classify_reduction(p.exprs[0].body[0].eq, p.exprs[0].loops);
    EXPECT_EQ(info.combiner, Combiner::Max);
    EXPECT_TRUE(std::isinf(info.identity) && info.identity < 0);
    Program q = parse("L^{4}_{a=0}L^{3}_{d=0}[M^{f32,g}_{a}=min(Y^{f32,g}_{a,d},M^{f32,g}_{a});];");
    auto mi = classify_reduction(q.exprs[0].body[0].eq, q.exprs[0].loops);
    EXPECT_EQ(mi.combiner, Combiner::Min);
    EXPECT_TRUE(std::isinf(mi.identity) && mi.identity > 0);
    Program r = parse("L^{4}_{a=0}L^{3}_{d=0}[M^{f32,g}_{a}=M^{f32,g}_{a}*Y^{f32,g}_{a,d};];");
    auto pr = classify_reduction(r.exprs[0].body[0].eq, r.exprs[0].loops);
    EXPECT_EQ(pr.combiner, Combiner::Product);
    EXPECT_EQ(pr.identity, 1.0);
}

TEST(classify, scan_and_update_are_not_reductions) {
    Program s = parse("L^{5}_{d=0}[M^{f64,g}_{d}=max(if_then_else(d-1<0,-inf,M^{f64,g}_{d-1}),Y^{f64,g}_{d});];");
    EXPECT_FALSE(classify_reduction(s.exprs[0].body[0].eq, s.exprs[0].loops).is_reduction);
    Program u = parse("L^{5}_{a=0}[D^{f64,g}_{a}=D^{f64,g}_{a}+J^{f64,g}_{a};];");
    EXPECT_FALSE(classify_reduction(u.exprs[0].body[0].eq, u.exprs[0].loops).is_reduction);
}

TEST(classify, mixed_combiners_are_ambiguous) {
    Program p = parse("L^{4}_{a=0}L^{3}_{d=0}[M^{f32,g}_{a}=max(M^{f32,g}_{a},Y^{f32,g}_{a,d})+M^{f32,g}_{a};];");
    try {
        classify_reduction(p.exprs[0].body[0].eq, p.exprs[0].loops);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "AmbiguousCombiner");
    }
    EXPECT_TRUE(has_code(validate(p), "AmbiguousCombiner"));
}

TEST(classify, fuzz_combiner_table) {
    std::mt19937_64 rng(11);
    const ValueOp ops[] = {ValueOp::Add, ValueOp::Mul, ValueOp::Max, ValueOp::Min};
    const Combiner expect[] = {Combiner::Sum, Combiner::Product, Combiner::Max, Combiner::Min};
    for (int i = 0; i < 400; ++i) {
        TensorRef lhs{"M", DType::F64, MemScope::Global, {ix_var("a")}};
        TensorRef y{"Y", DType::F64, MemScope::Global, {ix_var("a"), ix_var("d")}};
        std::vector<LoopHeader> loops = {{LoopKind::Serial, std::nullopt, "a", 0, 3},
                                         {LoopKind::Serial, std::nullopt, "d", 0, 3}};
        int k = static_cast<int>(rng() % 4);
        Value other = v_unary(ValueOp::Exp, v_read(y));
        bool swap = rng() % 2;
        Value rhs = swap ? v_bin(ops[k], other, v_read(lhs)) : v_bin(ops[k], v_read(lhs), other);
        Equation eq{lhs, rhs};
        auto info = classify_reduction(eq, loops);
        ASSERT_TRUE(info.is_reduction);
        EXPECT_EQ(*info.combiner, expect[k]);
        EXPECT_EQ(info.identity, identity_of(expect[k]));
        int k2 = static_cast<int>((k + 1 + rng() % 3) % 4);
        Equation mixed{lhs, v_bin(ops[k2], v_bin(ops[k], v_read(lhs), other), v_read(lhs))};
        EXPECT_THROW(classify_reduction(mixed, loops), Error);
    }
}

TEST(dependency_graph, matmul_then_bias) {
    Program p = parse(
        "L^{4}_{a=0}L^{4}_{c=0}[D^{f32,g}_{a}=D^{f32,g}_{a}+A^{f32,g}_{a,c};];"
        "L^{4}_{a=0}[E^{f32,g}_{a}=D^{f32,g}_{a}+C^{f32,g}_{a};];");
    auto g = dependency_graph(p);
    EXPECT_TRUE(g.has_edge(0, 1));
    EXPECT_EQ(g.edges.size(), 1u);
}

TEST(dependency_graph, disjoint_has_no_edges) {
    Program p = parse(fixtures::corpus_get("operator_fusion.input.0") +
                      fixtures::corpus_get("operator_fusion.input.1"));
    EXPECT_TRUE(dependency_graph(p).edges.empty());
}

TEST(dependency_graph, case_study_chain) {
    Program p = parse(fixtures::corpus_get("matmul_scaling_residualadd"));
    auto g = dependency_graph(p);
    EXPECT_TRUE(g.has_edge(0, 1));
    EXPECT_TRUE(g.has_edge(1, 2));
    EXPECT_TRUE(g.has_edge(2, 3));
}

TEST(dependency_graph, random_chains_are_acyclic) {
    for (uint64_t seed = 0; seed < 200; ++seed) {
        Program p = fixtures::RandomProgram(seed).make();
        for (const auto& [a, b] : dependency_graph(p).edges) EXPECT_LT(a, b);
    }
}

TEST(free_symbols, matmul) {
    auto s = free_symbols(parse(kMatmul));
    EXPECT_EQ(s.tensors, (std::set<std::string>{"A", "C", "D"}));
    EXPECT_EQ(s.indices, (std::set<std::string>{"a", "c", "d", "tx"}));
    for (const auto& t : s.tensors) EXPECT_FALSE(is_reserved_name(t));
}

TEST(free_symbols, empty_body_nest_contributes_indices) {
    Program p = parse("L^{2}_{a=0}[L^{3}_{c=0}[L^{2}_{d=0}[E^{f32,g}_{a}=A^{f32,g}_{a};];];];");
    auto s = free_symbols(p);
    EXPECT_EQ(s.indices, (std::set<std::string>{"a", "c", "d"}));
}

TEST(corpus, validates_clean) {
    for (const auto& row : fixtures::load_corpus()) {
        auto d = validate(parse(row.leir));
        EXPECT_TRUE(d.empty()) << row.label << ": " << (d.empty() ? "" : d[0].code);
    }
}

TEST(program_file, json_round_trip) {
    Program p = parse(kMatmul);
    std::string j = save_program_json("matmul", p);
    ProgramFile f = load_program_text(j, "x");
    EXPECT_EQ(f.name, "matmul");
    EXPECT_TRUE(structural_eq(f.program, p));
    EXPECT_EQ(f.program.io, p.io);
}

}  // namespace
