// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "corpus.hpp"
#include "leir/analysis.hpp"
#include "leir/syntax.hpp"
#include "random_program.hpp"

namespace {

using namespace leir;

const char* kMatmul =
    "B^{719}_{tx=0}L^{549}_{a=0}L^{128}_{c=0}L^{591}_{d=0}[D^{f64,g}_{tx,a,c}=D^{f64,g}_{tx,a,c}+"
    "A^{f64,g}_{tx,a,d}*C^{f64,g}_{tx,d,c};];";

TEST(parse, matmul_has_one_expr_with_four_loops) {
    Program p = parse(kMatmul);
    ASSERT_EQ(p.exprs.size(), 1u);
    ASSERT_EQ(p.exprs[0].loops.size(), 4u);
    EXPECT_EQ(p.exprs[0].loops[0].kind, LoopKind::Binding);
    EXPECT_EQ(p.exprs[0].loops[0].bind, BindTarget::ThreadX);
    EXPECT_EQ(p.exprs[0].loops[3].extent, 591);
    ASSERT_EQ(p.exprs[0].body.size(), 1u);
    EXPECT_TRUE(p.exprs[0].body[0].is_eq);
}

TEST(parse, matmul_prints_byte_identical) {
    EXPECT_EQ(print(parse(kMatmul)), kMatmul);
}

TEST(parse, empty_input_expects_expr) {
    try {
        parse("");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        ASSERT_FALSE(e.expected().empty());
        EXPECT_EQ(e.expected().front(), "expr");
        EXPECT_EQ(e.span().byte_start, 0u);
    }
}

TEST(parse, shared_outer_loops_segment) {
    std::string s =
        "B^{4}_{tx=0}L^{3}_{a=0}L^{2}_{c=0}[D^{f16,g}_{tx,a,c+1}=0;]L^{5}_{d=0}L^{3}_{f=0}"
        "[D^{f16,g}_{tx,a,c+1}=D^{f16,g}_{tx,a,c+1}+H^{f16,g}_{tx,d,c+f}*G^{f16,g}_{a,d,f};];";
    Program p = parse(s);
    ASSERT_EQ(p.exprs.size(), 1u);
    const Nest& n = p.exprs[0];
    ASSERT_EQ(n.body.size(), 2u);
    EXPECT_TRUE(n.body[0].is_eq);
    ASSERT_FALSE(n.body[1].is_eq);
    EXPECT_EQ(n.body[1].nest().loops.size(), 2u);
    Program again = parse(print(p));
    EXPECT_TRUE(structural_eq(p, again));
}

TEST(parse, inner_nest_without_trailing_semicolon) {
    Program a = parse("L^{2}_{a=0}[L^{3}_{c=0}[E^{f32,g}_{a,c}=A^{f32,g}_{a,c};]];");
    Program b = parse("L^{2}_{a=0}[L^{3}_{c=0}[E^{f32,g}_{a,c}=A^{f32,g}_{a,c};];];");
    EXPECT_TRUE(structural_eq(a, b));
    EXPECT_EQ(print(a), print(b));
}

TEST(print, scalar_tensor_has_no_subscript) {
    Program p = parse("B^{1}_{tx=0}[R^{f64,g}=154;];");
    EXPECT_EQ(print(p.exprs[0].body[0].eq.lhs), "R^{f64,g}");
}

TEST(parse, scientific_literals_agree) {
    Value a = parse_value("1e-05");
    Value b = parse_value("1.0e-5");
    ASSERT_EQ(a->op, ValueOp::Const);
    EXPECT_EQ(a->num, b->num);
    EXPECT_EQ(print(a), "1e-05");
}

TEST(parse, inf_literals) {
    Value a = parse_value("-inf");
    ASSERT_EQ(a->op, ValueOp::Const);
    EXPECT_TRUE(std::isinf(a->num));
    EXPECT_LT(a->num, 0);
    EXPECT_EQ(print(parse_value("max(-inf,inf)")), "max(-inf,inf)");
}

TEST(parse, latex_residue_is_stripped) {
    Program p = parse(
        "$B^{4}_{tx=0} L^{4}_{a=0}[E^{f16,g}_{tx,a}=\\text{if\\_then\\_else}(tx>=a \\& a<3,"
        "C^{f16,g}_{tx,a},0);];$");
    EXPECT_EQ(print(p), "B^{4}_{tx=0}L^{4}_{a=0}[E^{f16,g}_{tx,a}=if_then_else(tx>=a&a<3,C^{f16,g}_{tx,a},0);];");
}

TEST(parse, chained_range_comparison) {
    Value v = parse_value("1<=c<978&2<=d<34");
    ASSERT_EQ(v->op, ValueOp::And);
    EXPECT_EQ(v->args[0]->op, ValueOp::Range);
    EXPECT_EQ(print(v), "1<=c<978&2<=d<34");
}

TEST(parse, reserved_tensor_name_is_rejected) {
    try {
        parse("L^{2}_{a=0}[T^{f32,g}_{a}=A^{f32,g}_{a};];");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.kind(), "ReservedName");
    }
    EXPECT_THROW(parse("L^{2}_{a=0}[C^{f32,g}_{a}=L^{f32,g}_{a};];"), ParseError);
}

TEST(parse, unknown_dtype_is_rejected) {
    EXPECT_THROW(parse("L^{2}_{a=0}[C^{f8,g}_{a}=A^{f32,g}_{a};];"), ParseError);
    EXPECT_THROW(parse("L^{2}_{a=0}[C^{f32,q}_{a}=A^{f32,g}_{a};];"), ParseError);
}

TEST(parse, error_span_points_into_original_text) {
    std::string s = "L^{2}_{a=0} [C^{f32,g}_{a}=A^{f32,g}_{a}#;];";
    try {
        parse(s);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(s[e.span().byte_start], '#');
    }
}

TEST(print, precedence_round_trips) {
    const char* cases[] = {
        "A^{f32,g}-(C^{f32,g}-D^{f32,g})",
        "A^{f32,g}/(C^{f32,g}*D^{f32,g})",
        "-(A^{f32,g}+1)",
        "(-A^{f32,g})**2",
        "-2**2",
        "-(2**2)",
        "A^{f32,g}**C^{f32,g}**2",
        "(A^{f32,g}**C^{f32,g})**2",
        "A^{f32,g}*-1",
        "-(-1)",
        "A^{f32,g}+(C^{f32,g}+D^{f32,g})",
    };
    for (const char* c : cases) {
        Value v = parse_value(c);
        EXPECT_EQ(print(v), c);
        EXPECT_TRUE(equal(parse_value(print(v)), v)) << c;
    }
}

TEST(print, index_arithmetic) {
    Program p = parse("L^{3}_{c=0}L^{2}_{f=0}[E^{f32,g}_{c}=H^{f32,g}_{(c+1)+f*6,1-c,-1*c};];");
    EXPECT_EQ(print(p), "L^{3}_{c=0}L^{2}_{f=0}[E^{f32,g}_{c}=H^{f32,g}_{c+1+f*6,1-c,-1*c};];");
}

TEST(corpus, every_row_round_trips_and_validates) {
    auto rows = fixtures::load_corpus();
    ASSERT_GE(rows.size(), 110u);
    for (const auto& row : rows) {
        SCOPED_TRACE(row.label);
        Program p = parse(row.leir);
        std::string canon = print(p);
        Program q = parse(canon);
        EXPECT_TRUE(structural_eq(p, q));
        EXPECT_EQ(print(q), canon);
        auto diags = validate(p);
        for (const auto& d : diags) ADD_FAILURE() << d.code << " " << d.path << ": " << d.message;
    }
}

TEST(corpus, canonical_form_drops_whitespace) {
    for (const auto& row : fixtures::load_corpus()) {
        EXPECT_EQ(print(parse(row.leir)).find(' '), std::string::npos);
    }
}

TEST(print, random_programs_round_trip) {
    for (uint64_t seed = 0; seed < 300; ++seed) {
        Program p = fixtures::RandomProgram(seed).make();
        Program q = parse(print(p));
        ASSERT_TRUE(structural_eq(p, q)) << print(p);
    }
}

TEST(print, injective_on_random_corpus) {
    std::map<std::string, Program> seen;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        Program p = fixtures::RandomProgram(seed + 5000).make();
        std::string s = print(p);
        auto it = seen.find(s);
        if (it != seen.end()) {
            EXPECT_TRUE(structural_eq(it->second, p)) << s;
        } else {
            seen.emplace(s, p);
        }
    }
    EXPECT_GT(seen.size(), 900u);
}

TEST(byte_stats, counts) {
    auto e = byte_stats("");
    EXPECT_EQ(e.bytes, 0u);
    EXPECT_EQ(e.nonspace_bytes, 0u);
    std::string m = kMatmul;
    auto s = byte_stats(m);
    EXPECT_EQ(s.bytes, m.size());
    EXPECT_EQ(s.nonspace_bytes, m.size());
    EXPECT_EQ(byte_stats("a b\n").nonspace_bytes, 2u);
}

}  // namespace
