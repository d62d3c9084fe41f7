// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "corpus.hpp"
#include "leir/dataset.hpp"
#include "leir/interp.hpp"
#include "leir/search.hpp"
#include "leir/syntax.hpp"

using namespace leir;
using leir::fixtures::corpus_get;

namespace {

const std::string kFixtures = std::string(LEIR_TEST_DATA) + "/../fixtures/";

Program case_study() { return shrink_shapes(parse(corpus_get("matmul_scaling_residualadd")), 8); }

SearchNode make_node(const Program& p) {
    SearchNode n;
    n.program = p;
    n.text = print(p);
    return n;
}

std::string write_reply(const std::string& name, const nlohmann::json& reply) {
    auto dir = std::filesystem::temp_directory_path() / "leir_search_test";
    std::filesystem::create_directories(dir);
    auto path = (dir / name).string();
    std::ofstream(path) << reply.dump() << "\n";
    return path;
}

// Re-checks a finished report: soundness, no-undo, depth links.
void check_report(const Program& root, const SearchReport& r) {
    ASSERT_FALSE(r.nodes.empty());
    EXPECT_EQ(r.nodes[0].depth, 0);
    EXPECT_DOUBLE_EQ(r.nodes[0].speedup, 1.0);
    EXPECT_FALSE(r.nodes[0].parent.has_value());
    EXPECT_EQ(r.verified_samples, r.nodes.size() - 1);
    EXPECT_LE(r.verified_samples, r.samples);
    std::optional<std::string> prev;
    for (const auto& [strategy, id] : r.trajectory) {
        const SearchNode& n = r.nodes[id];
        EXPECT_TRUE(equivalent(root, n.program, 3, 99).equivalent) << strategy;
        if (prev) {
            auto a = strategy_from_name(*prev);
            auto b = strategy_from_name(strategy);
            ASSERT_TRUE(a && b);
            EXPECT_FALSE(are_inverse(*a, *b)) << *prev << " then " << strategy;
        }
        prev = strategy;
    }
    for (size_t i = 1; i < r.nodes.size(); ++i) {
        ASSERT_TRUE(r.nodes[i].parent.has_value());
        EXPECT_EQ(r.nodes[i].depth, r.nodes[*r.nodes[i].parent].depth + 1);
    }
}

}  // namespace

// ---- names and budgets ----

TEST(Algo, NamesRoundTrip) {
    EXPECT_EQ(all_algos().size(), 7u);
    for (Algo a : all_algos()) EXPECT_EQ(algo_from_name(to_string(a)), a);
    EXPECT_EQ(algo_from_name("Chain-Parent"), Algo::ChainParent);
    EXPECT_FALSE(algo_from_name("annealing").has_value());
}

TEST(Budget, Defaults) {
    auto g = SearchBudget::defaults(Algo::Greedy);
    EXPECT_EQ(g.max_iterations, 20);
    EXPECT_EQ(g.children_per_node, 2);
    auto b = SearchBudget::defaults(Algo::Beam);
    EXPECT_EQ(b.children_per_node, 3);
    EXPECT_EQ(b.beam_width, 2);
    auto d = SearchBudget::defaults(Algo::DFS);
    EXPECT_EQ(d.max_depth, 20);
    EXPECT_EQ(d.children_per_node, 2);
    EXPECT_NEAR(SearchBudget::defaults(Algo::MCTS).exploration, std::sqrt(2.0), 1e-12);
    auto j = SearchBudget::from_json({{"max_iterations", 5}}, Algo::Beam);
    EXPECT_EQ(j.max_iterations, 5);
    EXPECT_EQ(j.children_per_node, 3);
    EXPECT_THROW(SearchBudget::from_json({{"children_per_node", 0}}, Algo::Greedy), Error);
}

// ---- analytic cost ----

TEST(Cost, MatmulHandComputed) {
    // Binding extent 2 fits the thread cap: trips 2*2*3; ops 2; reads 3 + write 1 at global weight 4.
    Program p = parse("B^{2}_{tx=0}L^{2}_{a=0}L^{2}_{c=0}L^{3}_{d=0}"
                      "[D^{f64,g}_{tx,a,c}=D^{f64,g}_{tx,a,c}+A^{f64,g}_{tx,a,d}*C^{f64,g}_{tx,d,c};];");
    EXPECT_DOUBLE_EQ(analytic_cost(p), 12.0 * (2.0 + 4.0 * 4.0));
    EXPECT_DOUBLE_EQ(analytic_cost(p), analytic_cost(p));
}

TEST(Cost, LoopKindsAndScopes) {
    Program serial = parse("L^{64}_{a=0}[D^{f32,g}_{a}=exp(A^{f32,g}_{a});];");
    Program bound = parse("B^{64}_{tx=0}[D^{f32,g}_{tx}=exp(A^{f32,g}_{tx});];");
    Program vec = parse("V^{64}_{a=0}[D^{f32,g}_{a}=exp(A^{f32,g}_{a});];");
    Program unrolled = parse("U^{64}_{a=0}[D^{f32,g}_{a}=exp(A^{f32,g}_{a});];");
    Program local = parse("L^{64}_{a=0}[D^{f32,l}_{a}=exp(A^{f32,g}_{a});];");
    EXPECT_LT(analytic_cost(bound), analytic_cost(serial));
    EXPECT_DOUBLE_EQ(analytic_cost(vec) * 4.0, analytic_cost(serial));
    EXPECT_DOUBLE_EQ(analytic_cost(unrolled), analytic_cost(serial));
    EXPECT_LT(analytic_cost(local), analytic_cost(serial));
    Program big = parse("B^{4096}_{tx=0}[D^{f32,g}_{tx}=exp(A^{f32,g}_{tx});];");
    EXPECT_DOUBLE_EQ(analytic_cost(big), 4.0 * 9.0);  // capped at 1024 threads
}

// ---- built-in proposer ----

TEST(Builtin, NoInverseOfIncomingStep) {
    Program p = parse(corpus_get("apart.output"));
    ASSERT_FALSE(feasible(p, StrategyId::Together).empty());
    SearchNode root = make_node(parse(corpus_get("apart.input")));
    SearchNode node = make_node(p);
    node.parent = 0;
    node.depth = 1;
    node.via_strategy = "apart";
    ProposalContext ctx{node, &root, root, Algo::Greedy, "apart"};
    std::mt19937_64 rng(1);
    auto props = builtin_propose(ctx, 1000, rng);
    ASSERT_FALSE(props.candidates.empty());
    std::set<std::string> texts;
    for (const auto& c : props.candidates) {
        EXPECT_NE(c.strategy, "together");
        EXPECT_TRUE(texts.insert(print(c.program)).second);
        EXPECT_NE(print(c.program), node.text);
    }
    EXPECT_LT(props.candidates.size(), 1000u);
    ASSERT_EQ(props.dropped.size(), 1u);
    EXPECT_EQ(props.dropped[0].rfind("Exhausted", 0), 0u);
}

TEST(Builtin, Deterministic) {
    SearchNode root = make_node(case_study());
    ProposalContext ctx{root, nullptr, root, Algo::Greedy, "case"};
    std::mt19937_64 a(5), b(5);
    auto x = builtin_propose(ctx, 4, a);
    auto y = builtin_propose(ctx, 4, b);
    ASSERT_EQ(x.candidates.size(), 4u);
    ASSERT_EQ(x.candidates.size(), y.candidates.size());
    for (size_t i = 0; i < x.candidates.size(); ++i) {
        EXPECT_EQ(x.candidates[i].strategy, y.candidates[i].strategy);
        EXPECT_EQ(print(x.candidates[i].program), print(y.candidates[i].program));
    }
}

// ---- prompt ----

TEST(Prompt, RootHistoryAndStrategyList) {
    SearchNode root = make_node(parse(corpus_get("gemm_swish_divide_clamp_tanh_clamp")));
    ProposalContext ctx{root, nullptr, root, Algo::BFS, "Gemm Swish Divide Clamp Tanh Clamp"};
    std::string text = render_search_prompt(ctx, 2);
    EXPECT_NE(text.find("breadth-first"), std::string::npos);
    EXPECT_NE(text.find("depth: 0, speedup value: 1."), std::string::npos);
    EXPECT_NE(text.find(root.text), std::string::npos);
    EXPECT_NE(text.find("'A' (float32, shape [728, 2022])"), std::string::npos) << text;
    for (const auto& m : registry()) EXPECT_NE(text.find(std::string(m.name)), std::string::npos) << m.name;
    EXPECT_NE(text.find("transformed_IR"), std::string::npos);
    EXPECT_NE(text.find("CRITICAL"), std::string::npos);
    EXPECT_EQ(text, render_search_prompt(ctx, 2));
}

TEST(Prompt, ChildHistoryLine) {
    SearchNode root = make_node(parse(corpus_get("gemm_swish_divide_clamp_tanh_clamp")));
    SearchNode child = root;
    child.parent = 0;
    child.depth = 1;
    child.speedup = 30.36;
    child.via_strategy = "loop binding";
    ProposalContext ctx{child, &root, root, Algo::BFS, "gemm"};
    std::string text = render_search_prompt(ctx, 2);
    EXPECT_NE(text.find("Parent program: the root program, depth: 0, speedup value: 1."), std::string::npos);
    EXPECT_NE(text.find("speedup value: 30.36, depth: 1, obtained from its parent with the strategy "
                        "'loop_binding'"),
              std::string::npos)
        << text;
}

// ---- external proposer ----

class External : public ::testing::Test {
  protected:
    void SetUp() override {
        root_ = make_node(parse(corpus_get("loop_split.input")));
        std::mt19937_64 rng(3);
        ProposalContext ctx{root_, nullptr, root_, Algo::Greedy, "split"};
        auto props = builtin_propose(ctx, 2, rng);
        ASSERT_EQ(props.candidates.size(), 2u);
        for (size_t i = 0; i < 2; ++i) {
            answers_.push_back({{"idx", i},
                                {"transformed_IR", print(props.candidates[i].program)},
                                {"applied_strategies", {props.candidates[i].strategy}}});
        }
    }
    ProposalContext ctx() const { return ProposalContext{root_, nullptr, root_, Algo::Greedy, "split"}; }
    SearchNode root_;
    nlohmann::json answers_ = nlohmann::json::array();
};

TEST_F(External, ParsesWellFormedReply) {
    auto p = parse_answers({{"answers", answers_}}, ctx());
    EXPECT_EQ(p.candidates.size(), 2u);
    EXPECT_TRUE(p.dropped.empty());
}

TEST_F(External, DropsBadSlots) {
    auto a = answers_;
    a[1]["transformed_IR"] = "L^{4}_{a=0}[D^{f32,g}_{a}=";
    auto p = parse_answers({{"answers", a}}, ctx());
    EXPECT_EQ(p.candidates.size(), 1u);
    EXPECT_EQ(p.dropped.size(), 1u);

    auto echo = answers_;
    echo[0]["transformed_IR"] = root_.text;
    echo[1]["extra"] = 1;
    p = parse_answers({{"answers", echo}}, ctx());
    EXPECT_TRUE(p.candidates.empty());
    EXPECT_EQ(p.dropped.size(), 2u);

    auto renamed = answers_;
    renamed[0]["transformed_IR"] = "B^{4}_{tx=0}[Z^{f16,g}_{tx}=A^{f16,g}_{tx};];";
    p = parse_answers({{"answers", nlohmann::json::array({renamed[0]})}}, ctx());
    EXPECT_TRUE(p.candidates.empty());

    EXPECT_THROW(parse_answers(nlohmann::json::array(), ctx()), Error);
}

TEST_F(External, LineProtocolRoundTrip) {
    auto reply = write_reply("reply.json", {{"answers", answers_}});
    auto log = reply + ".log";
    std::filesystem::remove(log);
    auto proc = std::make_shared<LineProcess>("python3 " + kFixtures + "replay_proposer.py " + reply + " " + log);
    std::mt19937_64 rng(0);
    auto p = external_proposer(proc)(ctx(), 2, rng);
    EXPECT_EQ(p.candidates.size(), 2u);
    std::ifstream in(log);
    std::string line;
    ASSERT_TRUE(std::getline(in, line));
    auto req = nlohmann::json::parse(line);
    EXPECT_EQ(req["k"], 2);
    EXPECT_NE(req["prompt"].get<std::string>().find(root_.text), std::string::npos);

    auto report = search(root_.program, Algo::ChainParent, external_proposer(proc), analytic_cost_fn(),
                         SearchBudget::defaults(Algo::ChainParent), 1);
    check_report(root_.program, report);
    EXPECT_GE(report.verified_samples, 1u);
}

TEST_F(External, TimeoutAndMalformed) {
    LineProcess silent("python3 " + kFixtures + "fake_bridge.py silent", std::chrono::milliseconds(300));
    try {
        silent.request({{"cmd", "ping"}});
        FAIL() << "expected Timeout";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "Timeout");
    }
    LineProcess garbage("python3 " + kFixtures + "fake_bridge.py garbage");
    try {
        garbage.request({{"cmd", "ping"}});
        FAIL() << "expected ProtocolError";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "ProtocolError");
    }
}

// ---- bridge cost ----

TEST(Bridge, TimingAndLowering) {
    auto bridge = std::make_shared<LineProcess>("python3 " + kFixtures + "fake_bridge.py ok");
    EXPECT_EQ(bridge->request({{"cmd", "ping"}})["ok"], true);
    Program p = parse(corpus_get("loop_split.input"));
    double ms = bridge_cost(bridge)(p);
    EXPECT_DOUBLE_EQ(ms, static_cast<double>(print(p).size()) / 100.0);
    auto lowered = bridge_lower(*bridge, p, p);
    ASSERT_TRUE(lowered.has_value());
    EXPECT_LT(print(p).size(), lowered->original_tir.size());

    auto report = search(case_study(), Algo::Greedy, builtin_proposer(), bridge_cost(bridge),
                         SearchBudget::defaults(Algo::Greedy), 2);
    check_report(case_study(), report);
}

TEST(Bridge, FailureCarriesPartialReport) {
    auto bridge = std::make_shared<LineProcess>("python3 " + kFixtures + "fake_bridge.py fail");
    EXPECT_THROW(bridge_cost(bridge)(case_study()), Error);
    EXPECT_FALSE(bridge_lower(*bridge, case_study(), case_study()).has_value());

    // Root costs succeed analytically; the failing backend takes over afterwards.
    int calls = 0;
    CostFn flaky = [&](const Program& p) {
        if (calls++ == 0) return analytic_cost(p);
        return bridge_cost(bridge)(p);
    };
    try {
        search(case_study(), Algo::Greedy, builtin_proposer(), flaky, SearchBudget::defaults(Algo::Greedy), 3);
        FAIL() << "expected CostError";
    } catch (const SearchError& e) {
        EXPECT_EQ(e.code(), "CostError");
        EXPECT_EQ(e.partial().nodes.size(), 1u);
        EXPECT_GE(e.partial().samples, 1u);
    }
}

// ---- search ----

TEST(Search, EmptyBudget) {
    SearchBudget b = SearchBudget::defaults(Algo::Greedy);
    b.max_iterations = 0;
    auto r = search(case_study(), Algo::Greedy, builtin_proposer(), analytic_cost_fn(), b, 1);
    EXPECT_EQ(r.best, 0u);
    EXPECT_EQ(r.samples, 0u);
    EXPECT_EQ(r.efficiency, 0.0);
    EXPECT_TRUE(r.trajectory.empty());
}

TEST(Search, GreedyOnCaseStudy) {
    Program root = case_study();
    auto r = search(root, Algo::Greedy, builtin_proposer(), analytic_cost_fn(), SearchBudget::defaults(Algo::Greedy),
                    7);
    check_report(root, r);
    EXPECT_GT(r.best_node().speedup, 1.0);
    EXPECT_LE(r.samples, 41u);
    double prev = 1.0;
    for (const auto& [s, id] : r.trajectory) {
        EXPECT_GE(r.nodes[id].speedup, prev);
        prev = r.nodes[id].speedup;
    }
    EXPECT_NEAR(r.efficiency, r.best_node().speedup / r.samples, 1e-12);
}

TEST(Search, BeamDepthAndEnvelope) {
    Program root = case_study();
    auto r = search(root, Algo::Beam, builtin_proposer(), analytic_cost_fn(), SearchBudget::defaults(Algo::Beam), 4);
    check_report(root, r);
    for (const auto& n : r.nodes) EXPECT_LE(n.depth, 10);
    EXPECT_LE(r.samples, 20u * 3u);
}

TEST(Search, AllAlgorithmsSoundAndDeterministic) {
    CorpusConfig cfg;
    cfg.count = 3;
    cfg.seed = 17;
    cfg.shape_cap = 8;
    for (const auto& np : gen_corpus(cfg)) {
        for (Algo a : all_algos()) {
            SCOPED_TRACE(np.name + " " + std::string(to_string(a)));
            SearchBudget b = SearchBudget::defaults(a);
            auto r = search(np.program, a, builtin_proposer(), analytic_cost_fn(), b, 11);
            check_report(np.program, r);
            EXPECT_GE(r.best_node().speedup, 1.0);
            switch (a) {
                case Algo::Greedy: EXPECT_LE(r.samples, 41u); break;
                case Algo::BFS:
                case Algo::DFS: EXPECT_LE(r.samples, static_cast<size_t>(b.max_samples)); break;
                case Algo::Beam: EXPECT_LE(r.samples, 60u); break;
                default: EXPECT_LE(r.samples, 20u * static_cast<size_t>(b.children_per_node));
            }
            auto again = search(np.program, a, builtin_proposer(), analytic_cost_fn(), b, 11);
            EXPECT_EQ(again.to_json(), r.to_json());
        }
    }
}

// ---- metrics ----

TEST(MetricsTest, Arithmetic) {
    auto m = metrics({2.0, 4.0}, {10.0, 10.0});
    EXPECT_DOUBLE_EQ(m.avg_speedup, 3.0);
    EXPECT_DOUBLE_EQ(m.efficiency, 0.3);
    auto one = metrics({5.0}, {7.0}, {2.0});
    EXPECT_DOUBLE_EQ(one.median_speedup, one.avg_speedup);
    EXPECT_DOUBLE_EQ(one.max_speedup, one.avg_speedup);
    EXPECT_EQ(std::round(metrics({20.79}, {35.91}).efficiency * 100.0) / 100.0, 0.58);
    EXPECT_EQ(std::round(metrics({24.96}, {17.41}).efficiency * 100.0) / 100.0, 1.43);
    EXPECT_EQ(metrics(std::vector<SearchReport>{}).cases, 0u);
}
