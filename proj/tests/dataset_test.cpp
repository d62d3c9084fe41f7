// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "corpus.hpp"
#include "leir/analysis.hpp"
#include "leir/dataset.hpp"
#include "leir/interp.hpp"
#include "leir/syntax.hpp"

using namespace leir;
using leir::fixtures::corpus_get;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("leir_dataset_test_" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

DatasetEntry synthetic(const std::string& strategy, size_t i) {
    DatasetEntry e;
    e.id = strategy + "#" + std::to_string(i);
    e.program_name = "p" + std::to_string(i);
    e.original_leir = "B^{4}_{tx=0}[D^{f32,g}_{tx}=A^{f32,g}_{tx};];";
    e.transformed_leir = e.original_leir;
    e.strategy = strategy;
    e.cot = "trace";
    e.difficulty = bucket_of(*strategy_from_name(strategy));
    e.verified = true;
    return e;
}

std::vector<NamedProgram> small_corpus(uint64_t seed, size_t count, std::vector<std::string> families = {}) {
    CorpusConfig cfg;
    cfg.count = count;
    cfg.seed = seed;
    cfg.shape_cap = 8;
    cfg.families = std::move(families);
    return gen_corpus(cfg);
}

}  // namespace

// ---- corpus ----

TEST(Corpus, DeterministicPerSeed) {
    CorpusConfig cfg;
    cfg.count = 10;
    cfg.seed = 7;
    auto a = gen_corpus(cfg);
    auto b = gen_corpus(cfg);
    ASSERT_EQ(a.size(), 10u);
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].name, b[i].name);
        EXPECT_EQ(print(a[i].program), print(b[i].program));
    }
    cfg.seed = 8;
    auto c = gen_corpus(cfg);
    bool differs = false;
    for (size_t i = 0; i < a.size(); ++i) differs |= print(a[i].program) != print(c[i].program);
    EXPECT_TRUE(differs);
}

TEST(Corpus, ProgramsValidateAndRun) {
    for (uint64_t seed : {1u, 2u, 3u}) {
        CorpusConfig cfg;
        cfg.count = 150;
        cfg.seed = seed;
        for (const auto& np : gen_corpus(cfg)) {
            SCOPED_TRACE(np.name + ": " + print(np.program));
            EXPECT_TRUE(validate(np.program).empty());
            EXPECT_NO_THROW(run(np.program, random_env(np.program, seed)));
            EXPECT_TRUE(structural_eq(parse(print(np.program)), np.program));
        }
    }
}

TEST(Corpus, CensusCoversAllFamilies) {
    CorpusConfig cfg;
    cfg.count = 6335;
    cfg.seed = 11;
    std::map<std::string, size_t> census;
    for (const auto& np : gen_corpus(cfg)) census[np.family]++;
    for (const auto& f : corpus_families()) EXPECT_GE(census[f], 1u) << f;
    EXPECT_EQ(census.size(), corpus_families().size());
}

TEST(Corpus, FamilyFilterAndUnknownFamily) {
    for (const auto& np : small_corpus(3, 20, {"softmax"})) EXPECT_EQ(np.family, "softmax");
    CorpusConfig cfg;
    cfg.families = {"nonexistent"};
    try {
        gen_corpus(cfg);
        FAIL() << "expected UnknownFamily";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "UnknownFamily");
    }
}

// ---- reasoning traces ----

TEST(Cot, LoopSplitNamesAxisFactorsAndRecomposition) {
    Program p = parse(corpus_get("loop_split.input"));
    auto sites = feasible(p, StrategyId::LoopSplit);
    ASSERT_FALSE(sites.empty());
    Outcome o = apply(p, sites[0], {{"outer", 4}});
    std::string text = render_cot(p, o);
    EXPECT_NE(text.find(std::string(meta(StrategyId::LoopSplit).description)), std::string::npos);
    EXPECT_NE(text.find("outer loop of 4"), std::string::npos) << text;
    EXPECT_NE(text.find("inner loop of 4"), std::string::npos) << text;
    EXPECT_NE(text.find("c*4+tx"), std::string::npos) << text;
    EXPECT_EQ(text, render_cot(p, o));
}

TEST(Cot, MentionsEveryNewVar) {
    size_t outcomes = 0;
    std::mt19937_64 rng(5);
    for (const auto& np : small_corpus(21, 60)) {
        for (const auto& [id, sites] : feasible(np.program)) {
            for (const auto& site : sites) {
                if (outcomes >= 1000) break;
                Outcome o = apply(np.program, site, sample_params(np.program, site, rng));
                std::string text = render_cot(np.program, o);
                for (const auto& v : o.diff.new_vars) {
                    EXPECT_NE(text.find(v), std::string::npos) << meta(id).name << " missing " << v;
                }
                ++outcomes;
            }
        }
    }
    EXPECT_GE(outcomes, 1000u);
}

// ---- entry building ----

TEST(Build, MatmulYieldsSplitAndBinding) {
    auto corpus = small_corpus(4, 3, {"matmul"});
    BuildConfig cfg;
    cfg.seed = 1;
    auto entries = build_entries(corpus, cfg);
    std::set<std::string> strategies;
    for (const auto& e : entries) {
        strategies.insert(e.strategy);
        EXPECT_TRUE(e.verified);
        EXPECT_EQ(e.difficulty, bucket_of(*strategy_from_name(e.strategy)));
    }
    EXPECT_TRUE(strategies.count("loop split"));
    EXPECT_TRUE(strategies.count("loop binding"));
}

TEST(Build, InjectedFaultIsExcluded) {
    auto corpus = small_corpus(4, 2, {"activation"});
    BuildConfig clean;
    clean.seed = 2;
    BuildReport clean_report;
    auto good = build_entries(corpus, clean, &clean_report);
    ASSERT_FALSE(good.empty());

    BuildConfig faulty = clean;
    faulty.fault = [](const Program& p) {
        Program q = p;
        for (auto& n : q.exprs) {
            for (auto& item : n.body) {
                if (item.is_eq) item.eq.rhs = v_add(item.eq.rhs, v_const(1.0));
            }
        }
        return q;
    };
    BuildReport report;
    auto bad = build_entries(corpus, faulty, &report);
    EXPECT_TRUE(bad.empty());
    EXPECT_EQ(report.skipped.size(), report.attempted);
    EXPECT_GT(report.attempted, 0u);
}

TEST(Build, DeterministicAcrossWorkerCounts) {
    auto corpus = small_corpus(9, 6);
    BuildConfig one;
    one.seed = 3;
    one.workers = 1;
    BuildConfig many = one;
    many.workers = 4;
    auto a = build_entries(corpus, one);
    auto b = build_entries(corpus, many);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
    std::set<std::string> ids;
    for (const auto& e : a) EXPECT_TRUE(ids.insert(e.id).second);
}

// ---- filter ----

TEST(Filter, EasyRemovedFromMultiAndMediumCapped) {
    std::vector<DatasetEntry> pool;
    for (size_t i = 0; i < 5000; ++i) pool.push_back(synthetic("loop binding", i));     // medium
    for (size_t i = 0; i < 300; ++i) pool.push_back(synthetic("apart", i));            // easy
    for (size_t i = 0; i < 200; ++i) pool.push_back(synthetic("online softmax", i));    // difficult
    auto r = filter(pool, FilterPolicy{});
    size_t medium = 0, easy = 0, difficult = 0;
    for (const auto& e : r.kept_multi) {
        medium += e.strategy == "loop binding";
        easy += e.difficulty == Bucket::Easy;
        difficult += e.strategy == "online softmax";
    }
    EXPECT_EQ(medium, 2000u);
    EXPECT_EQ(easy, 0u);
    EXPECT_EQ(difficult, 200u);
    EXPECT_EQ(r.report["strategies"]["loop binding"]["multi_before"], 5000);
    EXPECT_EQ(r.report["strategies"]["loop binding"]["multi_after"], 2000);
    EXPECT_EQ(r.report["buckets"]["multi"]["after"]["easy"], 0);
}

TEST(Filter, EasySingleRetentionRates) {
    ASSERT_TRUE(meta(StrategyId::Together).simplification);
    ASSERT_EQ(bucket_of(StrategyId::Together), Bucket::Easy);
    ASSERT_FALSE(meta(StrategyId::Apart).simplification);
    std::vector<DatasetEntry> simp, expand;
    for (size_t i = 0; i < 10000; ++i) simp.push_back(synthetic("together", i));
    for (size_t i = 0; i < 10000; ++i) expand.push_back(synthetic("apart", i));
    for (uint64_t seed = 0; seed < 5; ++seed) {
        FilterPolicy policy;
        policy.seed = seed;
        double s = filter(simp, policy).kept_single.size() / 10000.0;
        double x = filter(expand, policy).kept_single.size() / 10000.0;
        EXPECT_NEAR(s, 0.20, 0.02);
        EXPECT_NEAR(x, 0.04, 0.01);
    }
}

TEST(Filter, ConservationAndSeparatePools) {
    std::vector<DatasetEntry> single, multi;
    for (size_t i = 0; i < 50; ++i) single.push_back(synthetic("online softmax", i));
    for (size_t i = 0; i < 50; ++i) multi.push_back(synthetic("loop split", i));
    auto r = filter(single, multi, FilterPolicy{});
    EXPECT_EQ(r.kept_single.size(), 50u);
    EXPECT_EQ(r.kept_multi.size(), 50u);
    FilterPolicy bad;
    bad.easy_single_keep_simplify = 1.5;
    EXPECT_THROW(filter(single, bad), Error);
}

// ---- emission ----

class EmitTest : public ::testing::Test {
  protected:
    static void SetUpTestSuite() {
        BuildConfig cfg;
        cfg.seed = 5;
        entries_ = build_entries(small_corpus(12, 4), cfg);
    }
    static std::vector<DatasetEntry> entries_;
};
std::vector<DatasetEntry> EmitTest::entries_;

TEST_F(EmitTest, DictionaryRoundTrip) {
    ASSERT_FALSE(entries_.empty());
    auto path = (scratch("dict") / "entries.jsonl").string();
    emit(entries_, EmitFormat::DictionaryJsonl, path);
    auto back = read_dictionary(path);
    ASSERT_EQ(back.size(), entries_.size());
    for (size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i], entries_[i]);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    auto j = nlohmann::json::parse(line);
    std::set<std::string> keys;
    for (const auto& [k, v] : j.items()) keys.insert(k);
    EXPECT_EQ(keys, (std::set<std::string>{"id", "program_name", "original_leir", "transformed_leir", "strategy",
                                           "cot", "difficulty", "verified", "original_tir", "transformed_tir",
                                           "cuda"}));
    EXPECT_TRUE(j["cuda"].is_null());
}

TEST_F(EmitTest, LoweredFieldsRoundTrip) {
    DatasetEntry e = synthetic("loop split", 0);
    e.lowered = Lowered{"tir a", "tir b", "__global__ void k() {}"};
    EXPECT_EQ(DatasetEntry::from_json(e.to_json()), e);
}

TEST_F(EmitTest, MultiLabelStartsWithCount) {
    std::vector<DatasetEntry> group;
    for (const auto& e : entries_) {
        if (e.original_leir == entries_[0].original_leir && group.size() < 3) group.push_back(e);
    }
    ASSERT_EQ(group.size(), 3u);
    ChatSample s = chat_multi(group);
    EXPECT_EQ(s.label.rfind("3", 0), 0u);
    EXPECT_NE(s.label.find("[3]"), std::string::npos);
    EXPECT_EQ(s.answers, 3u);
}

TEST_F(EmitTest, PromptsReparse) {
    auto check = [](const ChatSample& s) {
        auto leir = prompt_leir(s.prompt);
        ASSERT_TRUE(leir.has_value());
        EXPECT_NO_THROW(parse(*leir));
        auto j = s.to_json();
        ASSERT_EQ(j["messages"].size(), 2u);
        EXPECT_EQ(j["messages"][0]["role"], "user");
        EXPECT_EQ(j["messages"][1]["role"], "assistant");
    };
    for (const auto& e : entries_) {
        ChatSample s = chat_single(e);
        check(s);
        EXPECT_NE(s.prompt.find(e.program_name), std::string::npos);
        EXPECT_NE(s.label.find(e.transformed_leir), std::string::npos);
    }
    auto bundles = chat_multi_bundles(entries_, 2, 4, 1);
    ASSERT_FALSE(bundles.empty());
    for (const auto& s : bundles) {
        check(s);
        EXPECT_GE(s.answers, 2u);
        EXPECT_LE(s.answers, 4u);
    }
}

TEST_F(EmitTest, ByteIdenticalOutputs) {
    auto dir = scratch("bytes");
    for (auto format : {EmitFormat::DictionaryJsonl, EmitFormat::ChatSingleJsonl, EmitFormat::ChatMultiJsonl}) {
        emit(entries_, format, (dir / "a.jsonl").string(), 3);
        emit(entries_, format, (dir / "b.jsonl").string(), 3);
        EXPECT_EQ(slurp((dir / "a.jsonl").string()), slurp((dir / "b.jsonl").string()));
    }
    EXPECT_THROW(emit(entries_, EmitFormat::DictionaryJsonl, "/nonexistent/dir/x.jsonl"), Error);
}
