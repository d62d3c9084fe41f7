// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 8).
//
// Usage: acceptance PATH_TO_LEIR_CLI [SCRATCH_DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "corpus.hpp"
#include "leir/analysis.hpp"
#include "leir/dataset.hpp"
#include "leir/interp.hpp"
#include "leir/search.hpp"
#include "leir/strategy.hpp"
#include "leir/syntax.hpp"
#include "oracles.hpp"
#include "reference_tables.hpp"
#include "strategy_examples.hpp"

using namespace leir;
namespace fs = std::filesystem;

namespace {

// ---- pinned tolerances and limits ----
constexpr double kCorpusSeconds = 5.0;
constexpr double kStrategySeconds = 60.0;
constexpr int64_t kShrinkCap = 8;
constexpr int kVerifyTrials = 3;
constexpr double kOracleTol = 1e-12;
constexpr int kOracleInstances = 50;
constexpr size_t kPoolSize = 30000;
constexpr int kFilterSeeds = 10;
constexpr size_t kMediumCap = 2000;
constexpr double kSimplifyRate = 0.20, kSimplifyTol = 0.02;
constexpr double kExpandRate = 0.04, kExpandTol = 0.01;
constexpr size_t kSearchPrograms = 20;
constexpr double kSearchSeconds = 600.0;

struct Verdict {
    bool pass = true;
    std::string detail;
    void fail(const std::string& why) {
        if (pass) detail = why;
        pass = false;
    }
};

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 1. Every reference row parses, validates and survives print(parse(x)).
Verdict corpus_round_trip() {
    Verdict o;
    auto t0 = Clock::now();
    auto rows = fixtures::load_corpus();
    size_t ok = 0;
    for (const auto& row : rows) {
        try {
            Program p = parse(row.leir);
            if (!validate(p).empty()) {
                o.fail(row.label + ": validation diagnostics");
                continue;
            }
            std::string once = print(p);
            if (print(parse(once)) != once) {
                o.fail(row.label + ": print is not a fixed point");
                continue;
            }
            ++ok;
        } catch (const std::exception& e) {
            o.fail(row.label + ": " + e.what());
        }
    }
    double secs = since(t0);
    if (rows.empty()) o.fail("no reference rows");
    if (secs >= kCorpusSeconds) o.fail(fmt::format("took {:.2f} s", secs));
    if (o.pass) o.detail = fmt::format("{}/{} rows in {:.2f} s", ok, rows.size(), secs);
    return o;
}

// 2. Each strategy applied to its example (shrunk) stays equivalent.
Verdict strategy_equivalence() {
    Verdict o;
    auto t0 = Clock::now();
    size_t passed = 0;
    for (StrategyId id : all_strategies()) {
        std::string name(meta(id).name);
        try {
            Program p = shrink_shapes(parse(fixtures::strategy_example(id)), kShrinkCap);
            auto sites = feasible(p, id);
            if (sites.empty()) {
                o.fail(name + ": no feasible site");
                continue;
            }
            bool all = true;
            size_t applied = 0;
            for (size_t i = 0; i < sites.size(); ++i) {
                std::mt19937_64 rng(i);
                Params params;
                try {
                    params = sample_params(p, sites[i], rng);
                } catch (const Error&) {
                    continue;
                }
                auto out = apply(p, sites[i], params);
                ++applied;
                if (!equivalent(p, out.transformed, kVerifyTrials, i).equivalent) all = false;
            }
            if (applied == 0) all = false;
            if (all) {
                ++passed;
            } else {
                o.fail(name + ": not equivalent");
            }
        } catch (const std::exception& e) {
            o.fail(name + ": " + e.what());
        }
    }
    double secs = since(t0);
    if (secs >= kStrategySeconds) o.fail(fmt::format("took {:.2f} s", secs));
    if (o.pass) o.detail = fmt::format("{}/{} strategies in {:.2f} s", passed, kStrategyCount, secs);
    return o;
}

// 3. Interpreter against hand-written loops.
Verdict oracles() {
    Verdict o;
    std::vector<std::pair<std::string, std::function<double(uint64_t)>>> suites = {
        {"matmul", fixtures::matmul_oracle_err},
        {"softmax", fixtures::softmax_oracle_err},
        {"running max", fixtures::running_max_oracle_err},
        {"mean", fixtures::mean_oracle_err},
    };
    double worst = 0.0;
    for (const auto& [name, err] : suites) {
        for (int i = 0; i < kOracleInstances; ++i) {
            double e = err(static_cast<uint64_t>(i));
            worst = std::max(worst, std::isnan(e) ? INFINITY : e);
            if (!(e <= kOracleTol)) o.fail(fmt::format("{} instance {}: error {:.3e}", name, i, e));
        }
    }
    if (o.pass) o.detail = fmt::format("{} suites x {} instances, max error {:.3e}", suites.size(), kOracleInstances, worst);
    return o;
}

// 4. Scores reproduce the bucket partition; K equals the precondition count.
Verdict calibration() {
    Verdict o;
    size_t buckets = 0, ks = 0;
    for (size_t i = 0; i < registry().size(); ++i) {
        const auto& m = registry()[i];
        std::string n(m.name);
        Bucket want = fixtures::kEasy.count(n)     ? Bucket::Easy
                      : fixtures::kMedium.count(n) ? Bucket::Medium
                                                   : Bucket::Difficult;
        if (bucket_of(difficulty_score(m)) == want) {
            ++buckets;
        } else {
            o.fail(fmt::format("{}: score {} gives {}", n, difficulty_score(m), to_string(bucket_of(difficulty_score(m)))));
        }
        if (i < fixtures::kPreconditionCounts.size() && m.K == fixtures::kPreconditionCounts[i] &&
            static_cast<size_t>(m.K) == m.preconditions.size()) {
            ++ks;
        } else {
            o.fail(n + ": K mismatch");
        }
    }
    if (registry().size() != kStrategyCount) o.fail("registry size");
    if (o.pass) o.detail = fmt::format("buckets {}/{}, K {}/{}", buckets, kStrategyCount, ks, kStrategyCount);
    return o;
}

DatasetEntry synthetic(StrategyId id, size_t i) {
    DatasetEntry e;
    e.strategy = std::string(meta(id).name);
    e.id = e.strategy + "#" + std::to_string(i);
    e.program_name = "p" + std::to_string(i);
    e.original_leir = "B^{4}_{tx=0}[D^{f32,g}_{tx}=A^{f32,g}_{tx};];";
    e.transformed_leir = e.original_leir;
    e.cot = "trace";
    e.difficulty = bucket_of(id);
    e.verified = true;
    return e;
}

// 30k entries split evenly across the three buckets. Easy and Difficult
// entries are spread over every strategy of the bucket; Medium entries go to
// four strategies so that the per-strategy cap binds.
std::vector<DatasetEntry> balanced_pool() {
    std::map<Bucket, std::vector<StrategyId>> by_bucket;
    for (StrategyId id : all_strategies()) by_bucket[bucket_of(id)].push_back(id);
    by_bucket[Bucket::Medium].resize(4);
    std::vector<DatasetEntry> pool;
    size_t per_bucket = kPoolSize / 3;
    for (auto& [bucket, ids] : by_bucket) {
        for (size_t i = 0; i < per_bucket; ++i) pool.push_back(synthetic(ids[i % ids.size()], i));
    }
    return pool;
}

// 5. Difficulty-aware filtering over 10 seeds.
Verdict filter_policy() {
    Verdict o;
    auto pool = balanced_pool();
    std::map<std::string, size_t> medium_before;
    size_t difficult = 0, simp = 0, expand = 0;
    for (const auto& e : pool) {
        if (e.difficulty == Bucket::Medium) medium_before[e.strategy]++;
        if (e.difficulty == Bucket::Difficult) ++difficult;
        if (e.difficulty == Bucket::Easy) (meta(*strategy_from_name(e.strategy)).simplification ? simp : expand)++;
    }
    double lo_s = 1, hi_s = 0, lo_x = 1, hi_x = 0;
    for (int seed = 0; seed < kFilterSeeds; ++seed) {
        FilterPolicy policy;
        policy.seed = static_cast<uint64_t>(seed);
        auto r = filter(pool, policy);
        std::map<std::string, size_t> medium_after;
        size_t easy_multi = 0, diff_multi = 0, diff_single = 0, kept_s = 0, kept_x = 0;
        for (const auto& e : r.kept_multi) {
            if (e.difficulty == Bucket::Easy) ++easy_multi;
            if (e.difficulty == Bucket::Medium) medium_after[e.strategy]++;
            if (e.difficulty == Bucket::Difficult) ++diff_multi;
        }
        for (const auto& e : r.kept_single) {
            if (e.difficulty == Bucket::Difficult) ++diff_single;
            if (e.difficulty == Bucket::Easy) (meta(*strategy_from_name(e.strategy)).simplification ? kept_s : kept_x)++;
        }
        if (easy_multi != 0) o.fail(fmt::format("seed {}: {} Easy entries in the multi pool", seed, easy_multi));
        for (const auto& [name, before] : medium_before) {
            if (medium_after[name] != std::min(before, kMediumCap)) {
                o.fail(fmt::format("seed {}: {} kept {} of {}", seed, name, medium_after[name], before));
            }
        }
        if (diff_multi != difficult || diff_single != difficult) o.fail(fmt::format("seed {}: Difficult dropped", seed));
        double rs = static_cast<double>(kept_s) / static_cast<double>(simp);
        double rx = static_cast<double>(kept_x) / static_cast<double>(expand);
        lo_s = std::min(lo_s, rs), hi_s = std::max(hi_s, rs);
        lo_x = std::min(lo_x, rx), hi_x = std::max(hi_x, rx);
        if (std::fabs(rs - kSimplifyRate) > kSimplifyTol) o.fail(fmt::format("seed {}: simplification rate {:.4f}", seed, rs));
        if (std::fabs(rx - kExpandRate) > kExpandTol) o.fail(fmt::format("seed {}: expansion rate {:.4f}", seed, rx));
    }
    if (o.pass) {
        o.detail = fmt::format("{} entries, {} seeds, simplification {:.3f}-{:.3f}, expansion {:.3f}-{:.3f}",
                               pool.size(), kFilterSeeds, lo_s, hi_s, lo_x, hi_x);
    }
    return o;
}

// 6. Efficiency arithmetic at two decimals.
Verdict metrics_arithmetic() {
    Verdict o;
    struct Pair {
        double speedup, samples, want;
    };
    for (const Pair& p : {Pair{20.79, 35.91, 0.58}, Pair{24.96, 17.41, 1.43}}) {
        double got = std::round(metrics({p.speedup}, {p.samples}).efficiency * 100.0) / 100.0;
        if (got != p.want) o.fail(fmt::format("{}/{} gave {:.2f}", p.speedup, p.samples, got));
    }
    if (o.pass) o.detail = "20.79/35.91 -> 0.58, 24.96/17.41 -> 1.43";
    return o;
}

// Largest sample count and depth each algorithm may spend under its defaults.
std::pair<size_t, int> envelope(Algo a, const SearchBudget& b) {
    size_t it = static_cast<size_t>(b.max_iterations), k = static_cast<size_t>(b.children_per_node);
    switch (a) {
        case Algo::BFS:
        case Algo::DFS: return {static_cast<size_t>(b.max_samples), b.max_depth};
        case Algo::Beam: {
            size_t levels = it / static_cast<size_t>(b.beam_width);
            return {levels * static_cast<size_t>(b.beam_width) * k, static_cast<int>(levels)};
        }
        case Algo::MCTS: return {it, std::min(b.max_depth, b.max_iterations)};
        default: return {it * k, b.max_iterations};
    }
}

// 7. Every algorithm on generated programs: soundness, budget, no undo.
Verdict search_soundness() {
    Verdict o;
    auto t0 = Clock::now();
    CorpusConfig cfg;
    cfg.count = kSearchPrograms;
    cfg.seed = 7;
    cfg.shape_cap = kShrinkCap;
    auto corpus = gen_corpus(cfg);
    double greedy_min = INFINITY;
    size_t runs = 0;
    for (const auto& np : corpus) {
        for (Algo a : all_algos()) {
            std::string tag = np.name + "/" + std::string(to_string(a));
            SearchBudget b = SearchBudget::defaults(a);
            if (b.max_iterations != 20) o.fail(tag + ": iterations budget");
            SearchReport r;
            try {
                SearchOptions opts;
                opts.program_name = np.name;
                r = search(np.program, a, builtin_proposer(), analytic_cost_fn(), b, 1000 + runs, opts);
            } catch (const std::exception& e) {
                o.fail(tag + ": " + e.what());
                continue;
            }
            ++runs;
            auto [max_samples, max_depth] = envelope(a, b);
            if (r.samples > max_samples) o.fail(fmt::format("{}: {} samples", tag, r.samples));
            for (size_t i = 1; i < r.nodes.size(); ++i) {
                const auto& n = r.nodes[i];
                if (n.depth > max_depth) o.fail(fmt::format("{}: depth {}", tag, n.depth));
                if (!equivalent(np.program, n.program, kVerifyTrials, 4242).equivalent) o.fail(tag + ": non-equivalent node");
            }
            for (size_t i = 1; i < r.trajectory.size(); ++i) {
                auto x = strategy_from_name(r.trajectory[i - 1].first);
                auto y = strategy_from_name(r.trajectory[i].first);
                if (!x || !y || are_inverse(*x, *y)) o.fail(tag + ": adjacent inverse pair");
            }
            if (a == Algo::Greedy) greedy_min = std::min(greedy_min, r.best_node().speedup);
        }
    }
    double secs = since(t0);
    if (!(greedy_min >= 1.0)) o.fail(fmt::format("greedy best speedup {}", greedy_min));
    if (secs >= kSearchSeconds) o.fail(fmt::format("took {:.1f} s", secs));
    if (o.pass) {
        o.detail = fmt::format("{} programs x {} algorithms, greedy min best speedup {:.3f}, {:.1f} s", corpus.size(),
                               all_algos().size(), greedy_min, secs);
    }
    return o;
}

// 8. Two CLI build-dataset runs with one seed are byte-identical; prompts re-parse.
Verdict dataset_reproducibility(const std::string& cli, const fs::path& scratch) {
    Verdict o;
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    auto sh = [&](const std::string& args) {
        std::string cmd = "'" + cli + "' " + args + " > /dev/null";
        return std::system(cmd.c_str());
    };
    auto corpus = scratch / "corpus";
    if (sh(fmt::format("gen --count 24 --seed 5 --shape-cap 8 --out '{}'", corpus.string())) != 0) {
        o.fail("gen failed");
        return o;
    }
    for (const char* run : {"a", "b"}) {
        auto out = scratch / run;
        if (sh(fmt::format("build-dataset --corpus '{}' --out '{}' --seed 9", corpus.string(), out.string())) != 0) {
            o.fail(std::string("build-dataset run ") + run + " failed");
            return o;
        }
    }
    size_t files = 0;
    for (const auto& f : fs::directory_iterator(scratch / "a")) {
        auto other = scratch / "b" / f.path().filename();
        if (!fs::exists(other) || slurp(f.path()) != slurp(other)) o.fail(f.path().filename().string() + " differs");
        ++files;
    }
    if (files == 0) o.fail("no output files");
    size_t prompts = 0;
    for (const char* name : {"chat_single.jsonl", "chat_multi.jsonl"}) {
        std::ifstream in(scratch / "a" / name);
        if (!in) o.fail(std::string("missing ") + name);
        std::string line;
        while (std::getline(in, line)) {
            try {
                auto j = nlohmann::json::parse(line);
                auto leir = prompt_leir(j.at("messages").at(0).at("content").get<std::string>());
                if (!leir) {
                    o.fail(std::string(name) + ": prompt without LEIR");
                    continue;
                }
                parse(*leir);
                ++prompts;
            } catch (const std::exception& e) {
                o.fail(std::string(name) + ": " + e.what());
            }
        }
    }
    if (prompts == 0) o.fail("no chat prompts");
    if (o.pass) o.detail = fmt::format("{} files identical, {} prompts re-parse", files, prompts);
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance PATH_TO_LEIR_CLI [SCRATCH_DIR]\n";
        return 2;
    }
    std::string cli = argv[1];
    fs::path scratch = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "leir_acceptance";

    std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"corpus round trip", corpus_round_trip},
        {"strategy equivalence", strategy_equivalence},
        {"interpreter oracles", oracles},
        {"difficulty calibration", calibration},
        {"filter policy", filter_policy},
        {"metrics arithmetic", metrics_arithmetic},
        {"search soundness and budget", search_soundness},
        {"dataset reproducibility", [&] { return dataset_reproducibility(cli, scratch); }},
    };
    int failed = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        Verdict o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.fail(e.what());
        }
        failed += o.pass ? 0 : 1;
        std::cout << fmt::format("criterion {} {}: {} ({})", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL",
                                 o.detail)
                  << std::endl;
    }
    return failed;
}
