// SPDX-License-Identifier: Apache-2.0
//
// Source-program corpus, one-step transformation entries with reasoning
// traces, difficulty-aware filtering and JSONL emission.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "leir/ast.hpp"
#include "leir/strategy.hpp"

namespace leir {

// ---- corpus ----

struct CorpusConfig {
    std::vector<std::string> families;  // empty = all
    size_t count = 100;
    int64_t shape_cap = 12;
    std::vector<DType> dtypes = {DType::F16, DType::F32, DType::F64};
    uint64_t seed = 0;
};

struct NamedProgram {
    std::string name;    // family_variant_counter
    std::string family;
    Program program;
};

const std::vector<std::string>& corpus_families();
std::vector<NamedProgram> gen_corpus(const CorpusConfig& cfg);

// ---- entries ----

struct Lowered {
    std::string original_tir;
    std::string transformed_tir;
    std::string cuda;
};

struct DatasetEntry {
    std::string id;
    std::string program_name;
    std::string original_leir;
    std::string transformed_leir;
    std::string strategy;  // canonical name
    std::string cot;
    Bucket difficulty = Bucket::Easy;
    bool verified = false;
    std::optional<Lowered> lowered;

    nlohmann::json to_json() const;
    static DatasetEntry from_json(const nlohmann::json& j);
    bool operator==(const DatasetEntry& o) const;
};

// Strategy description followed by an instance paragraph built from the diff.
std::string render_cot(const Program& original, const Outcome& outcome);

struct BuildConfig {
    uint64_t seed = 0;
    size_t sites_per_strategy = 2;  // sampled per program and strategy
    int verify_trials = 3;
    unsigned workers = 0;           // 0 = hardware concurrency
    // Test hook: rewrites a transformed program before verification.
    std::function<Program(const Program&)> fault;
};

struct BuildReport {
    size_t attempted = 0;
    size_t verified = 0;
    size_t duplicates = 0;
    std::vector<std::string> skipped;  // one reason per dropped transformation
};

std::vector<DatasetEntry> build_entries(const std::vector<NamedProgram>& corpus, const BuildConfig& cfg,
                                        BuildReport* report = nullptr);

// ---- filter ----

struct FilterPolicy {
    double easy_multi_keep = 0.0;
    double easy_single_keep_simplify = 0.20;
    double easy_single_keep_expand = 0.04;
    size_t medium_multi_cap = 2000;
    double difficult_keep = 1.0;
    uint64_t seed = 0;
};

struct FilterResult {
    std::vector<DatasetEntry> kept_single;
    std::vector<DatasetEntry> kept_multi;
    nlohmann::json report;  // per-bucket and per-strategy counts before/after
};

// Each entry enters both pools before filtering.
FilterResult filter(const std::vector<DatasetEntry>& entries, const FilterPolicy& policy);
FilterResult filter(const std::vector<DatasetEntry>& single_pool, const std::vector<DatasetEntry>& multi_pool,
                    const FilterPolicy& policy);

// ---- emission ----

enum class EmitFormat { DictionaryJsonl, ChatSingleJsonl, ChatMultiJsonl };

struct ChatSample {
    bool multi = false;
    std::string prompt;
    std::string label;
    size_t answers = 1;
    nlohmann::json to_json() const;
};

std::string render_prompt(const std::string& program_name, const Program& original, bool multi);
ChatSample chat_single(const DatasetEntry& e);
// All entries must share the same original program.
ChatSample chat_multi(const std::vector<DatasetEntry>& group);
// Groups entries by original program into bundles of 2..max_k, seeded.
std::vector<ChatSample> chat_multi_bundles(const std::vector<DatasetEntry>& entries, size_t min_k, size_t max_k,
                                           uint64_t seed);

// Extracts the LEIR block embedded in a prompt.
std::optional<std::string> prompt_leir(const std::string& prompt);

void emit(const std::vector<DatasetEntry>& entries, EmitFormat format, const std::string& path,
          uint64_t seed = 0, size_t min_k = 2, size_t max_k = 4);
std::vector<DatasetEntry> read_dictionary(const std::string& path);

}  // namespace leir
