// SPDX-License-Identifier: Apache-2.0

#include "leir/dataset.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "leir/analysis.hpp"
#include "leir/hash.hpp"
#include "leir/interp.hpp"
#include "leir/syntax.hpp"

namespace leir {

namespace {

Bucket bucket_from_string(const std::string& s) {
    if (s == "easy") return Bucket::Easy;
    if (s == "medium") return Bucket::Medium;
    if (s == "difficult") return Bucket::Difficult;
    throw Error("InvalidEntry", "unknown difficulty '" + s + "'");
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

std::string params_text(const Params& p) {
    if (!p.is_object() || p.empty()) return "";
    std::vector<std::string> parts;
    for (const auto& [k, v] : p.items()) parts.push_back(k + "=" + (v.is_string() ? v.get<std::string>() : v.dump()));
    return join(parts, ", ");
}

// Split-specific sentence naming the axis, factor pair and recomposed index.
std::string split_sentence(const Program& original, const Outcome& o, const Diff& d) {
    const Site& s = o.site;
    if (s.exprs.empty() || s.loops.empty()) return "";
    const Nest& n = original.exprs.at(s.exprs[0]);
    std::vector<std::string> parts;
    if (o.strategy == StrategyId::LoopSplit && o.params.contains("outer")) {
        const LoopHeader& l = n.loops.at(s.loops[0]);
        int64_t outer = o.params["outer"].get<int64_t>();
        parts.push_back(fmt::format("Loop {} (extent {}) splits into an outer loop of {} and an inner loop of {}.",
                                    l.index, l.extent, outer, l.extent / std::max<int64_t>(outer, 1)));
    }
    if (o.strategy == StrategyId::LoopTiling && o.params.contains("outer")) {
        for (size_t k = 0; k < s.loops.size() && k < o.params["outer"].size(); ++k) {
            const LoopHeader& l = n.loops.at(s.loops[k]);
            int64_t outer = o.params["outer"][k].get<int64_t>();
            parts.push_back(fmt::format("Loop {} (extent {}) tiles into {} x {}.", l.index, l.extent, outer,
                                        l.extent / std::max<int64_t>(outer, 1)));
        }
    }
    if (parts.empty()) return "";
    std::string out = join(parts, " ");
    if (!d.new_index_calcs.empty()) out += " Accesses now use " + join(d.new_index_calcs, ", ") + ".";
    return out;
}

// Names the expressions, loops and tensors a site touches.
std::string target_text(const Program& original, const Site& s) {
    std::vector<std::string> parts;
    if (!s.exprs.empty()) {
        std::vector<std::string> ix;
        for (size_t e : s.exprs) ix.push_back(std::to_string(e));
        parts.push_back((s.exprs.size() == 1 ? "expression " : "expressions ") + join(ix, ", "));
    }
    if (!s.loops.empty() && !s.exprs.empty() && s.exprs[0] < original.exprs.size()) {
        const Nest& n = original.exprs[s.exprs[0]];
        std::vector<std::string> names;
        for (size_t l : s.loops) {
            if (l < n.loops.size()) names.push_back(n.loops[l].index);
        }
        if (!names.empty()) parts.push_back((names.size() == 1 ? "loop " : "loops ") + join(names, ", "));
    }
    if (!s.term.empty()) parts.push_back("a subterm of the right-hand side");
    if (!s.names.empty()) parts.push_back((s.names.size() == 1 ? "tensor " : "tensors ") + join(s.names, ", "));
    return parts.empty() ? "the whole program" : join(parts, "; ");
}

std::string entry_id(const std::string& original, const std::string& transformed, const std::string& strategy) {
    uint64_t h = fnv1a(original);
    h = fnv1a("\n", h);
    h = fnv1a(transformed, h);
    h = fnv1a("\n", h);
    h = fnv1a(strategy, h);
    return fmt::format("{:016x}", h);
}

std::string io_line(const Program& p, Role role) {
    std::vector<std::string> parts;
    for (const auto& [name, e] : p.io) {
        if (e.role != role) continue;
        std::vector<std::string> dims;
        for (auto x : e.shape) dims.push_back(std::to_string(x));
        parts.push_back(fmt::format("{} {} [{}]", name, to_string(e.dtype), join(dims, ",")));
    }
    return parts.empty() ? "none" : join(parts, "; ");
}

std::string fenced(const std::string& leir) { return "```leir\n" + leir + "\n```"; }

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot open '" + path + "' for writing");
    for (const auto& l : lines) out << l << '\n';
    out.flush();
    if (!out) throw Error("IoError", "write to '" + path + "' failed");
}

}  // namespace

// ---- entries ----

nlohmann::json DatasetEntry::to_json() const {
    nlohmann::json j;
    j["id"] = id;
    j["program_name"] = program_name;
    j["original_leir"] = original_leir;
    j["transformed_leir"] = transformed_leir;
    j["strategy"] = strategy;
    j["cot"] = cot;
    j["difficulty"] = std::string(to_string(difficulty));
    j["verified"] = verified;
    j["original_tir"] = lowered ? nlohmann::json(lowered->original_tir) : nlohmann::json(nullptr);
    j["transformed_tir"] = lowered ? nlohmann::json(lowered->transformed_tir) : nlohmann::json(nullptr);
    j["cuda"] = lowered ? nlohmann::json(lowered->cuda) : nlohmann::json(nullptr);
    return j;
}

DatasetEntry DatasetEntry::from_json(const nlohmann::json& j) {
    DatasetEntry e;
    e.id = j.at("id").get<std::string>();
    e.program_name = j.at("program_name").get<std::string>();
    e.original_leir = j.at("original_leir").get<std::string>();
    e.transformed_leir = j.at("transformed_leir").get<std::string>();
    e.strategy = j.at("strategy").get<std::string>();
    e.cot = j.at("cot").get<std::string>();
    e.difficulty = bucket_from_string(j.at("difficulty").get<std::string>());
    e.verified = j.at("verified").get<bool>();
    if (!j.at("original_tir").is_null()) {
        e.lowered = Lowered{j.at("original_tir").get<std::string>(), j.at("transformed_tir").get<std::string>(),
                            j.at("cuda").is_null() ? "" : j.at("cuda").get<std::string>()};
    }
    return e;
}

bool DatasetEntry::operator==(const DatasetEntry& o) const { return to_json() == o.to_json(); }

std::string render_cot(const Program& original, const Outcome& o) {
    const StrategyMeta& m = meta(o.strategy);
    const Diff& d = o.diff;
    std::ostringstream out;
    out << "Strategy: " << m.name << ". Idea: " << m.description << ".\n";
    out << "Target: " << target_text(original, o.site) << ".";
    if (std::string p = params_text(o.params); !p.empty()) out << " Chosen variant: " << p << ".";
    if (std::string s = split_sentence(original, o, d); !s.empty()) out << " " << s;
    out << "\n";
    out << fmt::format(
        "Changes: {} expression(s), {} loop(s), {} equation(s), {} variable(s), {} range(s), {} index segment(s).",
        d.modified_exprs, d.modified_loops, d.modified_equations, d.modified_vars, d.modified_ranges,
        d.modified_index_segments);
    if (!d.new_vars.empty()) out << " New symbols: " << join(d.new_vars, ", ") << ".";
    if (!d.new_index_calcs.empty()) out << " New index calculations: " << join(d.new_index_calcs, ", ") << ".";
    out << "\n";
    std::vector<std::string> before;
    for (size_t i : o.site.exprs) {
        if (i < original.exprs.size()) before.push_back(print(original.exprs[i]));
    }
    if (!before.empty()) out << "Before: " << join(before, ";") << ";\n";
    // New expressions in program order.
    std::set<std::string> fresh(d.new_exprs.begin(), d.new_exprs.end());
    std::vector<std::string> after;
    for (const auto& n : o.transformed.exprs) {
        if (std::string t = print(n); fresh.count(t) || fresh.count(t + ";")) after.push_back(t);
    }
    if (after.empty()) after = d.new_exprs;
    if (!after.empty()) out << "After: " << join(after, ";") << ";\n";
    out << fmt::format("Reassembled program: {} expression(s), previously {}.", o.transformed.exprs.size(),
                       original.exprs.size());
    return out.str();
}

std::vector<DatasetEntry> build_entries(const std::vector<NamedProgram>& corpus, const BuildConfig& cfg,
                                        BuildReport* report) {
    struct Slot {
        std::vector<DatasetEntry> entries;
        std::vector<std::string> skipped;
        size_t attempted = 0;
    };
    std::vector<Slot> slots(corpus.size());
    auto work = [&](size_t i) {
        const NamedProgram& np = corpus[i];
        Slot& slot = slots[i];
        std::mt19937_64 rng(fnv1a(static_cast<uint64_t>(i), fnv1a(cfg.seed)));
        std::string original = print(np.program);
        std::map<StrategyId, std::vector<Site>> all;
        try {
            all = feasible(np.program);
        } catch (const std::exception& e) {
            slot.skipped.push_back(np.name + ": feasibility failed: " + e.what());
            return;
        }
        for (auto& [id, sites] : all) {
            std::shuffle(sites.begin(), sites.end(), rng);
            if (sites.size() > cfg.sites_per_strategy) sites.resize(cfg.sites_per_strategy);
            for (const auto& site : sites) {
                ++slot.attempted;
                std::string tag = np.name + " / " + std::string(meta(id).name);
                try {
                    Params params = sample_params(np.program, site, rng);
                    Outcome o = apply(np.program, site, params);
                    if (cfg.fault) o.transformed = cfg.fault(o.transformed);
                    auto rep = equivalent(np.program, o.transformed, cfg.verify_trials, rng());
                    if (!rep.equivalent) {
                        slot.skipped.push_back(tag + ": not equivalent");
                        continue;
                    }
                    DatasetEntry e;
                    e.program_name = np.name;
                    e.original_leir = original;
                    e.transformed_leir = print(o.transformed);
                    e.strategy = std::string(meta(id).name);
                    e.cot = render_cot(np.program, o);
                    e.difficulty = bucket_of(id);
                    e.verified = true;
                    e.id = entry_id(e.original_leir, e.transformed_leir, e.strategy);
                    slot.entries.push_back(std::move(e));
                } catch (const std::exception& ex) {
                    slot.skipped.push_back(tag + ": " + ex.what());
                }
            }
        }
    };
    unsigned workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<size_t>(corpus.size(), 1)));
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (size_t i = next++; i < corpus.size(); i = next++) work(i);
        });
    }
    for (auto& t : pool) t.join();

    std::vector<DatasetEntry> out;
    std::set<std::string> seen;
    BuildReport rep;
    for (auto& slot : slots) {
        rep.attempted += slot.attempted;
        for (auto& s : slot.skipped) {
            spdlog::debug("skipped {}", s);
            rep.skipped.push_back(std::move(s));
        }
        for (auto& e : slot.entries) {
            if (!seen.insert(e.id).second) {
                ++rep.duplicates;
                continue;
            }
            out.push_back(std::move(e));
        }
    }
    rep.verified = out.size();
    if (report) *report = std::move(rep);
    return out;
}

// ---- filter ----

FilterResult filter(const std::vector<DatasetEntry>& entries, const FilterPolicy& policy) {
    return filter(entries, entries, policy);
}

FilterResult filter(const std::vector<DatasetEntry>& single_pool, const std::vector<DatasetEntry>& multi_pool,
                    const FilterPolicy& policy) {
    for (double f : {policy.easy_multi_keep, policy.easy_single_keep_simplify, policy.easy_single_keep_expand,
                     policy.difficult_keep}) {
        if (f < 0.0 || f > 1.0) throw Error("InvalidPolicy", "filter fractions must lie in [0,1]");
    }
    std::mt19937_64 rng(policy.seed);
    auto keep = [&](double p) { return p >= 1.0 || (p > 0.0 && std::bernoulli_distribution(p)(rng)); };
    auto simplifying = [](const DatasetEntry& e) {
        auto id = strategy_from_name(e.strategy);
        return id && meta(*id).simplification;
    };

    FilterResult r;
    nlohmann::json per_strategy = nlohmann::json::object();
    auto count = [&](const char* pool, const char* phase, const DatasetEntry& e) {
        auto& slot = per_strategy[e.strategy][std::string(pool) + "_" + phase];
        slot = slot.is_null() ? 1 : slot.get<int64_t>() + 1;
    };
    std::map<std::string, int64_t> bucket_counts;
    auto bump = [&](const std::string& key) { bucket_counts[key]++; };

    for (const auto& e : single_pool) {
        count("single", "before", e);
        bump("single_before_" + std::string(to_string(e.difficulty)));
        bool k = true;
        if (e.difficulty == Bucket::Easy) {
            k = keep(simplifying(e) ? policy.easy_single_keep_simplify : policy.easy_single_keep_expand);
        } else if (e.difficulty == Bucket::Difficult) {
            k = keep(policy.difficult_keep);
        }
        if (k) r.kept_single.push_back(e);
    }

    std::map<std::string, std::vector<size_t>> medium;
    std::vector<bool> take(multi_pool.size(), false);
    for (size_t i = 0; i < multi_pool.size(); ++i) {
        const auto& e = multi_pool[i];
        count("multi", "before", e);
        bump("multi_before_" + std::string(to_string(e.difficulty)));
        switch (e.difficulty) {
            case Bucket::Easy: take[i] = keep(policy.easy_multi_keep); break;
            case Bucket::Medium: medium[e.strategy].push_back(i); break;
            case Bucket::Difficult: take[i] = keep(policy.difficult_keep); break;
        }
    }
    for (auto& [name, idx] : medium) {
        if (idx.size() > policy.medium_multi_cap) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(policy.medium_multi_cap);
        }
        for (size_t i : idx) take[i] = true;
    }
    for (size_t i = 0; i < multi_pool.size(); ++i) {
        if (take[i]) r.kept_multi.push_back(multi_pool[i]);
    }
    for (const auto& e : r.kept_single) {
        count("single", "after", e);
        bump("single_after_" + std::string(to_string(e.difficulty)));
    }
    for (const auto& e : r.kept_multi) {
        count("multi", "after", e);
        bump("multi_after_" + std::string(to_string(e.difficulty)));
    }
    nlohmann::json buckets = nlohmann::json::object();
    for (const char* pool : {"single", "multi"}) {
        for (const char* phase : {"before", "after"}) {
            for (Bucket b : {Bucket::Easy, Bucket::Medium, Bucket::Difficult}) {
                std::string key = std::string(pool) + "_" + phase + "_" + std::string(to_string(b));
                buckets[pool][phase][std::string(to_string(b))] = bucket_counts[key];
            }
        }
    }
    r.report = {{"buckets", buckets}, {"strategies", per_strategy}};
    return r;
}

// ---- chat rendering ----

nlohmann::json ChatSample::to_json() const {
    return {{"messages",
             nlohmann::json::array({{{"role", "user"}, {"content", prompt}}, {{"role", "assistant"}, {"content", label}}})}};
}

std::string render_prompt(const std::string& program_name, const Program& original, bool multi) {
    std::ostringstream out;
    out << "Optimize the following tensor program written in LEIR (loop-equation IR).\n";
    out << "Program: " << program_name << "\n";
    out << "Inputs: " << io_line(original, Role::Input) << "\n";
    out << "Outputs: " << io_line(original, Role::Output) << "\n";
    out << fenced(print(original)) << "\n";
    if (multi) {
        out << "Task: propose several different one-step transformations, each applying exactly one atomic "
               "strategy and each semantically equivalent to the program above.\n";
        out << "Format: first state how many transformed programs you give, then for each one write a numbered "
               "reasoning trace followed by its LEIR in a ```leir fenced block.\n";
    } else {
        out << "Task: apply exactly one atomic optimization strategy so that the result stays semantically "
               "equivalent to the program above.\n";
        out << "Format: give the reasoning trace first, then the transformed LEIR in a ```leir fenced block.\n";
    }
    return out.str();
}

std::optional<std::string> prompt_leir(const std::string& prompt) {
    const std::string open = "```leir\n";
    auto a = prompt.find(open);
    if (a == std::string::npos) return std::nullopt;
    a += open.size();
    auto b = prompt.find("\n```", a);
    if (b == std::string::npos) return std::nullopt;
    return prompt.substr(a, b - a);
}

ChatSample chat_single(const DatasetEntry& e) {
    ChatSample s;
    s.multi = false;
    s.answers = 1;
    s.prompt = render_prompt(e.program_name, parse(e.original_leir), false);
    s.label = e.cot + "\nFinal answer:\n" + fenced(e.transformed_leir);
    return s;
}

ChatSample chat_multi(const std::vector<DatasetEntry>& group) {
    if (group.empty()) throw Error("InvalidEntry", "empty multi-answer group");
    for (const auto& e : group) {
        if (e.original_leir != group[0].original_leir) throw Error("InvalidEntry", "multi-answer group mixes programs");
    }
    ChatSample s;
    s.multi = true;
    s.answers = group.size();
    s.prompt = render_prompt(group[0].program_name, parse(group[0].original_leir), true);
    std::ostringstream label;
    label << group.size() << " transformed programs follow.\n";
    for (size_t i = 0; i < group.size(); ++i) {
        label << "\n[" << (i + 1) << "] " << group[i].cot << "\n" << fenced(group[i].transformed_leir) << "\n";
    }
    s.label = label.str();
    return s;
}

std::vector<ChatSample> chat_multi_bundles(const std::vector<DatasetEntry>& entries, size_t min_k, size_t max_k,
                                           uint64_t seed) {
    if (min_k < 2 || max_k < min_k) throw Error("InvalidConfig", "multi-answer bundle sizes must satisfy 2 <= min <= max");
    std::vector<std::string> order;
    std::map<std::string, std::vector<const DatasetEntry*>> groups;
    for (const auto& e : entries) {
        auto& g = groups[e.original_leir];
        if (g.empty()) order.push_back(e.original_leir);
        g.push_back(&e);
    }
    std::mt19937_64 rng(seed);
    std::vector<ChatSample> out;
    for (const auto& key : order) {
        auto& g = groups[key];
        std::shuffle(g.begin(), g.end(), rng);
        size_t pos = 0;
        while (g.size() - pos >= min_k) {
            size_t k = std::uniform_int_distribution<size_t>(min_k, max_k)(rng);
            k = std::min(k, g.size() - pos);
            std::vector<DatasetEntry> bundle;
            for (size_t i = 0; i < k; ++i) bundle.push_back(*g[pos + i]);
            pos += k;
            out.push_back(chat_multi(bundle));
        }
    }
    return out;
}

// ---- emission ----

void emit(const std::vector<DatasetEntry>& entries, EmitFormat format, const std::string& path, uint64_t seed,
          size_t min_k, size_t max_k) {
    std::vector<std::string> lines;
    switch (format) {
        case EmitFormat::DictionaryJsonl:
            for (const auto& e : entries) {
                if (!e.verified) throw Error("InvalidEntry", "unverified entry " + e.id);
                lines.push_back(e.to_json().dump());
            }
            break;
        case EmitFormat::ChatSingleJsonl:
            for (const auto& e : entries) lines.push_back(chat_single(e).to_json().dump());
            break;
        case EmitFormat::ChatMultiJsonl:
            for (const auto& s : chat_multi_bundles(entries, min_k, max_k, seed)) lines.push_back(s.to_json().dump());
            break;
    }
    write_lines(path, lines);
}

std::vector<DatasetEntry> read_dictionary(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open '" + path + "'");
    std::vector<DatasetEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(DatasetEntry::from_json(nlohmann::json::parse(line)));
    }
    return out;
}

}  // namespace leir
