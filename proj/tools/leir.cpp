// SPDX-License-Identifier: Apache-2.0
//
// leir: command-line front end for parsing, interpreting, transforming,
// verifying, dataset building and search.
//
// Exit codes: 0 success, 1 usage, 2 validation/parse failure,
// 3 verification failure, 4 I/O failure.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "leir/analysis.hpp"
#include "leir/dataset.hpp"
#include "leir/interp.hpp"
#include "leir/search.hpp"
#include "leir/strategy.hpp"
#include "leir/syntax.hpp"

namespace fs = std::filesystem;
using namespace leir;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInvalid = 2, kNotEquivalent = 3, kIo = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("IoError", "write to '" + path + "' failed");
}

ProgramFile load(const std::string& path) {
    return load_program_text(read_file(path), fs::path(path).stem().string());
}

nlohmann::json read_json_file(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("malformed JSON in '" + path + "': " + e.what());
    }
}

// --seed wins, then LEIR_SEED; randomness without either is a usage error.
uint64_t resolve_seed(const std::optional<uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("LEIR_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw UsageError("LEIR_SEED is not an unsigned integer");
        }
    }
    throw UsageError("this command needs --seed (or LEIR_SEED)");
}

StrategyId resolve_strategy(const std::string& name) {
    auto id = strategy_from_name(name);
    if (!id) throw UsageError("unknown strategy '" + name + "'");
    return *id;
}

nlohmann::json diagnostics_json(const std::vector<Diagnostic>& ds) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& d : ds) out.push_back({{"code", d.code}, {"path", d.path}, {"message", d.message}});
    return out;
}

// ---- subcommands ----

int cmd_fmt(const std::string& file) {
    std::cout << print(load(file).program) << "\n";
    return kOk;
}

int cmd_check(const std::string& file, bool json) {
    Program p;
    try {
        p = load(file).program;
    } catch (const ParseError& e) {
        if (json) {
            std::cerr << nlohmann::json({{"ok", false},
                                         {"diagnostics",
                                          {{{"code", e.kind()},
                                            {"path", fmt::format("byte[{}..{}]", e.span().byte_start, e.span().byte_end)},
                                            {"message", e.what()}}}}})
                             .dump()
                      << "\n";
        } else {
            std::cerr << e.kind() << ": " << e.what() << "\n";
        }
        return kInvalid;
    }
    auto ds = validate(p);
    if (json) {
        std::cerr << nlohmann::json({{"ok", ds.empty()}, {"diagnostics", diagnostics_json(ds)}}).dump() << "\n";
    } else {
        for (const auto& d : ds) std::cerr << d.code << " at " << d.path << ": " << d.message << "\n";
        if (ds.empty()) std::cout << "ok\n";
    }
    return ds.empty() ? kOk : kInvalid;
}

int cmd_run(const std::string& file, uint64_t seed, const std::string& shapes, bool json) {
    Program p = load(file).program;
    if (!shapes.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(shapes);
        } catch (const nlohmann::json::exception& e) {
            throw UsageError(std::string("--shapes is not JSON: ") + e.what());
        }
        if (!j.is_object()) throw UsageError("--shapes must map tensor names to shapes");
        for (const auto& [name, shape] : j.items()) {
            auto it = p.io.find(name);
            if (it == p.io.end()) throw UsageError("--shapes names unknown tensor '" + name + "'");
            it->second.shape = shape.get<std::vector<int64_t>>();
        }
    }
    if (auto ds = validate(p); !ds.empty()) throw Error(ds[0].code, ds[0].message);
    Env env = run(p, random_env(p, seed));
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [name, e] : p.io) {
        if (e.role != Role::Output) continue;
        const Tensor& t = env.tensors.at(name);
        out[name] = {{"shape", t.shape}, {"data", t.data}};
    }
    if (json) {
        std::cout << nlohmann::json({{"seed", seed}, {"outputs", out}}).dump() << "\n";
    } else {
        for (const auto& [name, t] : out.items()) {
            std::vector<std::string> head;
            const auto& data = t["data"];
            for (size_t i = 0; i < std::min<size_t>(data.size(), 8); ++i) {
                head.push_back(format_number(data[i].get<double>()));
            }
            std::cout << fmt::format("{} shape [{}]: {}{}\n", name, fmt::join(t["shape"].get<std::vector<int64_t>>(), ","),
                                     fmt::join(head, " "), data.size() > 8 ? " ..." : "");
        }
    }
    return kOk;
}

int cmd_feasible(const std::string& file, bool json) {
    Program p = load(file).program;
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [id, sites] : feasible(p)) out[std::string(meta(id).name)] = sites.size();
    if (json) {
        std::cout << out.dump() << "\n";
    } else {
        for (const auto& m : registry()) {
            std::string n(m.name);
            if (out.contains(n)) std::cout << n << ": " << out[n].get<size_t>() << "\n";
        }
    }
    return kOk;
}

int cmd_apply(const std::string& file, const std::string& strategy, uint64_t seed, std::optional<size_t> site_index,
              const std::string& out_path, bool json) {
    Program p = load(file).program;
    StrategyId id = resolve_strategy(strategy);
    auto sites = feasible(p, id);
    if (sites.empty()) throw Error("NotApplicable", fmt::format("'{}' has no feasible site", meta(id).name));
    std::mt19937_64 rng(seed);
    size_t k = site_index ? *site_index : std::uniform_int_distribution<size_t>(0, sites.size() - 1)(rng);
    if (k >= sites.size()) throw UsageError(fmt::format("--site {} out of range (0..{})", k, sites.size() - 1));
    Params params = sample_params(p, sites[k], rng);
    Outcome o = apply(p, sites[k], params);
    std::string text = print(o.transformed);
    if (!out_path.empty()) write_file(out_path, text + "\n");
    if (json) {
        std::cout << nlohmann::json({{"strategy", std::string(meta(id).name)},
                                     {"site", sites[k].to_json()},
                                     {"params", params},
                                     {"diff", o.diff.to_json()},
                                     {"transformed", text},
                                     {"cot", render_cot(p, o)}})
                         .dump()
                  << "\n";
    } else if (out_path.empty()) {
        std::cout << text << "\n";
    }
    return kOk;
}

std::optional<std::string> signature_diff(const Program& a, const Program& b) {
    auto sig = [](const Program& p) {
        std::map<std::string, IoEntry> out;
        for (const auto& [n, e] : p.io) {
            if (e.role != Role::Intermediate) out.emplace(n, e);
        }
        return out;
    };
    if (sig(a) != sig(b)) return "input/output signatures differ";
    return std::nullopt;
}

// Element-level work of one interpretation.
double work_of(const Program& p) {
    double total = 0.0;
    for (const auto& v : equations(p)) {
        double trips = 1.0;
        for (const auto* l : v.loops) trips *= static_cast<double>(l->extent);
        total += trips;
    }
    return total;
}

constexpr double kFullSizeWork = 2e7;

int cmd_verify(const std::string& a, const std::string& b, int trials, uint64_t seed, int64_t cap, bool json) {
    Program pa = load(a).program;
    Program pb = load(b).program;
    // Programs too large to interpret are compared at reduced extents.
    bool shrunk = cap > 0 || std::max(work_of(pa), work_of(pb)) > kFullSizeWork;
    if (shrunk) {
        if (auto sa = signature_diff(pa, pb)) {
            std::cout << (json ? nlohmann::json({{"equivalent", false}, {"error", *sa}}).dump() : "not equivalent: " + *sa)
                      << "\n";
            return kNotEquivalent;
        }
        std::tie(pa, pb) = shrink_pair(pa, pb, cap > 0 ? cap : 8);
    }
    VerifyReport r;
    try {
        r = equivalent(pa, pb, trials, seed);
    } catch (const Error& e) {
        if (e.code() != "SignatureMismatch") throw;
        if (json) {
            std::cout << nlohmann::json({{"equivalent", false}, {"error", e.what()}}).dump() << "\n";
        } else {
            std::cout << "not equivalent: " << e.what() << "\n";
        }
        return kNotEquivalent;
    }
    if (json) {
        nlohmann::json trials_json = nlohmann::json::array();
        for (const auto& t : r.trials) {
            trials_json.push_back(
                {{"seed", t.seed}, {"max_abs_err", t.max_abs_err}, {"max_rel_err", t.max_rel_err}, {"pass", t.pass}});
        }
        std::cout << nlohmann::json({{"equivalent", r.equivalent},
                                     {"shrunk", shrunk},
                                     {"rtol", r.tolerance_used.rtol},
                                     {"atol", r.tolerance_used.atol},
                                     {"trials", trials_json}})
                         .dump()
                  << "\n";
    } else {
        std::cout << (r.equivalent ? "equivalent" : "not equivalent")
                  << (shrunk ? " (at reduced extents)" : "") << "\n";
    }
    return r.equivalent ? kOk : kNotEquivalent;
}

int cmd_score(const std::string& strategy, bool json) {
    const StrategyMeta& m = meta(resolve_strategy(strategy));
    double s = difficulty_score(m);
    std::string bucket(to_string(bucket_of(s)));
    if (json) {
        std::cout << nlohmann::json({{"strategy", std::string(m.name)},
                                     {"K", m.K},
                                     {"P", m.P},
                                     {"S", m.S},
                                     {"score", s},
                                     {"bucket", bucket}})
                         .dump()
                  << "\n";
    } else {
        std::cout << fmt::format("{}: score {} ({})\n", m.name, format_number(s), bucket);
    }
    return kOk;
}

int cmd_gen(size_t count, uint64_t seed, const std::string& out_dir, const std::vector<std::string>& families,
            int64_t shape_cap) {
    CorpusConfig cfg;
    cfg.count = count;
    cfg.seed = seed;
    cfg.families = families;
    cfg.shape_cap = shape_cap;
    auto corpus = gen_corpus(cfg);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error("IoError", "cannot create '" + out_dir + "': " + ec.message());
    for (const auto& np : corpus) {
        write_file((fs::path(out_dir) / (np.name + ".json")).string(), save_program_json(np.name, np.program) + "\n");
    }
    std::cout << fmt::format("wrote {} programs to {}\n", corpus.size(), out_dir);
    return kOk;
}

std::vector<NamedProgram> read_corpus(const std::string& dir) {
    if (!fs::is_directory(dir)) throw Error("IoError", "corpus directory '" + dir + "' not found");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".json" || ext == ".leir")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<NamedProgram> out;
    for (const auto& f : files) {
        ProgramFile pf = load(f.string());
        std::string family = pf.name.substr(0, pf.name.find('_'));
        out.push_back({pf.name, family, std::move(pf.program)});
    }
    return out;
}

int cmd_build_dataset(const std::string& corpus_dir, const std::string& out_dir, const std::string& policy_file,
                      uint64_t seed, unsigned jobs, const std::string& bridge_cmd) {
    nlohmann::json pj = policy_file.empty() ? nlohmann::json::object() : read_json_file(policy_file);
    FilterPolicy policy;
    policy.easy_multi_keep = pj.value("easy_multi_keep", policy.easy_multi_keep);
    policy.easy_single_keep_simplify = pj.value("easy_single_keep_simplify", policy.easy_single_keep_simplify);
    policy.easy_single_keep_expand = pj.value("easy_single_keep_expand", policy.easy_single_keep_expand);
    policy.medium_multi_cap = pj.value("medium_multi_cap", policy.medium_multi_cap);
    policy.difficult_keep = pj.value("difficult_keep", policy.difficult_keep);
    policy.seed = pj.value("seed", seed);
    size_t min_k = pj.value("min_k", size_t{2});
    size_t max_k = pj.value("max_k", size_t{4});

    BuildConfig bc;
    bc.seed = seed;
    bc.workers = jobs;
    bc.sites_per_strategy = pj.value("sites_per_strategy", bc.sites_per_strategy);
    bc.verify_trials = pj.value("verify_trials", bc.verify_trials);

    auto corpus = read_corpus(corpus_dir);
    BuildReport br;
    auto entries = build_entries(corpus, bc, &br);
    if (!bridge_cmd.empty()) {
        LineProcess bridge(bridge_cmd);
        for (auto& e : entries) {
            try {
                e.lowered = bridge_lower(bridge, parse(e.original_leir), parse(e.transformed_leir));
            } catch (const Error& ex) {
                spdlog::warn("lowering {} failed: {}", e.id, ex.what());
            }
        }
    }
    FilterResult fr = filter(entries, policy);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error("IoError", "cannot create '" + out_dir + "': " + ec.message());
    fs::path out(out_dir);
    emit(entries, EmitFormat::DictionaryJsonl, (out / "entries.jsonl").string());
    emit(fr.kept_single, EmitFormat::DictionaryJsonl, (out / "single_entries.jsonl").string());
    emit(fr.kept_multi, EmitFormat::DictionaryJsonl, (out / "multi_entries.jsonl").string());
    emit(fr.kept_single, EmitFormat::ChatSingleJsonl, (out / "chat_single.jsonl").string(), seed);
    emit(fr.kept_multi, EmitFormat::ChatMultiJsonl, (out / "chat_multi.jsonl").string(), seed, min_k, max_k);
    nlohmann::json report = {{"programs", corpus.size()},
                             {"attempted", br.attempted},
                             {"verified", br.verified},
                             {"duplicates", br.duplicates},
                             {"skipped", br.skipped.size()},
                             {"filter", fr.report}};
    write_file((out / "report.json").string(), report.dump(2) + "\n");
    std::cout << fmt::format("{} programs, {} verified entries, {} single, {} multi\n", corpus.size(), entries.size(),
                             fr.kept_single.size(), fr.kept_multi.size());
    return kOk;
}

int cmd_search(const std::vector<std::string>& files, const std::string& algo_name, const std::string& budget_file,
               const std::string& cost_name, const std::string& bridge_cmd, const std::string& proposer_spec,
               uint64_t seed, unsigned jobs, bool json) {
    auto algo = algo_from_name(algo_name);
    if (!algo) throw UsageError("unknown search algorithm '" + algo_name + "'");
    SearchBudget budget = budget_file.empty() ? SearchBudget::defaults(*algo)
                                              : SearchBudget::from_json(read_json_file(budget_file), *algo);
    if (cost_name == "bridge" && bridge_cmd.empty()) throw UsageError("--cost bridge needs --bridge-cmd");
    if (proposer_spec != "builtin" && proposer_spec.rfind("cmd:", 0) != 0) {
        throw UsageError("--proposer must be 'builtin' or 'cmd:COMMAND'");
    }
    std::vector<ProgramFile> programs;
    for (const auto& f : files) programs.push_back(load(f));

    std::vector<std::optional<SearchReport>> reports(programs.size());
    std::vector<std::string> errors(programs.size());
    auto work = [&](size_t i) {
        // Each case owns its child processes: one request in flight per connection.
        CostFn cost = analytic_cost_fn();
        if (cost_name == "bridge") cost = bridge_cost(std::make_shared<LineProcess>(bridge_cmd));
        Proposer proposer = builtin_proposer();
        if (proposer_spec != "builtin") proposer = external_proposer(std::make_shared<LineProcess>(proposer_spec.substr(4)));
        SearchOptions opt;
        opt.program_name = programs[i].name;
        try {
            reports[i] = search(programs[i].program, *algo, proposer, cost, budget, seed, opt);
        } catch (const SearchError& e) {
            reports[i] = e.partial();
            errors[i] = fmt::format("{}: {}", e.code(), e.what());
        } catch (const Error& e) {
            errors[i] = fmt::format("{}: {}", e.code(), e.what());
        }
    };
    unsigned workers = std::max(1u, std::min<unsigned>(jobs ? jobs : 1, static_cast<unsigned>(programs.size())));
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (size_t i = next++; i < programs.size(); i = next++) work(i);
        });
    }
    for (auto& t : pool) t.join();

    nlohmann::json cases = nlohmann::json::array();
    std::vector<SearchReport> done;
    int rc = kOk;
    for (size_t i = 0; i < programs.size(); ++i) {
        nlohmann::json c = {{"program", programs[i].name}};
        if (reports[i]) {
            c["report"] = reports[i]->to_json();
            if (errors[i].empty()) done.push_back(*reports[i]);
        }
        if (!errors[i].empty()) {
            c["error"] = errors[i];
            rc = errors[i].rfind("CostError", 0) == 0 || errors[i].rfind("Timeout", 0) == 0 ||
                         errors[i].rfind("ProtocolError", 0) == 0 || errors[i].rfind("SpawnFailed", 0) == 0
                     ? kIo
                     : kInvalid;
        }
        cases.push_back(std::move(c));
    }
    nlohmann::json out = {{"algo", std::string(to_string(*algo))},
                          {"budget", budget.to_json()},
                          {"cases", cases},
                          {"metrics", metrics(done).to_json()}};
    if (json) {
        std::cout << out.dump() << "\n";
    } else {
        for (const auto& c : cases) {
            if (c.contains("error")) std::cout << c["program"].get<std::string>() << ": " << c["error"].get<std::string>() << "\n";
            if (!c.contains("report")) continue;
            const auto& r = c["report"];
            std::cout << fmt::format("{}: speedup {} after {} step(s), {} samples\n", c["program"].get<std::string>(),
                                     format_number(r["best"]["speedup"].get<double>()), r["trajectory"].size(),
                                     r["samples"].get<size_t>());
            for (const auto& step : r["trajectory"]) {
                std::cout << fmt::format("  {} -> {}\n", step["strategy"].get<std::string>(),
                                         format_number(step["speedup"].get<double>()));
            }
            if (files.size() == 1) std::cout << r["best"]["leir"].get<std::string>() << "\n";
        }
    }
    return rc;
}

int cmd_stats(const std::string& file, bool json) {
    std::string text = print(load(file).program);
    ByteStats s = byte_stats(text);
    if (json) {
        std::cout << nlohmann::json({{"bytes", s.bytes}, {"nonspace_bytes", s.nonspace_bytes}}).dump() << "\n";
    } else {
        std::cout << fmt::format("bytes {} nonspace {}\n", s.bytes, s.nonspace_bytes);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"LEIR toolkit: parse, interpret, transform, verify, build datasets and search"};
    app.require_subcommand(1);
    bool json = false;
    bool verbose = false;
    app.add_flag("--json", json, "Machine-readable JSON output");
    app.add_flag("-v,--verbose", verbose, "Debug logging on stderr");

    std::string file, file_b, strategy, shapes, out, corpus, policy, algo, budget, cost = "analytic", bridge_cmd,
                                                                              proposer = "builtin";
    std::vector<std::string> files, families;
    std::optional<uint64_t> seed;
    std::optional<size_t> site;
    size_t count = 100;
    int trials = 3;
    int64_t shape_cap = 12;
    int64_t shape_cap_verify = 0;
    unsigned jobs = 1;

    auto add_seed = [&](CLI::App* c) { c->add_option("--seed", seed, "Random seed (default: LEIR_SEED)"); };
    auto add_json = [&](CLI::App* c) { c->add_flag("--json", json, "Machine-readable JSON output"); };

    auto* fmt_cmd = app.add_subcommand("fmt", "Print the canonical form of a program");
    fmt_cmd->add_option("FILE", file)->required();
    auto* check = app.add_subcommand("check", "Validate a program");
    check->add_option("FILE", file)->required();
    add_json(check);
    auto* run_cmd = app.add_subcommand("run", "Interpret a program on seeded random inputs");
    run_cmd->add_option("FILE", file)->required();
    run_cmd->add_option("--shapes", shapes, "JSON object overriding io shapes");
    add_seed(run_cmd);
    add_json(run_cmd);
    auto* feas = app.add_subcommand("feasible", "Count feasible sites per strategy");
    feas->add_option("FILE", file)->required();
    add_json(feas);
    auto* apply_cmd = app.add_subcommand("apply", "Apply one strategy at a seeded site");
    apply_cmd->add_option("FILE", file)->required();
    apply_cmd->add_option("--strategy", strategy, "Canonical name or snake_case key")->required();
    apply_cmd->add_option("--site", site, "Site index (default: seeded draw)");
    apply_cmd->add_option("-o,--out", out, "Write the transformed program here");
    add_seed(apply_cmd);
    add_json(apply_cmd);
    auto* verify = app.add_subcommand("verify", "Check two programs for equivalence");
    verify->add_option("A", file)->required();
    verify->add_option("B", file_b)->required();
    verify->add_option("--trials", trials, "Random trials")->check(CLI::PositiveNumber);
    verify->add_option("--cap", shape_cap_verify, "Compare at extents shrunk to this cap (default: only when large)");
    add_seed(verify);
    add_json(verify);
    auto* score = app.add_subcommand("score", "Difficulty score and bucket of a strategy");
    score->add_option("--strategy", strategy)->required();
    add_json(score);
    auto* gen = app.add_subcommand("gen", "Generate a template corpus");
    gen->add_option("--count", count)->check(CLI::PositiveNumber);
    gen->add_option("--out", out)->required();
    gen->add_option("--families", families, "Restrict to these families");
    gen->add_option("--shape-cap", shape_cap, "Largest generated extent")->check(CLI::Range(2, 4096));
    add_seed(gen);
    auto* build = app.add_subcommand("build-dataset", "Build, filter and emit the transformation dataset");
    build->add_option("--corpus", corpus)->required();
    build->add_option("--out", out)->required();
    build->add_option("--policy", policy, "Filter policy JSON");
    build->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
    build->add_option("--bridge-cmd", bridge_cmd, "Lowering bridge command");
    add_seed(build);
    auto* search_cmd = app.add_subcommand("search", "Multi-step search");
    search_cmd->add_option("FILE", files)->required();
    search_cmd->add_option("--algo", algo)->required();
    search_cmd->add_option("--budget", budget, "Budget JSON");
    search_cmd->add_option("--cost", cost)->check(CLI::IsMember({"analytic", "bridge"}));
    search_cmd->add_option("--bridge-cmd", bridge_cmd, "Bridge command for --cost bridge");
    search_cmd->add_option("--proposer", proposer, "builtin or cmd:COMMAND");
    search_cmd->add_option("--jobs", jobs, "Cases searched in parallel");
    add_seed(search_cmd);
    add_json(search_cmd);
    auto* stats = app.add_subcommand("stats", "Byte statistics of the canonical form");
    stats->add_option("FILE", file)->required();
    add_json(stats);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    spdlog::set_default_logger(spdlog::stderr_color_mt("leir"));
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        if (*fmt_cmd) return cmd_fmt(file);
        if (*check) return cmd_check(file, json);
        if (*run_cmd) return cmd_run(file, resolve_seed(seed), shapes, json);
        if (*feas) return cmd_feasible(file, json);
        if (*apply_cmd) return cmd_apply(file, strategy, resolve_seed(seed), site, out, json);
        if (*verify) return cmd_verify(file, file_b, trials, resolve_seed(seed), shape_cap_verify, json);
        if (*score) return cmd_score(strategy, json);
        if (*gen) return cmd_gen(count, resolve_seed(seed), out, families, shape_cap);
        if (*build) return cmd_build_dataset(corpus, out, policy, resolve_seed(seed), jobs, bridge_cmd);
        if (*stats) return cmd_stats(file, json);
        if (*search_cmd) {
            return cmd_search(files, algo, budget, cost, bridge_cmd, proposer, resolve_seed(seed), jobs, json);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        std::cerr << e.code() << ": " << e.what() << "\n";
        if (e.code() == "IoError" || e.code() == "SpawnFailed") return kIo;
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInvalid;
    }
    return kUsage;
}
