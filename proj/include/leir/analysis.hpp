// SPDX-License-Identifier: Apache-2.0
//
// Static analyses over LEIR programs: io inference, validation, reduction
// classification and expression dependencies.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "leir/ast.hpp"

namespace leir {

struct Diagnostic {
    std::string code;
    std::string path;  // e.g. "expr[1]/eq[0]/rhs"
    std::string message;
};

std::vector<Diagnostic> validate(const Program& p);

// Interval of an index expression given per-variable inclusive ranges.
struct Interval {
    int64_t lo = 0;
    int64_t hi = 0;
};
std::optional<Interval> index_interval(const Index& ix,
                                       const std::map<std::string, Interval>& vars);

// Shapes and roles derived from the body. Declared entries in `declared`
// win for the names they cover.
std::map<std::string, IoEntry> infer_io(const Program& p,
                                        const std::map<std::string, IoEntry>& declared = {});

enum class Combiner { Sum, Product, Max, Min };
std::string_view to_string(Combiner c);
double identity_of(Combiner c);

struct ReductionInfo {
    bool is_reduction = false;
    std::optional<Combiner> combiner;
    double identity = 0.0;
    std::set<std::string> reduction_axes;
};

// Throws Error("AmbiguousCombiner") when the left-hand side feeds the
// right-hand side through anything other than one top-level combiner.
ReductionInfo classify_reduction(const Equation& eq, const std::vector<LoopHeader>& scope_loops);
ReductionInfo classify_reduction(const Equation& eq, const std::vector<const LoopHeader*>& scope_loops);

struct DependencyGraph {
    size_t nodes = 0;
    std::set<std::pair<size_t, size_t>> edges;
    bool has_edge(size_t a, size_t b) const { return edges.count({a, b}) > 0; }
};
DependencyGraph dependency_graph(const Program& p);

// Tensors written / read anywhere inside an expression.
std::set<std::string> writes_of(const Nest& n);
std::set<std::string> reads_of(const Nest& n);

// JSON form {"name","leir","io"}; io entries {"dtype","shape","role"}.
nlohmann::json io_to_json(const std::map<std::string, IoEntry>& io);
std::map<std::string, IoEntry> io_from_json(const nlohmann::json& j);

// Reads a program file: plain LEIR or the JSON form above.
struct ProgramFile {
    std::string name;
    Program program;
};
ProgramFile load_program_text(const std::string& text, const std::string& fallback_name);
std::string save_program_json(const std::string& name, const Program& p);

}  // namespace leir
