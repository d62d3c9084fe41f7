// SPDX-License-Identifier: Apache-2.0
//
// LEIR text <-> AST.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "leir/ast.hpp"

namespace leir {

struct SourceSpan {
    size_t byte_start = 0;
    size_t byte_end = 0;
};

class ParseError : public Error {
  public:
    ParseError(const std::string& message, SourceSpan span, std::vector<std::string> expected,
               std::string kind = "ParseError");
    const SourceSpan& span() const { return span_; }
    const std::vector<std::string>& expected() const { return expected_; }
    // ParseError, or ReservedName for reserved-symbol misuse.
    const std::string& kind() const { return kind_; }

  private:
    SourceSpan span_;
    std::vector<std::string> expected_;
    std::string kind_;
};

// Parses LEIR text; io is inferred from the program body.
Program parse(std::string_view text);
// Parses without io inference.
Program parse_ast(std::string_view text);
Value parse_value(std::string_view text);

std::string print(const Program& p);
std::string print(const Nest& n);
std::string print(const Equation& e);
std::string print(const TensorRef& r);
std::string print(const Value& v);
std::string print(const Index& ix);
std::string print(const LoopHeader& l);
std::string format_number(double v);

struct ByteStats {
    size_t bytes = 0;
    size_t nonspace_bytes = 0;
};
ByteStats byte_stats(std::string_view text);

}  // namespace leir
