// SPDX-License-Identifier: Apache-2.0
//
// Reference interpreter: executes LEIR on dense f64 buffers and compares
// programs on randomized inputs.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "leir/analysis.hpp"
#include "leir/ast.hpp"

namespace leir {

struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;  // row-major
};

size_t element_count(const std::vector<int64_t>& shape);

struct Env {
    std::map<std::string, Tensor> tensors;
    uint64_t rng_seed = 0;
};

class OutOfBounds : public Error {
  public:
    OutOfBounds(std::string tensor, std::vector<int64_t> index);
    const std::string& tensor() const { return tensor_; }
    const std::vector<int64_t>& index() const { return index_; }

  private:
    std::string tensor_;
    std::vector<int64_t> index_;
};

// Executes every expression in order. Missing non-input buffers are
// zero-allocated from program.io. Reads of never-written non-input elements
// are reported once per tensor as WarnUninitialized when `warnings` is set.
Env run(const Program& program, Env env, std::vector<Diagnostic>* warnings = nullptr);

// Deterministic inputs keyed by (seed, tensor name).
Env random_env(const Program& program, uint64_t seed);

struct Tolerance {
    double rtol = 0.0;
    double atol = 0.0;
};
Tolerance tolerance_for(DType d);
// Tolerance of the narrowest floating output dtype; exact for integer outputs.
Tolerance tolerance_for(const Program& p);

struct TrialResult {
    uint64_t seed = 0;
    double max_abs_err = 0.0;
    double max_rel_err = 0.0;
    bool pass = true;
};

struct VerifyReport {
    bool equivalent = true;
    std::vector<TrialResult> trials;
    Tolerance tolerance_used;
};

// Throws Error("SignatureMismatch") when Input/Output io entries differ.
VerifyReport equivalent(const Program& a, const Program& b, int trials = 3, uint64_t seed = 0,
                        std::optional<Tolerance> tol = std::nullopt);

// Element-wise closeness used by `equivalent`; NaN matches NaN.
bool close_enough(double x, double y, const Tolerance& tol);

// Rescales extents above `cap` keeping product relations between loop
// extents. Throws Error("ShrinkFailed") when no consistent rescaling exists.
Program shrink_shapes(const Program& program, int64_t cap = 8);
// Shrinks two programs with one shared extent mapping, for comparing a
// program with its transform at reduced size.
std::pair<Program, Program> shrink_pair(const Program& a, const Program& b, int64_t cap = 8);

}  // namespace leir
