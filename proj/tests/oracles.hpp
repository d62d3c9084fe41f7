// SPDX-License-Identifier: Apache-2.0
//
// Naive reference computations checked against the interpreter. Each
// function builds a random instance from `seed`, runs it, and returns the
// maximum absolute deviation from a hand-written loop.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "leir/interp.hpp"
#include "leir/syntax.hpp"

namespace leir::fixtures {

inline int64_t oracle_extent(std::mt19937_64& rng, int lo = 1, int hi = 5) {
    return std::uniform_int_distribution<int64_t>(lo, hi)(rng);
}

inline std::string ext(int64_t v) { return std::to_string(v); }

inline double matmul_oracle_err(uint64_t seed) {
    std::mt19937_64 rng(seed);
    int64_t t = oracle_extent(rng), n = oracle_extent(rng), m = oracle_extent(rng), k = oracle_extent(rng);
    Program p = parse("B^{" + ext(t) + "}_{tx=0}L^{" + ext(n) + "}_{a=0}L^{" + ext(m) + "}_{c=0}L^{" + ext(k) +
                      "}_{d=0}[D^{f64,g}_{tx,a,c}=D^{f64,g}_{tx,a,c}+A^{f64,g}_{tx,a,d}*C^{f64,g}_{tx,d,c};];");
    Env env = run(p, random_env(p, seed));
    const auto& A = env.tensors.at("A").data;
    const auto& C = env.tensors.at("C").data;
    const auto& D = env.tensors.at("D").data;
    double err = 0;
    for (int64_t x = 0; x < t; ++x)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < m; ++j) {
                double s = 0;
                for (int64_t q = 0; q < k; ++q) s += A[(x * n + i) * k + q] * C[(x * k + q) * m + j];
                err = std::max(err, std::fabs(s - D[(x * n + i) * m + j]));
            }
    return err;
}

inline double softmax_oracle_err(uint64_t seed) {
    std::mt19937_64 rng(seed);
    int64_t t = oracle_extent(rng), n = oracle_extent(rng);
    std::string T = ext(t), N = ext(n);
    Program p = parse("B^{" + T + "}_{tx=0}L^{" + N + "}_{a=0}[I^{f64,g}_{tx}=max(I^{f64,g}_{tx},D^{f64,g}_{tx,a});];"
                      "B^{" + T + "}_{tx=0}L^{" + N + "}_{a=0}[J^{f64,g}_{tx}=J^{f64,g}_{tx}+exp(D^{f64,g}_{tx,a}-I^{f64,g}_{tx});];"
                      "B^{" + T + "}_{tx=0}L^{" + N + "}_{a=0}[E^{f64,g}_{tx,a}=exp(D^{f64,g}_{tx,a}-I^{f64,g}_{tx})/J^{f64,g}_{tx};];");
    Env env = run(p, random_env(p, seed));
    const auto& D = env.tensors.at("D").data;
    const auto& E = env.tensors.at("E").data;
    double err = 0;
    for (int64_t x = 0; x < t; ++x) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t i = 0; i < n; ++i) mx = std::max(mx, D[x * n + i]);
        double s = 0;
        for (int64_t i = 0; i < n; ++i) s += std::exp(D[x * n + i] - mx);
        for (int64_t i = 0; i < n; ++i) err = std::max(err, std::fabs(std::exp(D[x * n + i] - mx) / s - E[x * n + i]));
    }
    return err;
}

// Guarded running max plus the online rescaled exp-sum recurrence.
inline double running_max_oracle_err(uint64_t seed) {
    std::mt19937_64 rng(seed);
    int64_t t = oracle_extent(rng), n = oracle_extent(rng, 1, 8);
    Program p = parse(
        "B^{" + ext(t) + "}_{tx=0}L^{" + ext(n) +
        "}_{a=0}[I^{f64,g}_{tx,a}=max(if_then_else(a-1<0,-inf,I^{f64,g}_{tx,a-1}),D^{f64,g}_{tx,a});"
        "K^{f64,g}_{tx,a}=if_then_else(a-1<0,1,K^{f64,g}_{tx,a-1})*exp(if_then_else(a-1<0,-inf,I^{f64,g}_{tx,a-1})-"
        "I^{f64,g}_{tx,a})+exp(D^{f64,g}_{tx,a}-I^{f64,g}_{tx,a});];");
    Env env = run(p, random_env(p, seed));
    const auto& D = env.tensors.at("D").data;
    const auto& I = env.tensors.at("I").data;
    const auto& K = env.tensors.at("K").data;
    double err = 0;
    for (int64_t x = 0; x < t; ++x) {
        for (int64_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t j = 0; j <= i; ++j) mx = std::max(mx, D[x * n + j]);
            double s = 0;
            for (int64_t j = 0; j <= i; ++j) s += std::exp(D[x * n + j] - mx);
            err = std::max(err, std::fabs(mx - I[x * n + i]));
            err = std::max(err, std::fabs(s - K[x * n + i]));
        }
    }
    return err;
}

inline double mean_oracle_err(uint64_t seed) {
    std::mt19937_64 rng(seed);
    int64_t n = oracle_extent(rng), m = oracle_extent(rng, 1, 8);
    Program p = parse("L^{" + ext(n) + "}_{a=0}L^{" + ext(m) + "}_{c=0}[S^{f64,g}_{a}=S^{f64,g}_{a}+X^{f64,g}_{a,c};];"
                      "L^{" + ext(n) + "}_{a=0}[M^{f64,g}_{a}=S^{f64,g}_{a}/" + ext(m) + ";];");
    Env env = run(p, random_env(p, seed));
    const auto& X = env.tensors.at("X").data;
    const auto& M = env.tensors.at("M").data;
    double err = 0;
    for (int64_t i = 0; i < n; ++i) {
        double s = 0;
        for (int64_t j = 0; j < m; ++j) s += X[i * m + j];
        err = std::max(err, std::fabs(s / static_cast<double>(m) - M[i]));
    }
    return err;
}

}  // namespace leir::fixtures
