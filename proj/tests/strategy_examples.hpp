// SPDX-License-Identifier: Apache-2.0
//
// One input program per strategy, taken from the reference corpus where it
// has a matching input and synthesized otherwise.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "leir/strategy.hpp"

namespace leir::fixtures {

inline std::string joined(const std::vector<std::string>& labels) {
    std::string out;
    for (const auto& l : labels) out += corpus_get(l);
    return out;
}

inline std::string strategy_example(StrategyId id) {
    using S = StrategyId;
    static const std::map<S, std::vector<std::string>> from_corpus = {
        {S::OperatorFusion, {"operator_fusion.input.0", "operator_fusion.input.1"}},
        {S::OperatorFission, {"operator_fission.input"}},
        {S::ComputeInline, {"compute_inline.input.0", "compute_inline.input.1"}},
        {S::ExpressionSplitting, {"expression_splitting.input"}},
        {S::TensorConcatFuse, {"tensor_concat_fuse.input.0", "tensor_concat_fuse.input.1"}},
        {S::TensorSplitDecouple, {"tensor_split_decouple.input"}},
        {S::ExpressionReorder, {"expression_reorder.input.0", "expression_reorder.input.1"}},
        {S::LoopReorder, {"loop_reorder.input"}},
        {S::LoopTiling, {"loop_tiling.input"}},
        {S::LoopSplit, {"loop_split.input"}},
        {S::LoopFusion, {"loop_fusion.input"}},
        {S::LoopUnrolling, {"loop_unrolling.input"}},
        {S::LoopParallelization, {"loop_parallelization.input"}},
        {S::LoopVectorization, {"loop_vectorization.input"}},
        {S::LoopBinding, {"loop_binding.input"}},
        {S::ReductionFactorization, {"reduction_factorization.input"}},
        {S::CacheReadWrite, {"cache_read_write.input"}},
        {S::PrecomputeIndices, {"precompute_indices.input"}},
        {S::Factorization, {"factorization.input"}},
        {S::ExpandFactorization, {"expand_factorization.input"}},
        {S::Cancellation, {"cancellation.input"}},
        {S::ExpandCancellation, {"expand_cancellation.input"}},
        {S::Apart, {"apart.input"}},
        {S::Together, {"together.input"}},
        {S::PowSimp, {"powsimp.input"}},
        {S::ExpandPowSimp, {"expand_powsimp.input"}},
        {S::LogSimp, {"logsimp.input"}},
        {S::ExpandLog, {"expand_log.input"}},
        {S::Collect, {"collect.input"}},
        {S::ExpandCollect, {"expand_collect.input"}},
        {S::PartiallyEquivalentThenCorrect,
         {"partially_equivalent_then_correct.input.0", "partially_equivalent_then_correct.input.1"}},
        {S::ExponentialSplit, {"exponential_split.input"}},
        {S::MultiplicativeSplit, {"multiplicative_split.input"}},
        {S::AdditiveSplit, {"additive_split.input"}},
        // The labelled max rows hold a (max, exp-sum) pair; max comes first.
        {S::PrefixMax, {"prefix_max.input.1", "prefix_max.input.0"}},
        {S::OnlineSoftmax, {"online_softmax.input"}},
        {S::FlashAttentionNoTiling, {"flashattention_wo_tiling.input.0", "flashattention_wo_tiling.input.1"}},
        {S::PrefixMatmulOnlineSoftmax,
         {"prefix_matmul_online_softmax.input.0", "prefix_matmul_online_softmax.input.1"}},
    };
    switch (id) {
        case S::CommonSubexprElim:
            return "B^{917}_{tx=0}L^{30201}_{a=0}[D^{f64,g}_{tx,a}=exp(A^{f64,g}_{tx,a})/"
                   "(1+exp(A^{f64,g}_{tx,a}));];";
        case S::LayoutTransformation:
            return "L^{11}_{g=0}B^{77}_{tx=0}L^{3182}_{c=0}[D^{f16,g}_{g*77+tx,c}="
                   "exp(A^{f16,g}_{g*77+tx,c});];";
        case S::SetStorageScope:
            return "B^{64}_{tx=0}L^{300}_{a=0}[E^{f32,g}_{tx}=max(E^{f32,g}_{tx},A^{f32,g}_{tx,a});];"
                   "B^{64}_{tx=0}L^{300}_{a=0}[F^{f32,g}_{tx,a}=A^{f32,g}_{tx,a}-E^{f32,g}_{tx};];";
        case S::SetStorageLayout:
            return "B^{64}_{tx=0}L^{300}_{a=0}[D^{f32,g}_{tx,a}=exp(A^{f32,g}_{tx,a});];"
                   "B^{64}_{tx=0}L^{300}_{a=0}[F^{f32,g}_{tx,a}=D^{f32,g}_{tx,a}*2;];";
        case S::PrefixExpSum:
            return corpus_get("prefix_exp_sum.input") +
                   "B^{933}_{tx=0}L^{1}_{a=0}[J^{f16,g}_{tx}=J^{f16,g}_{tx}+exp(D^{f16,g}_{tx,a}-I^{f16,g}_{tx});];";
        default:
            return joined(from_corpus.at(id));
    }
}

}  // namespace leir::fixtures
