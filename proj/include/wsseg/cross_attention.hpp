#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wsseg/encoder.hpp"
#include "wsseg/graph.hpp"

namespace wsseg {

// Feature exchange between the primary and structural branches at stages 2
// and 3. Each direction has independent parameters; the query comes from the
// opposite branch while keys/values (and the residual) stay with the branch
// being enhanced.
struct CrossAttentionConfig {
    int heads_s2 = 2;
    int heads_s3 = 4;
    int mlp_ratio = 4;
};

// Parameter prefixes: xattn.s<2|3>.<p|t>.* where direction p enhances the
// primary branch and t the structural branch.
void build_cross_attention_params(ParamStore& params, const EncoderConfig& enc,
                                  const CrossAttentionConfig& cfg, Rng& rng);

// Bare cross attention: projections, row-softmax affinity, weighted sum,
// output projection. No normalization, residual, or MLP.
TensorRef cross_attend(Graph& g, ParamStore& params, const std::string& prefix,
                       TensorRef query_src, TensorRef kv_src, int heads,
                       std::vector<Mat>* affinity_probe = nullptr);

// Full pre-norm block: LN on both inputs, cross attention, residual on the
// kv (enhanced) branch, then LN + MLP + residual.
TensorRef cross_attention_block(Graph& g, ParamStore& params, const std::string& prefix,
                                TensorRef query_src, TensorRef kv_src, int heads,
                                int mlp_ratio, std::vector<Mat>* affinity_probe = nullptr);

// (Z^P_s, Z^T_s) for stage s in {2, 3}.
std::pair<TensorRef, TensorRef> exchange(Graph& g, ParamStore& params, int stage,
                                         const CrossAttentionConfig& cfg, TensorRef f_primary,
                                         TensorRef f_structural,
                                         std::vector<Mat>* affinity_probe = nullptr);

}  // namespace wsseg
