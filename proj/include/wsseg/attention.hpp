#pragma once

#include <vector>

#include "wsseg/graph.hpp"

namespace wsseg {

struct AttentionParamRefs {
    TensorRef wq, bq, wk, bk, wv, bv, wo, bo;
};

// Multi-head scaled dot-product attention over token matrices.
// query_tokens: [Nq x C], kv_tokens: [Nk x C]; per head d = C/heads and
// Affinity = row-softmax(Q K^T / sqrt(d)). Heads are concatenated and passed
// through the output projection. When affinity_probe is non-null, each
// head's post-softmax affinity matrix is appended to it.
TensorRef multihead_attention(Graph& g, TensorRef query_tokens, TensorRef kv_tokens,
                              const AttentionParamRefs& w, int heads,
                              std::vector<Mat>* affinity_probe = nullptr);

}  // namespace wsseg
