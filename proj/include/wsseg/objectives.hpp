#pragma once

#include <vector>

#include "wsseg/graph.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

struct LossWeights {
    double l1 = 1.0;
    double l2 = 1.0;
    double l3 = 1.0;
    double l4 = 1.0;

    void validate() const;
};

// Classification heads: head.cls.w [C4 x K] over the fused primary feature,
// head.bin.w [C4 x 2] over the structural feature. Bias-free linear maps
// after global max pooling.
void build_head_params(ParamStore& params, int c4, int num_classes, Rng& rng);

// Per-channel spatial maximum of a token matrix; gradient flows to the first
// argmax position in row-major order.
TensorRef gmp(Graph& g, TensorRef tokens);

TensorRef classify_primary(Graph& g, ParamStore& params, TensorRef f4p_tokens);
TensorRef classify_structural(Graph& g, ParamStore& params, TensorRef ft4_tokens);

// Eq-style losses over logits; targets are 0/1 vectors.
TensorRef loss_multilabel(Graph& g, TensorRef logits, const std::vector<int>& y);
TensorRef loss_binary(Graph& g, TensorRef logits2, const std::vector<int>& y_binary);

struct PerSampleLosses {
    TensorRef l1, l2, l3, l4;
};

// L = l1*L1 + l2*L2 + l3*L3 + l4*L4 for already-averaged term tensors.
TensorRef weighted_total(Graph& g, TensorRef t1, TensorRef t2, TensorRef t3, TensorRef t4,
                         const LossWeights& w);

}  // namespace wsseg
