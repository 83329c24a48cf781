#pragma once

#include <string>

#include "wsseg/graph.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

// Synthetic-description fusion at stage 4 and label-informed similarity maps
// at stages 3 and 4.
//
// Parameters: fuse.w [(C4 + C_desp) x C4]; per stage s in {3,4}:
// adaptor.s<s>.w1 [C_clip x C_s], adaptor.s<s>.w2 [C_s x C_s] (hidden width
// matches the target stage width), adaptor.s<s>.r [1x1] initialized to 1.
void build_text_guidance_params(ParamStore& params, int c3, int c4, int c_clip, int c_desp,
                                Rng& rng);

// F^{P+}_4: the description vector is broadcast to every spatial position,
// channel-concatenated with the stage-4 primary tokens, and projected back
// to C4. Bias-free as a single matrix product.
TensorRef fuse_description(Graph& g, ParamStore& params, TensorRef f4_tokens,
                           TensorRef description_row);

// Bias-free two-layer MLP over label embedding rows (ReLU between), then
// transposed to [C_s x K].
TensorRef adapt_label_embeddings(Graph& g, ParamStore& params, TensorRef label_matrix,
                                 int stage);

// SIM_s tokens [N x K] = r_s * (Z^visual_s  adapted_s). The visual tokens at
// stage 4 must already carry the description fusion.
TensorRef similarity_map(Graph& g, ParamStore& params, TensorRef z_visual_tokens,
                         TensorRef adapted, int stage);

}  // namespace wsseg
