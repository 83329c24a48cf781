#include "wsseg/text_guidance.hpp"

#include "wsseg/errors.hpp"

namespace wsseg {

void build_text_guidance_params(ParamStore& params, int c3, int c4, int c_clip, int c_desp,
                                Rng& rng) {
    params.create_trunc_normal("fuse.w", c4 + c_desp, c4, rng);
    for (int stage : {3, 4}) {
        const int cs = stage == 3 ? c3 : c4;
        const std::string base = "adaptor.s" + std::to_string(stage);
        params.create_trunc_normal(base + ".w1", c_clip, cs, rng);
        params.create_trunc_normal(base + ".w2", cs, cs, rng);
        params.create_const(base + ".r", 1, 1, 1.0);
    }
}

TensorRef fuse_description(Graph& g, ParamStore& params, TensorRef f4_tokens,
                           TensorRef description_row) {
    TensorRef w = g.param(params.at("fuse.w"));
    if (f4_tokens.cols + description_row.cols != w.rows) {
        throw DataError("fuse_description: C4 + C_desp = " +
                        std::to_string(f4_tokens.cols + description_row.cols) +
                        " does not match fuse.w rows " + std::to_string(w.rows));
    }
    TensorRef desc = g.broadcast_row(description_row, f4_tokens.rows);
    return g.matmul(g.concat_cols(f4_tokens, desc), w);
}

TensorRef adapt_label_embeddings(Graph& g, ParamStore& params, TensorRef label_matrix,
                                 int stage) {
    if (stage != 3 && stage != 4) {
        throw DataError("adapt_label_embeddings: stage must be 3 or 4");
    }
    const std::string base = "adaptor.s" + std::to_string(stage);
    TensorRef hidden = g.relu(g.matmul(label_matrix, g.param(params.at(base + ".w1"))));
    TensorRef adapted = g.matmul(hidden, g.param(params.at(base + ".w2")));
    return g.transpose_of(adapted);  // [C_s x K]
}

TensorRef similarity_map(Graph& g, ParamStore& params, TensorRef z_visual_tokens,
                         TensorRef adapted, int stage) {
    if (stage != 3 && stage != 4) throw DataError("similarity_map: stage must be 3 or 4");
    if (z_visual_tokens.cols != adapted.rows) {
        throw DataError("similarity_map: C_s mismatch: visual " +
                        std::to_string(z_visual_tokens.cols) + " vs adapted " +
                        std::to_string(adapted.rows));
    }
    TensorRef r = g.param(params.at("adaptor.s" + std::to_string(stage) + ".r"));
    return g.mul_scalar(g.matmul(z_visual_tokens, adapted), r);
}

}  // namespace wsseg
