#include "wsseg/model.hpp"

#include "wsseg/errors.hpp"

namespace wsseg {

void ModelConfig::validate() const {
    encoder.validate();
    if (num_classes < 1) throw DataError("model config: num_classes must be >= 1");
    if (c_clip < 1 || c_desp < 1) throw DataError("model config: text dims must be >= 1");
    if (input_h % 32 != 0 || input_w % 32 != 0) {
        throw DataError("model config: input size must be divisible by 32");
    }
    if (encoder.channels[1] % xattn.heads_s2 != 0 ||
        encoder.channels[2] % xattn.heads_s3 != 0) {
        throw DataError("model config: cross-attention heads must divide stage channels");
    }
}

void build_model_params(ParamStore& params, const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    build_encoder_params(params, "primary", cfg.encoder, 3, rng);
    build_encoder_params(params, "structural", cfg.encoder, 3, rng);
    build_cross_attention_params(params, cfg.encoder, cfg.xattn, rng);
    build_text_guidance_params(params, cfg.encoder.channels[2], cfg.encoder.channels[3],
                               cfg.c_clip, cfg.c_desp, rng);
    build_head_params(params, cfg.encoder.channels[3], cfg.num_classes, rng);
}

ForwardResult model_forward(Graph& g, ParamStore& params, const ModelConfig& cfg,
                            const Mat& image, const Mat& structural,
                            const std::vector<double>& description,
                            const Mat& label_matrix,
                            std::vector<Mat>* affinity_probe) {
    const int h = image.rows, w = image.cols;
    if (h % 32 != 0 || w % 32 != 0) throw DataError("model: input must be divisible by 32");
    require_same_shape(image, structural, "model inputs");
    if (static_cast<int>(description.size()) != cfg.c_desp) {
        throw DataError("model: description dim " + std::to_string(description.size()) +
                        " vs configured " + std::to_string(cfg.c_desp));
    }
    if (label_matrix.rows != cfg.num_classes || label_matrix.cols != cfg.c_clip) {
        throw DataError("model: label matrix " + label_matrix.shape_str() + ", expected [" +
                        std::to_string(cfg.num_classes) + "x" + std::to_string(cfg.c_clip) +
                        "]");
    }

    TensorRef xp = g.input(image_to_tokens(image));
    TensorRef xt = g.input(image_to_tokens(structural));

    // Stages 1 and 2 on both branches.
    StageOut p1 = encoder_stage(g, params, "primary", cfg.encoder, 0, xp, h, w,
                                affinity_probe);
    StageOut t1 = encoder_stage(g, params, "structural", cfg.encoder, 0, xt, h, w,
                                affinity_probe);
    StageOut p2 = encoder_stage(g, params, "primary", cfg.encoder, 1, p1.tokens, p1.h, p1.w,
                                affinity_probe);
    StageOut t2 = encoder_stage(g, params, "structural", cfg.encoder, 1, t1.tokens, t1.h,
                                t1.w, affinity_probe);

    auto [zp2, zt2] = exchange(g, params, 2, cfg.xattn, p2.tokens, t2.tokens, affinity_probe);

    StageOut p3 = encoder_stage(g, params, "primary", cfg.encoder, 2, zp2, p2.h, p2.w,
                                affinity_probe);
    StageOut t3 = encoder_stage(g, params, "structural", cfg.encoder, 2, zt2, t2.h, t2.w,
                                affinity_probe);

    auto [zp3, zt3] = exchange(g, params, 3, cfg.xattn, p3.tokens, t3.tokens, affinity_probe);

    StageOut p4 = encoder_stage(g, params, "primary", cfg.encoder, 3, zp3, p3.h, p3.w,
                                affinity_probe);
    StageOut t4 = encoder_stage(g, params, "structural", cfg.encoder, 3, zt3, t3.h, t3.w,
                                affinity_probe);

    // Description fusion at the last primary stage.
    Mat desc_row(1, cfg.c_desp);
    for (int j = 0; j < cfg.c_desp; ++j) desc_row.at(0, j) = description[j];
    TensorRef f4p = fuse_description(g, params, p4.tokens, g.input(std::move(desc_row)));

    // Label-informed similarity maps on the unified visual features. Stage 3
    // uses the post-exchange features; stage 4 uses the fused primary tokens.
    TensorRef labels = g.input(label_matrix);
    TensorRef zvis3 = g.add(zp3, zt3);
    TensorRef zvis4 = g.add(f4p, t4.tokens);
    TensorRef sim3 = similarity_map(g, params, zvis3, adapt_label_embeddings(g, params, labels, 3), 3);
    TensorRef sim4 = similarity_map(g, params, zvis4, adapt_label_embeddings(g, params, labels, 4), 4);

    ForwardResult r;
    r.y1 = classify_primary(g, params, f4p);
    r.y2 = classify_structural(g, params, t4.tokens);
    r.y3 = gmp(g, sim3);
    r.y4 = gmp(g, sim4);
    r.f4p = f4p;
    r.sim3 = sim3;
    r.sim4 = sim4;
    r.h3 = p3.h;
    r.w3 = p3.w;
    r.h4 = p4.h;
    r.w4 = p4.w;
    return r;
}

}  // namespace wsseg
