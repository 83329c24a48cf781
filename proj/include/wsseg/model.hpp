#pragma once

#include <string>
#include <vector>

#include "wsseg/cross_attention.hpp"
#include "wsseg/encoder.hpp"
#include "wsseg/graph.hpp"
#include "wsseg/objectives.hpp"
#include "wsseg/text_guidance.hpp"

namespace wsseg {

struct ModelConfig {
    EncoderConfig encoder;
    CrossAttentionConfig xattn;
    int c_clip = 768;
    int c_desp = 512;
    int num_classes = 0;
    int input_h = 512;
    int input_w = 512;

    void validate() const;
};

// Builds every parameter group: both encoder branches, the cross-attention
// exchanges, the description fusion, the label adaptors, and the heads.
// Creation order is fixed so a given seed always yields the same weights.
void build_model_params(ParamStore& params, const ModelConfig& cfg, Rng& rng);

struct ForwardResult {
    TensorRef y1;    // [1 x K] primary logits
    TensorRef y2;    // [1 x 2] structural logits
    TensorRef y3;    // [1 x K] GMP(SIM_3)
    TensorRef y4;    // [1 x K] GMP(SIM_4)
    TensorRef f4p;   // fused primary stage-4 tokens [N4 x C4]
    TensorRef sim3;  // [N3 x K]
    TensorRef sim4;  // [N4 x K]
    int h3 = 0, w3 = 0, h4 = 0, w4 = 0;
};

// One full forward pass: both encoders stage by stage, exchanges after
// stages 2 and 3, description fusion at stage 4, similarity maps at stages
// 3 and 4, and the four logit heads.
ForwardResult model_forward(Graph& g, ParamStore& params, const ModelConfig& cfg,
                            const Mat& image, const Mat& structural,
                            const std::vector<double>& description,
                            const Mat& label_matrix,
                            std::vector<Mat>* affinity_probe = nullptr);

}  // namespace wsseg
