#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "wsseg/graph.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

// Fixed merge strides: stage s has spatial size H / (4 * 2^(s-1)).
inline constexpr std::array<int, 4> kPatchStrides{4, 2, 2, 2};

// Hierarchical four-stage vision encoder (MiT-shaped). Defaults mirror the
// b2 convention; tests use the toy presets below.
struct EncoderConfig {
    std::array<int, 4> channels{64, 128, 320, 512};
    std::array<int, 4> depths{3, 4, 6, 3};
    std::array<int, 4> heads{1, 2, 5, 8};
    std::array<int, 4> sr_ratios{8, 4, 2, 1};
    int mlp_ratio = 4;

    void validate() const;
};

EncoderConfig toy_encoder_config();   // channels (16,32,64,128), depth 1
EncoderConfig tiny_encoder_config();  // channels (4,8,16,32), for gradient checks

struct StageOut {
    TensorRef tokens;
    int h = 0;
    int w = 0;
};

struct FeaturePyramid {
    std::array<StageOut, 4> stage;  // index 0 = stage 1
};

// Creates every parameter of one encoder branch under `prefix`
// (prefix.proj.*, prefix.s<k>.merge.*, prefix.s<k>.blk<i>.*).
void build_encoder_params(ParamStore& params, const std::string& prefix,
                          const EncoderConfig& cfg, int in_channels, Rng& rng);

// Runs one stage: strided patch merging then depth transformer blocks.
// stage_index is 0-based.
StageOut encoder_stage(Graph& g, ParamStore& params, const std::string& prefix,
                       const EncoderConfig& cfg, int stage_index, TensorRef in_tokens,
                       int in_h, int in_w, std::vector<Mat>* affinity_probe = nullptr);

// Full four-stage forward. `injected` may supply a replacement feature map
// per (1-based) stage: it replaces that stage's output as the input to the
// next stage (the cross-attention exchange hook). The pyramid records the
// computed stage outputs.
FeaturePyramid encode(Graph& g, ParamStore& params, const std::string& prefix,
                      const EncoderConfig& cfg, TensorRef image_tokens, int h, int w,
                      const std::map<int, TensorRef>* injected = nullptr,
                      std::vector<Mat>* affinity_probe = nullptr);

// [H x W] single-channel image -> [H*W x 3] channel-replicated tokens.
Mat image_to_tokens(const Mat& image);

// Freeze-spec entries: "proj", "1", "2", "3", "4".
std::vector<std::string> freeze_prefixes(const std::string& branch_prefix,
                                         const std::vector<std::string>& spec);
void freeze_encoder(ParamStore& params, const std::string& branch_prefix,
                    const std::vector<std::string>& spec);

}  // namespace wsseg
