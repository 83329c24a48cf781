#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "wsseg/model.hpp"
#include "wsseg/optimizer.hpp"
#include "wsseg/pseudo_label.hpp"

namespace wsseg {

struct AugmentConfig {
    bool enabled = false;
    bool hflip = true;
    double rotate_deg = 10.0;     // uniform in [-rotate_deg, +rotate_deg]
    double jitter = 0.1;          // multiplicative intensity jitter, image only
};

struct TextConfig {
    std::string mode = "stub";    // "stub" or "cache"
    int c_clip = 768;
    int c_desp = 512;
    std::string cache_dir;
    uint64_t stub_seed = 1;
    std::map<std::string, std::string> label_prompts;  // default: bare class name
};

struct TrainConfig {
    uint64_t seed = 42;
    int input_h = 512;
    int input_w = 512;
    EncoderConfig encoder;
    std::vector<std::string> frozen_stages{"proj", "1", "2"};
    bool freeze_structural = true;  // apply the same freeze spec to both branches
    CrossAttentionConfig xattn;
    TextConfig text;
    LossWeights loss_weights;
    FusionWeights gamma;
    AdamConfig optimizer;
    int batch_size = 8;
    int epochs = 30;
    AugmentConfig augment;
    std::filesystem::path manifest;
    std::filesystem::path out_dir;

    void validate() const;
    nlohmann::json to_json() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j,
                                   const std::filesystem::path& base_dir = {});
TrainConfig load_train_config(const std::filesystem::path& path);

// Small fast preset used by tests and the synthetic walkthrough.
TrainConfig toy_train_config(const std::filesystem::path& manifest,
                             const std::filesystem::path& out_dir);

}  // namespace wsseg
