#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsseg/dataset.hpp"
#include "wsseg/evaluation.hpp"
#include "wsseg/model.hpp"
#include "wsseg/text_providers.hpp"
#include "wsseg/train_config.hpp"

namespace wsseg {

struct StepLog {
    int step = 0;
    int epoch = 0;
    double l1 = 0, l2 = 0, l3 = 0, l4 = 0, total = 0;
};

struct TrainResult {
    std::filesystem::path final_checkpoint;
    std::filesystem::path log_path;
    std::vector<StepLog> steps;
};

// Full training loop: per minibatch both branch forwards, exchanges at
// stages 2 and 3, description fusion, similarity maps, the four-term loss,
// and an Adam step that leaves frozen groups untouched. Checkpoints are
// written per epoch plus a final one; the log is one JSON line per step.
TrainResult train(const TrainConfig& cfg);

// Everything needed to run the trained model outside the training loop.
struct ModelBundle {
    ModelConfig config;
    std::vector<std::string> classes;
    TextConfig text;
    FusionWeights gamma;
    uint64_t seed = 42;
    ParamStore params;
};

ModelBundle load_model_bundle(const std::filesystem::path& checkpoint);

TextProvider make_text_provider(const TextConfig& text,
                                const std::vector<std::string>& classes);

// Heatmap sources for one sample: primary CAM lesion channels at stage-4
// resolution plus SIM lesion channels at stages 3 and 4.
struct InferenceMaps {
    std::vector<Mat> cam;
    std::vector<Mat> sim3;
    std::vector<Mat> sim4;
};

InferenceMaps infer_heatmaps(ParamStore& params, const ModelConfig& cfg,
                             const ImageSample& sample, const TextProvider& provider);

struct PseudoOptions {
    double lambda = 0.5;
    std::optional<FusionWeights> gamma;  // default: the checkpoint's gammas
    bool dump_cams = false;
    std::string split = "all";           // "train", "val", or "all"
};

// One pseudo-label image + side-car JSON per sample.
void generate_pseudo_labels(const std::filesystem::path& checkpoint,
                            const std::filesystem::path& manifest, const PseudoOptions& opt,
                            const std::filesystem::path& out_dir);

// Background-threshold traversal against the manifest's ground-truth masks.
SweepResult sweep_checkpoint(const std::filesystem::path& checkpoint,
                             const std::filesystem::path& manifest, const std::string& split,
                             const std::optional<FusionWeights>& gamma = std::nullopt);

void write_sweep_json(const SweepResult& r, const std::filesystem::path& out_path);

// Compares exported label images against ground-truth label images matched
// by file stem; writes metrics.json.
void evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                   const std::filesystem::path& out_json);

struct AnalyzeTextOptions {
    std::filesystem::path captions;
    std::filesystem::path manifest;       // groups + volume ordering
    std::filesystem::path embeddings_dir; // optional; stub embeddings otherwise
    int stub_dim = 512;
    uint64_t stub_seed = 1;
    std::filesystem::path stopwords;      // optional; built-in list otherwise
};

// Writes histogram.csv (group,token,count) and similarity.csv
// (window,mean_cosine) into out_dir.
void analyze_text(const AnalyzeTextOptions& opt, const std::filesystem::path& out_dir);

// Temp-file-then-rename write used for every JSON/CSV artifact.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace wsseg
