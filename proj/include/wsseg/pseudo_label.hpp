#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "wsseg/image.hpp"
#include "wsseg/mat.hpp"

namespace wsseg {

struct FusionWeights {
    double g1 = 1.0;  // primary CAM
    double g3 = 1.0;  // SIM_3
    double g4 = 1.0;  // SIM_4

    void validate() const;
};

// Reshape one class channel of a token matrix [N x K] into an [h x w] map.
Mat tokens_to_channel(const Mat& tokens, int channel, int h, int w);

// Spatial application of the GMP classifier head: M_k[p] = sum_c F[p,c] W[c,k]
// for lesion classes k = 1..K-1 (background column dropped).
std::vector<Mat> cam_from_classifier(const Mat& f4p_tokens, const Mat& head_w, int h, int w);

// ReLU each source, bilinearly resize to the target size, weighted-sum, then
// per-class min-max normalize (constant channels map to zero).
std::vector<Mat> fuse_heatmaps(const std::vector<Mat>& cam, const std::vector<Mat>& sim3,
                               const std::vector<Mat>& sim4, const FusionWeights& g,
                               int target_h, int target_w);

struct FinalizeResult {
    std::vector<Mat> m_final;  // K channels; channel 0 is the background map
    GridU8 labels;             // per-pixel argmax, ties to the lowest index
};

// Prepends a constant background map of value lambda and takes the per-pixel
// argmax across the K channels.
FinalizeResult finalize(const std::vector<Mat>& m_fg, double lambda);

// 8-bit label image plus side-car JSON (class names, lambda, gammas,
// checkpoint id). Fails when the class count exceeds the 8-bit range.
void export_pseudo_label(const GridU8& labels, int num_classes,
                         const std::filesystem::path& image_path,
                         const nlohmann::json& sidecar);

// Optional CAM dump: one .f32 raster per class plus a JSON shape header.
void dump_heatmaps(const std::vector<Mat>& maps, const std::vector<std::string>& names,
                   const std::filesystem::path& dir, const std::string& stem);

}  // namespace wsseg
