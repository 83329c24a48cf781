#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsseg/image.hpp"
#include "wsseg/mat.hpp"

namespace wsseg {

// One image with its multi-hot label and structural companions. Immutable
// after loading.
struct ImageSample {
    std::string id;
    Mat image;                    // [H x W], intensities in [0,1]
    std::vector<int> label;       // multi-hot, length K, index 0 = background
    std::optional<Mat> layer;     // layer-segmentation map in [0,1]
    std::optional<Mat> anomaly;   // |image - healthy counterpart|, >= 0
    std::optional<Mat> healthy;   // generated healthy counterpart
    std::optional<GridU8> mask;   // pixel ground truth (validation only)
    std::optional<std::string> caption;
    std::string volume_id;
    int slice_index = 0;
    std::string split = "train";
};

struct DatasetManifest {
    std::vector<std::string> classes;  // index 0 = background
    std::filesystem::path root;        // directory of the manifest file
    struct Entry {
        std::string id;
        std::string image;
        std::string layer;
        std::string anomaly;
        std::string healthy;
        std::string mask;
        std::vector<std::string> tags;
        std::optional<std::string> caption;
        std::string volume_id;
        int slice_index = 0;
        std::string split = "train";
    };
    std::vector<Entry> samples;
};

DatasetManifest read_manifest(const std::filesystem::path& manifest_path);

// Loads every sample, resizing images and structural maps to input size
// with bilinear interpolation (masks nearest-neighbor) and building label
// vectors from the per-sample class tags. The background bit is always set.
std::vector<ImageSample> load_dataset(const std::filesystem::path& manifest_path,
                                      int input_rows, int input_cols);
std::vector<ImageSample> load_dataset(const DatasetManifest& manifest, int input_rows,
                                      int input_cols);

// A[p] = |X[p] - G[p]|
Mat compute_anomaly_map(const Mat& x, const Mat& g);

// X' = min-max normalized (L + A); an exactly constant sum maps to zeros.
Mat compose_structural_input(const Mat& layer, const Mat& anomaly);

// Multi-hot -> (healthy, lesion-present) one-hot.
std::vector<int> binarize_label(const std::vector<int>& y);

// Structural input for a sample: missing companions are treated as zero maps.
Mat structural_input_for(const ImageSample& s);

}  // namespace wsseg
