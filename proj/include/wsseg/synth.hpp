#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace wsseg {

// In-tree toy data generator: retinal-band style images with planted bright
// and dark blobs whose presence defines the image-level label. Writes a
// complete dataset directory (images, healthy counterparts, layer maps,
// ground-truth masks, captions.json, manifest.json) so the whole pipeline
// runs without real data.
struct SynthSpec {
    int n_images = 32;
    int height = 96;
    int width = 96;
    uint64_t seed = 7;
    int volume_size = 8;       // consecutive slices share a volume id
    std::string split = "train";
};

void generate_synthetic_dataset(const SynthSpec& spec, const std::filesystem::path& dir);

}  // namespace wsseg
