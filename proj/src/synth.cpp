#include "wsseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <vector>

#include <json.hpp>

#include "wsseg/errors.hpp"
#include "wsseg/image.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

using nlohmann::json;

namespace {

struct Blob {
    int cy = 0, cx = 0;
    int ry = 0, rx = 0;
    double delta = 0.0;  // added to the healthy image inside the ellipse
    int class_index = 0;
};

bool inside(const Blob& b, int r, int c) {
    const double dy = (r - b.cy) / static_cast<double>(b.ry);
    const double dx = (c - b.cx) / static_cast<double>(b.rx);
    return dy * dy + dx * dx <= 1.0;
}

std::string caption_for(bool bright, bool dark, int variant) {
    static const char* scenes[] = {"a hill", "a wave", "a ridge", "a dune"};
    const std::string scene = scenes[variant % 4];
    std::string body;
    if (bright && dark) {
        body = "a bright spot and a dark pocket resting on " + scene;
    } else if (bright) {
        body = "a small bright spot glowing over " + scene;
    } else if (dark) {
        body = "a dark hollow pocket hiding under " + scene;
    } else {
        body = "a smooth band stretching across " + scene;
    }
    return "a black and white photo of " + body;
}

}  // namespace

void generate_synthetic_dataset(const SynthSpec& spec, const std::filesystem::path& dir) {
    if (spec.n_images < 0) throw DataError("synth: negative image count");
    if (spec.height < 64 || spec.width < 64) {
        throw DataError("synth: images must be at least 64x64");
    }
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "healthy");
    fs::create_directories(dir / "layers");
    fs::create_directories(dir / "masks");

    Rng rng(spec.seed);
    const int h = spec.height, w = spec.width;

    json samples = json::array();
    std::map<std::string, std::string> captions;

    for (int i = 0; i < spec.n_images; ++i) {
        // Class mix cycles through healthy / bright / dark / both.
        const int kind = i % 4;  // 0 healthy, 1 bright, 2 dark, 3 both
        const bool has_bright = kind == 1 || kind == 3;
        const bool has_dark = kind == 2 || kind == 3;

        // Curved band: per-column top edge plus fixed thickness.
        const double base_top = rng.uniform(0.22, 0.30) * h;
        const double amp = rng.uniform(0.02, 0.05) * h;
        const double phase = rng.uniform(0.0, 6.28318530717958647692);
        const int thickness = static_cast<int>(rng.uniform(0.38, 0.46) * h);
        std::vector<int> top(w);
        for (int c = 0; c < w; ++c) {
            top[c] = static_cast<int>(base_top + amp * std::sin(6.28318530717958647692 * c / w + phase));
        }

        Mat healthy(h, w);
        Mat layer(h, w);
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                const bool in_band = r >= top[c] && r < top[c] + thickness;
                const double noise = rng.uniform(-0.015, 0.015);
                double v = 0.08 + noise;
                if (in_band) {
                    // Brighter crust near the band top, like a hyperreflective layer.
                    const double depth = static_cast<double>(r - top[c]) / thickness;
                    v += 0.42 + 0.18 * std::exp(-depth * depth * 18.0);
                    layer.at(r, c) = 1.0 - 0.3 * depth;
                }
                healthy.at(r, c) = std::clamp(v, 0.0, 1.0);
            }
        }

        // Plant blobs inside the band; when both classes are present they
        // live in disjoint horizontal halves so the masks never overlap.
        std::vector<Blob> blobs;
        auto plant = [&](int class_index, double delta, int cx_lo, int cx_hi) {
            Blob b;
            b.rx = static_cast<int>(rng.uniform(0.16, 0.22) * w);
            b.ry = static_cast<int>(rng.uniform(0.12, 0.17) * h);
            b.cx = static_cast<int>(rng.uniform(cx_lo + b.rx + 1.0, cx_hi - b.rx - 1.0));
            const int band_mid_top = top[b.cx] + b.ry + 2;
            const int band_mid_bot = top[b.cx] + thickness - b.ry - 2;
            b.cy = static_cast<int>(rng.uniform(band_mid_top, std::max(band_mid_top + 1, band_mid_bot)));
            b.delta = delta;
            b.class_index = class_index;
            blobs.push_back(b);
        };
        if (has_bright && has_dark) {
            plant(1, 0.45, 0, w / 2);
            plant(2, -0.5, w / 2, w);
        } else if (has_bright) {
            plant(1, 0.45, 0, w);
        } else if (has_dark) {
            plant(2, -0.5, 0, w);
        }

        Mat image = healthy;
        GridU8 mask(h, w, 0);
        for (const Blob& b : blobs) {
            for (int r = std::max(0, b.cy - b.ry); r <= std::min(h - 1, b.cy + b.ry); ++r) {
                for (int c = std::max(0, b.cx - b.rx); c <= std::min(w - 1, b.cx + b.rx); ++c) {
                    if (!inside(b, r, c)) continue;
                    image.at(r, c) = std::clamp(image.at(r, c) + b.delta, 0.02, 1.0);
                    mask.at(r, c) = static_cast<uint8_t>(b.class_index);
                }
            }
        }

        char id[32];
        std::snprintf(id, sizeof(id), "s%03d", i);
        const std::string sid(id);
        save_pgm_intensity(dir / "images" / (sid + ".pgm"), image);
        save_pgm_intensity(dir / "healthy" / (sid + ".pgm"), healthy);
        save_pgm_intensity(dir / "layers" / (sid + ".pgm"), layer);
        save_pgm_index(dir / "masks" / (sid + ".pgm"), mask);

        const std::string caption = caption_for(has_bright, has_dark, i / 4);
        captions[sid] = caption;

        json s;
        s["id"] = sid;
        s["image"] = "images/" + sid + ".pgm";
        s["healthy"] = "healthy/" + sid + ".pgm";
        s["layer"] = "layers/" + sid + ".pgm";
        s["mask"] = "masks/" + sid + ".pgm";
        json tags = json::array();
        if (has_bright) tags.push_back("bright");
        if (has_dark) tags.push_back("dark");
        s["tags"] = tags;
        s["caption"] = caption;
        s["volume_id"] = "vol" + std::to_string(i / spec.volume_size);
        s["slice_index"] = i % spec.volume_size;
        s["split"] = spec.split;
        samples.push_back(std::move(s));
    }

    json manifest;
    manifest["classes"] = {"bg", "bright", "dark"};
    manifest["samples"] = std::move(samples);
    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw DataError("synth: cannot write manifest");
        out << manifest.dump(2) << "\n";
    }
    {
        json j = json::object();
        for (const auto& [k, v] : captions) j[k] = v;
        std::ofstream out(dir / "captions.json");
        out << j.dump(2) << "\n";
    }
}

}  // namespace wsseg
