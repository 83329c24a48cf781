#include "wsseg/pseudo_label.hpp"

#include <algorithm>
#include <fstream>

#include "wsseg/errors.hpp"

namespace wsseg {

void FusionWeights::validate() const {
    if (g1 < 0 || g3 < 0 || g4 < 0) throw DataError("fusion weights must be nonnegative");
}

Mat tokens_to_channel(const Mat& tokens, int channel, int h, int w) {
    if (tokens.rows != h * w) throw DataError("tokens_to_channel: token count mismatch");
    if (channel < 0 || channel >= tokens.cols) throw DataError("tokens_to_channel: bad channel");
    Mat m(h, w);
    for (int i = 0; i < h * w; ++i) m.a[i] = tokens.at(i, channel);
    return m;
}

std::vector<Mat> cam_from_classifier(const Mat& f4p_tokens, const Mat& head_w, int h, int w) {
    if (f4p_tokens.cols != head_w.rows) {
        throw DataError("cam_from_classifier: feature/head dims " + f4p_tokens.shape_str() +
                        " vs " + head_w.shape_str());
    }
    const Mat logits = mat_mul(f4p_tokens, head_w);  // [N x K]
    std::vector<Mat> cams;
    for (int k = 1; k < head_w.cols; ++k) cams.push_back(tokens_to_channel(logits, k, h, w));
    return cams;
}

namespace {

Mat relu_resize(const Mat& src, int h, int w) {
    Mat m = src;
    for (double& v : m.a)
        if (v < 0.0) v = 0.0;
    return resize_bilinear(m, h, w);
}

void minmax_normalize_inplace(Mat& m) {
    double lo = m.a[0], hi = m.a[0];
    for (double v : m.a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {
        m.fill(0.0);
        return;
    }
    // Direct division so non-constant channels reach exactly 0 and 1.
    const double range = hi - lo;
    for (double& v : m.a) v = (v - lo) / range;
}

}  // namespace

std::vector<Mat> fuse_heatmaps(const std::vector<Mat>& cam, const std::vector<Mat>& sim3,
                               const std::vector<Mat>& sim4, const FusionWeights& g,
                               int target_h, int target_w) {
    g.validate();
    const size_t k = std::max({cam.size(), sim3.size(), sim4.size()});
    if ((!cam.empty() && cam.size() != k) || (!sim3.empty() && sim3.size() != k) ||
        (!sim4.empty() && sim4.size() != k)) {
        throw DataError("fuse_heatmaps: sources disagree on class count");
    }
    std::vector<Mat> fused;
    fused.reserve(k);
    for (size_t c = 0; c < k; ++c) {
        Mat acc(target_h, target_w, 0.0);
        if (!cam.empty() && g.g1 != 0.0) add_scaled(acc, relu_resize(cam[c], target_h, target_w), g.g1);
        if (!sim3.empty() && g.g3 != 0.0) add_scaled(acc, relu_resize(sim3[c], target_h, target_w), g.g3);
        if (!sim4.empty() && g.g4 != 0.0) add_scaled(acc, relu_resize(sim4[c], target_h, target_w), g.g4);
        minmax_normalize_inplace(acc);
        fused.push_back(std::move(acc));
    }
    return fused;
}

FinalizeResult finalize(const std::vector<Mat>& m_fg, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw DataError("finalize: background threshold must be in [0,1]");
    }
    if (m_fg.empty()) throw DataError("finalize: no foreground channels");
    const int h = m_fg[0].rows, w = m_fg[0].cols;
    for (const auto& m : m_fg) require_shape(m, h, w, "finalize");

    FinalizeResult r;
    r.m_final.reserve(m_fg.size() + 1);
    r.m_final.emplace_back(h, w, lambda);  // constant background map
    for (const auto& m : m_fg) r.m_final.push_back(m);

    r.labels = GridU8(h, w, 0);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            int best = 0;
            double best_v = lambda;
            for (size_t c = 1; c < r.m_final.size(); ++c) {
                const double v = r.m_final[c].at(i, j);
                if (v > best_v) {  // strict: ties keep the lowest class index
                    best_v = v;
                    best = static_cast<int>(c);
                }
            }
            r.labels.at(i, j) = static_cast<uint8_t>(best);
        }
    }
    return r;
}

void export_pseudo_label(const GridU8& labels, int num_classes,
                         const std::filesystem::path& image_path,
                         const nlohmann::json& sidecar) {
    if (num_classes > 256) {
        throw DataError("export: " + std::to_string(num_classes) +
                        " classes exceed the 8-bit label format");
    }
    save_pgm_index(image_path, labels);
    auto sidecar_path = image_path;
    sidecar_path.replace_extension(".json");
    const auto tmp = sidecar_path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("export: cannot write " + sidecar_path.string());
        out << sidecar.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, sidecar_path);
}

void dump_heatmaps(const std::vector<Mat>& maps, const std::vector<std::string>& names,
                   const std::filesystem::path& dir, const std::string& stem) {
    if (maps.size() != names.size()) throw DataError("dump_heatmaps: names/maps mismatch");
    std::filesystem::create_directories(dir);
    nlohmann::json header;
    for (size_t i = 0; i < maps.size(); ++i) {
        const std::string fname = stem + "_" + names[i] + ".f32";
        std::vector<float> payload(maps[i].a.begin(), maps[i].a.end());
        std::ofstream out(dir / fname, std::ios::binary);
        if (!out) throw DataError("dump_heatmaps: cannot write " + (dir / fname).string());
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * 4));
        header["channels"].push_back(
            {{"class", names[i]}, {"file", fname}, {"rows", maps[i].rows}, {"cols", maps[i].cols}});
    }
    std::ofstream out(dir / (stem + ".json"));
    out << header.dump(2) << "\n";
}

}  // namespace wsseg
