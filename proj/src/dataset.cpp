#include "wsseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "wsseg/errors.hpp"

namespace wsseg {

using nlohmann::json;

namespace {

json parse_json_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw DataError(std::string(what) + ": cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string(what) + ": parse error in " + path.string() + ": " +
                        e.what());
    }
    return j;
}

}  // namespace

DatasetManifest read_manifest(const std::filesystem::path& manifest_path) {
    const json j = parse_json_file(manifest_path, "manifest");
    DatasetManifest m;
    m.root = manifest_path.parent_path();
    if (!j.contains("classes") || !j["classes"].is_array() || j["classes"].empty()) {
        throw DataError("manifest: missing or empty \"classes\" list");
    }
    for (const auto& c : j["classes"]) m.classes.push_back(c.get<std::string>());
    if (j.contains("samples")) {
        for (const auto& s : j["samples"]) {
            DatasetManifest::Entry e;
            e.id = s.at("id").get<std::string>();
            e.image = s.at("image").get<std::string>();
            if (s.contains("layer")) e.layer = s["layer"].get<std::string>();
            if (s.contains("anomaly")) e.anomaly = s["anomaly"].get<std::string>();
            if (s.contains("healthy")) e.healthy = s["healthy"].get<std::string>();
            if (s.contains("mask")) e.mask = s["mask"].get<std::string>();
            if (s.contains("tags"))
                for (const auto& t : s["tags"]) e.tags.push_back(t.get<std::string>());
            if (s.contains("caption")) e.caption = s["caption"].get<std::string>();
            if (s.contains("volume_id")) e.volume_id = s["volume_id"].get<std::string>();
            if (s.contains("slice_index")) e.slice_index = s["slice_index"].get<int>();
            if (s.contains("split")) e.split = s["split"].get<std::string>();
            m.samples.push_back(std::move(e));
        }
    }
    return m;
}

std::vector<ImageSample> load_dataset(const std::filesystem::path& manifest_path,
                                      int input_rows, int input_cols) {
    return load_dataset(read_manifest(manifest_path), input_rows, input_cols);
}

std::vector<ImageSample> load_dataset(const DatasetManifest& manifest, int input_rows,
                                      int input_cols) {
    const int k = static_cast<int>(manifest.classes.size());
    std::vector<ImageSample> out;
    out.reserve(manifest.samples.size());
    for (const auto& e : manifest.samples) {
        ImageSample s;
        s.id = e.id;
        s.volume_id = e.volume_id;
        s.slice_index = e.slice_index;
        s.split = e.split;
        s.caption = e.caption;

        auto load_map = [&](const std::string& rel) {
            const auto p = manifest.root / rel;
            if (!std::filesystem::exists(p)) {
                throw DataError("sample \"" + e.id + "\": missing file " + p.string());
            }
            return resize_bilinear(load_pgm_intensity(p), input_rows, input_cols);
        };

        s.image = load_map(e.image);
        if (!e.layer.empty()) s.layer = load_map(e.layer);
        if (!e.anomaly.empty()) {
            s.anomaly = load_map(e.anomaly);
        } else if (!e.healthy.empty()) {
            s.healthy = load_map(e.healthy);
            s.anomaly = compute_anomaly_map(s.image, *s.healthy);
        }
        if (!e.mask.empty()) {
            const auto p = manifest.root / e.mask;
            if (!std::filesystem::exists(p)) {
                throw DataError("sample \"" + e.id + "\": missing file " + p.string());
            }
            s.mask = resize_nearest(load_pgm_index(p), input_rows, input_cols);
        }

        s.label.assign(k, 0);
        s.label[0] = 1;  // background is present in every image
        for (const auto& tag : e.tags) {
            const auto it = std::find(manifest.classes.begin(), manifest.classes.end(), tag);
            if (it == manifest.classes.end()) {
                throw DataError("sample \"" + e.id + "\": unknown class tag \"" + tag + "\"");
            }
            s.label[it - manifest.classes.begin()] = 1;
        }
        out.push_back(std::move(s));
    }
    return out;
}

Mat compute_anomaly_map(const Mat& x, const Mat& g) {
    require_same_shape(x, g, "compute_anomaly_map");
    Mat a(x.rows, x.cols);
    for (size_t i = 0; i < x.size(); ++i) a.a[i] = std::fabs(x.a[i] - g.a[i]);
    return a;
}

Mat compose_structural_input(const Mat& layer, const Mat& anomaly) {
    require_same_shape(layer, anomaly, "compose_structural_input");
    Mat s(layer.rows, layer.cols);
    for (size_t i = 0; i < s.size(); ++i) s.a[i] = layer.a[i] + anomaly.a[i];
    double lo = s.a[0], hi = s.a[0];
    for (double v : s.a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {
        s.fill(0.0);  // constant sum: no structure to normalize
        return s;
    }
    // Direct division so the extremes land on exactly 0 and 1.
    const double range = hi - lo;
    for (double& v : s.a) v = (v - lo) / range;
    return s;
}

std::vector<int> binarize_label(const std::vector<int>& y) {
    bool any = false;
    bool lesion = false;
    for (size_t k = 0; k < y.size(); ++k) {
        if (y[k] != 0) {
            any = true;
            if (k > 0) lesion = true;
        }
    }
    if (!any) throw DataError("binarize_label: all-zero label vector");
    return lesion ? std::vector<int>{0, 1} : std::vector<int>{1, 0};
}

Mat structural_input_for(const ImageSample& s) {
    const Mat zero(s.image.rows, s.image.cols, 0.0);
    const Mat& layer = s.layer ? *s.layer : zero;
    const Mat& anomaly = s.anomaly ? *s.anomaly : zero;
    return compose_structural_input(layer, anomaly);
}

}  // namespace wsseg
