#include "wsseg/train_config.hpp"

#include <fstream>

#include "wsseg/errors.hpp"

namespace wsseg {

using nlohmann::json;

void TrainConfig::validate() const {
    encoder.validate();
    loss_weights.validate();
    gamma.validate();
    if (optimizer.lr <= 0.0) throw DataError("config: learning rate must be > 0");
    if (epochs < 1) throw DataError("config: epochs must be >= 1");
    if (batch_size < 1) throw DataError("config: batch size must be >= 1");
    if (input_h % 32 != 0 || input_w % 32 != 0) {
        throw DataError("config: input size must be divisible by 32");
    }
    if (text.mode != "stub" && text.mode != "cache") {
        throw DataError("config: text.mode must be \"stub\" or \"cache\"");
    }
    if (text.mode == "cache" && text.cache_dir.empty()) {
        throw DataError("config: text.mode \"cache\" requires text.cache_dir");
    }
    if (text.c_clip < 1 || text.c_desp < 1) throw DataError("config: text dims must be >= 1");
    if (augment.rotate_deg < 0.0 || augment.jitter < 0.0) {
        throw DataError("config: augmentation ranges must be nonnegative");
    }
    if (manifest.empty()) throw DataError("config: manifest path is required");
    if (out_dir.empty()) throw DataError("config: out_dir is required");
    for (const auto& s : frozen_stages) {
        if (s != "proj" && s != "1" && s != "2" && s != "3" && s != "4") {
            throw DataError("config: frozen stage entries must be proj/1/2/3/4, got \"" + s +
                            "\"");
        }
    }
}

namespace {

template <typename T, size_t N>
std::array<T, N> array_from(const json& j, const char* what) {
    if (!j.is_array() || j.size() != N) {
        throw DataError(std::string("config: ") + what + " must be an array of " +
                        std::to_string(N));
    }
    std::array<T, N> out{};
    for (size_t i = 0; i < N; ++i) out[i] = j[i].get<T>();
    return out;
}

}  // namespace

TrainConfig train_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    TrainConfig c;
    try {
        if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
        if (j.contains("input_size")) {
            const auto a = array_from<int, 2>(j["input_size"], "input_size");
            c.input_h = a[0];
            c.input_w = a[1];
        }
        if (j.contains("encoder")) {
            const json& e = j["encoder"];
            if (e.contains("channels"))
                c.encoder.channels = array_from<int, 4>(e["channels"], "encoder.channels");
            if (e.contains("depths"))
                c.encoder.depths = array_from<int, 4>(e["depths"], "encoder.depths");
            if (e.contains("heads"))
                c.encoder.heads = array_from<int, 4>(e["heads"], "encoder.heads");
            if (e.contains("sr_ratios"))
                c.encoder.sr_ratios = array_from<int, 4>(e["sr_ratios"], "encoder.sr_ratios");
            if (e.contains("mlp_ratio")) c.encoder.mlp_ratio = e["mlp_ratio"].get<int>();
        }
        if (j.contains("frozen_stages")) {
            c.frozen_stages.clear();
            for (const auto& s : j["frozen_stages"]) c.frozen_stages.push_back(s.get<std::string>());
        }
        if (j.contains("freeze_structural")) c.freeze_structural = j["freeze_structural"].get<bool>();
        if (j.contains("xattn_heads")) {
            const auto a = array_from<int, 2>(j["xattn_heads"], "xattn_heads");
            c.xattn.heads_s2 = a[0];
            c.xattn.heads_s3 = a[1];
        }
        if (j.contains("text")) {
            const json& t = j["text"];
            if (t.contains("mode")) c.text.mode = t["mode"].get<std::string>();
            if (t.contains("c_clip")) c.text.c_clip = t["c_clip"].get<int>();
            if (t.contains("c_desp")) c.text.c_desp = t["c_desp"].get<int>();
            if (t.contains("cache_dir")) c.text.cache_dir = t["cache_dir"].get<std::string>();
            if (t.contains("stub_seed")) c.text.stub_seed = t["stub_seed"].get<uint64_t>();
            if (t.contains("label_prompts")) {
                for (auto it = t["label_prompts"].begin(); it != t["label_prompts"].end(); ++it) {
                    c.text.label_prompts[it.key()] = it.value().get<std::string>();
                }
            }
        }
        if (j.contains("loss_weights")) {
            const auto a = array_from<double, 4>(j["loss_weights"], "loss_weights");
            c.loss_weights = LossWeights{a[0], a[1], a[2], a[3]};
        }
        if (j.contains("gamma")) {
            const auto a = array_from<double, 3>(j["gamma"], "gamma");
            c.gamma = FusionWeights{a[0], a[1], a[2]};
        }
        if (j.contains("optimizer")) {
            const json& o = j["optimizer"];
            if (o.contains("lr")) c.optimizer.lr = o["lr"].get<double>();
            if (o.contains("beta1")) c.optimizer.beta1 = o["beta1"].get<double>();
            if (o.contains("beta2")) c.optimizer.beta2 = o["beta2"].get<double>();
            if (o.contains("eps")) c.optimizer.eps = o["eps"].get<double>();
        }
        if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
        if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
        if (j.contains("augment")) {
            const json& a = j["augment"];
            if (a.contains("enabled")) c.augment.enabled = a["enabled"].get<bool>();
            if (a.contains("hflip")) c.augment.hflip = a["hflip"].get<bool>();
            if (a.contains("rotate_deg")) c.augment.rotate_deg = a["rotate_deg"].get<double>();
            if (a.contains("jitter")) c.augment.jitter = a["jitter"].get<double>();
        }
        if (j.contains("manifest")) c.manifest = j["manifest"].get<std::string>();
        if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    } catch (const json::exception& e) {
        throw DataError("config: " + std::string(e.what()));
    }
    if (!base_dir.empty()) {
        if (!c.manifest.empty() && c.manifest.is_relative()) c.manifest = base_dir / c.manifest;
        if (!c.out_dir.empty() && c.out_dir.is_relative()) c.out_dir = base_dir / c.out_dir;
    }
    c.validate();
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("config: parse error in " + path.string() + ": " + e.what());
    }
    return train_config_from_json(j, path.parent_path());
}

nlohmann::json TrainConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["input_size"] = {input_h, input_w};
    j["encoder"] = {{"channels", encoder.channels},
                    {"depths", encoder.depths},
                    {"heads", encoder.heads},
                    {"sr_ratios", encoder.sr_ratios},
                    {"mlp_ratio", encoder.mlp_ratio}};
    j["frozen_stages"] = frozen_stages;
    j["freeze_structural"] = freeze_structural;
    j["xattn_heads"] = {xattn.heads_s2, xattn.heads_s3};
    j["text"] = {{"mode", text.mode},
                 {"c_clip", text.c_clip},
                 {"c_desp", text.c_desp},
                 {"cache_dir", text.cache_dir},
                 {"stub_seed", text.stub_seed},
                 {"label_prompts", text.label_prompts}};
    j["loss_weights"] = {loss_weights.l1, loss_weights.l2, loss_weights.l3, loss_weights.l4};
    j["gamma"] = {gamma.g1, gamma.g3, gamma.g4};
    j["optimizer"] = {{"lr", optimizer.lr},
                      {"beta1", optimizer.beta1},
                      {"beta2", optimizer.beta2},
                      {"eps", optimizer.eps}};
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["augment"] = {{"enabled", augment.enabled},
                    {"hflip", augment.hflip},
                    {"rotate_deg", augment.rotate_deg},
                    {"jitter", augment.jitter}};
    j["manifest"] = manifest.string();
    j["out_dir"] = out_dir.string();
    return j;
}

TrainConfig toy_train_config(const std::filesystem::path& manifest,
                             const std::filesystem::path& out_dir) {
    TrainConfig c;
    c.seed = 42;
    c.input_h = 96;
    c.input_w = 96;
    c.encoder = toy_encoder_config();
    c.frozen_stages.clear();
    c.xattn.heads_s2 = 2;
    c.xattn.heads_s3 = 4;
    c.text.mode = "stub";
    c.text.c_clip = 32;
    c.text.c_desp = 16;
    c.text.stub_seed = 1;
    c.optimizer.lr = 2e-3;
    c.batch_size = 8;
    c.epochs = 30;
    c.augment.enabled = false;
    c.manifest = manifest;
    c.out_dir = out_dir;
    return c;
}

}  // namespace wsseg
