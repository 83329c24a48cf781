#include "wsseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "wsseg/checkpoint.hpp"
#include "wsseg/errors.hpp"
#include "wsseg/optimizer.hpp"
#include "wsseg/pseudo_label.hpp"

namespace wsseg {

using nlohmann::json;

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << content;
        if (!out) throw DataError("write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

namespace {

struct AugmentedSample {
    Mat image;
    Mat structural;
};

// The sampled transform is shared by the image and its structural
// companions; intensity jitter touches the image only.
AugmentedSample augment_sample(const ImageSample& s, const AugmentConfig& aug, Rng& rng) {
    Mat image = s.image;
    Mat zero(s.image.rows, s.image.cols, 0.0);
    Mat layer = s.layer ? *s.layer : zero;
    Mat anomaly = s.anomaly ? *s.anomaly : zero;
    if (aug.enabled) {
        if (aug.hflip && rng.coin()) {
            image = hflip(image);
            layer = hflip(layer);
            anomaly = hflip(anomaly);
        }
        if (aug.rotate_deg > 0.0) {
            const double deg = rng.uniform(-aug.rotate_deg, aug.rotate_deg);
            image = rotate_bilinear(image, deg);
            layer = rotate_bilinear(layer, deg);
            anomaly = rotate_bilinear(anomaly, deg);
        }
        if (aug.jitter > 0.0) {
            const double f = 1.0 + rng.uniform(-aug.jitter, aug.jitter);
            for (double& v : image.a) v = std::clamp(v * f, 0.0, 1.0);
        }
    }
    return {std::move(image), compose_structural_input(layer, anomaly)};
}

ModelConfig model_config_from(const TrainConfig& cfg, int num_classes) {
    ModelConfig mc;
    mc.encoder = cfg.encoder;
    mc.xattn = cfg.xattn;
    mc.c_clip = cfg.text.c_clip;
    mc.c_desp = cfg.text.c_desp;
    mc.num_classes = num_classes;
    mc.input_h = cfg.input_h;
    mc.input_w = cfg.input_w;
    return mc;
}

json checkpoint_meta(const TrainConfig& cfg, const std::vector<std::string>& classes,
                     int epoch) {
    json meta;
    meta["model"] = {{"encoder",
                      {{"channels", cfg.encoder.channels},
                       {"depths", cfg.encoder.depths},
                       {"heads", cfg.encoder.heads},
                       {"sr_ratios", cfg.encoder.sr_ratios},
                       {"mlp_ratio", cfg.encoder.mlp_ratio}}},
                     {"xattn_heads", {cfg.xattn.heads_s2, cfg.xattn.heads_s3}},
                     {"c_clip", cfg.text.c_clip},
                     {"c_desp", cfg.text.c_desp},
                     {"input", {cfg.input_h, cfg.input_w}}};
    meta["classes"] = classes;
    meta["text"] = {{"mode", cfg.text.mode},
                    {"cache_dir", cfg.text.cache_dir},
                    {"stub_seed", cfg.text.stub_seed},
                    {"label_prompts", cfg.text.label_prompts}};
    meta["gamma"] = {cfg.gamma.g1, cfg.gamma.g3, cfg.gamma.g4};
    meta["loss_weights"] = {cfg.loss_weights.l1, cfg.loss_weights.l2, cfg.loss_weights.l3,
                            cfg.loss_weights.l4};
    meta["seed"] = cfg.seed;
    meta["epoch"] = epoch;
    return meta;
}

std::vector<std::string> lesion_names(const std::vector<std::string>& classes) {
    return {classes.begin() + 1, classes.end()};
}

}  // namespace

TextProvider make_text_provider(const TextConfig& text,
                                const std::vector<std::string>& classes) {
    if (text.mode == "cache") {
        return TextProvider::from_cache(text.cache_dir, classes, text.label_prompts,
                                        text.c_clip, text.c_desp);
    }
    return TextProvider::stub(classes, text.label_prompts, text.c_clip, text.c_desp,
                              text.stub_seed);
}

TrainResult train(const TrainConfig& cfg) {
    cfg.validate();
    const DatasetManifest manifest = read_manifest(cfg.manifest);
    const auto all = load_dataset(manifest, cfg.input_h, cfg.input_w);
    std::vector<const ImageSample*> samples;
    for (const auto& s : all)
        if (s.split == "train") samples.push_back(&s);
    if (samples.empty()) throw DataError("train: no samples with split=\"train\"");

    const auto& classes = manifest.classes;
    const int num_classes = static_cast<int>(classes.size());
    const TextProvider provider = make_text_provider(cfg.text, classes);
    const ModelConfig mc = model_config_from(cfg, num_classes);

    Rng master(cfg.seed);
    Rng init_rng = master.fork(1);
    ParamStore params;
    build_model_params(params, mc, init_rng);
    freeze_encoder(params, "primary", cfg.frozen_stages);
    if (cfg.freeze_structural) freeze_encoder(params, "structural", cfg.frozen_stages);

    Adam opt(cfg.optimizer);

    std::filesystem::create_directories(cfg.out_dir);
    const auto log_path = cfg.out_dir / "train_log.jsonl";
    std::ofstream log(log_path);
    if (!log) throw DataError("train: cannot write " + log_path.string());
    {
        json header;
        header["type"] = "header";
        header["config"] = cfg.to_json();
        header["num_samples"] = samples.size();
        log << header.dump() << "\n";
    }

    // Descriptions are deterministic per sample; fetch them once.
    std::vector<std::vector<double>> descriptions(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) {
        descriptions[i] =
            provider.description(samples[i]->id, samples[i]->caption.value_or(""));
    }
    const Mat& label_matrix = provider.label_matrix();

    TrainResult result;
    result.log_path = log_path;

    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    int step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng = master.fork(100 + static_cast<uint64_t>(epoch));
        epoch_rng.shuffle(order);
        Rng aug_rng = master.fork(5000 + static_cast<uint64_t>(epoch));

        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            const int bn = static_cast<int>(end - start);

            Graph g;
            TensorRef sum1, sum2, sum3, sum4;
            for (size_t bi = start; bi < end; ++bi) {
                const ImageSample& s = *samples[order[bi]];
                const AugmentedSample a = augment_sample(s, cfg.augment, aug_rng);
                const ForwardResult fwd = model_forward(g, params, mc, a.image, a.structural,
                                                        descriptions[order[bi]], label_matrix);
                TensorRef l1 = loss_multilabel(g, fwd.y1, s.label);
                TensorRef l2 = loss_binary(g, fwd.y2, binarize_label(s.label));
                TensorRef l3 = loss_multilabel(g, fwd.y3, s.label);
                TensorRef l4 = loss_multilabel(g, fwd.y4, s.label);
                sum1 = bi == start ? l1 : g.add(sum1, l1);
                sum2 = bi == start ? l2 : g.add(sum2, l2);
                sum3 = bi == start ? l3 : g.add(sum3, l3);
                sum4 = bi == start ? l4 : g.add(sum4, l4);
            }
            TensorRef t1 = g.scale(sum1, 1.0 / bn);
            TensorRef t2 = g.scale(sum2, 1.0 / bn);
            TensorRef t3 = g.scale(sum3, 1.0 / bn);
            TensorRef t4 = g.scale(sum4, 1.0 / bn);
            TensorRef total = weighted_total(g, t1, t2, t3, t4, cfg.loss_weights);

            StepLog sl;
            sl.step = ++step;
            sl.epoch = epoch;
            sl.l1 = g.value(t1).at(0, 0);
            sl.l2 = g.value(t2).at(0, 0);
            sl.l3 = g.value(t3).at(0, 0);
            sl.l4 = g.value(t4).at(0, 0);
            sl.total = g.value(total).at(0, 0);
            if (!std::isfinite(sl.total)) {
                std::ostringstream msg;
                msg << "train: non-finite loss at step " << sl.step << " (l1=" << sl.l1
                    << " l2=" << sl.l2 << " l3=" << sl.l3 << " l4=" << sl.l4 << ")";
                throw NumericError(msg.str());
            }

            params.zero_grads();
            g.backward(total);
            opt.step(params);

            json line;
            line["step"] = sl.step;
            line["epoch"] = sl.epoch;
            line["l1"] = sl.l1;
            line["l2"] = sl.l2;
            line["l3"] = sl.l3;
            line["l4"] = sl.l4;
            line["total"] = sl.total;
            log << line.dump() << "\n";
            result.steps.push_back(sl);
        }

        char name[32];
        std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.bin", epoch);
        save_checkpoint(params, cfg.out_dir / name, checkpoint_meta(cfg, classes, epoch),
                        opt.step_count());
    }

    result.final_checkpoint = cfg.out_dir / "ckpt_final.bin";
    save_checkpoint(params, result.final_checkpoint,
                    checkpoint_meta(cfg, classes, cfg.epochs), opt.step_count());
    return result;
}

ModelBundle load_model_bundle(const std::filesystem::path& checkpoint) {
    const json header = read_checkpoint_header(checkpoint);
    const json meta = header.value("meta", json::object());
    if (!meta.contains("model")) {
        throw DataError("checkpoint: missing model meta in " + checkpoint.string());
    }
    const json& m = meta["model"];

    ModelBundle b;
    const json& e = m.at("encoder");
    for (int i = 0; i < 4; ++i) {
        b.config.encoder.channels[i] = e.at("channels")[i].get<int>();
        b.config.encoder.depths[i] = e.at("depths")[i].get<int>();
        b.config.encoder.heads[i] = e.at("heads")[i].get<int>();
        b.config.encoder.sr_ratios[i] = e.at("sr_ratios")[i].get<int>();
    }
    b.config.encoder.mlp_ratio = e.value("mlp_ratio", 4);
    b.config.xattn.heads_s2 = m.at("xattn_heads")[0].get<int>();
    b.config.xattn.heads_s3 = m.at("xattn_heads")[1].get<int>();
    b.config.c_clip = m.at("c_clip").get<int>();
    b.config.c_desp = m.at("c_desp").get<int>();
    b.config.input_h = m.at("input")[0].get<int>();
    b.config.input_w = m.at("input")[1].get<int>();
    for (const auto& c : meta.at("classes")) b.classes.push_back(c.get<std::string>());
    b.config.num_classes = static_cast<int>(b.classes.size());

    const json t = meta.value("text", json::object());
    b.text.mode = t.value("mode", "stub");
    b.text.cache_dir = t.value("cache_dir", "");
    b.text.stub_seed = t.value("stub_seed", 1ull);
    b.text.c_clip = b.config.c_clip;
    b.text.c_desp = b.config.c_desp;
    if (t.contains("label_prompts")) {
        for (auto it = t["label_prompts"].begin(); it != t["label_prompts"].end(); ++it) {
            b.text.label_prompts[it.key()] = it.value().get<std::string>();
        }
    }
    if (meta.contains("gamma")) {
        b.gamma.g1 = meta["gamma"][0].get<double>();
        b.gamma.g3 = meta["gamma"][1].get<double>();
        b.gamma.g4 = meta["gamma"][2].get<double>();
    }
    b.seed = meta.value("seed", 42ull);

    Rng init_rng = Rng(b.seed).fork(1);
    build_model_params(b.params, b.config, init_rng);
    load_checkpoint(b.params, checkpoint);
    return b;
}

InferenceMaps infer_heatmaps(ParamStore& params, const ModelConfig& cfg,
                             const ImageSample& sample, const TextProvider& provider) {
    Graph g;
    const Mat structural = structural_input_for(sample);
    const auto desc = provider.description(sample.id, sample.caption.value_or(""));
    const ForwardResult fwd = model_forward(g, params, cfg, sample.image, structural, desc,
                                            provider.label_matrix());
    InferenceMaps maps;
    maps.cam = cam_from_classifier(g.value(fwd.f4p), params.at("head.cls.w").value, fwd.h4,
                                   fwd.w4);
    const Mat& sim3 = g.value(fwd.sim3);
    const Mat& sim4 = g.value(fwd.sim4);
    for (int k = 1; k < cfg.num_classes; ++k) {
        maps.sim3.push_back(tokens_to_channel(sim3, k, fwd.h3, fwd.w3));
        maps.sim4.push_back(tokens_to_channel(sim4, k, fwd.h4, fwd.w4));
    }
    return maps;
}

namespace {

std::vector<const ImageSample*> filter_split(const std::vector<ImageSample>& all,
                                             const std::string& split) {
    std::vector<const ImageSample*> out;
    for (const auto& s : all) {
        if (split == "all" || s.split == split) out.push_back(&s);
    }
    return out;
}

}  // namespace

void generate_pseudo_labels(const std::filesystem::path& checkpoint,
                            const std::filesystem::path& manifest, const PseudoOptions& opt,
                            const std::filesystem::path& out_dir) {
    if (opt.lambda < 0.0 || opt.lambda > 1.0) {
        throw DataError("pseudo: lambda must be in [0,1]");
    }
    ModelBundle bundle = load_model_bundle(checkpoint);
    const DatasetManifest mf = read_manifest(manifest);
    if (mf.classes != bundle.classes) {
        throw DataError("pseudo: manifest classes do not match the checkpoint's classes");
    }
    const auto all = load_dataset(mf, bundle.config.input_h, bundle.config.input_w);
    const auto samples = filter_split(all, opt.split);
    const TextProvider provider = make_text_provider(bundle.text, bundle.classes);
    const FusionWeights gamma = opt.gamma.value_or(bundle.gamma);

    std::filesystem::create_directories(out_dir);
    for (const ImageSample* s : samples) {
        const InferenceMaps maps = infer_heatmaps(bundle.params, bundle.config, *s, provider);
        const auto m_fg = fuse_heatmaps(maps.cam, maps.sim3, maps.sim4, gamma,
                                        bundle.config.input_h, bundle.config.input_w);
        const FinalizeResult fin = finalize(m_fg, opt.lambda);
        json sidecar;
        sidecar["id"] = s->id;
        sidecar["classes"] = bundle.classes;
        sidecar["lambda"] = opt.lambda;
        sidecar["gamma"] = {gamma.g1, gamma.g3, gamma.g4};
        sidecar["checkpoint"] = checkpoint.filename().string();
        export_pseudo_label(fin.labels, bundle.config.num_classes,
                            out_dir / (s->id + ".pgm"), sidecar);
        if (opt.dump_cams) {
            dump_heatmaps(m_fg, lesion_names(bundle.classes), out_dir / "cams", s->id);
        }
    }
}

SweepResult sweep_checkpoint(const std::filesystem::path& checkpoint,
                             const std::filesystem::path& manifest, const std::string& split,
                             const std::optional<FusionWeights>& gamma) {
    ModelBundle bundle = load_model_bundle(checkpoint);
    const DatasetManifest mf = read_manifest(manifest);
    if (mf.classes != bundle.classes) {
        throw DataError("sweep: manifest classes do not match the checkpoint's classes");
    }
    const auto all = load_dataset(mf, bundle.config.input_h, bundle.config.input_w);
    const auto samples = filter_split(all, split);
    const TextProvider provider = make_text_provider(bundle.text, bundle.classes);
    const FusionWeights g = gamma.value_or(bundle.gamma);

    std::vector<std::vector<Mat>> stacks;
    std::vector<GridU8> gts;
    for (const ImageSample* s : samples) {
        if (!s->mask) continue;  // sweep needs pixel ground truth
        const InferenceMaps maps = infer_heatmaps(bundle.params, bundle.config, *s, provider);
        stacks.push_back(fuse_heatmaps(maps.cam, maps.sim3, maps.sim4, g,
                                       bundle.config.input_h, bundle.config.input_w));
        gts.push_back(*s->mask);
    }
    if (stacks.empty()) throw DataError("sweep: no samples with ground-truth masks");
    return sweep(stacks, gts);
}

void write_sweep_json(const SweepResult& r, const std::filesystem::path& out_path) {
    json j;
    j["best_lambda"] = r.best_lambda;
    j["best_miou"] = r.best_miou;
    json curve = json::array();
    for (const auto& pt : r.curve) {
        json p;
        p["lambda"] = pt.lambda;
        p["miou"] = pt.miou;
        json pc = json::array();
        for (double v : pt.per_class) {
            if (std::isfinite(v)) {
                pc.push_back(v);
            } else {
                pc.push_back(nullptr);
            }
        }
        p["per_class"] = pc;
        curve.push_back(std::move(p));
    }
    j["curve"] = std::move(curve);
    write_text_atomic(out_path, j.dump(2) + "\n");
}

void evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                   const std::filesystem::path& out_json) {
    std::vector<std::filesystem::path> preds;
    for (const auto& entry : std::filesystem::directory_iterator(pred_dir)) {
        if (entry.path().extension() == ".pgm") preds.push_back(entry.path());
    }
    std::sort(preds.begin(), preds.end());
    if (preds.empty()) throw DataError("evaluate: no .pgm predictions in " + pred_dir.string());

    // Class names come from the prediction side-cars when present.
    std::vector<std::string> classes;
    for (const auto& p : preds) {
        auto sc = p;
        sc.replace_extension(".json");
        if (std::filesystem::exists(sc)) {
            std::ifstream in(sc);
            json j;
            in >> j;
            if (j.contains("classes")) {
                for (const auto& c : j["classes"]) classes.push_back(c.get<std::string>());
                break;
            }
        }
    }

    int num_classes = static_cast<int>(classes.size());
    std::vector<std::pair<GridU8, GridU8>> pairs;
    for (const auto& p : preds) {
        const auto gt_path = gt_dir / p.filename();
        if (!std::filesystem::exists(gt_path)) {
            throw DataError("evaluate: missing ground truth for " + p.filename().string());
        }
        GridU8 pred = load_pgm_index(p);
        GridU8 gt = load_pgm_index(gt_path);
        if (!pred.same_shape(gt)) {
            throw DataError("evaluate: shape mismatch for " + p.filename().string());
        }
        for (uint8_t v : pred.a) num_classes = std::max(num_classes, static_cast<int>(v) + 1);
        for (uint8_t v : gt.a) num_classes = std::max(num_classes, static_cast<int>(v) + 1);
        pairs.emplace_back(std::move(pred), std::move(gt));
    }

    ConfusionCounts counts(num_classes);
    for (const auto& [pred, gt] : pairs) accumulate(pred, gt, counts);
    const IoUResult iou = miou_from_counts(counts);

    json j;
    j["miou"] = iou.miou;
    json per_class = json::object();
    for (int k = 0; k < num_classes; ++k) {
        const std::string name =
            k < static_cast<int>(classes.size()) ? classes[k] : "class" + std::to_string(k);
        if (iou.included[k]) {
            per_class[name] = iou.per_class[k];
        } else {
            per_class[name] = nullptr;
        }
    }
    j["per_class_iou"] = per_class;
    j["num_images"] = pairs.size();
    write_text_atomic(out_json, j.dump(2) + "\n");
}

void analyze_text(const AnalyzeTextOptions& opt, const std::filesystem::path& out_dir) {
    const auto captions = read_captions(opt.captions);
    const DatasetManifest mf = read_manifest(opt.manifest);
    std::filesystem::create_directories(out_dir);

    // Group by lesion combination ("healthy" when only background).
    std::vector<std::pair<std::string, std::string>> caption_and_group;
    for (const auto& e : mf.samples) {
        auto it = captions.find(e.id);
        if (it == captions.end()) continue;
        std::string group;
        std::vector<std::string> tags = e.tags;
        std::sort(tags.begin(), tags.end());
        for (const auto& t : tags) {
            if (!group.empty()) group += "+";
            group += t;
        }
        if (group.empty()) group = "healthy";
        caption_and_group.emplace_back(it->second, group);
    }
    if (caption_and_group.empty()) {
        throw DataError("analyze-text: no manifest sample has a caption");
    }

    const auto stop =
        opt.stopwords.empty() ? default_stopwords() : read_stopwords(opt.stopwords);
    const auto hist = word_frequency(caption_and_group, stop);
    {
        std::ostringstream csv;
        csv << "group,token,count\n";
        for (const auto& [group, tokens] : hist) {
            for (const auto& t : tokens) csv << group << "," << t.token << "," << t.count << "\n";
        }
        write_text_atomic(out_dir / "histogram.csv", csv.str());
    }

    // Embeddings per sample: cache when given, stub of the caption otherwise.
    std::optional<EmbeddingCache> cache;
    if (!opt.embeddings_dir.empty()) cache = EmbeddingCache::open(opt.embeddings_dir);
    std::map<std::string, std::vector<std::pair<int, std::vector<double>>>> by_volume;
    for (const auto& e : mf.samples) {
        auto it = captions.find(e.id);
        if (it == captions.end()) continue;
        std::vector<double> emb = cache ? cache->load(description_cache_key(e.id))
                                        : stub_embed(it->second, opt.stub_dim, opt.stub_seed);
        by_volume[e.volume_id.empty() ? e.id : e.volume_id].emplace_back(e.slice_index,
                                                                         std::move(emb));
    }
    std::vector<VolumeEmbeddings> volumes;
    for (auto& [vid, slices] : by_volume) {
        std::sort(slices.begin(), slices.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        VolumeEmbeddings v;
        v.volume_id = vid;
        for (auto& [_, emb] : slices) v.ordered.push_back(std::move(emb));
        volumes.push_back(std::move(v));
    }
    std::vector<int> windows;
    for (int w = 3; w <= 65; w += 2) windows.push_back(w);
    const auto sims = sliding_similarity(volumes, windows);
    {
        std::ostringstream csv;
        csv << "window,mean_cosine\n";
        for (const auto& [w, v] : sims) csv << w << "," << v << "\n";
        write_text_atomic(out_dir / "similarity.csv", csv.str());
    }
}

}  // namespace wsseg
