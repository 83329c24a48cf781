#include <doctest.h>

#include <fstream>

#include "testutil.hpp"
#include "wsseg/checkpoint.hpp"
#include "wsseg/errors.hpp"
#include "wsseg/synth.hpp"
#include "wsseg/trainer.hpp"

using namespace wsseg;

namespace {

std::filesystem::path synth_dir_once(int n = 8) {
    static std::map<int, std::filesystem::path> dirs;
    auto it = dirs.find(n);
    if (it != dirs.end()) return it->second;
    auto dir = testutil::scratch_dir("synth" + std::to_string(n));
    SynthSpec spec;
    spec.n_images = n;
    spec.seed = 7;
    generate_synthetic_dataset(spec, dir);
    dirs[n] = dir;
    return dir;
}

TrainConfig smoke_config(const std::filesystem::path& out, int epochs = 1) {
    auto cfg = toy_train_config(synth_dir_once() / "manifest.json", out);
    cfg.epochs = epochs;
    cfg.batch_size = 4;
    return cfg;
}

}  // namespace

TEST_CASE("synthetic dataset loads with consistent labels, masks, and captions") {
    const auto dir = synth_dir_once();
    const auto manifest = read_manifest(dir / "manifest.json");
    CHECK(manifest.classes == std::vector<std::string>{"bg", "bright", "dark"});
    const auto ds = load_dataset(manifest, 96, 96);
    REQUIRE(ds.size() == 8);
    for (const auto& s : ds) {
        REQUIRE(s.mask.has_value());
        REQUIRE(s.layer.has_value());
        REQUIRE(s.anomaly.has_value());
        REQUIRE(s.caption.has_value());
        // The mask's classes agree with the label vector.
        std::vector<int> present(3, 0);
        present[0] = 1;
        for (uint8_t v : s.mask->a) {
            REQUIRE(v <= 2);
            present[v] = 1;
        }
        CHECK(present == s.label);
        // Anomaly maps localize the planted blobs: zero outside the mask.
        for (size_t i = 0; i < s.anomaly->a.size(); ++i) {
            if (s.mask->a[i] == 0) {
                CHECK(s.anomaly->a[i] <= 1.5 / 255.0);
            }
        }
    }
}

TEST_CASE("model forward produces finite logits and correct shapes") {
    const auto dir = synth_dir_once();
    const auto ds = load_dataset(dir / "manifest.json", 96, 96);
    TrainConfig cfg = smoke_config(testutil::scratch_dir("fwd"));
    const TextProvider provider =
        make_text_provider(cfg.text, {"bg", "bright", "dark"});

    ModelConfig mc;
    mc.encoder = cfg.encoder;
    mc.xattn = cfg.xattn;
    mc.c_clip = cfg.text.c_clip;
    mc.c_desp = cfg.text.c_desp;
    mc.num_classes = 3;
    mc.input_h = 96;
    mc.input_w = 96;

    Rng rng(1);
    ParamStore params;
    build_model_params(params, mc, rng);

    Graph g;
    const auto desc = provider.description(ds[0].id, ds[0].caption.value_or(""));
    std::vector<Mat> probe;
    const ForwardResult fwd = model_forward(g, params, mc, ds[0].image,
                                            structural_input_for(ds[0]), desc,
                                            provider.label_matrix(), &probe);
    CHECK(fwd.y1.cols == 3);
    CHECK(fwd.y2.cols == 2);
    CHECK(fwd.y3.cols == 3);
    CHECK(fwd.y4.cols == 3);
    CHECK(fwd.h3 == 6);
    CHECK(fwd.h4 == 3);
    CHECK(fwd.sim3.rows == 36);
    CHECK(fwd.sim4.rows == 9);
    CHECK(all_finite(g.value(fwd.y1)));
    CHECK(all_finite(g.value(fwd.sim3)));
    // Every attention softmax row sums to 1.
    REQUIRE(!probe.empty());
    for (const Mat& aff : probe) {
        for (int i = 0; i < aff.rows; ++i) {
            double sum = 0.0;
            for (int j = 0; j < aff.cols; ++j) sum += aff.at(i, j);
            CHECK(std::fabs(sum - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("two-epoch training runs, logs, checkpoints, and stays finite") {
    const auto out = testutil::scratch_dir("train_smoke");
    TrainConfig cfg = smoke_config(out, 2);
    const TrainResult r = train(cfg);
    CHECK(std::filesystem::exists(r.final_checkpoint));
    CHECK(std::filesystem::exists(out / "ckpt_epoch_001.bin"));
    CHECK(std::filesystem::exists(out / "ckpt_epoch_002.bin"));
    REQUIRE(r.steps.size() == 4);  // 8 samples / batch 4 * 2 epochs
    for (const auto& s : r.steps) {
        CHECK(std::isfinite(s.total));
        // The logged terms satisfy the weighted-sum identity.
        const double recomposed = cfg.loss_weights.l1 * s.l1 + cfg.loss_weights.l2 * s.l2 +
                                  cfg.loss_weights.l3 * s.l3 + cfg.loss_weights.l4 * s.l4;
        CHECK(std::fabs(recomposed - s.total) <= 1e-10);
    }

    // The log echoes the config (lambda defaults included).
    std::ifstream log(r.log_path);
    std::string first_line;
    std::getline(log, first_line);
    const auto header = nlohmann::json::parse(first_line);
    CHECK(header.at("type") == "header");
    CHECK(header.at("config").at("loss_weights")[0].get<double>() == cfg.loss_weights.l1);

    // Pseudo-label generation from the checkpoint writes one image + sidecar
    // per sample, deterministically.
    const auto pl_dir = out / "pseudo";
    PseudoOptions popt;
    popt.lambda = 0.4;
    generate_pseudo_labels(r.final_checkpoint, cfg.manifest, popt, pl_dir);
    int count = 0;
    for (const auto& e : std::filesystem::directory_iterator(pl_dir)) {
        if (e.path().extension() == ".pgm") ++count;
    }
    CHECK(count == 8);

    const auto pl_dir2 = out / "pseudo2";
    generate_pseudo_labels(r.final_checkpoint, cfg.manifest, popt, pl_dir2);
    for (const auto& e : std::filesystem::directory_iterator(pl_dir)) {
        if (e.path().extension() != ".pgm") continue;
        std::ifstream a(e.path(), std::ios::binary);
        std::ifstream b(pl_dir2 / e.path().filename(), std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
}

TEST_CASE("identical seeds give bit-identical first steps and checkpoints") {
    const auto out1 = testutil::scratch_dir("det1");
    const auto out2 = testutil::scratch_dir("det2");
    TrainConfig c1 = smoke_config(out1, 1);
    TrainConfig c2 = smoke_config(out2, 1);
    const TrainResult r1 = train(c1);
    const TrainResult r2 = train(c2);
    REQUIRE(!r1.steps.empty());
    CHECK(r1.steps[0].total == r2.steps[0].total);  // bit-identical
    const auto seg1 = read_checkpoint_segments(r1.final_checkpoint);
    const auto seg2 = read_checkpoint_segments(r2.final_checkpoint);
    REQUIRE(seg1.size() == seg2.size());
    for (size_t i = 0; i < seg1.size(); ++i) {
        CHECK(seg1[i].first == seg2[i].first);
        CHECK(seg1[i].second == seg2[i].second);
    }
}

TEST_CASE("augmentations apply the same geometric transform to all companions") {
    const auto dir = synth_dir_once();
    const auto ds = load_dataset(dir / "manifest.json", 96, 96);
    const ImageSample& s = ds[1];  // has a blob
    REQUIRE(s.anomaly.has_value());

    // Force a flip-only augmentation through the training path by comparing
    // structural inputs of flipped originals.
    const Mat flipped_img = hflip(s.image);
    const Mat flipped_layer = hflip(*s.layer);
    const Mat flipped_anomaly = hflip(*s.anomaly);
    const Mat structural = compose_structural_input(flipped_layer, flipped_anomaly);
    const Mat expect = hflip(compose_structural_input(*s.layer, *s.anomaly));
    for (size_t i = 0; i < structural.a.size(); ++i) {
        CHECK(structural.a[i] == doctest::Approx(expect.a[i]).epsilon(1e-12));
    }
    CHECK(flipped_img.a != s.image.a);
}

TEST_CASE("training with augmentation enabled stays finite") {
    const auto out = testutil::scratch_dir("train_aug");
    TrainConfig cfg = smoke_config(out, 1);
    cfg.augment.enabled = true;
    const TrainResult r = train(cfg);
    for (const auto& s : r.steps) CHECK(std::isfinite(s.total));
}

TEST_CASE("evaluate_dirs computes miou over exported label images") {
    const auto dir = testutil::scratch_dir("evaldirs");
    std::filesystem::create_directories(dir / "pred");
    std::filesystem::create_directories(dir / "gt");
    GridU8 a(4, 4, 0);
    a.at(0, 0) = 1;
    save_pgm_index(dir / "pred" / "s0.pgm", a);
    save_pgm_index(dir / "gt" / "s0.pgm", a);
    nlohmann::json sidecar;
    sidecar["classes"] = {"bg", "lesion"};
    write_text_atomic(dir / "pred" / "s0.json", sidecar.dump());

    evaluate_dirs(dir / "pred", dir / "gt", dir / "metrics.json");
    std::ifstream in(dir / "metrics.json");
    nlohmann::json m;
    in >> m;
    CHECK(m.at("miou").get<double>() == doctest::Approx(1.0));
    CHECK(m.at("per_class_iou").at("lesion").get<double>() == doctest::Approx(1.0));
}

TEST_CASE("analyze_text writes histogram and similarity reports") {
    const auto dir = synth_dir_once(16);
    const auto out = testutil::scratch_dir("textreports");
    AnalyzeTextOptions opt;
    opt.captions = dir / "captions.json";
    opt.manifest = dir / "manifest.json";
    opt.stub_dim = 16;
    analyze_text(opt, out);

    std::ifstream hist(out / "histogram.csv");
    REQUIRE(hist.good());
    std::string header;
    std::getline(hist, header);
    CHECK(header == "group,token,count");
    int lines = 0;
    std::string line;
    while (std::getline(hist, line)) ++lines;
    CHECK(lines > 0);

    std::ifstream sim(out / "similarity.csv");
    REQUIRE(sim.good());
    std::getline(sim, header);
    CHECK(header == "window,mean_cosine");
    int windows = 0;
    while (std::getline(sim, line)) ++windows;
    CHECK(windows == 32);  // 3, 5, ..., 65
}

TEST_CASE("config parsing validates and rejects bad fields") {
    const auto dir = testutil::scratch_dir("cfg");
    {
        std::ofstream out(dir / "bad.json");
        out << R"({"optimizer": {"lr": -1}, "manifest": "m.json", "out_dir": "o"})";
    }
    CHECK_THROWS_AS(load_train_config(dir / "bad.json"), DataError);
    {
        std::ofstream out(dir / "badmode.json");
        out << R"({"text": {"mode": "llm"}, "manifest": "m.json", "out_dir": "o"})";
    }
    CHECK_THROWS_AS(load_train_config(dir / "badmode.json"), DataError);
    {
        std::ofstream out(dir / "ok.json");
        out << R"({
  "seed": 5, "input_size": [96, 96],
  "encoder": {"channels": [16,32,64,128], "depths": [1,1,1,1],
              "heads": [1,2,4,8], "sr_ratios": [8,4,2,1]},
  "frozen_stages": [], "loss_weights": [1, 0.5, 1, 1],
  "manifest": "m.json", "out_dir": "o"})";
    }
    const TrainConfig cfg = load_train_config(dir / "ok.json");
    CHECK(cfg.seed == 5);
    CHECK(cfg.loss_weights.l2 == doctest::Approx(0.5));
    CHECK(cfg.manifest == dir / "m.json");  // relative to the config file
}
