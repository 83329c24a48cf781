// Command-line front end: train, pseudo, evaluate, sweep, analyze-text, and
// the synthetic-data generator. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 numeric failure.

#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "wsseg/errors.hpp"
#include "wsseg/synth.hpp"
#include "wsseg/trainer.hpp"

namespace {

wsseg::FusionWeights parse_gamma(const std::string& csv) {
    std::istringstream in(csv);
    std::string tok;
    std::vector<double> vals;
    while (std::getline(in, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != 3) throw wsseg::UsageError("--gamma expects three values: g1,g3,g4");
    return wsseg::FusionWeights{vals[0], vals[1], vals[2]};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weakly supervised OCT lesion segmentation pipeline"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
    std::string train_config_path;
    int64_t seed_override = -1;
    int repeat = 1;
    train_cmd->add_option("--config", train_config_path, "Training config JSON")->required();
    train_cmd->add_option("--seed", seed_override, "Override the config seed");
    train_cmd->add_option("--repeat", repeat, "Run N seeded repetitions (seed, seed+1, ...)");

    // pseudo
    auto* pseudo_cmd = app.add_subcommand("pseudo", "Generate pseudo labels from a checkpoint");
    std::string ps_ckpt, ps_data, ps_out, ps_gamma, ps_split = "all";
    double ps_lambda = 0.5;
    bool ps_dump = false;
    pseudo_cmd->add_option("--ckpt", ps_ckpt, "Checkpoint file")->required();
    pseudo_cmd->add_option("--data", ps_data, "Dataset manifest")->required();
    pseudo_cmd->add_option("--lambda", ps_lambda, "Background threshold in [0,1]");
    pseudo_cmd->add_option("--gamma", ps_gamma, "Fusion weights g1,g3,g4");
    pseudo_cmd->add_option("--out", ps_out, "Output directory")->required();
    pseudo_cmd->add_option("--split", ps_split, "train | val | all");
    pseudo_cmd->add_flag("--dump-cams", ps_dump, "Also dump fused heatmaps as .f32 rasters");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "Micro mIoU of label images vs ground truth");
    std::string ev_pred, ev_gt, ev_out;
    eval_cmd->add_option("--pred", ev_pred, "Directory of predicted label images")->required();
    eval_cmd->add_option("--gt", ev_gt, "Directory of ground-truth label images")->required();
    eval_cmd->add_option("--out", ev_out, "metrics.json path")->required();

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Background-threshold traversal");
    std::string sw_ckpt, sw_data, sw_out, sw_gamma, sw_split = "all";
    sweep_cmd->add_option("--ckpt", sw_ckpt, "Checkpoint file")->required();
    sweep_cmd->add_option("--data", sw_data, "Dataset manifest (with masks)")->required();
    sweep_cmd->add_option("--out", sw_out, "sweep.json path")->required();
    sweep_cmd->add_option("--split", sw_split, "train | val | all");
    sweep_cmd->add_option("--gamma", sw_gamma, "Fusion weights g1,g3,g4");

    // analyze-text
    auto* text_cmd = app.add_subcommand("analyze-text", "Caption word frequencies and "
                                                        "sliding-window embedding similarity");
    std::string tx_captions, tx_manifest, tx_embeddings, tx_stopwords, tx_out;
    int tx_dim = 512;
    uint64_t tx_seed = 1;
    text_cmd->add_option("--captions", tx_captions, "captions.json")->required();
    text_cmd->add_option("--manifest", tx_manifest, "Dataset manifest (groups, volumes)")
        ->required();
    text_cmd->add_option("--embeddings", tx_embeddings, "Embedding cache directory (optional)");
    text_cmd->add_option("--stub-dim", tx_dim, "Stub embedding width when no cache is given");
    text_cmd->add_option("--stub-seed", tx_seed, "Stub embedding seed");
    text_cmd->add_option("--stopwords", tx_stopwords, "Stop-word list file (one per line)");
    text_cmd->add_option("--out", tx_out, "Output directory")->required();

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic toy dataset");
    std::string sy_out;
    int sy_n = 32, sy_h = 96, sy_w = 96;
    uint64_t sy_seed = 7;
    synth_cmd->add_option("--out", sy_out, "Output directory")->required();
    synth_cmd->add_option("--n", sy_n, "Number of images");
    synth_cmd->add_option("--height", sy_h, "Image height");
    synth_cmd->add_option("--width", sy_w, "Image width");
    synth_cmd->add_option("--seed", sy_seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (train_cmd->parsed()) {
            wsseg::TrainConfig cfg = wsseg::load_train_config(train_config_path);
            if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
            if (repeat < 1) throw wsseg::UsageError("--repeat must be >= 1");
            const auto base_out = cfg.out_dir;
            for (int r = 0; r < repeat; ++r) {
                if (repeat > 1) {
                    cfg.out_dir = base_out.string() + "_run" + std::to_string(r);
                    cfg.seed = cfg.seed + (r > 0 ? 1 : 0);
                }
                const auto result = wsseg::train(cfg);
                std::cout << "checkpoint: " << result.final_checkpoint.string() << "\n"
                          << "log: " << result.log_path.string() << "\n";
                if (!result.steps.empty()) {
                    std::cout << "first loss: " << result.steps.front().total
                              << "  last loss: " << result.steps.back().total << "\n";
                }
            }
        } else if (pseudo_cmd->parsed()) {
            if (ps_lambda < 0.0 || ps_lambda > 1.0) {
                throw wsseg::UsageError("--lambda must be in [0,1]");
            }
            wsseg::PseudoOptions opt;
            opt.lambda = ps_lambda;
            opt.split = ps_split;
            opt.dump_cams = ps_dump;
            if (!ps_gamma.empty()) opt.gamma = parse_gamma(ps_gamma);
            wsseg::generate_pseudo_labels(ps_ckpt, ps_data, opt, ps_out);
            std::cout << "pseudo labels written to " << ps_out << "\n";
        } else if (eval_cmd->parsed()) {
            wsseg::evaluate_dirs(ev_pred, ev_gt, ev_out);
            std::cout << "metrics written to " << ev_out << "\n";
        } else if (sweep_cmd->parsed()) {
            std::optional<wsseg::FusionWeights> gamma;
            if (!sw_gamma.empty()) gamma = parse_gamma(sw_gamma);
            const auto result = wsseg::sweep_checkpoint(sw_ckpt, sw_data, sw_split, gamma);
            wsseg::write_sweep_json(result, sw_out);
            std::cout << "best lambda " << result.best_lambda << " miou " << result.best_miou
                      << "\n";
        } else if (text_cmd->parsed()) {
            wsseg::AnalyzeTextOptions opt;
            opt.captions = tx_captions;
            opt.manifest = tx_manifest;
            opt.embeddings_dir = tx_embeddings;
            opt.stub_dim = tx_dim;
            opt.stub_seed = tx_seed;
            opt.stopwords = tx_stopwords;
            wsseg::analyze_text(opt, tx_out);
            std::cout << "reports written to " << tx_out << "\n";
        } else if (synth_cmd->parsed()) {
            wsseg::SynthSpec spec;
            spec.n_images = sy_n;
            spec.height = sy_h;
            spec.width = sy_w;
            spec.seed = sy_seed;
            wsseg::generate_synthetic_dataset(spec, sy_out);
            std::cout << "synthetic dataset written to " << sy_out << "\n";
        }
    } catch (const wsseg::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const wsseg::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const wsseg::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
