#include "wsseg/encoder.hpp"

#include <cmath>

#include "wsseg/attention.hpp"
#include "wsseg/errors.hpp"

namespace wsseg {

TensorRef multihead_attention(Graph& g, TensorRef query_tokens, TensorRef kv_tokens,
                              const AttentionParamRefs& w, int heads,
                              std::vector<Mat>* affinity_probe) {
    const int c = query_tokens.cols;
    if (kv_tokens.cols != c) throw DataError("attention: channel mismatch");
    if (heads < 1 || c % heads != 0) {
        throw DataError("attention: channels " + std::to_string(c) +
                        " not divisible by heads " + std::to_string(heads));
    }
    const int d = c / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d));

    TensorRef q = g.add_rowvec(g.matmul(query_tokens, w.wq), w.bq);
    TensorRef k = g.add_rowvec(g.matmul(kv_tokens, w.wk), w.bk);
    TensorRef v = g.add_rowvec(g.matmul(kv_tokens, w.wv), w.bv);

    TensorRef out;
    for (int hi = 0; hi < heads; ++hi) {
        TensorRef qh = heads == 1 ? q : g.slice_cols(q, hi * d, (hi + 1) * d);
        TensorRef kh = heads == 1 ? k : g.slice_cols(k, hi * d, (hi + 1) * d);
        TensorRef vh = heads == 1 ? v : g.slice_cols(v, hi * d, (hi + 1) * d);
        TensorRef affinity = g.row_softmax(g.scale(g.matmul_nt(qh, kh), inv_scale));
        if (affinity_probe) affinity_probe->push_back(g.value(affinity));
        TensorRef oh = g.matmul(affinity, vh);
        out = hi == 0 ? oh : g.concat_cols(out, oh);
    }
    return g.add_rowvec(g.matmul(out, w.wo), w.bo);
}

void EncoderConfig::validate() const {
    for (int s = 0; s < 4; ++s) {
        if (channels[s] <= 0) throw DataError("encoder config: channels must be positive");
        if (s > 0 && channels[s] <= channels[s - 1]) {
            throw DataError("encoder config: channels must be strictly increasing");
        }
        if (depths[s] < 0) throw DataError("encoder config: negative depth");
        if (heads[s] < 1 || channels[s] % heads[s] != 0) {
            throw DataError("encoder config: stage " + std::to_string(s + 1) +
                            " channels not divisible by heads");
        }
        if (sr_ratios[s] < 1) throw DataError("encoder config: sr ratio must be >= 1");
    }
    if (mlp_ratio < 1) throw DataError("encoder config: mlp ratio must be >= 1");
}

EncoderConfig toy_encoder_config() {
    EncoderConfig cfg;
    cfg.channels = {16, 32, 64, 128};
    cfg.depths = {1, 1, 1, 1};
    cfg.heads = {1, 2, 4, 8};
    cfg.sr_ratios = {8, 4, 2, 1};
    return cfg;
}

EncoderConfig tiny_encoder_config() {
    EncoderConfig cfg;
    cfg.channels = {4, 8, 16, 32};
    cfg.depths = {1, 1, 1, 1};
    cfg.heads = {1, 2, 2, 4};
    cfg.sr_ratios = {1, 1, 1, 1};
    return cfg;
}

namespace {

std::string stage_name(const std::string& prefix, int stage_index) {
    return prefix + ".s" + std::to_string(stage_index + 1);
}

void build_block_params(ParamStore& params, const std::string& blk, int c, int mlp_ratio,
                        Rng& rng) {
    params.create_const(blk + ".ln1.g", 1, c, 1.0);
    params.create_const(blk + ".ln1.b", 1, c, 0.0);
    for (const char* n : {".q", ".k", ".v", ".o"}) {
        params.create_trunc_normal(blk + n + std::string(".w"), c, c, rng);
        params.create_const(blk + n + std::string(".b"), 1, c, 0.0);
    }
    params.create_const(blk + ".ln2.g", 1, c, 1.0);
    params.create_const(blk + ".ln2.b", 1, c, 0.0);
    params.create_trunc_normal(blk + ".fc1.w", c, c * mlp_ratio, rng);
    params.create_const(blk + ".fc1.b", 1, c * mlp_ratio, 0.0);
    params.create_trunc_normal(blk + ".fc2.w", c * mlp_ratio, c, rng);
    params.create_const(blk + ".fc2.b", 1, c, 0.0);
}

AttentionParamRefs block_attention_refs(Graph& g, ParamStore& params, const std::string& blk) {
    AttentionParamRefs w;
    w.wq = g.param(params.at(blk + ".q.w"));
    w.bq = g.param(params.at(blk + ".q.b"));
    w.wk = g.param(params.at(blk + ".k.w"));
    w.bk = g.param(params.at(blk + ".k.b"));
    w.wv = g.param(params.at(blk + ".v.w"));
    w.bv = g.param(params.at(blk + ".v.b"));
    w.wo = g.param(params.at(blk + ".o.w"));
    w.bo = g.param(params.at(blk + ".o.b"));
    return w;
}

TensorRef transformer_block(Graph& g, ParamStore& params, const std::string& blk, TensorRef x,
                            int h, int w, int heads, int sr,
                            std::vector<Mat>* affinity_probe) {
    TensorRef normed = g.layer_norm(x, g.param(params.at(blk + ".ln1.g")),
                                    g.param(params.at(blk + ".ln1.b")));
    TensorRef kv = sr > 1 ? g.avg_pool_tokens(normed, h, w, sr) : normed;
    TensorRef attn = multihead_attention(g, normed, kv, block_attention_refs(g, params, blk),
                                         heads, affinity_probe);
    x = g.add(x, attn);
    TensorRef m = g.layer_norm(x, g.param(params.at(blk + ".ln2.g")),
                               g.param(params.at(blk + ".ln2.b")));
    m = g.add_rowvec(g.matmul(m, g.param(params.at(blk + ".fc1.w"))),
                     g.param(params.at(blk + ".fc1.b")));
    m = g.gelu(m);
    m = g.add_rowvec(g.matmul(m, g.param(params.at(blk + ".fc2.w"))),
                     g.param(params.at(blk + ".fc2.b")));
    return g.add(x, m);
}

}  // namespace

void build_encoder_params(ParamStore& params, const std::string& prefix,
                          const EncoderConfig& cfg, int in_channels, Rng& rng) {
    cfg.validate();
    params.create_trunc_normal(prefix + ".proj.w",
                               kPatchStrides[0] * kPatchStrides[0] * in_channels,
                               cfg.channels[0], rng);
    params.create_const(prefix + ".proj.b", 1, cfg.channels[0], 0.0);
    for (int s = 0; s < 4; ++s) {
        const std::string sp = stage_name(prefix, s);
        if (s > 0) {
            const int p = kPatchStrides[s];
            params.create_trunc_normal(sp + ".merge.w", p * p * cfg.channels[s - 1],
                                       cfg.channels[s], rng);
            params.create_const(sp + ".merge.b", 1, cfg.channels[s], 0.0);
        }
        for (int b = 0; b < cfg.depths[s]; ++b) {
            build_block_params(params, sp + ".blk" + std::to_string(b), cfg.channels[s],
                               cfg.mlp_ratio, rng);
        }
        // Stage-output norm, as in the MiT convention. Keeps feature
        // magnitudes bounded for the downstream similarity/classifier heads.
        params.create_const(sp + ".norm.g", 1, cfg.channels[s], 1.0);
        params.create_const(sp + ".norm.b", 1, cfg.channels[s], 0.0);
    }
}

StageOut encoder_stage(Graph& g, ParamStore& params, const std::string& prefix,
                       const EncoderConfig& cfg, int stage_index, TensorRef in_tokens,
                       int in_h, int in_w, std::vector<Mat>* affinity_probe) {
    const int p = kPatchStrides[stage_index];
    if (in_h % p != 0 || in_w % p != 0) {
        throw DataError("encoder: stage " + std::to_string(stage_index + 1) +
                        " input not divisible by stride");
    }
    const std::string sp = stage_name(prefix, stage_index);
    const std::string merge_w = stage_index == 0 ? prefix + ".proj.w" : sp + ".merge.w";
    const std::string merge_b = stage_index == 0 ? prefix + ".proj.b" : sp + ".merge.b";

    TensorRef x = g.patchify(in_tokens, in_h, in_w, p);
    x = g.add_rowvec(g.matmul(x, g.param(params.at(merge_w))), g.param(params.at(merge_b)));
    const int h = in_h / p;
    const int w = in_w / p;
    for (int b = 0; b < cfg.depths[stage_index]; ++b) {
        x = transformer_block(g, params, sp + ".blk" + std::to_string(b), x, h, w,
                              cfg.heads[stage_index], cfg.sr_ratios[stage_index],
                              affinity_probe);
    }
    x = g.layer_norm(x, g.param(params.at(sp + ".norm.g")), g.param(params.at(sp + ".norm.b")));
    return StageOut{x, h, w};
}

FeaturePyramid encode(Graph& g, ParamStore& params, const std::string& prefix,
                      const EncoderConfig& cfg, TensorRef image_tokens, int h, int w,
                      const std::map<int, TensorRef>* injected,
                      std::vector<Mat>* affinity_probe) {
    if (h % 32 != 0 || w % 32 != 0) {
        throw DataError("encoder: input " + std::to_string(h) + "x" + std::to_string(w) +
                        " must be divisible by 32");
    }
    FeaturePyramid pyr;
    TensorRef in = image_tokens;
    int cur_h = h, cur_w = w;
    for (int s = 0; s < 4; ++s) {
        StageOut out = encoder_stage(g, params, prefix, cfg, s, in, cur_h, cur_w,
                                     affinity_probe);
        pyr.stage[s] = out;
        cur_h = out.h;
        cur_w = out.w;
        in = out.tokens;
        if (injected) {
            auto it = injected->find(s + 1);
            if (it != injected->end()) in = it->second;
        }
    }
    return pyr;
}

Mat image_to_tokens(const Mat& image) {
    Mat t(image.rows * image.cols, 3);
    for (int i = 0; i < image.rows * image.cols; ++i) {
        const double v = image.a[i];
        t.at(i, 0) = v;
        t.at(i, 1) = v;
        t.at(i, 2) = v;
    }
    return t;
}

std::vector<std::string> freeze_prefixes(const std::string& branch_prefix,
                                         const std::vector<std::string>& spec) {
    std::vector<std::string> out;
    for (const auto& s : spec) {
        if (s == "proj") {
            out.push_back(branch_prefix + ".proj.");
        } else if (s == "1" || s == "2" || s == "3" || s == "4") {
            out.push_back(branch_prefix + ".s" + s + ".");
        } else {
            throw DataError("freeze spec: unknown entry \"" + s + "\"");
        }
    }
    return out;
}

void freeze_encoder(ParamStore& params, const std::string& branch_prefix,
                    const std::vector<std::string>& spec) {
    params.set_trainable_by_prefix(freeze_prefixes(branch_prefix, spec), false);
}

}  // namespace wsseg
