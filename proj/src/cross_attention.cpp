#include "wsseg/cross_attention.hpp"

#include "wsseg/attention.hpp"
#include "wsseg/errors.hpp"

namespace wsseg {

namespace {

void build_direction_params(ParamStore& params, const std::string& prefix, int c,
                            int mlp_ratio, Rng& rng) {
    params.create_const(prefix + ".lnq.g", 1, c, 1.0);
    params.create_const(prefix + ".lnq.b", 1, c, 0.0);
    params.create_const(prefix + ".lnkv.g", 1, c, 1.0);
    params.create_const(prefix + ".lnkv.b", 1, c, 0.0);
    for (const char* n : {".q", ".k", ".v", ".o"}) {
        params.create_trunc_normal(prefix + n + std::string(".w"), c, c, rng);
        params.create_const(prefix + n + std::string(".b"), 1, c, 0.0);
    }
    params.create_const(prefix + ".ln2.g", 1, c, 1.0);
    params.create_const(prefix + ".ln2.b", 1, c, 0.0);
    params.create_trunc_normal(prefix + ".fc1.w", c, c * mlp_ratio, rng);
    params.create_const(prefix + ".fc1.b", 1, c * mlp_ratio, 0.0);
    params.create_trunc_normal(prefix + ".fc2.w", c * mlp_ratio, c, rng);
    params.create_const(prefix + ".fc2.b", 1, c, 0.0);
}

}  // namespace

void build_cross_attention_params(ParamStore& params, const EncoderConfig& enc,
                                  const CrossAttentionConfig& cfg, Rng& rng) {
    for (int stage : {2, 3}) {
        const int c = enc.channels[stage - 1];
        const int heads = stage == 2 ? cfg.heads_s2 : cfg.heads_s3;
        if (c % heads != 0) {
            throw DataError("cross attention: stage " + std::to_string(stage) +
                            " channels not divisible by heads");
        }
        for (const char* dir : {"p", "t"}) {
            build_direction_params(params,
                                   "xattn.s" + std::to_string(stage) + "." + dir, c,
                                   cfg.mlp_ratio, rng);
        }
    }
}

TensorRef cross_attend(Graph& g, ParamStore& params, const std::string& prefix,
                       TensorRef query_src, TensorRef kv_src, int heads,
                       std::vector<Mat>* affinity_probe) {
    if (query_src.rows != kv_src.rows || query_src.cols != kv_src.cols) {
        throw DataError("cross_attend: input shape mismatch");
    }
    AttentionParamRefs w;
    w.wq = g.param(params.at(prefix + ".q.w"));
    w.bq = g.param(params.at(prefix + ".q.b"));
    w.wk = g.param(params.at(prefix + ".k.w"));
    w.bk = g.param(params.at(prefix + ".k.b"));
    w.wv = g.param(params.at(prefix + ".v.w"));
    w.bv = g.param(params.at(prefix + ".v.b"));
    w.wo = g.param(params.at(prefix + ".o.w"));
    w.bo = g.param(params.at(prefix + ".o.b"));
    return multihead_attention(g, query_src, kv_src, w, heads, affinity_probe);
}

TensorRef cross_attention_block(Graph& g, ParamStore& params, const std::string& prefix,
                                TensorRef query_src, TensorRef kv_src, int heads,
                                int mlp_ratio, std::vector<Mat>* affinity_probe) {
    (void)mlp_ratio;
    TensorRef qn = g.layer_norm(query_src, g.param(params.at(prefix + ".lnq.g")),
                                g.param(params.at(prefix + ".lnq.b")));
    TensorRef kn = g.layer_norm(kv_src, g.param(params.at(prefix + ".lnkv.g")),
                                g.param(params.at(prefix + ".lnkv.b")));
    TensorRef attn = cross_attend(g, params, prefix, qn, kn, heads, affinity_probe);
    TensorRef x = g.add(kv_src, attn);
    TensorRef m = g.layer_norm(x, g.param(params.at(prefix + ".ln2.g")),
                               g.param(params.at(prefix + ".ln2.b")));
    m = g.add_rowvec(g.matmul(m, g.param(params.at(prefix + ".fc1.w"))),
                     g.param(params.at(prefix + ".fc1.b")));
    m = g.gelu(m);
    m = g.add_rowvec(g.matmul(m, g.param(params.at(prefix + ".fc2.w"))),
                     g.param(params.at(prefix + ".fc2.b")));
    return g.add(x, m);
}

std::pair<TensorRef, TensorRef> exchange(Graph& g, ParamStore& params, int stage,
                                         const CrossAttentionConfig& cfg, TensorRef f_primary,
                                         TensorRef f_structural,
                                         std::vector<Mat>* affinity_probe) {
    if (stage != 2 && stage != 3) {
        throw DataError("exchange: cross attention is defined for stages 2 and 3 only");
    }
    const int heads = stage == 2 ? cfg.heads_s2 : cfg.heads_s3;
    const std::string base = "xattn.s" + std::to_string(stage) + ".";
    // Z^P: query from the structural branch, keys/values/residual from the
    // primary branch (and symmetrically for Z^T).
    TensorRef zp = cross_attention_block(g, params, base + "p", f_structural, f_primary,
                                         heads, cfg.mlp_ratio, affinity_probe);
    TensorRef zt = cross_attention_block(g, params, base + "t", f_primary, f_structural,
                                         heads, cfg.mlp_ratio, affinity_probe);
    return {zp, zt};
}

}  // namespace wsseg
