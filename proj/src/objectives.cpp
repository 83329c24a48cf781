#include "wsseg/objectives.hpp"

#include "wsseg/errors.hpp"

namespace wsseg {

void LossWeights::validate() const {
    if (l1 < 0 || l2 < 0 || l3 < 0 || l4 < 0) {
        throw DataError("loss weights must be nonnegative");
    }
    if (l1 == 0 && l2 == 0 && l3 == 0 && l4 == 0) {
        throw DataError("loss weights must not all be zero");
    }
}

void build_head_params(ParamStore& params, int c4, int num_classes, Rng& rng) {
    params.create_trunc_normal("head.cls.w", c4, num_classes, rng);
    params.create_trunc_normal("head.bin.w", c4, 2, rng);
}

TensorRef gmp(Graph& g, TensorRef tokens) { return g.global_max_rows(tokens); }

TensorRef classify_primary(Graph& g, ParamStore& params, TensorRef f4p_tokens) {
    return g.matmul(gmp(g, f4p_tokens), g.param(params.at("head.cls.w")));
}

TensorRef classify_structural(Graph& g, ParamStore& params, TensorRef ft4_tokens) {
    return g.matmul(gmp(g, ft4_tokens), g.param(params.at("head.bin.w")));
}

TensorRef loss_multilabel(Graph& g, TensorRef logits, const std::vector<int>& y) {
    std::vector<double> target(y.begin(), y.end());
    return g.multilabel_bce(logits, target);
}

TensorRef loss_binary(Graph& g, TensorRef logits2, const std::vector<int>& y_binary) {
    std::vector<double> target(y_binary.begin(), y_binary.end());
    return g.softmax_ce(logits2, target);
}

TensorRef weighted_total(Graph& g, TensorRef t1, TensorRef t2, TensorRef t3, TensorRef t4,
                         const LossWeights& w) {
    w.validate();
    TensorRef total = g.scale(t1, w.l1);
    total = g.add(total, g.scale(t2, w.l2));
    total = g.add(total, g.scale(t3, w.l3));
    total = g.add(total, g.scale(t4, w.l4));
    return total;
}

}  // namespace wsseg
