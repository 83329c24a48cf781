#include "wsseg/optimizer.hpp"

#include <cmath>

namespace wsseg {

void Adam::step(ParamStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [_, p] : params.items()) {
        if (!p.trainable) continue;
        for (size_t i = 0; i < p.value.a.size(); ++i) {
            const double g = p.grad.a[i];
            p.adam_m.a[i] = cfg_.beta1 * p.adam_m.a[i] + (1.0 - cfg_.beta1) * g;
            p.adam_v.a[i] = cfg_.beta2 * p.adam_v.a[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = p.adam_m.a[i] / bc1;
            const double vhat = p.adam_v.a[i] / bc2;
            p.value.a[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace wsseg
