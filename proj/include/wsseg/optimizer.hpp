#pragma once

#include "wsseg/params.hpp"

namespace wsseg {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Frozen parameters are skipped entirely, so
// their values (and moments) stay bit-identical.
class Adam {
public:
    explicit Adam(const AdamConfig& cfg) : cfg_(cfg) {}

    void step(ParamStore& params);

    long step_count() const { return t_; }
    void set_step_count(long t) { t_ = t; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    long t_ = 0;
};

}  // namespace wsseg
