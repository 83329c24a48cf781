#include "wsseg/params.hpp"

#include "wsseg/errors.hpp"

namespace wsseg {

Param& ParamStore::create(const std::string& name, int rows, int cols) {
    if (items_.count(name)) throw DataError("parameter already exists: " + name);
    Param p;
    p.name = name;
    p.value = Mat(rows, cols);
    p.grad = Mat(rows, cols);
    p.adam_m = Mat(rows, cols);
    p.adam_v = Mat(rows, cols);
    auto [it, ok] = items_.emplace(name, std::move(p));
    (void)ok;
    return it->second;
}

Param& ParamStore::create_trunc_normal(const std::string& name, int rows, int cols, Rng& rng,
                                       double sigma) {
    Param& p = create(name, rows, cols);
    for (double& v : p.value.a) v = rng.trunc_normal(sigma);
    return p;
}

Param& ParamStore::create_const(const std::string& name, int rows, int cols, double fill) {
    Param& p = create(name, rows, cols);
    p.value.fill(fill);
    return p;
}

Param& ParamStore::at(const std::string& name) {
    auto it = items_.find(name);
    if (it == items_.end()) throw DataError("unknown parameter: " + name);
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = items_.find(name);
    if (it == items_.end()) throw DataError("unknown parameter: " + name);
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [_, p] : items_) p.grad.fill(0.0);
}

void ParamStore::set_trainable_by_prefix(const std::vector<std::string>& prefixes,
                                         bool trainable) {
    for (auto& [name, p] : items_) {
        for (const auto& pre : prefixes) {
            if (name.rfind(pre, 0) == 0) {
                p.trainable = trainable;
                break;
            }
        }
    }
}

}  // namespace wsseg
