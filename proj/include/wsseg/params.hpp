#pragma once

#include <map>
#include <string>
#include <vector>

#include "wsseg/mat.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

// A named parameter tensor with its gradient accumulator and Adam state.
// Frozen parameters keep their gradient (it may still be computed) but the
// optimizer never touches them.
struct Param {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
    bool trainable = true;
};

// Flat, name-ordered store for every model parameter. std::map keeps
// iteration deterministic, which the checkpoint layout and the optimizer
// rely on.
class ParamStore {
public:
    Param& create(const std::string& name, int rows, int cols);
    Param& create_trunc_normal(const std::string& name, int rows, int cols, Rng& rng,
                               double sigma = 0.02);
    Param& create_const(const std::string& name, int rows, int cols, double fill);

    bool exists(const std::string& name) const { return items_.count(name) != 0; }
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;

    void zero_grads();

    // Marks every parameter whose name starts with one of the prefixes.
    void set_trainable_by_prefix(const std::vector<std::string>& prefixes, bool trainable);

    std::map<std::string, Param>& items() { return items_; }
    const std::map<std::string, Param>& items() const { return items_; }
    size_t size() const { return items_.size(); }

private:
    std::map<std::string, Param> items_;
};

}  // namespace wsseg
