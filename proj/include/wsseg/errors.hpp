#pragma once

#include <stdexcept>
#include <string>

namespace wsseg {

// Error taxonomy maps onto CLI exit codes: usage = 1, data = 2, numeric = 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Anything wrong with inputs: files, manifests, caches, shapes, labels,
// checkpoints, configs.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (e.g. training loss).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace wsseg
