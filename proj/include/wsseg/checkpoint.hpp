#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "wsseg/params.hpp"

namespace wsseg {

// Checkpoint container: magic, u64 header length, JSON header (tensor names,
// shapes, dtypes, flags, payload offsets, optimizer step, free-form meta),
// then raw little-endian float64 payloads. Round-trips are bit-exact,
// including frozen flags and Adam state.
struct LoadReport {
    std::vector<std::string> loaded;
    std::vector<std::string> fresh;  // present in the store but not in the file
    nlohmann::json meta;
    long adam_step = 0;
};

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path,
                     const nlohmann::json& meta = {}, long adam_step = 0);

// Loads tensors by name into an existing store. Parameters missing from the
// file keep their fresh initialization and are reported. Shape mismatches
// throw, naming the offending tensor.
LoadReport load_checkpoint(ParamStore& params, const std::filesystem::path& path);

// Reads only the header (for config echo / inspection).
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

// Raw per-tensor payload bytes, keyed by tensor name (value segment only).
// Used to verify frozen-parameter invariance by hashing segments.
std::vector<std::pair<std::string, std::vector<unsigned char>>> read_checkpoint_segments(
    const std::filesystem::path& path);

}  // namespace wsseg
