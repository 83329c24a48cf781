#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wsseg/mat.hpp"

namespace wsseg {

// Deterministic test substitute for a text encoder: unit-norm pseudorandom
// vector derived from (text, seed) via FNV-1a + xorshift + Box-Muller.
// Reproducible across processes and platforms.
std::vector<double> stub_embed(const std::string& text, int dim, uint64_t seed);

// On-disk vector cache: manifest.json maps key -> {dim, file}; payloads are
// raw little-endian float32. Read-only after open.
class EmbeddingCache {
public:
    static EmbeddingCache open(const std::filesystem::path& dir);

    bool contains(const std::string& key) const { return entries_.count(key) != 0; }
    std::vector<double> load(const std::string& key) const;
    int dim(const std::string& key) const;
    std::vector<std::string> keys() const;

    // Writer used by export tooling and tests.
    static void write_entry(const std::filesystem::path& dir, const std::string& key,
                            const std::vector<double>& vec);

private:
    struct Entry {
        int dim = 0;
        std::string file;
    };
    std::filesystem::path dir_;
    std::map<std::string, Entry> entries_;
};

// Cache key conventions shared with the offline export scripts.
std::string label_cache_key(const std::string& class_name);
std::string description_cache_key(const std::string& sample_id);

// Supplies the label-informed matrix and per-sample description vectors,
// either from a cache directory or from the stub embedder.
class TextProvider {
public:
    enum class Mode { cache, stub };

    // Cache-backed provider. Label prompts select the cache keys.
    static TextProvider from_cache(const std::filesystem::path& dir,
                                   const std::vector<std::string>& class_names,
                                   const std::map<std::string, std::string>& label_prompts,
                                   int c_clip, int c_desp);
    // Stub provider: label rows embed the prompt text, descriptions embed
    // the caption (falling back to the sample id when no caption exists).
    static TextProvider stub(const std::vector<std::string>& class_names,
                             const std::map<std::string, std::string>& label_prompts,
                             int c_clip, int c_desp, uint64_t seed);

    const Mat& label_matrix() const { return label_matrix_; }  // [K x c_clip]
    int c_desp() const { return c_desp_; }

    // Description vector for one sample.
    std::vector<double> description(const std::string& sample_id,
                                    const std::string& caption_or_empty) const;

    Mode mode() const { return mode_; }

private:
    Mode mode_ = Mode::stub;
    Mat label_matrix_;
    int c_desp_ = 0;
    uint64_t stub_seed_ = 0;
    std::optional<EmbeddingCache> cache_;
};

// Label matrix from a cache, rows ordered as class_names (prompt text maps
// each class to its cache key).
Mat load_label_embeddings(const EmbeddingCache& cache,
                          const std::vector<std::string>& class_names,
                          const std::map<std::string, std::string>& label_prompts);

std::vector<double> load_description(const EmbeddingCache& cache,
                                     const std::string& sample_id);

// captions.json: map sample id -> caption string.
std::map<std::string, std::string> read_captions(const std::filesystem::path& path);
void write_captions(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& captions);

}  // namespace wsseg
