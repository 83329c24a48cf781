#include "wsseg/text_providers.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "wsseg/errors.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

using nlohmann::json;

std::vector<double> stub_embed(const std::string& text, int dim, uint64_t seed) {
    if (dim < 1) throw DataError("stub_embed: dim must be >= 1");
    uint64_t h = fnv1a64(text);
    h = fnv1a64_u64(seed, h);
    Rng rng(h);
    std::vector<double> v(dim);
    double norm2 = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm2 += x * x;
    }
    if (norm2 < 1e-24) {
        v[0] = 1.0;
        norm2 = 1.0;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
}

namespace {

std::vector<float> read_f32_file(const std::filesystem::path& path, int expect_dim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("embedding cache: cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<size_t>(in.tellg());
    in.seekg(0);
    if (bytes % 4 != 0) throw DataError("embedding cache: payload not float32: " + path.string());
    const size_t n = bytes / 4;
    if (expect_dim >= 0 && n != static_cast<size_t>(expect_dim)) {
        throw DataError("embedding cache: dim mismatch in " + path.string() + ": manifest says " +
                        std::to_string(expect_dim) + ", payload has " + std::to_string(n));
    }
    std::vector<float> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<size_t>(in.gcount()) != bytes)
        throw DataError("embedding cache: truncated payload: " + path.string());
    return v;
}

}  // namespace

EmbeddingCache EmbeddingCache::open(const std::filesystem::path& dir) {
    EmbeddingCache c;
    c.dir_ = dir;
    const auto manifest = dir / "manifest.json";
    std::ifstream in(manifest);
    if (!in) throw DataError("embedding cache: cannot open " + manifest.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("embedding cache: parse error: " + std::string(e.what()));
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        Entry e;
        e.dim = it.value().at("dim").get<int>();
        e.file = it.value().at("file").get<std::string>();
        c.entries_[it.key()] = std::move(e);
    }
    return c;
}

std::vector<double> EmbeddingCache::load(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw DataError("embedding cache: missing key \"" + key + "\"");
    const auto v = read_f32_file(dir_ / it->second.file, it->second.dim);
    return std::vector<double>(v.begin(), v.end());
}

int EmbeddingCache::dim(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw DataError("embedding cache: missing key \"" + key + "\"");
    return it->second.dim;
}

std::vector<std::string> EmbeddingCache::keys() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
}

void EmbeddingCache::write_entry(const std::filesystem::path& dir, const std::string& key,
                                 const std::vector<double>& vec) {
    std::filesystem::create_directories(dir);
    const auto manifest_path = dir / "manifest.json";
    json j = json::object();
    if (std::filesystem::exists(manifest_path)) {
        std::ifstream in(manifest_path);
        in >> j;
    }
    // One file per key, named by the key's hash to stay filesystem-safe.
    const std::string fname = "v" + std::to_string(fnv1a64(key)) + ".f32";
    std::vector<float> payload(vec.begin(), vec.end());
    {
        std::ofstream out(dir / fname, std::ios::binary);
        if (!out) throw DataError("embedding cache: cannot write " + (dir / fname).string());
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size() * 4));
    }
    j[key] = {{"dim", static_cast<int>(vec.size())}, {"file", fname}};
    std::ofstream out(manifest_path);
    out << j.dump(2) << "\n";
}

std::string label_cache_key(const std::string& class_name) { return "label:" + class_name; }
std::string description_cache_key(const std::string& sample_id) { return "desc:" + sample_id; }

Mat load_label_embeddings(const EmbeddingCache& cache,
                          const std::vector<std::string>& class_names,
                          const std::map<std::string, std::string>& label_prompts) {
    if (class_names.empty()) throw DataError("load_label_embeddings: no classes");
    Mat m;
    for (size_t k = 0; k < class_names.size(); ++k) {
        auto pit = label_prompts.find(class_names[k]);
        const std::string prompt = pit == label_prompts.end() ? class_names[k] : pit->second;
        const std::string key = label_cache_key(prompt);
        if (!cache.contains(key)) {
            throw DataError("embedding cache: missing label entry for \"" + class_names[k] +
                            "\" (key \"" + key + "\")");
        }
        const auto row = cache.load(key);
        if (m.empty()) {
            m = Mat(static_cast<int>(class_names.size()), static_cast<int>(row.size()));
        } else if (static_cast<int>(row.size()) != m.cols) {
            throw DataError("embedding cache: label dim mismatch at class \"" + class_names[k] +
                            "\": " + std::to_string(row.size()) + " vs " + std::to_string(m.cols));
        }
        double norm2 = 0.0;
        for (double v : row) norm2 += v * v;
        if (norm2 <= 0.0) {
            throw DataError("embedding cache: zero label embedding for \"" + class_names[k] +
                            "\"");
        }
        for (size_t j = 0; j < row.size(); ++j) m.at(static_cast<int>(k), static_cast<int>(j)) = row[j];
    }
    return m;
}

std::vector<double> load_description(const EmbeddingCache& cache, const std::string& sample_id) {
    return cache.load(description_cache_key(sample_id));
}

TextProvider TextProvider::from_cache(const std::filesystem::path& dir,
                                      const std::vector<std::string>& class_names,
                                      const std::map<std::string, std::string>& label_prompts,
                                      int c_clip, int c_desp) {
    TextProvider p;
    p.mode_ = Mode::cache;
    p.cache_ = EmbeddingCache::open(dir);
    p.label_matrix_ = load_label_embeddings(*p.cache_, class_names, label_prompts);
    if (c_clip > 0 && p.label_matrix_.cols != c_clip) {
        throw DataError("text provider: label embedding width " +
                        std::to_string(p.label_matrix_.cols) + " does not match configured " +
                        std::to_string(c_clip));
    }
    p.c_desp_ = c_desp;
    return p;
}

TextProvider TextProvider::stub(const std::vector<std::string>& class_names,
                                const std::map<std::string, std::string>& label_prompts,
                                int c_clip, int c_desp, uint64_t seed) {
    if (c_clip < 1 || c_desp < 1) throw DataError("text provider: stub dims must be >= 1");
    TextProvider p;
    p.mode_ = Mode::stub;
    p.stub_seed_ = seed;
    p.c_desp_ = c_desp;
    p.label_matrix_ = Mat(static_cast<int>(class_names.size()), c_clip);
    for (size_t k = 0; k < class_names.size(); ++k) {
        auto pit = label_prompts.find(class_names[k]);
        const std::string prompt = pit == label_prompts.end() ? class_names[k] : pit->second;
        const auto row = stub_embed(prompt, c_clip, seed);
        for (int j = 0; j < c_clip; ++j) p.label_matrix_.at(static_cast<int>(k), j) = row[j];
    }
    return p;
}

std::vector<double> TextProvider::description(const std::string& sample_id,
                                              const std::string& caption_or_empty) const {
    if (mode_ == Mode::cache) {
        auto v = load_description(*cache_, sample_id);
        if (c_desp_ > 0 && static_cast<int>(v.size()) != c_desp_) {
            throw DataError("text provider: description dim for \"" + sample_id + "\" is " +
                            std::to_string(v.size()) + ", expected " + std::to_string(c_desp_));
        }
        return v;
    }
    const std::string& text = caption_or_empty.empty() ? sample_id : caption_or_empty;
    return stub_embed(text, c_desp_, stub_seed_);
}

std::map<std::string, std::string> read_captions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("captions: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("captions: parse error: " + std::string(e.what()));
    }
    std::map<std::string, std::string> out;
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value().get<std::string>();
    return out;
}

void write_captions(const std::filesystem::path& path,
                    const std::map<std::string, std::string>& captions) {
    json j = json::object();
    for (const auto& [k, v] : captions) j[k] = v;
    std::ofstream out(path);
    if (!out) throw DataError("captions: cannot write " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace wsseg
