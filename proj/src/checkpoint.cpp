#include "wsseg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "wsseg/errors.hpp"

namespace wsseg {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'W', 'S', 'S', 'E', 'G', 'C', 'K', '1'};

void append_mat(std::vector<unsigned char>& payload, const Mat& m) {
    const size_t bytes = m.a.size() * sizeof(double);
    const size_t off = payload.size();
    payload.resize(off + bytes);
    std::memcpy(payload.data() + off, m.a.data(), bytes);
}

void read_mat_at(const std::vector<unsigned char>& payload, size_t offset, Mat& m,
                 const std::string& name) {
    const size_t bytes = m.a.size() * sizeof(double);
    if (offset + bytes > payload.size()) {
        throw DataError("checkpoint: truncated payload for tensor \"" + name + "\"");
    }
    std::memcpy(m.a.data(), payload.data() + offset, bytes);
}

struct RawFile {
    json header;
    std::vector<unsigned char> payload;
};

RawFile read_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataError("checkpoint: bad magic in " + path.string());
    }
    uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 8);
    if (in.gcount() != 8) throw DataError("checkpoint: truncated header length");
    std::string htxt(hlen, '\0');
    in.read(htxt.data(), static_cast<std::streamsize>(hlen));
    if (static_cast<uint64_t>(in.gcount()) != hlen)
        throw DataError("checkpoint: truncated header");
    RawFile rf;
    try {
        rf.header = json::parse(htxt);
    } catch (const json::exception& e) {
        throw DataError("checkpoint: header parse error: " + std::string(e.what()));
    }
    in.seekg(0, std::ios::end);
    const auto end = static_cast<size_t>(in.tellg());
    const size_t payload_start = 16 + hlen;
    rf.payload.resize(end - payload_start);
    in.seekg(static_cast<std::streamoff>(payload_start));
    in.read(reinterpret_cast<char*>(rf.payload.data()),
            static_cast<std::streamsize>(rf.payload.size()));
    return rf;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path,
                     const json& meta, long adam_step) {
    json tensors = json::array();
    std::vector<unsigned char> payload;
    for (const auto& [name, p] : params.items()) {
        json t;
        t["name"] = name;
        t["rows"] = p.value.rows;
        t["cols"] = p.value.cols;
        t["dtype"] = "f64";
        t["trainable"] = p.trainable;
        t["offset"] = payload.size();
        append_mat(payload, p.value);
        t["adam_m_offset"] = payload.size();
        append_mat(payload, p.adam_m);
        t["adam_v_offset"] = payload.size();
        append_mat(payload, p.adam_v);
        tensors.push_back(std::move(t));
    }
    json header;
    header["version"] = 1;
    header["meta"] = meta;
    header["adam_step"] = adam_step;
    header["tensors"] = std::move(tensors);
    const std::string htxt = header.dump();

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("checkpoint: cannot write " + path.string());
        out.write(kMagic, 8);
        const uint64_t hlen = htxt.size();
        out.write(reinterpret_cast<const char*>(&hlen), 8);
        out.write(htxt.data(), static_cast<std::streamsize>(htxt.size()));
        out.write(reinterpret_cast<const char*>(payload.data()),
                  static_cast<std::streamsize>(payload.size()));
        if (!out) throw DataError("checkpoint: write failed: " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

LoadReport load_checkpoint(ParamStore& params, const std::filesystem::path& path) {
    const RawFile rf = read_raw(path);
    LoadReport report;
    report.meta = rf.header.value("meta", json::object());
    report.adam_step = rf.header.value("adam_step", 0L);

    std::map<std::string, json> by_name;
    for (const auto& t : rf.header.at("tensors")) by_name[t.at("name").get<std::string>()] = t;

    for (auto& [name, p] : params.items()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            report.fresh.push_back(name);
            continue;
        }
        const json& t = it->second;
        const int rows = t.at("rows").get<int>();
        const int cols = t.at("cols").get<int>();
        if (rows != p.value.rows || cols != p.value.cols) {
            throw DataError("checkpoint: shape mismatch for tensor \"" + name + "\": file [" +
                            std::to_string(rows) + "x" + std::to_string(cols) + "], model " +
                            p.value.shape_str());
        }
        const std::string dtype = t.value("dtype", "f64");
        if (dtype != "f64") {
            throw DataError("checkpoint: unsupported dtype \"" + dtype + "\" for tensor \"" +
                            name + "\"");
        }
        read_mat_at(rf.payload, t.at("offset").get<size_t>(), p.value, name);
        read_mat_at(rf.payload, t.at("adam_m_offset").get<size_t>(), p.adam_m, name);
        read_mat_at(rf.payload, t.at("adam_v_offset").get<size_t>(), p.adam_v, name);
        p.trainable = t.value("trainable", true);
        report.loaded.push_back(name);
    }
    return report;
}

json read_checkpoint_header(const std::filesystem::path& path) { return read_raw(path).header; }

std::vector<std::pair<std::string, std::vector<unsigned char>>> read_checkpoint_segments(
    const std::filesystem::path& path) {
    const RawFile rf = read_raw(path);
    std::vector<std::pair<std::string, std::vector<unsigned char>>> out;
    for (const auto& t : rf.header.at("tensors")) {
        const std::string name = t.at("name").get<std::string>();
        const size_t off = t.at("offset").get<size_t>();
        const size_t bytes = static_cast<size_t>(t.at("rows").get<int>()) *
                             t.at("cols").get<int>() * sizeof(double);
        if (off + bytes > rf.payload.size()) {
            throw DataError("checkpoint: truncated payload for tensor \"" + name + "\"");
        }
        out.emplace_back(name, std::vector<unsigned char>(rf.payload.begin() + off,
                                                          rf.payload.begin() + off + bytes));
    }
    return out;
}

}  // namespace wsseg
