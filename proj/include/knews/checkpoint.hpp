#pragma once
// Tensor archive: an 8-byte magic, a length-prefixed JSON manifest, then raw
// little-endian float payloads. The manifest lists name, shape, dtype and the
// frozen flag per entry plus a free-form meta block (hashes, format version).
// Used both for parameter checkpoints and for precomputed per-news caches.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "params.hpp"
#include "tensor.hpp"

namespace knews {

inline constexpr char kArchiveMagic[8] = {'K', 'N', 'W', 'S', 'A', 'R', '0', '1'};
inline constexpr int kArchiveVersion = 1;

struct ArchiveError : std::runtime_error {
    explicit ArchiveError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ArchiveEntry {
    std::string name;
    int rows = 0, cols = 0;
    bool frozen = false;
    std::vector<float> f32;   // exactly one of f32/f64 is populated
    std::vector<double> f64;  // per the manifest dtype
};

class TensorArchive {
  public:
    std::map<std::string, std::string> meta;

    void add(const std::string& name, const Tensor<float>& t, bool frozen = false) {
        entries_.push_back({name, t.rows, t.cols, frozen, t.data, {}});
        index_[name] = entries_.size() - 1;
    }
    void add(const std::string& name, const Tensor<double>& t, bool frozen = false) {
        entries_.push_back({name, t.rows, t.cols, frozen, {}, t.data});
        index_[name] = entries_.size() - 1;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    const std::vector<ArchiveEntry>& entries() const { return entries_; }

    const ArchiveEntry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ArchiveError("archive entry not found: " + name);
        return entries_[it->second];
    }

    template <typename T>
    Tensor<T> tensor(const std::string& name) const {
        const ArchiveEntry& e = entry(name);
        Tensor<T> t(e.rows, e.cols);
        if (!e.f64.empty())
            for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<T>(e.f64[i]);
        else
            for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = static_cast<T>(e.f32[i]);
        return t;
    }

    void save(const std::string& path) const {
        nlohmann::json man;
        man["version"] = kArchiveVersion;
        man["meta"] = meta;
        uint64_t offset = 0;
        nlohmann::json list = nlohmann::json::array();
        for (const auto& e : entries_) {
            const uint64_t bytes =
                static_cast<uint64_t>(e.rows) * e.cols * (e.f64.empty() ? sizeof(float) : sizeof(double));
            list.push_back({{"name", e.name},
                            {"rows", e.rows},
                            {"cols", e.cols},
                            {"dtype", e.f64.empty() ? "f32" : "f64"},
                            {"frozen", e.frozen},
                            {"offset", offset},
                            {"bytes", bytes}});
            offset += bytes;
        }
        man["entries"] = list;
        const std::string ms = man.dump();

        std::ofstream out(path, std::ios::binary);
        if (!out) throw ArchiveError("cannot open for write: " + path);
        out.write(kArchiveMagic, 8);
        const uint32_t mlen = static_cast<uint32_t>(ms.size());
        out.write(reinterpret_cast<const char*>(&mlen), 4);
        out.write(ms.data(), ms.size());
        for (const auto& e : entries_) {
            if (!e.f64.empty())
                out.write(reinterpret_cast<const char*>(e.f64.data()), e.f64.size() * sizeof(double));
            else if (!e.f32.empty())
                out.write(reinterpret_cast<const char*>(e.f32.data()), e.f32.size() * sizeof(float));
        }
        if (!out) throw ArchiveError("write failed: " + path);
    }

    static TensorArchive load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ArchiveError("cannot open: " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kArchiveMagic, 8) != 0) throw ArchiveError("bad archive magic: " + path);
        uint32_t mlen = 0;
        in.read(reinterpret_cast<char*>(&mlen), 4);
        if (!in) throw ArchiveError("truncated archive header: " + path);
        std::string ms(mlen, '\0');
        in.read(ms.data(), mlen);
        if (!in) throw ArchiveError("truncated manifest: " + path);
        nlohmann::json man;
        try {
            man = nlohmann::json::parse(ms);
        } catch (const std::exception& e) {
            throw ArchiveError(std::string("manifest parse error: ") + e.what());
        }
        if (man.value("version", -1) != kArchiveVersion) throw ArchiveError("unsupported archive version");
        TensorArchive ar;
        for (auto it = man["meta"].begin(); it != man["meta"].end(); ++it)
            ar.meta[it.key()] = it.value().get<std::string>();
        for (const auto& je : man["entries"]) {
            ArchiveEntry e;
            e.name = je.at("name").get<std::string>();
            e.rows = je.at("rows").get<int>();
            e.cols = je.at("cols").get<int>();
            e.frozen = je.at("frozen").get<bool>();
            const std::string dtype = je.at("dtype").get<std::string>();
            const size_t numel = static_cast<size_t>(e.rows) * e.cols;
            if (dtype == "f32") {
                e.f32.resize(numel);
                in.read(reinterpret_cast<char*>(e.f32.data()), numel * sizeof(float));
            } else if (dtype == "f64") {
                e.f64.resize(numel);
                in.read(reinterpret_cast<char*>(e.f64.data()), numel * sizeof(double));
            } else {
                throw ArchiveError("unknown dtype in manifest: " + dtype);
            }
            if (!in && numel > 0) throw ArchiveError("truncated payload for entry " + e.name);
            ar.index_[e.name] = ar.entries_.size();
            ar.entries_.push_back(std::move(e));
        }
        return ar;
    }

  private:
    std::vector<ArchiveEntry> entries_;
    std::map<std::string, size_t> index_;
};

// Registry <-> archive. Loading validates the full shape manifest and reports
// every offending name at once.
template <typename T>
TensorArchive archive_from_params(const ParamRegistry<T>& reg,
                                  const std::map<std::string, std::string>& meta = {}) {
    TensorArchive ar;
    ar.meta = meta;
    for (const auto& name : reg.names()) ar.add(name, reg.value(name), reg.frozen(name));
    return ar;
}

template <typename T>
void load_params_from_archive(const TensorArchive& ar, ParamRegistry<T>& reg) {
    std::vector<std::string> bad;
    for (const auto& name : reg.names()) {
        if (!ar.has(name)) {
            bad.push_back(name + " (missing)");
            continue;
        }
        const ArchiveEntry& e = ar.entry(name);
        const Tensor<T>& v = reg.value(name);
        if (e.rows != v.rows || e.cols != v.cols)
            bad.push_back(name + " (archive " + std::to_string(e.rows) + "x" + std::to_string(e.cols) +
                          ", expected " + v.shape_str() + ")");
    }
    for (const auto& e : ar.entries())
        if (!reg.has(e.name)) bad.push_back(e.name + " (unexpected)");
    if (!bad.empty()) {
        std::string msg = "checkpoint shape mismatch:";
        for (const auto& b : bad) msg += " " + b + ";";
        throw ArchiveError(msg);
    }
    for (const auto& name : reg.names()) reg.value(name) = ar.tensor<T>(name);
}

// FNV-1a over raw bytes; used for cheap content fingerprints in archive meta.
inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t fnv1a_str(const std::string& s, uint64_t h = 1469598103934665603ULL) {
    return fnv1a(s.data(), s.size(), h);
}

}  // namespace knews
