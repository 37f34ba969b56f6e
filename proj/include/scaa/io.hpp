#pragma once

// On-disk formats:
//  - Volumes: a JSON sidecar header (<base>.json) describing dims, spacing,
//    class count and payload files, plus raw little-endian payloads
//    (<base>.image.raw float32, <base>.labels.raw uint8).
//  - Checkpoints: 8-byte magic, u64 manifest length, JSON manifest (config
//    echo, parameter names/shapes, optimizer scalars), then float32 parameter
//    payloads followed by Adam m and v buffers in registration order.
//  - CSV artifacts start with a '#'-prefixed provenance line echoing the
//    command that produced them.

#include <bit>
#include <cstring>
#include <fstream>

#include "scaa/model.hpp"
#include "scaa/volume.hpp"

#include <json.hpp>

namespace scaa {

inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'A', 'A', 'C', 'K', 'P', '1'};

// ---- volumes --------------------------------------------------------------

// `path` may be the sidecar path (ending in .json) or its base. Returns the
// sidecar path written.
std::string write_volume(const VolumeSample& v, const std::string& path,
                         const std::string& provenance);

VolumeSample read_volume(const std::string& path);

// Sidecar paths of all volumes in a directory, sorted by filename.
std::vector<std::string> list_volumes(const std::string& dir);

// ---- CSV ------------------------------------------------------------------

void write_attention_csv(const std::string& path, const std::vector<AttentionRecord>& records,
                         const std::string& provenance);

std::vector<AttentionRecord> read_attention_csv(const std::string& path);

struct MetricsRow {
    std::string volume;
    int cls = 0;
    double dsc = 0.0;
    std::optional<double> hd95;
};

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       const std::string& provenance);

// Training log writer; one row per optimization step.
class TrainLogWriter {
public:
    TrainLogWriter(const std::string& path, const std::string& provenance);
    void row(int64_t step, double l2d, double l3d, double total, int64_t wall_ms);

private:
    std::ofstream out_;
};

// ---- config JSON (checkpoint manifest echo) ---------------------------------

nlohmann::json config_to_json(const ScaaConfig& cfg);
ScaaConfig config_from_json(const nlohmann::json& j);

// ---- checkpoints ------------------------------------------------------------

namespace detail {

void write_exact(std::ofstream& out, const void* data, size_t bytes, const std::string& what);
void read_exact(std::ifstream& in, void* data, size_t bytes, const std::string& what);

}  // namespace detail

struct CheckpointInfo {
    ScaaConfig config;
    int64_t step = 0;
    bool has_adam = false;
    double lr = 0, beta1 = 0, beta2 = 0, adam_eps = 0;
    std::string provenance;
};

template <typename T>
struct AdamState;  // defined in trainer.hpp

template <typename T>
void save_checkpoint(const std::string& path, const ScaaModel<T>& model, const AdamState<T>* adam,
                     int64_t step, const std::string& provenance) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint payloads are little-endian");
    nlohmann::json manifest;
    manifest["format"] = "scaa-checkpoint";
    manifest["version"] = 1;
    manifest["step"] = step;
    manifest["provenance"] = provenance;
    manifest["config"] = config_to_json(model.config());
    manifest["has_adam"] = adam != nullptr;
    if (adam) {
        manifest["adam"] = {{"lr", adam->lr},
                            {"beta1", adam->beta1},
                            {"beta2", adam->beta2},
                            {"eps", adam->eps},
                            {"t", adam->t}};
    }
    auto& ps = model.params();
    nlohmann::json plist = nlohmann::json::array();
    for (size_t i = 0; i < ps.count(); ++i) {
        plist.push_back({{"name", ps.names()[i]}, {"shape", ps.tensors()[i].shape()}});
    }
    manifest["params"] = std::move(plist);
    const std::string mstr = manifest.dump();

    std::ofstream out(path, std::ios::binary);
    SCAA_CHECK(out.good(), "save_checkpoint: cannot open '", path, "' for writing");
    detail::write_exact(out, kCheckpointMagic, sizeof(kCheckpointMagic), path);
    const uint64_t mlen = mstr.size();
    detail::write_exact(out, &mlen, sizeof(mlen), path);
    detail::write_exact(out, mstr.data(), mstr.size(), path);

    std::vector<float> buf;
    auto dump = [&](const std::vector<T>& v) {
        buf.resize(v.size());
        for (size_t i = 0; i < v.size(); ++i) buf[i] = (float)v[i];
        detail::write_exact(out, buf.data(), buf.size() * sizeof(float), path);
    };
    for (const auto& t : ps.tensors()) dump(t.value());
    if (adam) {
        for (const auto& m : adam->m) dump(m);
        for (const auto& v : adam->v) dump(v);
    }
    SCAA_CHECK(out.good(), "save_checkpoint: write to '", path, "' failed");
}

// Reads just the manifest (config echo and step) without touching payloads.
CheckpointInfo read_checkpoint_info(const std::string& path);

template <typename T>
CheckpointInfo load_checkpoint(const std::string& path, ScaaModel<T>& model,
                               AdamState<T>* adam = nullptr) {
    std::ifstream in(path, std::ios::binary);
    SCAA_CHECK(in.good(), "load_checkpoint: cannot open '", path, "'");
    char magic[8];
    detail::read_exact(in, magic, sizeof(magic), path);
    SCAA_CHECK(std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0,
               "load_checkpoint: '", path, "' is not a checkpoint (bad magic)");
    uint64_t mlen = 0;
    detail::read_exact(in, &mlen, sizeof(mlen), path);
    SCAA_CHECK(mlen > 0 && mlen < (1ULL << 30), "load_checkpoint: '", path,
               "' has an implausible manifest length");
    std::string mstr((size_t)mlen, '\0');
    detail::read_exact(in, mstr.data(), mstr.size(), path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const std::exception& e) {
        fail("load_checkpoint: '", path, "' manifest is not valid JSON: ", e.what());
    }
    SCAA_CHECK(manifest.value("format", "") == "scaa-checkpoint", "load_checkpoint: '", path,
               "' has format '", manifest.value("format", ""), "'");
    SCAA_CHECK(manifest.value("version", 0) == 1, "load_checkpoint: unsupported version ",
               manifest.value("version", 0));

    CheckpointInfo info;
    info.config = config_from_json(manifest.at("config"));
    info.step = manifest.value("step", 0);
    info.has_adam = manifest.value("has_adam", false);
    info.provenance = manifest.value("provenance", "");
    if (info.has_adam) {
        info.lr = manifest["adam"].value("lr", 0.0);
        info.beta1 = manifest["adam"].value("beta1", 0.0);
        info.beta2 = manifest["adam"].value("beta2", 0.0);
        info.adam_eps = manifest["adam"].value("eps", 0.0);
    }

    auto& ps = model.params();
    const auto& plist = manifest.at("params");
    SCAA_CHECK(plist.size() == ps.count(), "load_checkpoint: checkpoint holds ", plist.size(),
               " tensors, model expects ", ps.count());
    std::vector<float> buf;
    for (size_t i = 0; i < ps.count(); ++i) {
        const std::string name = plist[(int)i].at("name");
        Shape shape = plist[(int)i].at("shape").get<Shape>();
        SCAA_CHECK(name == ps.names()[i], "load_checkpoint: tensor ", i, " is '", name,
                   "', model expects '", ps.names()[i],
                   "' (checkpoint was written for a different configuration)");
        auto& t = ps.tensors()[i];
        SCAA_CHECK(shape == t.shape(), "load_checkpoint: tensor '", name, "' has shape ",
                   shape_str(shape), ", model expects ", shape_str(t.shape()));
        buf.resize((size_t)t.size());
        detail::read_exact(in, buf.data(), buf.size() * sizeof(float),
                           path + "' tensor '" + name);
        auto& v = t.mutable_value();
        for (size_t j = 0; j < v.size(); ++j) v[j] = (T)buf[j];
    }
    if (adam) {
        SCAA_CHECK(info.has_adam, "load_checkpoint: '", path, "' carries no optimizer state");
        adam->lr = info.lr;
        adam->beta1 = info.beta1;
        adam->beta2 = info.beta2;
        adam->eps = info.adam_eps;
        adam->t = manifest["adam"].value("t", (int64_t)0);
        adam->m.resize(ps.count());
        adam->v.resize(ps.count());
        auto slurp = [&](std::vector<T>& dst, size_t i, const char* what) {
            dst.resize((size_t)ps.tensors()[i].size());
            buf.resize(dst.size());
            detail::read_exact(in, buf.data(), buf.size() * sizeof(float),
                               path + "' " + what + " of '" + ps.names()[i]);
            for (size_t j = 0; j < dst.size(); ++j) dst[j] = (T)buf[j];
        };
        for (size_t i = 0; i < ps.count(); ++i) slurp(adam->m[i], i, "adam.m");
        for (size_t i = 0; i < ps.count(); ++i) slurp(adam->v[i], i, "adam.v");
    }
    return info;
}

}  // namespace scaa
