#include "scaa/io.hpp"

#include <filesystem>
#include <iomanip>
#include <sstream>

namespace fs = std::filesystem;

namespace scaa {

namespace detail {

void write_exact(std::ofstream& out, const void* data, size_t bytes, const std::string& what) {
    out.write((const char*)data, (std::streamsize)bytes);
    SCAA_CHECK(out.good(), "write failed for '", what, "'");
}

void read_exact(std::ifstream& in, void* data, size_t bytes, const std::string& what) {
    in.read((char*)data, (std::streamsize)bytes);
    SCAA_CHECK((size_t)in.gcount() == bytes, "truncated read from '", what, "': wanted ", bytes,
               " bytes, got ", in.gcount());
}

namespace {

std::string strip_json_ext(const std::string& path) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json")
        return path.substr(0, path.size() - 5);
    return path;
}

void write_raw(const std::string& path, const void* data, size_t bytes) {
    std::ofstream out(path, std::ios::binary);
    SCAA_CHECK(out.good(), "cannot open '", path, "' for writing");
    write_exact(out, data, bytes, path);
}

void read_raw(const std::string& path, void* data, size_t bytes) {
    std::ifstream in(path, std::ios::binary);
    SCAA_CHECK(in.good(), "cannot open payload '", path, "'");
    read_exact(in, data, bytes, path);
    char extra;
    in.read(&extra, 1);
    SCAA_CHECK(in.gcount() == 0, "payload '", path, "' is larger than the header implies");
}

std::string csv_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

}  // namespace detail

std::string write_volume(const VolumeSample& v, const std::string& path,
                         const std::string& provenance) {
    static_assert(std::endian::native == std::endian::little, "payloads are little-endian");
    v.validate();
    const std::string base = detail::strip_json_ext(path);
    const fs::path base_path(base);
    const std::string stem = base_path.filename().string();

    nlohmann::json hdr;
    hdr["format"] = "scaa-volume";
    hdr["version"] = 1;
    hdr["id"] = v.id;
    hdr["dims"] = v.dims;
    hdr["spacing"] = v.spacing;
    hdr["num_classes"] = v.num_classes;
    hdr["provenance"] = provenance;
    if (!v.image.empty()) {
        hdr["image"] = {{"file", stem + ".image.raw"}, {"dtype", "float32_le"}};
        detail::write_raw(base + ".image.raw", v.image.data(), v.image.size() * sizeof(float));
    }
    if (!v.labels.empty()) {
        hdr["labels"] = {{"file", stem + ".labels.raw"}, {"dtype", "uint8"}};
        detail::write_raw(base + ".labels.raw", v.labels.data(), v.labels.size());
    }
    const std::string sidecar = base + ".json";
    std::ofstream out(sidecar);
    SCAA_CHECK(out.good(), "cannot open '", sidecar, "' for writing");
    out << hdr.dump(2) << "\n";
    SCAA_CHECK(out.good(), "write failed for '", sidecar, "'");
    return sidecar;
}

VolumeSample read_volume(const std::string& path) {
    std::string sidecar = path;
    if (!fs::exists(sidecar) || fs::is_directory(sidecar)) sidecar = path + ".json";
    if (sidecar.size() < 5 || sidecar.substr(sidecar.size() - 5) != ".json")
        sidecar = detail::strip_json_ext(sidecar) + ".json";
    std::ifstream in(sidecar);
    SCAA_CHECK(in.good(), "cannot open volume header '", sidecar, "'");
    nlohmann::json hdr;
    try {
        in >> hdr;
    } catch (const std::exception& e) {
        fail("volume header '", sidecar, "' is not valid JSON: ", e.what());
    }
    SCAA_CHECK(hdr.value("format", "") == "scaa-volume", "'", sidecar,
               "' has format '", hdr.value("format", ""), "', expected scaa-volume");
    SCAA_CHECK(hdr.value("version", 0) == 1, "'", sidecar, "': unsupported version ",
               hdr.value("version", 0));

    VolumeSample v;
    v.id = hdr.value("id", "");
    v.dims = hdr.at("dims").get<std::array<int64_t, 3>>();
    v.spacing = hdr.value("spacing", std::array<double, 3>{1.0, 1.0, 1.0});
    v.num_classes = hdr.value("num_classes", (int64_t)0);
    const fs::path dir = fs::path(sidecar).parent_path();
    if (hdr.contains("image")) {
        const std::string dtype = hdr["image"].value("dtype", "");
        SCAA_CHECK(dtype == "float32_le", "'", sidecar, "': unsupported image dtype '", dtype, "'");
        v.image.resize((size_t)v.voxels());
        detail::read_raw((dir / hdr["image"].at("file").get<std::string>()).string(),
                         v.image.data(), v.image.size() * sizeof(float));
    }
    if (hdr.contains("labels")) {
        const std::string dtype = hdr["labels"].value("dtype", "");
        SCAA_CHECK(dtype == "uint8", "'", sidecar, "': unsupported labels dtype '", dtype, "'");
        v.labels.resize((size_t)v.voxels());
        detail::read_raw((dir / hdr["labels"].at("file").get<std::string>()).string(),
                         v.labels.data(), v.labels.size());
    }
    v.validate();
    return v;
}

std::vector<std::string> list_volumes(const std::string& dir) {
    SCAA_CHECK(fs::is_directory(dir), "'", dir, "' is not a directory");
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        std::ifstream in(e.path());
        nlohmann::json hdr;
        try {
            in >> hdr;
        } catch (...) {
            continue;
        }
        if (hdr.value("format", "") == "scaa-volume") out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

void write_attention_csv(const std::string& path, const std::vector<AttentionRecord>& records,
                         const std::string& provenance) {
    std::ofstream out(path);
    SCAA_CHECK(out.good(), "cannot open '", path, "' for writing");
    out << "# " << provenance << "\n";
    out << "scale,slice_z,head,depth_index,weight\n";
    for (const auto& r : records)
        for (size_t d = 0; d < r.weights.size(); ++d)
            out << r.scale << "," << r.slice_z << "," << r.head << "," << d << ","
                << detail::csv_double(r.weights[d]) << "\n";
    SCAA_CHECK(out.good(), "write failed for '", path, "'");
}

std::vector<AttentionRecord> read_attention_csv(const std::string& path) {
    std::ifstream in(path);
    SCAA_CHECK(in.good(), "cannot open '", path, "'");
    std::vector<AttentionRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("scale,", 0) == 0) continue;
        std::istringstream is(line);
        std::string f[5];
        for (int i = 0; i < 5; ++i)
            SCAA_CHECK((bool)std::getline(is, f[i], ','), "'", path, "': malformed row '", line,
                       "'");
        const int scale = std::stoi(f[0]);
        const int64_t z = std::stoll(f[1]);
        const int head = std::stoi(f[2]);
        const size_t idx = (size_t)std::stoull(f[3]);
        const double w = std::stod(f[4]);
        if (out.empty() || out.back().scale != scale || out.back().slice_z != z ||
            out.back().head != head) {
            out.push_back({scale, z, head, {}});
        }
        auto& rec = out.back();
        if (rec.weights.size() <= idx) rec.weights.resize(idx + 1, 0.0);
        rec.weights[idx] = w;
    }
    return out;
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows,
                       const std::string& provenance) {
    std::ofstream out(path);
    SCAA_CHECK(out.good(), "cannot open '", path, "' for writing");
    out << "# " << provenance << "\n";
    out << "volume,class,dsc_percent,hd95\n";
    for (const auto& r : rows) {
        out << r.volume << "," << r.cls << "," << detail::csv_double(r.dsc) << ",";
        if (r.hd95) out << detail::csv_double(*r.hd95);
        out << "\n";
    }
    SCAA_CHECK(out.good(), "write failed for '", path, "'");
}

TrainLogWriter::TrainLogWriter(const std::string& path, const std::string& provenance)
    : out_(path) {
    SCAA_CHECK(out_.good(), "cannot open training log '", path, "' for writing");
    out_ << "# " << provenance << "\n";
    out_ << "step,l2d,l3d,total,wall_ms\n";
}

void TrainLogWriter::row(int64_t step, double l2d, double l3d, double total, int64_t wall_ms) {
    out_ << step << "," << detail::csv_double(l2d) << "," << detail::csv_double(l3d) << ","
         << detail::csv_double(total) << "," << wall_ms << "\n";
    out_.flush();
    SCAA_CHECK(out_.good(), "write failed for training log");
}

nlohmann::json config_to_json(const ScaaConfig& cfg) {
    nlohmann::json j;
    j["num_classes"] = cfg.num_classes;
    j["variant"] = variant_name(cfg.variant);
    j["ch3d"] = cfg.ch3d;
    j["ch2d"] = cfg.ch2d;
    j["ch_fused"] = cfg.ch_fused;
    j["embed"] = cfg.embed;
    j["heads"] = cfg.heads;
    j["pool_hw"] = cfg.pool_hw;
    j["window"] = std::array<double, 2>{cfg.window_lo, cfg.window_hi};
    return j;
}

ScaaConfig config_from_json(const nlohmann::json& j) {
    ScaaConfig cfg;
    cfg.num_classes = j.at("num_classes");
    cfg.variant = parse_variant(j.at("variant"));
    cfg.ch3d = j.at("ch3d").get<std::array<int64_t, 4>>();
    cfg.ch2d = j.at("ch2d").get<std::array<int64_t, 5>>();
    cfg.ch_fused = j.at("ch_fused").get<std::array<int64_t, 5>>();
    cfg.embed = j.at("embed").get<std::array<int64_t, 4>>();
    cfg.heads = j.at("heads").get<std::array<int64_t, 4>>();
    cfg.pool_hw = j.at("pool_hw").get<std::array<int64_t, 4>>();
    const auto w = j.at("window").get<std::array<double, 2>>();
    cfg.window_lo = w[0];
    cfg.window_hi = w[1];
    cfg.validate();
    return cfg;
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    SCAA_CHECK(in.good(), "cannot open checkpoint '", path, "'");
    char magic[8];
    detail::read_exact(in, magic, sizeof(magic), path);
    SCAA_CHECK(std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0, "'", path,
               "' is not a checkpoint (bad magic)");
    uint64_t mlen = 0;
    detail::read_exact(in, &mlen, sizeof(mlen), path);
    SCAA_CHECK(mlen > 0 && mlen < (1ULL << 30), "'", path, "' has an implausible manifest length");
    std::string mstr((size_t)mlen, '\0');
    detail::read_exact(in, mstr.data(), mstr.size(), path);
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mstr);
    } catch (const std::exception& e) {
        fail("checkpoint '", path, "' manifest is not valid JSON: ", e.what());
    }
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
    return info;
}

}  // namespace scaa
