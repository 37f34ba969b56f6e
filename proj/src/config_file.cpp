#include "scaa/config_file.hpp"

#include <fstream>
#include <sstream>

namespace scaa {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int64_t to_int(const std::string& v, const std::string& key) {
    size_t pos = 0;
    int64_t out = 0;
    try {
        out = std::stoll(v, &pos);
    } catch (const std::exception&) {
        fail("config: key '", key, "' has non-integer value '", v, "'");
    }
    SCAA_CHECK(pos == v.size(), "config: key '", key, "' has non-integer value '", v, "'");
    return out;
}

double to_double(const std::string& v, const std::string& key) {
    size_t pos = 0;
    double out = 0;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        fail("config: key '", key, "' has non-numeric value '", v, "'");
    }
    SCAA_CHECK(pos == v.size(), "config: key '", key, "' has non-numeric value '", v, "'");
    return out;
}

std::vector<std::string> split_commas(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
    return out;
}

}  // namespace

KvConfig KvConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    SCAA_CHECK(in.good(), "config: cannot open '", path, "'");
    KvConfig kv;
    kv.path_ = path;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        SCAA_CHECK(eq != std::string::npos, "config: ", path, ":", line_no,
                   ": expected key=value, got '", t, "'");
        const std::string key = trim(t.substr(0, eq)), val = trim(t.substr(eq + 1));
        SCAA_CHECK(!key.empty(), "config: ", path, ":", line_no, ": empty key");
        SCAA_CHECK(!kv.values_.count(key), "config: ", path, ":", line_no, ": duplicate key '",
                   key, "'");
        kv.values_[key] = val;
    }
    return kv;
}

std::string KvConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    return it->second;
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    return to_int(it->second, key);
}

double KvConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    return to_double(it->second, key);
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    if (it->second == "1" || it->second == "true" || it->second == "yes") return true;
    if (it->second == "0" || it->second == "false" || it->second == "no") return false;
    fail("config: key '", key, "' has non-boolean value '", it->second, "'");
}

std::vector<int64_t> KvConfig::get_ints(const std::string& key, size_t n,
                                        const std::vector<int64_t>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    auto toks = split_commas(it->second);
    SCAA_CHECK(toks.size() == n, "config: key '", key, "' needs ", n, " entries, got ",
               toks.size());
    std::vector<int64_t> out;
    for (const auto& t : toks) out.push_back(to_int(t, key));
    return out;
}

std::vector<double> KvConfig::get_doubles(const std::string& key, size_t n,
                                          const std::vector<double>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    used_.insert(key);
    auto toks = split_commas(it->second);
    SCAA_CHECK(toks.size() == n, "config: key '", key, "' needs ", n, " entries, got ",
               toks.size());
    std::vector<double> out;
    for (const auto& t : toks) out.push_back(to_double(t, key));
    return out;
}

void KvConfig::check_all_used() const {
    std::string stray;
    for (const auto& [k, v] : values_)
        if (!used_.count(k)) stray += (stray.empty() ? "" : ", ") + k;
    SCAA_CHECK(stray.empty(), "config: '", path_, "' has unknown keys: ", stray);
}

void apply_model_keys(const KvConfig& kv, ScaaConfig& cfg) {
    const std::string preset = kv.get_str("preset", "");
    if (preset == "paper")
        cfg = ScaaConfig::paper(cfg.num_classes);
    else if (preset == "desk")
        cfg = ScaaConfig::desk(cfg.num_classes);
    else if (preset == "micro")
        cfg = ScaaConfig::micro(cfg.num_classes);
    else
        SCAA_CHECK(preset.empty(), "config: unknown preset '", preset,
                   "' (expected paper|desk|micro)");
    cfg.num_classes = kv.get_int("classes", cfg.num_classes);
    if (kv.has("variant")) cfg.variant = parse_variant(kv.get_str("variant", ""));
    auto arr4 = [&](const char* key, std::array<int64_t, 4>& a) {
        auto v = kv.get_ints(key, 4, {a.begin(), a.end()});
        std::copy(v.begin(), v.end(), a.begin());
    };
    auto arr5 = [&](const char* key, std::array<int64_t, 5>& a) {
        auto v = kv.get_ints(key, 5, {a.begin(), a.end()});
        std::copy(v.begin(), v.end(), a.begin());
    };
    arr4("ch3d", cfg.ch3d);
    arr5("ch2d", cfg.ch2d);
    arr5("ch_fused", cfg.ch_fused);
    arr4("embed", cfg.embed);
    arr4("heads", cfg.heads);
    arr4("pool_hw", cfg.pool_hw);
    cfg.window_lo = kv.get_double("window_lo", cfg.window_lo);
    cfg.window_hi = kv.get_double("window_hi", cfg.window_hi);
    cfg.validate();
}

void apply_train_keys(const KvConfig& kv, TrainConfig& cfg) {
    cfg.lr = kv.get_double("lr", cfg.lr);
    cfg.beta1 = kv.get_double("beta1", cfg.beta1);
    cfg.beta2 = kv.get_double("beta2", cfg.beta2);
    cfg.adam_eps = kv.get_double("adam_eps", cfg.adam_eps);
    cfg.epochs = kv.get_int("epochs", cfg.epochs);
    cfg.max_steps = kv.get_int("max_steps", cfg.max_steps);
    cfg.slices_per_step = kv.get_int("slices", cfg.slices_per_step);
    cfg.seed = (uint64_t)kv.get_int("seed", (int64_t)cfg.seed);
    cfg.augment = kv.get_bool("augment", cfg.augment);
    cfg.elastic_magnitude = kv.get_double("elastic_magnitude", cfg.elastic_magnitude);
    cfg.elastic_grid = kv.get_int("elastic_grid", cfg.elastic_grid);
    cfg.jitter_sigma = kv.get_double("jitter_sigma", cfg.jitter_sigma);
    cfg.jitter_max_shift = kv.get_int("jitter_max_shift", cfg.jitter_max_shift);
    cfg.checkpoint_every = kv.get_int("checkpoint_every", cfg.checkpoint_every);
    cfg.timing = kv.get_bool("timing", cfg.timing);
    cfg.dice.alpha = kv.get_double("dice_alpha", cfg.dice.alpha);
    cfg.dice.beta = kv.get_double("dice_beta", cfg.dice.beta);
    cfg.dice.eps = kv.get_double("dice_eps", cfg.dice.eps);
    SCAA_CHECK(cfg.lr > 0 && cfg.epochs >= 1 && cfg.slices_per_step >= 1 && cfg.max_steps >= 0,
               "config: invalid training parameters");
}

void apply_phantom_keys(const KvConfig& kv, PhantomSpec& spec) {
    auto dims = kv.get_ints("dims", 3, {spec.dims.begin(), spec.dims.end()});
    std::copy(dims.begin(), dims.end(), spec.dims.begin());
    auto sp = kv.get_doubles("spacing", 3, {spec.spacing.begin(), spec.spacing.end()});
    std::copy(sp.begin(), sp.end(), spec.spacing.begin());
    spec.background = kv.get_double("background", spec.background);
    spec.noise_sigma = kv.get_double("noise_sigma", spec.noise_sigma);
    if (kv.has("organs")) {
        auto kinds = split_commas(kv.get_str("organs", ""));
        SCAA_CHECK(!kinds.empty(), "config: 'organs' needs at least one kind");
        const PhantomSpec defaults = PhantomSpec::default3();
        std::vector<OrganSpec> organs;
        for (const auto& k : kinds) {
            const OrganKind kind = parse_organ_kind(k);
            OrganSpec o;
            for (const auto& d : defaults.organs)
                if (d.kind == kind) o = d;
            o.kind = kind;
            organs.push_back(o);
        }
        spec.organs = std::move(organs);
    }
    for (size_t i = 0; i < spec.organs.size(); ++i) {
        const std::string base = "organ" + std::to_string(i + 1);
        auto in = kv.get_doubles(base + "_intensity", 2,
                                 {spec.organs[i].intensity_lo, spec.organs[i].intensity_hi});
        spec.organs[i].intensity_lo = in[0];
        spec.organs[i].intensity_hi = in[1];
        auto sz = kv.get_doubles(base + "_size", 2,
                                 {spec.organs[i].size_lo, spec.organs[i].size_hi});
        spec.organs[i].size_lo = sz[0];
        spec.organs[i].size_hi = sz[1];
    }
    spec.validate();
}

}  // namespace scaa
