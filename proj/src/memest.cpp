#include "scaa/memest.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace scaa {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Input: return "input";
        case LayerKind::Conv: return "conv";
        case LayerKind::Norm: return "norm";
        case LayerKind::Pool: return "pool";
        case LayerKind::Upsample: return "upsample";
        case LayerKind::Concat: return "concat";
        case LayerKind::Add: return "add";
        case LayerKind::Attend: return "attend";
    }
    return "?";
}

LayerKind parse_layer_kind(const std::string& s) {
    for (LayerKind k : {LayerKind::Input, LayerKind::Conv, LayerKind::Norm, LayerKind::Pool,
                        LayerKind::Upsample, LayerKind::Concat, LayerKind::Add, LayerKind::Attend})
        if (s == layer_kind_name(k)) return k;
    fail("memest: unknown layer kind '", s, "'");
}

namespace {

int64_t extent_product(const std::vector<int64_t>& e) {
    int64_t p = 1;
    for (int64_t v : e) p *= v;
    return p;
}

std::string extent_str(const std::vector<int64_t>& e) {
    std::string s;
    for (size_t i = 0; i < e.size(); ++i) s += (i ? "x" : "") + std::to_string(e[i]);
    return s;
}

}  // namespace

MemReport estimate(const ArchSpec& spec) {
    SCAA_CHECK(spec.batch >= 1, "memest: batch must be >= 1, got ", spec.batch);
    SCAA_CHECK(!spec.layers.empty(), "memest: empty layer list");
    MemReport rep;
    rep.arch = spec.name;
    rep.batch = spec.batch;
    std::map<std::string, size_t> by_name;

    for (const LayerSpec& l : spec.layers) {
        SCAA_CHECK(!l.name.empty(), "memest: layer with empty name");
        SCAA_CHECK(!by_name.count(l.name), "memest: duplicate layer name '", l.name, "'");
        std::vector<size_t> si;
        if (l.kind != LayerKind::Input) {
            if (l.srcs.empty()) {
                SCAA_CHECK(!rep.layers.empty(), "memest: layer '", l.name,
                           "' has no source and no preceding layer");
                si.push_back(rep.layers.size() - 1);
            } else {
                for (const auto& s : l.srcs) {
                    auto it = by_name.find(s);
                    SCAA_CHECK(it != by_name.end(), "memest: layer '", l.name,
                               "' references unknown source '", s, "'");
                    si.push_back(it->second);
                }
            }
        }
        auto src = [&](size_t i) -> const ResolvedLayer& { return rep.layers[si[i]]; };

        ResolvedLayer r;
        r.name = l.name;
        r.kind = l.kind;
        switch (l.kind) {
            case LayerKind::Input:
                SCAA_CHECK(l.srcs.empty(), "memest: input '", l.name, "' cannot have sources");
                SCAA_CHECK(l.channels >= 1, "memest: input '", l.name, "' needs channels >= 1");
                SCAA_CHECK(l.extent.size() == 2 || l.extent.size() == 3, "memest: input '", l.name,
                           "' extent must be 2D or 3D");
                for (int64_t e : l.extent)
                    SCAA_CHECK(e >= 1, "memest: input '", l.name, "' has extent entry ", e);
                r.out_channels = l.channels;
                r.extent = l.extent;
                r.per_item = !l.per_volume;
                break;
            case LayerKind::Conv: {
                SCAA_CHECK(si.size() == 1, "memest: conv '", l.name, "' needs exactly one source");
                SCAA_CHECK(l.channels >= 1, "memest: conv '", l.name, "' needs channels >= 1");
                SCAA_CHECK(l.kernel >= 1 && l.stride >= 1, "memest: conv '", l.name,
                           "' needs kernel/stride >= 1");
                r.in_channels = src(0).out_channels;
                r.out_channels = l.channels;
                for (int64_t e : src(0).extent) {
                    SCAA_CHECK(e % l.stride == 0, "memest: conv '", l.name, "' stride ", l.stride,
                               " does not divide extent ", e);
                    r.extent.push_back(e / l.stride);
                }
                r.flagged = true;
                r.per_item = src(0).per_item;
                int64_t kvol = 1;
                for (size_t d = 0; d < r.extent.size(); ++d) kvol *= l.kernel;
                r.params = r.out_channels * r.in_channels * kvol + r.out_channels;
                break;
            }
            case LayerKind::Norm:
                SCAA_CHECK(si.size() == 1, "memest: norm '", l.name, "' needs exactly one source");
                r.in_channels = r.out_channels = src(0).out_channels;
                r.extent = src(0).extent;
                r.flagged = true;
                r.per_item = src(0).per_item;
                r.params = 2 * r.out_channels;
                break;
            case LayerKind::Pool:
                SCAA_CHECK(si.size() == 1, "memest: pool '", l.name, "' needs exactly one source");
                r.in_channels = r.out_channels = src(0).out_channels;
                if (!l.target.empty()) {
                    SCAA_CHECK(l.target.size() == src(0).extent.size(), "memest: pool '", l.name,
                               "' target rank ", l.target.size(), " vs source rank ",
                               src(0).extent.size());
                    for (size_t d = 0; d < l.target.size(); ++d)
                        SCAA_CHECK(l.target[d] >= 1 && l.target[d] <= src(0).extent[d],
                                   "memest: pool '", l.name, "' target ", l.target[d],
                                   " exceeds source extent ", src(0).extent[d]);
                    r.extent = l.target;
                } else {
                    SCAA_CHECK(l.stride >= 2, "memest: pool '", l.name,
                               "' needs stride >= 2 or an explicit target");
                    for (int64_t e : src(0).extent) {
                        SCAA_CHECK(e % l.stride == 0, "memest: pool '", l.name, "' stride ",
                                   l.stride, " does not divide extent ", e);
                        r.extent.push_back(e / l.stride);
                    }
                }
                r.per_item = src(0).per_item;
                break;
            case LayerKind::Upsample:
                SCAA_CHECK(si.size() == 1, "memest: upsample '", l.name,
                           "' needs exactly one source");
                r.in_channels = r.out_channels = src(0).out_channels;
                if (!l.target.empty()) {
                    SCAA_CHECK(l.target.size() == src(0).extent.size(), "memest: upsample '",
                               l.name, "' target rank ", l.target.size(), " vs source rank ",
                               src(0).extent.size());
                    for (size_t d = 0; d < l.target.size(); ++d)
                        SCAA_CHECK(l.target[d] >= src(0).extent[d], "memest: upsample '", l.name,
                                   "' target ", l.target[d], " below source extent ",
                                   src(0).extent[d]);
                    r.extent = l.target;
                } else {
                    SCAA_CHECK(l.factor >= 2, "memest: upsample '", l.name,
                               "' needs factor >= 2 or an explicit target");
                    for (int64_t e : src(0).extent) r.extent.push_back(e * l.factor);
                }
                r.per_item = src(0).per_item;
                break;
            case LayerKind::Concat: {
                SCAA_CHECK(si.size() >= 2, "memest: concat '", l.name, "' needs >= 2 sources");
                r.extent = src(0).extent;
                bool per_item = false;
                for (size_t i = 0; i < si.size(); ++i) {
                    SCAA_CHECK(src(i).extent == r.extent, "memest: concat '", l.name,
                               "' source '", src(i).name, "' extent ", extent_str(src(i).extent),
                               " vs ", extent_str(r.extent));
                    r.out_channels += src(i).out_channels;
                    per_item = per_item || src(i).per_item;
                }
                r.per_item = per_item;
                r.in_channels = r.out_channels;
                break;
            }
            case LayerKind::Add: {
                SCAA_CHECK(si.size() >= 2, "memest: add '", l.name, "' needs >= 2 sources");
                r.extent = src(0).extent;
                r.in_channels = r.out_channels = src(0).out_channels;
                bool per_item = false;
                for (size_t i = 0; i < si.size(); ++i) {
                    SCAA_CHECK(src(i).extent == r.extent && src(i).out_channels == r.out_channels,
                               "memest: add '", l.name, "' source '", src(i).name,
                               "' shape mismatch");
                    per_item = per_item || src(i).per_item;
                }
                r.per_item = per_item;
                break;
            }
            case LayerKind::Attend:
                // Depth-weighted aggregation: 3D features + 2D query -> 2D map.
                SCAA_CHECK(si.size() == 2, "memest: attend '", l.name,
                           "' needs sources (3d features, 2d query)");
                SCAA_CHECK(src(0).extent.size() == 3, "memest: attend '", l.name,
                           "' first source must be 3D");
                SCAA_CHECK(src(1).extent.size() == 2, "memest: attend '", l.name,
                           "' second source must be 2D");
                r.in_channels = r.out_channels = src(0).out_channels;
                r.extent = {src(0).extent[1], src(0).extent[2]};
                r.per_item = src(0).per_item || src(1).per_item;
                break;
        }
        r.elements = r.out_channels * extent_product(r.extent);
        if (r.flagged) {
            if (r.per_item)
                rep.flagged_elements_per_item += r.elements;
            else
                rep.flagged_elements_per_volume += r.elements;
        }
        rep.param_count += r.params;
        by_name[l.name] = rep.layers.size();
        rep.layers.push_back(std::move(r));
    }
    rep.activation_bytes =
        (rep.flagged_elements_per_item * spec.batch + rep.flagged_elements_per_volume) * 2 * 4;
    rep.param_bytes = rep.param_count * 2 * 4;
    return rep;
}

int64_t count_params(const ArchSpec& spec) { return estimate(spec).param_count; }

// ---- builders ----------------------------------------------------------------

namespace {

class Builder {
public:
    explicit Builder(std::string name, int64_t batch) {
        spec_.name = std::move(name);
        spec_.batch = batch;
    }

    std::string input(const std::string& n, int64_t ch, std::vector<int64_t> extent,
                      bool per_volume = false) {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Input;
        l.channels = ch;
        l.extent = std::move(extent);
        l.per_volume = per_volume;
        return push(std::move(l));
    }
    std::string conv(const std::string& n, int64_t out, int64_t k = 3,
                     const std::string& src = "") {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Conv;
        l.channels = out;
        l.kernel = k;
        if (!src.empty()) l.srcs = {src};
        return push(std::move(l));
    }
    std::string norm(const std::string& n) {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Norm;
        return push(std::move(l));
    }
    // conv3 + norm pair; returns the norm layer name.
    std::string cn(const std::string& base, int64_t out, const std::string& src = "") {
        conv(base + ".conv", out, 3, src);
        return norm(base + ".norm");
    }
    std::string pool(const std::string& n, int64_t stride, const std::string& src = "") {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Pool;
        l.stride = stride;
        if (!src.empty()) l.srcs = {src};
        return push(std::move(l));
    }
    std::string pool_to(const std::string& n, std::vector<int64_t> target,
                        const std::string& src = "") {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Pool;
        l.target = std::move(target);
        if (!src.empty()) l.srcs = {src};
        return push(std::move(l));
    }
    std::string up(const std::string& n, int64_t factor, const std::string& src = "") {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Upsample;
        l.factor = factor;
        if (!src.empty()) l.srcs = {src};
        return push(std::move(l));
    }
    std::string up_to(const std::string& n, std::vector<int64_t> target,
                      const std::string& src = "") {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Upsample;
        l.target = std::move(target);
        if (!src.empty()) l.srcs = {src};
        return push(std::move(l));
    }
    std::string concat(const std::string& n, std::vector<std::string> srcs) {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Concat;
        l.srcs = std::move(srcs);
        return push(std::move(l));
    }
    std::string add(const std::string& n, std::vector<std::string> srcs) {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Add;
        l.srcs = std::move(srcs);
        return push(std::move(l));
    }
    std::string attend(const std::string& n, const std::string& feat3d, const std::string& query) {
        LayerSpec l;
        l.name = n;
        l.kind = LayerKind::Attend;
        l.srcs = {feat3d, query};
        return push(std::move(l));
    }
    std::string conv1(const std::string& n, int64_t out, const std::string& src = "") {
        return conv(n, out, 1, src);
    }

    ArchSpec take() { return std::move(spec_); }

private:
    std::string push(LayerSpec l) {
        std::string n = l.name;
        spec_.layers.push_back(std::move(l));
        return n;
    }
    ArchSpec spec_;
};

// Five-scale U-Net, two conv+norm per stage, upsample + conv+norm + skip
// concat + two conv+norm per decoder stage, 1x1 head.
ArchSpec unet_arch(const std::string& name, int spatial_dims, std::vector<int64_t> ch,
                   int64_t classes, int64_t extent, int64_t batch) {
    Builder b(name, batch);
    b.input("in", 1, std::vector<int64_t>((size_t)spatial_dims, extent));
    std::vector<std::string> skip(ch.size());
    for (size_t s = 0; s < ch.size(); ++s) {
        const std::string base = "enc" + std::to_string(s + 1);
        b.cn(base + ".a", ch[s]);
        skip[s] = b.cn(base + ".b", ch[s]);
        if (s + 1 < ch.size()) b.pool(base + ".pool", 2);
    }
    for (size_t s = ch.size() - 1; s-- > 0;) {
        const std::string base = "dec" + std::to_string(s + 1);
        b.up(base + ".up", 2);
        std::string u = b.cn(base + ".upconv", ch[s]);
        b.concat(base + ".cat", {u, skip[s]});
        b.cn(base + ".a", ch[s]);
        b.cn(base + ".b", ch[s]);
    }
    b.conv1("head", classes);
    return b.take();
}

std::string res_block(Builder& b, const std::string& base, const std::string& in, int64_t cin,
                      int64_t cout) {
    b.cn(base + ".a", cout, in);
    std::string main = b.cn(base + ".b", cout);
    std::string skip = cin == cout ? in : b.conv1(base + ".skip", cout, in);
    return b.add(base + ".add", {main, skip});
}

}  // namespace

ArchSpec scaa_3d_encoder_arch(const ScaaConfig& cfg, int64_t extent) {
    cfg.validate();
    SCAA_CHECK(extent % 64 == 0, "memest: volume extent ", extent, " is not divisible by 64");
    Builder b("scaa3dEncoder", 1);
    b.input("in", 1, {extent, extent, extent});
    b.pool("down", 2);
    b.conv("stem.conv", cfg.ch3d[0], 3);
    std::string cur = b.norm("stem.norm");
    int64_t c_in = cfg.ch3d[0];
    for (int s = 0; s < 4; ++s) {
        const std::string base = "stage" + std::to_string(s + 1);
        cur = res_block(b, base + ".block1", cur, c_in, cfg.ch3d[(size_t)s]);
        cur = res_block(b, base + ".block2", cur, cfg.ch3d[(size_t)s], cfg.ch3d[(size_t)s]);
        cur = b.pool(base + ".pool", 2, cur);
        c_in = cfg.ch3d[(size_t)s];
    }
    b.pool_to("globe", {1, 1, 1}, cur);
    b.up("aux.up", 16, cur);
    b.conv1("aux.conv", cfg.num_classes);
    return b.take();
}

ArchSpec scaa_2d_path_arch(const ScaaConfig& cfg, int64_t extent) {
    cfg.validate();
    SCAA_CHECK(extent % 64 == 0, "memest: volume extent ", extent, " is not divisible by 64");
    Builder b("scaa2dPath", 4);
    b.input("slice", 1, {extent, extent});
    std::array<std::string, 4> f3d;
    if (cfg.use_attention())
        for (int k = 0; k < 4; ++k) {
            const int64_t e3 = extent >> (k + 2);
            f3d[(size_t)k] = b.input("f3d_s" + std::to_string(k + 2), cfg.ch3d[(size_t)k],
                                     {e3, e3, e3}, true);
        }
    if (cfg.use_globe()) b.input("globe", cfg.ch3d[3], {1, 1}, true);

    std::array<std::string, 5> f2d;
    std::string cur = "slice";
    for (int s = 0; s < 5; ++s) {
        const std::string base = "enc" + std::to_string(s + 1);
        b.cn(base + ".a", cfg.ch2d[(size_t)s], cur);
        f2d[(size_t)s] = b.cn(base + ".b", cfg.ch2d[(size_t)s]);
        if (s < 4) cur = b.pool(base + ".pool", 2);
    }

    std::array<std::string, 5> fused;
    fused[0] = f2d[0];
    for (int k = 0; k < 4; ++k) {
        if (!cfg.use_attention()) {
            fused[(size_t)(k + 1)] = f2d[(size_t)(k + 1)];
            continue;
        }
        const std::string base = "msfa.s" + std::to_string(k + 2);
        const int64_t e3 = extent >> (k + 2);
        const int64_t m = cfg.learned_attention() ? cfg.heads[(size_t)k] : 1;
        const int64_t P = std::min(cfg.pool_hw[(size_t)k], e3);
        std::vector<std::string> aggs;
        for (int64_t h = 0; h < m; ++h) {
            const std::string hb = base + ".head" + std::to_string(h);
            std::string query = f2d[(size_t)(k + 1)];
            if (cfg.learned_attention()) {
                b.conv1(hb + ".q", cfg.embed[(size_t)k], f2d[(size_t)(k + 1)]);
                query = b.pool_to(hb + ".qpool", {P, P});
                b.conv1(hb + ".k", cfg.embed[(size_t)k], f3d[(size_t)k]);
                b.pool_to(hb + ".kpool", {e3, P, P});
            }
            aggs.push_back(b.attend(hb + ".agg", f3d[(size_t)k], query));
        }
        std::string mixed =
            b.conv1(base + ".mix", cfg.ch3d[(size_t)k],
                    aggs.size() == 1 ? aggs[0] : b.concat(base + ".heads", aggs));
        std::string upd = b.up(base + ".up", 2, mixed);
        b.concat(base + ".cat", {f2d[(size_t)(k + 1)], upd});
        b.cn(base + ".fuse1", cfg.ch_fused[(size_t)(k + 1)]);
        fused[(size_t)(k + 1)] = b.cn(base + ".fuse2", cfg.ch_fused[(size_t)(k + 1)]);
    }

    auto fused_ch = [&](int idx) {
        return idx == 0 || !cfg.use_attention() ? cfg.ch2d[(size_t)idx]
                                                : cfg.ch_fused[(size_t)idx];
    };
    cur = fused[4];
    for (int k = 3; k >= 0; --k) {
        const std::string base = "dec" + std::to_string(k + 1);
        std::string u = b.up(base + ".up", 2, cur);
        b.concat(base + ".cat", {u, fused[(size_t)k]});
        b.cn(base + ".a", fused_ch(k));
        cur = b.cn(base + ".b", fused_ch(k));
    }
    if (cfg.use_globe()) {
        std::string g = b.up_to("globe.bcast", {extent, extent}, "globe");
        cur = b.concat("headcat", {cur, g});
    }
    b.conv1("head", cfg.num_classes, cur);
    return b.take();
}

ArchSpec builtin_arch(const std::string& name) {
    if (name == "unet2d") return unet_arch("unet2d", 2, {64, 128, 256, 512, 1024}, 11, 256, 4);
    if (name == "unet3d") return unet_arch("unet3d", 3, {16, 32, 64, 128, 256}, 11, 256, 1);
    if (name == "scaa3dEncoder") return scaa_3d_encoder_arch(ScaaConfig::paper());
    if (name == "scaa2dPath") return scaa_2d_path_arch(ScaaConfig::paper());
    fail("memest: unknown architecture '", name,
         "' (expected unet2d|unet3d|scaa3dEncoder|scaa2dPath)");
}

// ---- text format -------------------------------------------------------------
//
//   arch <name>
//   batch <n>
//   layer <name> <kind> [src=a,b] [ch=N] [k=N] [s=N] [f=N] [to=d,h,w]
//         [extent=d,h,w] [per=volume]

namespace {

std::vector<int64_t> parse_int_list(const std::string& s, const std::string& where) {
    std::vector<int64_t> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        SCAA_CHECK(!tok.empty(), "memest: bad integer list '", s, "' in ", where);
        size_t pos = 0;
        int64_t v = 0;
        try {
            v = std::stoll(tok, &pos);
        } catch (const std::exception&) {
            fail("memest: bad integer '", tok, "' in ", where);
        }
        SCAA_CHECK(pos == tok.size(), "memest: bad integer '", tok, "' in ", where);
        out.push_back(v);
    }
    SCAA_CHECK(!out.empty(), "memest: empty integer list in ", where);
    return out;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

}  // namespace

ArchSpec read_arch_file(const std::string& path) {
    std::ifstream in(path);
    SCAA_CHECK(in.good(), "memest: cannot open '", path, "'");
    ArchSpec spec;
    spec.name = "custom";
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string where = path + ":" + std::to_string(line_no);
        auto toks = split_ws(line);
        if (toks.empty() || toks[0][0] == '#') continue;
        if (toks[0] == "arch") {
            SCAA_CHECK(toks.size() == 2, "memest: 'arch' expects one name at ", where);
            spec.name = toks[1];
        } else if (toks[0] == "batch") {
            SCAA_CHECK(toks.size() == 2, "memest: 'batch' expects one integer at ", where);
            spec.batch = parse_int_list(toks[1], where)[0];
        } else if (toks[0] == "layer") {
            SCAA_CHECK(toks.size() >= 3, "memest: 'layer' expects name and kind at ", where);
            LayerSpec l;
            l.name = toks[1];
            l.kind = parse_layer_kind(toks[2]);
            for (size_t i = 3; i < toks.size(); ++i) {
                const auto eq = toks[i].find('=');
                SCAA_CHECK(eq != std::string::npos, "memest: expected key=value, got '", toks[i],
                           "' at ", where);
                const std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
                if (key == "src") {
                    std::stringstream ss(val);
                    std::string s;
                    while (std::getline(ss, s, ',')) l.srcs.push_back(s);
                } else if (key == "ch") {
                    l.channels = parse_int_list(val, where)[0];
                } else if (key == "k") {
                    l.kernel = parse_int_list(val, where)[0];
                } else if (key == "s") {
                    l.stride = parse_int_list(val, where)[0];
                } else if (key == "f") {
                    l.factor = parse_int_list(val, where)[0];
                } else if (key == "to") {
                    l.target = parse_int_list(val, where);
                } else if (key == "extent") {
                    l.extent = parse_int_list(val, where);
                } else if (key == "per") {
                    SCAA_CHECK(val == "volume" || val == "item", "memest: per=volume|item at ",
                               where);
                    l.per_volume = val == "volume";
                } else {
                    fail("memest: unknown key '", key, "' at ", where);
                }
            }
            spec.layers.push_back(std::move(l));
        } else {
            fail("memest: unknown directive '", toks[0], "' at ", where);
        }
    }
    SCAA_CHECK(!spec.layers.empty(), "memest: no layers in '", path, "'");
    return spec;
}

void write_arch_file(const std::string& path, const ArchSpec& spec) {
    std::ofstream out(path);
    SCAA_CHECK(out.good(), "memest: cannot write '", path, "'");
    out << "arch " << spec.name << "\n";
    out << "batch " << spec.batch << "\n";
    for (const auto& l : spec.layers) {
        out << "layer " << l.name << " " << layer_kind_name(l.kind);
        if (!l.srcs.empty()) {
            out << " src=";
            for (size_t i = 0; i < l.srcs.size(); ++i) out << (i ? "," : "") << l.srcs[i];
        }
        if (l.kind == LayerKind::Input || l.kind == LayerKind::Conv) out << " ch=" << l.channels;
        if (l.kind == LayerKind::Conv) out << " k=" << l.kernel << " s=" << l.stride;
        if (l.kind == LayerKind::Pool && l.target.empty()) out << " s=" << l.stride;
        if (l.kind == LayerKind::Upsample && l.target.empty()) out << " f=" << l.factor;
        if (!l.target.empty()) {
            out << " to=";
            for (size_t i = 0; i < l.target.size(); ++i) out << (i ? "," : "") << l.target[i];
        }
        if (!l.extent.empty()) {
            out << " extent=";
            for (size_t i = 0; i < l.extent.size(); ++i) out << (i ? "," : "") << l.extent[i];
        }
        if (l.per_volume) out << " per=volume";
        out << "\n";
    }
    SCAA_CHECK(out.good(), "memest: write failed for '", path, "'");
}

std::string format_mem_table(const MemReport& r) {
    char buf[256];
    std::string s;
    std::snprintf(buf, sizeof(buf), "%-28s %-9s %-20s %-4s %-6s %14s %12s\n", "layer", "kind",
                  "output", "mem", "per", "elements", "params");
    s += buf;
    for (const auto& l : r.layers) {
        const std::string shape = std::to_string(l.out_channels) + "x" + extent_str(l.extent);
        std::snprintf(buf, sizeof(buf), "%-28s %-9s %-20s %-4s %-6s %14lld %12lld\n",
                      l.name.c_str(), layer_kind_name(l.kind), shape.c_str(),
                      l.flagged ? "*" : "", l.per_item ? "item" : "vol",
                      (long long)l.elements, (long long)l.params);
        s += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "\narch %s  batch %lld\n"
                  "flagged elements    %lld per item, %lld per volume\n"
                  "activation bytes    %lld (%.3f GB, %.3f GiB)\n"
                  "parameters          %lld (%lld bytes with gradients)\n"
                  "estimate            %.3f GB\n",
                  r.arch.c_str(), (long long)r.batch, (long long)r.flagged_elements_per_item,
                  (long long)r.flagged_elements_per_volume, (long long)r.activation_bytes,
                  r.activation_gb(), r.activation_gib(), (long long)r.param_count,
                  (long long)r.param_bytes, r.estimate_gb());
    s += buf;
    return s;
}

std::string mem_report_csv(const MemReport& r) {
    std::string s = "layer,kind,channels,extent,flagged,per_item,elements,params\n";
    for (const auto& l : r.layers) {
        s += l.name + "," + layer_kind_name(l.kind) + "," + std::to_string(l.out_channels) + "," +
             extent_str(l.extent) + "," + (l.flagged ? "1" : "0") + "," +
             (l.per_item ? "1" : "0") + "," + std::to_string(l.elements) + "," +
             std::to_string(l.params) + "\n";
    }
    return s;
}

}  // namespace scaa
