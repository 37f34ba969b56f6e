#pragma once

// Dual-branch segmentation model: a 3D context encoder over the full volume
// feeds per-scale depth attention that augments a 2D per-slice U-Net.
//
// Scale layout for a D x H x W volume (extents divisible by 64):
//   2D encoder: F2D_i at H/2^(i-1) x W/2^(i-1), i = 1..5
//   3D encoder: volume is first halved, then pooled per stage, so
//               F3D_i sits at D/2^i x H/2^i x W/2^i, i = 2..5
// Each fusion scale i pools query/key maps to a shared H' x W', scores every
// depth position of F3D_i against the slice query, and mixes the depth-
// weighted 3D features back into the 2D stream.

#include <array>
#include <map>
#include <optional>

#include "scaa/nn.hpp"
#include "scaa/volume.hpp"

namespace scaa {

enum class Variant { CA, CCA, SCAA, SCAA_STAR };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::CA: return "ca";
        case Variant::CCA: return "cca";
        case Variant::SCAA: return "scaa";
        case Variant::SCAA_STAR: return "scaa-star";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    if (s == "ca") return Variant::CA;
    if (s == "cca") return Variant::CCA;
    if (s == "scaa") return Variant::SCAA;
    if (s == "scaa-star") return Variant::SCAA_STAR;
    fail("unknown variant '", s, "' (expected ca|cca|scaa|scaa-star)");
}

struct ScaaConfig {
    int64_t num_classes = 11;
    Variant variant = Variant::SCAA;
    // Stage output channels of the 3D encoder (scales 2..5).
    std::array<int64_t, 4> ch3d{24, 32, 64, 64};
    // 2D encoder block channels (scales 1..5).
    std::array<int64_t, 5> ch2d{64, 96, 128, 192, 256};
    // Fused feature channels per scale; index 0 is only used by the decoder.
    std::array<int64_t, 5> ch_fused{64, 96, 128, 192, 256};
    // Attention embedding channels and head counts (scales 2..5).
    std::array<int64_t, 4> embed{2, 2, 4, 4};
    std::array<int64_t, 4> heads{2, 2, 4, 4};
    // Square pooled query/key extent H'=W' per scale; clamped to the actual
    // key map extent for small volumes.
    std::array<int64_t, 4> pool_hw{16, 8, 4, 4};
    // Intensity window mapped to [-1, 1] before the network sees the volume.
    double window_lo = 0.0, window_hi = 1.0;

    bool use_globe() const { return variant == Variant::CA || variant == Variant::SCAA; }
    bool use_attention() const { return variant != Variant::CA; }
    bool learned_attention() const {
        return variant == Variant::SCAA || variant == Variant::SCAA_STAR;
    }

    void validate() const {
        SCAA_CHECK(num_classes >= 1, "config: num_classes must be >= 1");
        SCAA_CHECK(window_hi > window_lo, "config: empty intensity window");
        for (auto v : ch3d) SCAA_CHECK(v >= 1, "config: ch3d entries must be >= 1");
        for (auto v : ch2d) SCAA_CHECK(v >= 1, "config: ch2d entries must be >= 1");
        for (auto v : ch_fused) SCAA_CHECK(v >= 1, "config: ch_fused entries must be >= 1");
        for (auto v : embed) SCAA_CHECK(v >= 1, "config: embed entries must be >= 1");
        for (auto v : heads) SCAA_CHECK(v >= 1, "config: heads entries must be >= 1");
        for (auto v : pool_hw) SCAA_CHECK(v >= 1, "config: pool_hw entries must be >= 1");
        SCAA_CHECK(ch_fused[0] == ch2d[0],
                   "config: ch_fused[0] must equal ch2d[0] (scale 1 is not fused)");
    }

    // Full-size configuration used for the reference parameter/memory figures.
    static ScaaConfig paper(int64_t classes = 11) {
        ScaaConfig c;
        c.num_classes = classes;
        return c;
    }

    // Small configuration that trains in minutes on a CPU.
    static ScaaConfig desk(int64_t classes = 3) {
        ScaaConfig c;
        c.num_classes = classes;
        c.ch3d = {8, 12, 16, 16};
        c.ch2d = {16, 24, 32, 48, 64};
        c.ch_fused = {16, 24, 32, 48, 64};
        c.embed = {2, 2, 4, 4};
        c.heads = {2, 2, 2, 2};
        c.pool_hw = {8, 8, 4, 4};
        return c;
    }

    // Minimal widths for finite-difference checking of the whole graph.
    static ScaaConfig micro(int64_t classes = 2) {
        ScaaConfig c;
        c.num_classes = classes;
        c.ch3d = {1, 1, 1, 1};
        c.ch2d = {2, 2, 2, 2, 2};
        c.ch_fused = {2, 2, 2, 2, 2};
        c.embed = {1, 1, 1, 1};
        c.heads = {1, 1, 1, 1};
        c.pool_hw = {2, 2, 2, 2};
        return c;
    }
};

// Per-head depth attention weights captured during a forward pass.
struct AttentionRecord {
    int scale = 0;        // 2..5
    int64_t slice_z = 0;  // full-resolution slice index
    int head = 0;
    std::vector<double> weights;  // one entry per depth position of F3D_scale
};

template <typename T>
class ScaaModel {
public:
    struct Context {
        std::array<Tensor<T>, 4> f3d;  // scales 2..5
        Tensor<T> globe;               // [ch3d[3]]
        Tensor<T> aux_logits;          // [C, D/2, H/2, W/2]
    };

    struct MsfaOut {
        Tensor<T> fused;
        std::vector<Tensor<T>> head_agg;  // per-head depth-aggregated 3D features
    };

    ScaaModel(ScaaConfig cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(mix_seed(seed, 0x5caaULL));
        // 3D context encoder.
        stem_conv_ = Conv3dLayer<T>::create(params_, "enc3d.stem.conv", 1, cfg_.ch3d[0], 3, 1, rng);
        stem_norm_ = InstanceNormLayer<T>::create(params_, "enc3d.stem.norm", cfg_.ch3d[0]);
        int64_t c_in = cfg_.ch3d[0];
        for (int s = 0; s < 4; ++s) {
            const std::string base = "enc3d.stage" + std::to_string(s + 1);
            res_[s][0] = ResidualBlock3D<T>::create(params_, base + ".block1", c_in, cfg_.ch3d[s], rng);
            res_[s][1] =
                ResidualBlock3D<T>::create(params_, base + ".block2", cfg_.ch3d[s], cfg_.ch3d[s], rng);
            c_in = cfg_.ch3d[s];
        }
        aux_conv_ = Conv3dLayer<T>::create(params_, "aux.conv", cfg_.ch3d[3], cfg_.num_classes, 1, 0,
                                           rng);
        // 2D per-slice encoder.
        c_in = 1;
        for (int s = 0; s < 5; ++s) {
            enc2d_[s] = ConvBlock2D<T>::create(params_, "enc2d.block" + std::to_string(s + 1), c_in,
                                               cfg_.ch2d[s], rng);
            c_in = cfg_.ch2d[s];
        }
        // Attention fusion, scales 2..5.
        if (cfg_.use_attention()) {
            for (int k = 0; k < 4; ++k) {
                const std::string base = "msfa.s" + std::to_string(k + 2);
                const int64_t c2 = cfg_.ch2d[k + 1], c3 = cfg_.ch3d[k];
                const int64_t m = n_heads(k);
                if (cfg_.learned_attention()) {
                    for (int64_t h = 0; h < m; ++h) {
                        const std::string hb = base + ".head" + std::to_string(h);
                        q_proj_[k].push_back(
                            Conv2dLayer<T>::create(params_, hb + ".q", c2, cfg_.embed[k], 1, 0, rng));
                        k_proj_[k].push_back(
                            Conv3dLayer<T>::create(params_, hb + ".k", c3, cfg_.embed[k], 1, 0, rng));
                    }
                }
                mix_[k] = Conv2dLayer<T>::create(params_, base + ".mix", m * c3, c3, 1, 0, rng);
                fuse1_[k] = ConvUnit2D<T>::create(params_, base + ".fuse1", c2 + c3,
                                                  cfg_.ch_fused[k + 1], rng);
                fuse2_[k] = ConvUnit2D<T>::create(params_, base + ".fuse2", cfg_.ch_fused[k + 1],
                                                  cfg_.ch_fused[k + 1], rng);
            }
        }
        // Decoder.
        for (int k = 3; k >= 0; --k) {
            const int64_t cin = fused_channels(k + 1) + fused_channels(k);
            dec_[k] = ConvBlock2D<T>::create(params_, "dec.block" + std::to_string(k + 1), cin,
                                             fused_channels(k), rng);
        }
        const int64_t head_in = fused_channels(0) + (cfg_.use_globe() ? cfg_.ch3d[3] : 0);
        final_conv_ = Conv2dLayer<T>::create(params_, "dec.final", head_in, cfg_.num_classes, 1, 0,
                                             rng);
    }

    const ScaaConfig& config() const { return cfg_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    // Number of heads actually instantiated at fusion scale index k (0..3).
    int64_t n_heads(int k) const { return cfg_.learned_attention() ? cfg_.heads[(size_t)k] : 1; }

    // Maps an intensity volume to a [-1,1]-normalized [1,D,H,W] tensor.
    Tensor<T> prepare_volume(const VolumeSample& v) const {
        SCAA_CHECK(!v.image.empty(), "prepare_volume: volume '", v.id, "' has no image data");
        const double lo = cfg_.window_lo, hi = cfg_.window_hi;
        std::vector<T> data(v.image.size());
        for (size_t i = 0; i < v.image.size(); ++i) {
            double x = (double)v.image[i];
            x = std::min(std::max(x, lo), hi);
            data[i] = (T)(2.0 * (x - lo) / (hi - lo) - 1.0);
        }
        return Tensor<T>::from_vector({1, v.dims[0], v.dims[1], v.dims[2]}, std::move(data));
    }

    Context encode_3d(const Tensor<T>& volume) const {
        SCAA_CHECK(volume.ndim() == 4 && volume.dim(0) == 1,
                   "encode_3d: expected [1,D,H,W] volume, got ", shape_str(volume.shape()));
        for (int i = 1; i <= 3; ++i)
            SCAA_CHECK(volume.dim((size_t)i) % 64 == 0, "encode_3d: extent ", volume.dim((size_t)i),
                       " of ", shape_str(volume.shape()), " is not divisible by 64");
        ++encode3d_calls_;
        const int64_t D = volume.dim(1), H = volume.dim(2), W = volume.dim(3);
        Tensor<T> x = adaptive_avg_pool(volume, {D / 2, H / 2, W / 2});
        x = relu(stem_norm_(stem_conv_(x)));
        Context ctx;
        for (int s = 0; s < 4; ++s) {
            x = res_[s][1](res_[s][0](x));
            x = maxpool(x, {2, 2, 2});
            ctx.f3d[(size_t)s] = x;
        }
        ctx.globe = reshape(adaptive_avg_pool(ctx.f3d[3], {1, 1, 1}), {cfg_.ch3d[3]});
        Tensor<T> up = ctx.f3d[3];
        for (int i = 0; i < 4; ++i) up = upsample_nearest2x(up, 3);
        ctx.aux_logits = aux_conv_(up);
        return ctx;
    }

    // Five per-scale feature maps of one slice, before fusion.
    std::array<Tensor<T>, 5> encode_2d(const Tensor<T>& slice) const {
        SCAA_CHECK(slice.ndim() == 3 && slice.dim(0) == 1, "encode_2d: expected [1,H,W] slice, got ",
                   shape_str(slice.shape()));
        std::array<Tensor<T>, 5> f;
        Tensor<T> x = slice;
        for (int s = 0; s < 5; ++s) {
            f[(size_t)s] = enc2d_[(size_t)s].features(x);
            if (s < 4) x = maxpool(f[(size_t)s], {2, 2});
        }
        return f;
    }

    // Depth attention + fusion at scale index k (scale = k+2). `z` is the
    // full-resolution slice index; `records` may be null.
    MsfaOut msfa(int k, const Tensor<T>& f2d, const Tensor<T>& f3d, int64_t z,
                 std::vector<AttentionRecord>* records) const {
        SCAA_CHECK(cfg_.use_attention(), "msfa: variant ", variant_name(cfg_.variant),
                   " has no attention path");
        const int64_t Dk = f3d.dim(1), H3 = f3d.dim(2), W3 = f3d.dim(3);
        const int64_t m = n_heads(k);
        std::vector<Tensor<T>> aggs;
        std::vector<Tensor<T>> head_agg;
        for (int64_t h = 0; h < m; ++h) {
            Tensor<T> att;  // [Dk]
            if (cfg_.learned_attention()) {
                const int64_t P = std::min({cfg_.pool_hw[(size_t)k], H3, W3});
                Tensor<T> q = adaptive_avg_pool(q_proj_[(size_t)k][(size_t)h](f2d), {P, P});
                Tensor<T> key = adaptive_avg_pool(k_proj_[(size_t)k][(size_t)h](f3d), {P, P});
                const int64_t E = cfg_.embed[(size_t)k];
                Tensor<T> qv = reshape(q, {E * P * P});
                Tensor<T> kv = reshape(permute(key, {1, 0, 2, 3}), {Dk, E * P * P});
                Tensor<T> r = mul_scalar(contract(kv, qv, "dj,j->d"),
                                         (T)(1.0 / std::sqrt((double)(E * P * P))));
                att = softmax(r, 0);
            } else {
                // Constant one-hot selection of the depth bin holding slice z.
                const int64_t scale = k + 2;
                int64_t idx = z >> scale;
                idx = std::min(std::max<int64_t>(idx, 0), Dk - 1);
                std::vector<T> onehot((size_t)Dk, T(0));
                onehot[(size_t)idx] = T(1);
                att = Tensor<T>::from_vector({Dk}, std::move(onehot));
            }
            if (records) {
                AttentionRecord rec;
                rec.scale = k + 2;
                rec.slice_z = z;
                rec.head = (int)h;
                rec.weights.assign(att.value().begin(), att.value().end());
                records->push_back(std::move(rec));
            }
            Tensor<T> agg = contract(f3d, att, "cdhw,d->chw");
            head_agg.push_back(agg);
            aggs.push_back(agg);
        }
        Tensor<T> mixed = mix_[(size_t)k](m == 1 ? aggs[0] : concat(aggs, 0));
        Tensor<T> up = upsample_linear2x(mixed, 2);
        Tensor<T> fused = fuse2_[(size_t)k](fuse1_[(size_t)k](concat<T>({f2d, up}, 0)));
        return {fused, std::move(head_agg)};
    }

    // Per-class probability masks [C,H,W] for one slice.
    Tensor<T> forward_slice(const Tensor<T>& slice, const Context& ctx, int64_t z,
                            std::vector<AttentionRecord>* records = nullptr) const {
        auto f2d = encode_2d(slice);
        std::array<Tensor<T>, 5> fused;
        fused[0] = f2d[0];
        for (int k = 0; k < 4; ++k) {
            if (cfg_.use_attention())
                fused[(size_t)(k + 1)] =
                    msfa(k, f2d[(size_t)(k + 1)], ctx.f3d[(size_t)k], z, records).fused;
            else
                fused[(size_t)(k + 1)] = f2d[(size_t)(k + 1)];
        }
        Tensor<T> d = fused[4];
        for (int k = 3; k >= 0; --k)
            d = dec_[(size_t)k].features(concat<T>({upsample_nearest2x(d, 2), fused[(size_t)k]}, 0));
        if (cfg_.use_globe())
            d = concat<T>({d, broadcast_spatial(ctx.globe, {d.dim(1), d.dim(2)})}, 0);
        return sigmoid(final_conv_(d));
    }

    // Extracts slice z of a [1,D,H,W] volume tensor as [1,H,W].
    static Tensor<T> take_slice(const Tensor<T>& volume, int64_t z) {
        Tensor<T> v3 = reshape(volume, {volume.dim(1), volume.dim(2), volume.dim(3)});
        return reshape(slice0(v3, z), {1, volume.dim(2), volume.dim(3)});
    }

    int64_t encode3d_call_count() const { return encode3d_calls_; }

    // Closed-form parameter count; must match the registry exactly.
    static int64_t count_parameters(const ScaaConfig& cfg) {
        int64_t n = 0;
        n += cfg.ch3d[0] * 27 + cfg.ch3d[0] + 2 * cfg.ch3d[0];  // stem conv + norm
        int64_t c_in = cfg.ch3d[0];
        for (int s = 0; s < 4; ++s) {
            n += ResidualBlock3D<T>::parameter_count(c_in, cfg.ch3d[s]);
            n += ResidualBlock3D<T>::parameter_count(cfg.ch3d[s], cfg.ch3d[s]);
            c_in = cfg.ch3d[s];
        }
        n += cfg.ch3d[3] * cfg.num_classes + cfg.num_classes;  // aux head
        c_in = 1;
        for (int s = 0; s < 5; ++s) {
            n += ConvBlock2D<T>::parameter_count(c_in, cfg.ch2d[s]);
            c_in = cfg.ch2d[s];
        }
        if (cfg.use_attention()) {
            for (int k = 0; k < 4; ++k) {
                const int64_t c2 = cfg.ch2d[k + 1], c3 = cfg.ch3d[k], e = cfg.embed[k];
                const int64_t m = cfg.learned_attention() ? cfg.heads[k] : 1;
                if (cfg.learned_attention()) n += m * (e * c2 + e + e * c3 + e);
                n += c3 * (m * c3) + c3;  // mix
                const int64_t cf = cfg.ch_fused[k + 1];
                n += cf * (c2 + c3) * 9 + cf + 2 * cf;  // fuse1
                n += cf * cf * 9 + cf + 2 * cf;         // fuse2
            }
        }
        for (int k = 3; k >= 0; --k) {
            const int64_t cin = fused_channels_for(cfg, k + 1) + fused_channels_for(cfg, k);
            n += ConvBlock2D<T>::parameter_count(cin, fused_channels_for(cfg, k));
        }
        const int64_t head_in = fused_channels_for(cfg, 0) + (cfg.use_globe() ? cfg.ch3d[3] : 0);
        n += cfg.num_classes * head_in + cfg.num_classes;
        return n;
    }

private:
    int64_t fused_channels(int scale_idx) const { return fused_channels_for(cfg_, scale_idx); }

    static int64_t fused_channels_for(const ScaaConfig& cfg, int scale_idx) {
        if (scale_idx == 0 || !cfg.use_attention()) return cfg.ch2d[(size_t)scale_idx];
        return cfg.ch_fused[(size_t)scale_idx];
    }

    ScaaConfig cfg_;
    ParamStore<T> params_;
    Conv3dLayer<T> stem_conv_;
    InstanceNormLayer<T> stem_norm_;
    std::array<std::array<ResidualBlock3D<T>, 2>, 4> res_;
    Conv3dLayer<T> aux_conv_;
    std::array<ConvBlock2D<T>, 5> enc2d_;
    std::array<std::vector<Conv2dLayer<T>>, 4> q_proj_;
    std::array<std::vector<Conv3dLayer<T>>, 4> k_proj_;
    std::array<Conv2dLayer<T>, 4> mix_;
    std::array<ConvUnit2D<T>, 4> fuse1_, fuse2_;
    std::array<ConvBlock2D<T>, 4> dec_;
    Conv2dLayer<T> final_conv_;
    mutable int64_t encode3d_calls_ = 0;
};

}  // namespace scaa
