#pragma once

// Training protocol: one volume per step. The 3D context is encoded once,
// a fixed number of slices is drawn without replacement, per-slice losses are
// pooled into one dice objective, and a single Adam update is applied.
// Slice sampling and augmentation draw from RNG streams derived from
// (seed, step) and (seed, epoch, volume), so resuming from a checkpoint at
// step k replays exactly the steps a continuous run would have taken.

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <functional>
#include <numeric>

#include "scaa/losses.hpp"
#include "scaa/model.hpp"
#include "scaa/phantom.hpp"

namespace scaa {

template <typename T>
struct AdamState {
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;
    std::vector<std::vector<T>> m, v;

    void init(const ParamStore<T>& ps) {
        m.assign(ps.count(), {});
        v.assign(ps.count(), {});
        for (size_t i = 0; i < ps.count(); ++i) {
            m[i].assign((size_t)ps.tensors()[i].size(), T(0));
            v[i].assign((size_t)ps.tensors()[i].size(), T(0));
        }
        t = 0;
    }

    void step(ParamStore<T>& ps) {
        SCAA_CHECK(m.size() == ps.count(), "AdamState: not initialized for this parameter set");
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, (double)t);
        const double bc2 = 1.0 - std::pow(beta2, (double)t);
        for (size_t i = 0; i < ps.count(); ++i) {
            auto& tensor = ps.tensors()[i];
            auto& val = tensor.mutable_value();
            SCAA_CHECK(m[i].size() == val.size(),
                       "AdamState: not initialized for this parameter set");
            const bool has_g = tensor.has_grad();
            const std::vector<T>* g = has_g ? &tensor.grad() : nullptr;
            for (size_t j = 0; j < val.size(); ++j) {
                const double gj = has_g ? (double)(*g)[j] : 0.0;
                const double mj = beta1 * (double)m[i][j] + (1.0 - beta1) * gj;
                const double vj = beta2 * (double)v[i][j] + (1.0 - beta2) * gj * gj;
                m[i][j] = (T)mj;
                v[i][j] = (T)vj;
                val[j] = (T)((double)val[j] - lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps));
            }
        }
    }
};

struct TrainConfig {
    double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int64_t epochs = 150;
    int64_t max_steps = 0;  // 0: no cap
    int64_t slices_per_step = 16;
    uint64_t seed = 0;
    bool augment = false;
    double elastic_magnitude = 2.0;
    int64_t elastic_grid = 5;
    double jitter_sigma = 0.01;
    int64_t jitter_max_shift = 2;
    int64_t checkpoint_every = 0;  // 0: final checkpoint only
    bool timing = false;           // wall_ms column stays 0 unless enabled
    DiceConfig dice;
};

struct StepStats {
    double l2d = 0, l3d = 0, total = 0;
};

namespace detail {

// One-hot reference for class `cls` (1-based) over the given voxel subset.
template <typename T>
std::vector<T> onehot_of(const std::vector<uint8_t>& labels, int cls) {
    std::vector<T> g(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) g[i] = labels[i] == cls ? T(1) : T(0);
    return g;
}

// Nearest-neighbor 2x label downsample (stride-2 subsampling).
inline std::vector<uint8_t> downsample_labels2x(const std::vector<uint8_t>& labels,
                                                const std::array<int64_t, 3>& dims) {
    const int64_t D = dims[0] / 2, H = dims[1] / 2, W = dims[2] / 2;
    std::vector<uint8_t> out((size_t)(D * H * W));
    for (int64_t z = 0; z < D; ++z)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                out[(size_t)((z * H + y) * W + x)] =
                    labels[(size_t)(((2 * z) * dims[1] + 2 * y) * dims[2] + 2 * x)];
    return out;
}

}  // namespace detail

// Builds the full per-step loss (pooled slice dice + auxiliary 3D dice).
// Exposed separately so gradient checks can run the identical graph.
template <typename T>
struct StepLoss {
    Tensor<T> l2d, l3d, total;
};

template <typename T>
StepLoss<T> step_loss(const ScaaModel<T>& model, const VolumeSample& sample,
                      const std::vector<int64_t>& slice_zs, const DiceConfig& dice,
                      std::vector<AttentionRecord>* records = nullptr) {
    SCAA_CHECK(!sample.labels.empty(), "step_loss: volume '", sample.id, "' has no labels");
    SCAA_CHECK(sample.num_classes == model.config().num_classes, "step_loss: volume '", sample.id,
               "' has ", sample.num_classes, " classes, model expects ",
               model.config().num_classes);
    const int64_t C = model.config().num_classes;
    const int64_t HW = sample.dims[1] * sample.dims[2];

    Tensor<T> volume = model.prepare_volume(sample);
    typename ScaaModel<T>::Context ctx = model.encode_3d(volume);

    // Slice masks, kept per class for pooling.
    std::vector<std::vector<Tensor<T>>> mask_parts((size_t)C);
    std::vector<std::vector<uint8_t>> label_parts;
    for (int64_t z : slice_zs) {
        Tensor<T> masks = model.forward_slice(ScaaModel<T>::take_slice(volume, z), ctx, z, records);
        for (int64_t c = 0; c < C; ++c)
            mask_parts[(size_t)c].push_back(flatten(slice0(masks, c)));
        label_parts.emplace_back(sample.labels.begin() + z * HW,
                                 sample.labels.begin() + (z + 1) * HW);
    }
    std::vector<uint8_t> pooled_labels;
    for (const auto& p : label_parts) pooled_labels.insert(pooled_labels.end(), p.begin(), p.end());

    std::vector<Tensor<T>> masks2d, refs2d;
    for (int64_t c = 0; c < C; ++c) {
        masks2d.push_back(mask_parts[(size_t)c].size() == 1 ? mask_parts[(size_t)c][0]
                                                            : concat(mask_parts[(size_t)c], 0));
        refs2d.push_back(Tensor<T>::from_vector(
            {(int64_t)pooled_labels.size()}, detail::onehot_of<T>(pooled_labels, (int)c + 1)));
    }
    StepLoss<T> out;
    out.l2d = dice_loss(masks2d, refs2d, dice);

    const auto ds_labels = detail::downsample_labels2x(sample.labels, sample.dims);
    Tensor<T> aux_probs = sigmoid(ctx.aux_logits);
    std::vector<Tensor<T>> masks3d, refs3d;
    for (int64_t c = 0; c < C; ++c) {
        masks3d.push_back(flatten(slice0(aux_probs, c)));
        refs3d.push_back(Tensor<T>::from_vector({(int64_t)ds_labels.size()},
                                                detail::onehot_of<T>(ds_labels, (int)c + 1)));
    }
    out.l3d = dice_loss(masks3d, refs3d, dice);
    out.total = add(out.l2d, out.l3d);
    return out;
}

// Deterministic slice subset for a given step.
inline std::vector<int64_t> sample_slices(uint64_t seed, int64_t step, int64_t depth,
                                          int64_t count) {
    Rng rng(mix_seed(seed, 0x51ce, (uint64_t)step));
    return rng.sample_without_replacement(depth, std::min(count, depth));
}

template <typename T>
StepStats train_step(ScaaModel<T>& model, const VolumeSample& sample, int64_t step,
                     const TrainConfig& cfg, AdamState<T>& adam) {
    const auto zs = sample_slices(cfg.seed, step, sample.dims[0], cfg.slices_per_step);
    StepLoss<T> loss = step_loss(model, sample, zs, cfg.dice);
    StepStats stats{(double)loss.l2d.item(), (double)loss.l3d.item(), (double)loss.total.item()};
    SCAA_CHECK(std::isfinite(stats.total), "train_step: non-finite loss at step ", step, " (l2d=",
               stats.l2d, ", l3d=", stats.l3d, ")");
    loss.total.backward();
    adam.step(model.params());
    model.params().zero_grad();
    return stats;
}

// Augmented copy of a dataset sample for one (epoch, volume) pass.
inline VolumeSample augment_sample(const VolumeSample& in, const TrainConfig& cfg, int64_t epoch,
                                   int64_t vol_index) {
    VolumeSample v = in;
    const uint64_t s = mix_seed(cfg.seed, (uint64_t)epoch, (uint64_t)vol_index);
    elastic_deform(v, cfg.elastic_magnitude, cfg.elastic_grid, mix_seed(s, 1));
    jitter(v, cfg.jitter_sigma, cfg.jitter_max_shift, mix_seed(s, 2));
    return v;
}

// Full training loop. `on_step(step, stats, wall_ms)` fires after every
// update; `on_checkpoint(step)` fires when a checkpoint is due (the caller
// writes it). `start_step` resumes a run mid-schedule.
template <typename T>
int64_t train(ScaaModel<T>& model, const std::vector<VolumeSample>& dataset,
              const TrainConfig& cfg, AdamState<T>& adam,
              const std::function<void(int64_t, const StepStats&, int64_t)>& on_step,
              const std::function<void(int64_t)>& on_checkpoint = {}, int64_t start_step = 0) {
    SCAA_CHECK(!dataset.empty(), "train: empty dataset");
    const int64_t n = (int64_t)dataset.size();
    const int64_t total_steps = cfg.max_steps > 0
                                    ? std::min(cfg.max_steps, cfg.epochs * n)
                                    : cfg.epochs * n;
    int64_t step = start_step;
    while (step < total_steps) {
        const int64_t epoch = step / n;
        std::vector<int64_t> order(dataset.size());
        std::iota(order.begin(), order.end(), 0);
        Rng erng(mix_seed(cfg.seed, 0xe90c, (uint64_t)epoch));
        erng.shuffle(order);
        for (int64_t pos = step % n; pos < n && step < total_steps; ++pos) {
            const int64_t vi = order[(size_t)pos];
            const auto t0 = std::chrono::steady_clock::now();
            StepStats stats;
            if (cfg.augment) {
                VolumeSample aug = augment_sample(dataset[(size_t)vi], cfg, epoch, vi);
                stats = train_step(model, aug, step, cfg, adam);
            } else {
                stats = train_step(model, dataset[(size_t)vi], step, cfg, adam);
            }
            ++step;
            int64_t wall_ms = 0;
            if (cfg.timing)
                wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
            if (on_step) on_step(step, stats, wall_ms);
            if (on_checkpoint && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 &&
                step < total_steps)
                on_checkpoint(step);
        }
    }
    return step;
}

// ---- inference --------------------------------------------------------------

struct InferResult {
    VolumeSample pred;  // labels only
    std::vector<AttentionRecord> attention;
};

template <typename T>
InferResult infer(const ScaaModel<T>& model, const VolumeSample& vol, bool collect_attention) {
    NoGradGuard ng;
    const int64_t C = model.config().num_classes;
    const int64_t D = vol.dims[0], H = vol.dims[1], W = vol.dims[2];
    InferResult res;
    res.pred.id = vol.id;
    res.pred.dims = vol.dims;
    res.pred.spacing = vol.spacing;
    res.pred.num_classes = C;
    res.pred.labels.assign((size_t)(D * H * W), 0);

    Tensor<T> volume = model.prepare_volume(vol);
    auto ctx = model.encode_3d(volume);
    for (int64_t z = 0; z < D; ++z) {
        Tensor<T> masks = model.forward_slice(ScaaModel<T>::take_slice(volume, z), ctx, z,
                                              collect_attention ? &res.attention : nullptr);
        const auto& mv = masks.value();
        for (int64_t p = 0; p < H * W; ++p) {
            int best = 0;
            T best_v = mv[(size_t)p];
            for (int c = 1; c < (int)C; ++c) {
                const T v = mv[(size_t)(c * H * W + p)];
                if (v > best_v) {
                    best_v = v;
                    best = c;
                }
            }
            res.pred.labels[(size_t)(z * H * W + p)] =
                best_v >= T(0.5) ? (uint8_t)(best + 1) : 0;
        }
    }
    return res;
}

// ---- finite-difference gradient checking ------------------------------------

struct GradCheckOptions {
    int64_t samples_per_tensor = 50;
    double step_scale = 1e-6;   // h = step_scale * max(1, |value|)
    double tolerance = 1e-4;
    double denom_floor = 1e-3;  // rel = |a-n| / max(|a|, |n|, floor)
    uint64_t seed = 1;
};

struct GradCheckEntry {
    std::string name;
    double max_rel = 0.0;
    double max_abs = 0.0;
    int64_t checked = 0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool all_pass = true;
    double tolerance = 0.0;
};

// `loss_fn` must rebuild the loss graph from the current parameter values.
template <typename LossFn>
GradCheckReport grad_check(ParamStore<double>& ps, LossFn&& loss_fn, const GradCheckOptions& opt) {
    GradCheckReport report;
    report.tolerance = opt.tolerance;

    ps.zero_grad();
    Tensor<double> loss = loss_fn();
    loss.backward();
    std::vector<std::vector<double>> analytic(ps.count());
    for (size_t i = 0; i < ps.count(); ++i)
        analytic[i] = ps.tensors()[i].has_grad()
                          ? ps.tensors()[i].grad()
                          : std::vector<double>((size_t)ps.tensors()[i].size(), 0.0);
    ps.zero_grad();

    Rng rng(mix_seed(opt.seed, 0x9cad));
    for (size_t i = 0; i < ps.count(); ++i) {
        GradCheckEntry e;
        e.name = ps.names()[i];
        auto& val = ps.tensors()[i].mutable_value();
        const int64_t n = (int64_t)val.size();
        std::vector<int64_t> coords;
        if (n <= opt.samples_per_tensor) {
            coords.resize((size_t)n);
            std::iota(coords.begin(), coords.end(), 0);
        } else {
            coords = rng.sample_without_replacement(n, opt.samples_per_tensor);
        }
        for (int64_t c : coords) {
            const double v0 = val[(size_t)c];
            NoGradGuard ng;
            const auto probe = [&](double h) {
                val[(size_t)c] = v0 + h;
                const double lp = loss_fn().item();
                val[(size_t)c] = v0 - h;
                const double lm = loss_fn().item();
                val[(size_t)c] = v0;
                return (lp - lm) / (2.0 * h);
            };
            const double a = analytic[i][(size_t)c];
            const double h0 = opt.step_scale * std::max(1.0, std::abs(v0));
            double abs_err = std::numeric_limits<double>::infinity();
            double rel = std::numeric_limits<double>::infinity();
            // relu/pool kinks make the loss piecewise-smooth: a kink inside
            // [v0-h, v0+h] corrupts the central difference even where the
            // analytic gradient is exact. Shrinking h moves the interval off
            // the kink, so only genuine mismatches persist at every scale.
            for (double h : {h0, h0 / 8.0, h0 / 64.0}) {
                const double numeric = probe(h);
                const double err = std::abs(a - numeric);
                const double r =
                    err / std::max({std::abs(a), std::abs(numeric), opt.denom_floor});
                if (r < rel) {
                    rel = r;
                    abs_err = err;
                }
                if (rel < opt.tolerance) break;
            }
            e.max_abs = std::max(e.max_abs, abs_err);
            e.max_rel = std::max(e.max_rel, rel);
            ++e.checked;
        }
        e.pass = e.max_rel < opt.tolerance;
        report.all_pass = report.all_pass && e.pass;
        report.entries.push_back(std::move(e));
    }
    return report;
}

// End-to-end check of the whole model graph at minimal widths, 64^3 phantom,
// full training objective over two slices.
GradCheckReport grad_check_micro(Variant variant, const GradCheckOptions& opt);

}  // namespace scaa
