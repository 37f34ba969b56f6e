// Acceptance suite. Exercises the built toolkit end to end and prints one
// PASS/FAIL verdict line per criterion; the exit code is the number of
// failed criteria. Usage: acceptance <scaa-cli-path> <workdir>
//
// Tolerances are pinned here, next to each check, and are not configurable.

#include <scaa/io.hpp>
#include <scaa/memest.hpp>
#include <scaa/metrics.hpp>
#include <scaa/trainer.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace scaa;

namespace {

std::string g_cli;
fs::path g_work;

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

int run_cli(const std::string& args, const std::string& log_name) {
    const std::string log = (g_work / "logs" / log_name).string();
    const std::string cmd = g_cli + " " + args + " >> " + log + " 2>&1";
    {
        std::ofstream l(log, std::ios::app);
        l << "$ scaa " << args << "\n";
    }
    const int st = std::system(cmd.c_str());
    if (st == -1) return -1;
    return WIFEXITED(st) ? WEXITSTATUS(st) : 128;
}

std::map<std::string, std::string> snapshot_dir(const fs::path& dir) {
    std::map<std::string, std::string> files;
    if (!fs::exists(dir)) return files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        files[e.path().lexically_relative(dir).string()] = ss.str();
    }
    return files;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- finite differences ---------------------------------------------------

Tensor<double> rand_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v((size_t)numel(shape));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor<double>::from_vector(shape, std::move(v), true);
}

// Projects `out` to a scalar with fixed pseudo-random weights so every output
// coordinate influences the loss.
Tensor<double> project(const Tensor<double>& out, uint64_t seed) {
    Rng rng(mix_seed(seed, 0xacce));
    std::vector<double> w((size_t)numel(out.shape()));
    for (auto& x : w) x = rng.uniform(0.25, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    return sum_all(mul(out, Tensor<double>::from_vector(out.shape(), std::move(w))));
}

// Max relative error between analytic and central-difference gradients over
// every coordinate of every leaf.
double fd_max_rel(std::vector<Tensor<double>> leaves,
                  const std::function<Tensor<double>()>& f, double h = 1e-5) {
    for (auto& l : leaves) l.zero_grad();  // leaves are reused across probes
    Tensor<double> loss = project(f(), 7);
    loss.backward();
    std::vector<std::vector<double>> analytic;
    for (auto& l : leaves) analytic.push_back(l.grad());

    double worst = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& vals = leaves[li].mutable_value();
        for (size_t i = 0; i < vals.size(); ++i) {
            const double keep = vals[i];
            double up, dn;
            {
                NoGradGuard ng;
                vals[i] = keep + h;
                up = project(f(), 7).item();
                vals[i] = keep - h;
                dn = project(f(), 7).item();
                vals[i] = keep;
            }
            const double fd = (up - dn) / (2 * h);
            const double an = analytic[li][i];
            const double rel =
                std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// ---- loop-based attention oracle -------------------------------------------

std::vector<double> ref_conv1x1_2d(const std::vector<double>& x, int64_t C, int64_t HW,
                                   const std::vector<double>& w, const std::vector<double>& b,
                                   int64_t E) {
    std::vector<double> out((size_t)(E * HW), 0.0);
    for (int64_t e = 0; e < E; ++e)
        for (int64_t p = 0; p < HW; ++p) {
            double acc = b[(size_t)e];
            for (int64_t c = 0; c < C; ++c)
                acc += w[(size_t)(e * C + c)] * x[(size_t)(c * HW + p)];
            out[(size_t)(e * HW + p)] = acc;
        }
    return out;
}

// Adaptive mean pooling of the trailing two axes; bins [floor(o*in/out),
// ceil((o+1)*in/out)).
std::vector<double> ref_pool_hw(const std::vector<double>& x, int64_t lead, int64_t H, int64_t W,
                                int64_t P) {
    std::vector<double> out((size_t)(lead * P * P), 0.0);
    auto lo = [](int64_t o, int64_t in, int64_t outn) { return o * in / outn; };
    auto hi = [](int64_t o, int64_t in, int64_t outn) { return ((o + 1) * in + outn - 1) / outn; };
    for (int64_t l = 0; l < lead; ++l)
        for (int64_t oh = 0; oh < P; ++oh)
            for (int64_t ow = 0; ow < P; ++ow) {
                double acc = 0.0;
                int64_t n = 0;
                for (int64_t y = lo(oh, H, P); y < hi(oh, H, P); ++y)
                    for (int64_t z = lo(ow, W, P); z < hi(ow, W, P); ++z) {
                        acc += x[(size_t)((l * H + y) * W + z)];
                        ++n;
                    }
                out[(size_t)((l * P + oh) * P + ow)] = acc / (double)n;
            }
    return out;
}

struct OracleMsfa {
    std::vector<std::vector<double>> att;  // per head [Dk]
    std::vector<std::vector<double>> agg;  // per head [C3*H3*W3]
};

OracleMsfa oracle_msfa(const ScaaModel<double>& model, int k, const Tensor<double>& f2d,
                       const Tensor<double>& f3d) {
    const ScaaConfig& cfg = model.config();
    const int64_t C3 = f3d.dim(0), Dk = f3d.dim(1), H3 = f3d.dim(2), W3 = f3d.dim(3);
    const int64_t C2 = f2d.dim(0), H2 = f2d.dim(1), W2 = f2d.dim(2);
    const int64_t E = cfg.embed[(size_t)k];
    const int64_t P = std::min({cfg.pool_hw[(size_t)k], H3, W3});
    auto& ps = const_cast<ScaaModel<double>&>(model).params();

    OracleMsfa out;
    for (int64_t h = 0; h < cfg.heads[(size_t)k]; ++h) {
        const std::string base = "msfa.s" + std::to_string(k + 2) + ".head" + std::to_string(h);
        const auto qw = ps.get(base + ".q.w").value(), qb = ps.get(base + ".q.b").value();
        const auto kw = ps.get(base + ".k.w").value(), kb = ps.get(base + ".k.b").value();

        // query: 1x1 conv then pool to P x P, flattened to E*P*P
        auto qmap = ref_conv1x1_2d(f2d.value(), C2, H2 * W2, qw, qb, E);
        auto qv = ref_pool_hw(qmap, E, H2, W2, P);

        // keys: 1x1x1 conv (depth untouched) then pool each depth slab
        std::vector<double> kmap((size_t)(E * Dk * H3 * W3));
        for (int64_t e = 0; e < E; ++e)
            for (int64_t d = 0; d < Dk; ++d)
                for (int64_t p = 0; p < H3 * W3; ++p) {
                    double acc = kb[(size_t)e];
                    for (int64_t c = 0; c < C3; ++c)
                        acc += kw[(size_t)(e * C3 + c)] *
                               f3d.value()[(size_t)((c * Dk + d) * H3 * W3 + p)];
                    kmap[(size_t)((e * Dk + d) * H3 * W3 + p)] = acc;
                }
        auto kp = ref_pool_hw(kmap, E * Dk, H3, W3, P);  // [E,Dk,P,P]

        std::vector<double> r((size_t)Dk, 0.0);
        const double scale = 1.0 / std::sqrt((double)(E * P * P));
        for (int64_t d = 0; d < Dk; ++d) {
            double acc = 0.0;
            for (int64_t e = 0; e < E; ++e)
                for (int64_t p = 0; p < P * P; ++p)
                    acc += kp[(size_t)((e * Dk + d) * P * P + p)] * qv[(size_t)(e * P * P + p)];
            r[(size_t)d] = acc * scale;
        }
        const double m = *std::max_element(r.begin(), r.end());
        double denom = 0.0;
        std::vector<double> att((size_t)Dk);
        for (int64_t d = 0; d < Dk; ++d) denom += (att[(size_t)d] = std::exp(r[(size_t)d] - m));
        for (auto& a : att) a /= denom;

        std::vector<double> agg((size_t)(C3 * H3 * W3), 0.0);
        for (int64_t c = 0; c < C3; ++c)
            for (int64_t d = 0; d < Dk; ++d)
                for (int64_t p = 0; p < H3 * W3; ++p)
                    agg[(size_t)(c * H3 * W3 + p)] +=
                        att[(size_t)d] * f3d.value()[(size_t)((c * Dk + d) * H3 * W3 + p)];
        out.att.push_back(std::move(att));
        out.agg.push_back(std::move(agg));
    }
    return out;
}

ScaaConfig random_tiny_config(Rng& rng) {
    auto cfg = ScaaConfig::micro(2);
    cfg.variant = Variant::SCAA;
    const int64_t c3 = 1 + rng.uniform_int(3), c2 = 1 + rng.uniform_int(3);
    cfg.ch3d = {c3, c3, c3, c3};
    cfg.ch2d = {c2, c2, c2, c2, c2};
    cfg.ch_fused = cfg.ch2d;
    for (auto& e : cfg.embed) e = 1 + rng.uniform_int(3);
    for (auto& h : cfg.heads) h = 1 + rng.uniform_int(3);
    for (auto& p : cfg.pool_hw) p = 1 + rng.uniform_int(4);
    return cfg;
}

// ---- hd95 brute-force oracle -------------------------------------------------

std::vector<std::array<double, 3>> ref_boundary(const std::vector<uint8_t>& mask,
                                                const std::array<int64_t, 3>& dims,
                                                const std::array<double, 3>& sp, int cls) {
    auto at = [&](int64_t z, int64_t y, int64_t x) -> bool {
        if (z < 0 || y < 0 || x < 0 || z >= dims[0] || y >= dims[1] || x >= dims[2]) return false;
        return mask[(size_t)((z * dims[1] + y) * dims[2] + x)] == cls;
    };
    std::vector<std::array<double, 3>> pts;
    for (int64_t z = 0; z < dims[0]; ++z)
        for (int64_t y = 0; y < dims[1]; ++y)
            for (int64_t x = 0; x < dims[2]; ++x) {
                if (!at(z, y, x)) continue;
                if (!at(z - 1, y, x) || !at(z + 1, y, x) || !at(z, y - 1, x) || !at(z, y + 1, x) ||
                    !at(z, y, x - 1) || !at(z, y, x + 1))
                    pts.push_back({(double)z * sp[0], (double)y * sp[1], (double)x * sp[2]});
            }
    return pts;
}

std::optional<double> ref_hd95(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b,
                               const std::array<int64_t, 3>& dims,
                               const std::array<double, 3>& sp, int cls) {
    auto pa = ref_boundary(a, dims, sp, cls), pb = ref_boundary(b, dims, sp, cls);
    if (pa.empty() || pb.empty()) return std::nullopt;
    std::vector<double> pooled;
    auto directed = [&](const auto& from, const auto& to) {
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to) {
                const double dz = p[0] - q[0], dy = p[1] - q[1], dx = p[2] - q[2];
                best = std::min(best, dz * dz + dy * dy + dx * dx);
            }
            pooled.push_back(std::sqrt(best));
        }
    };
    directed(pa, pb);
    directed(pb, pa);
    std::sort(pooled.begin(), pooled.end());
    const double pos = 0.95 * (double)(pooled.size() - 1);
    const size_t i = (size_t)pos;
    if (i + 1 >= pooled.size()) return pooled.back();
    const double frac = pos - (double)i;
    return pooled[i] + frac * (pooled[i + 1] - pooled[i]);
}

// ---- shared toy-training state (criterion 7 feeds criterion 9) ---------------

struct ToyRun {
    bool trained = false;
    double mean_dsc = 0.0;
    std::vector<double> losses;
    std::vector<AttentionRecord> heldout_attention;
    std::array<int64_t, 3> dims{};
};

// Pinned toy-training knobs: sized for a single CPU core.
constexpr int64_t kToySteps = 220;
constexpr int64_t kToySlices = 4;
constexpr double kToyLr = 2e-3;
constexpr uint64_t kToySeed = 1;
constexpr int64_t kAblateSteps = 45;

}  // namespace

// ================================================================================

static bool criterion1() {
    std::puts("== criterion 1: memory-table reproduction ==");
    const double t0 = now_s();
    struct Row {
        const char* arch;
        double ref;
    };
    const Row rows[] = {
        {"unet2d", 2.86}, {"unet3d", 27.96}, {"scaa3dEncoder", 3.22}, {"scaa2dPath", 2.13}};
    bool ok = true;
    double total = 0.0;
    for (const auto& row : rows) {
        const MemReport r = estimate(builtin_arch(row.arch));
        const double dev = 100.0 * (r.estimate_gb() - row.ref) / row.ref;
        const bool within = std::abs(dev) <= 10.0;
        if (row.arch[0] == 's') total += r.estimate_gb();
        std::printf("  %-14s %7.3f GB  ref %6.2f GB  dev %+7.1f%%  %s\n", row.arch,
                    r.estimate_gb(), row.ref, dev, within ? "ok" : "OUT OF RANGE");
        ok = ok && within;
    }
    const double tdev = 100.0 * (total - 5.35) / 5.35;
    std::printf("  %-14s %7.3f GB  ref %6.2f GB  dev %+7.1f%%  %s\n", "scaa total", total, 5.35,
                tdev, std::abs(tdev) <= 10.0 ? "ok" : "OUT OF RANGE");
    ok = ok && std::abs(tdev) <= 10.0;
    const double el = now_s() - t0;
    std::printf("  elapsed %.3f s (budget 1 s)\n", el);
    ok = ok && el < 1.0;
    if (!ok)
        std::puts(
            "  analysis: the 3.22 GB reference equals the first residual stage alone\n"
            "  (8 flagged maps x 24 ch x 128^3 voxels x 8 B = 3,221,225,472 B); any\n"
            "  accounting that also covers the stem, later stages and the auxiliary\n"
            "  head -- as the stated counting rules require, and as the U-Net rows\n"
            "  confirm -- exceeds it, so this row and the total cannot be met.");
    return ok;
}

static bool criterion2() {
    std::puts("== criterion 2: parameter counts ==");
    const int64_t u2 = estimate(builtin_arch("unet2d")).param_count;
    const int64_t enc = estimate(builtin_arch("scaa3dEncoder")).param_count;
    const int64_t path = estimate(builtin_arch("scaa2dPath")).param_count;
    const int64_t scaa_total = enc + path;
    const double dev_u2 = 100.0 * ((double)u2 - 34.51e6) / 34.51e6;
    const double dev_sc = 100.0 * ((double)scaa_total - 7.82e6) / 7.82e6;
    std::printf("  unet2d  %9lld params  ref 34.51 M  dev %+6.2f%% (budget 15%%)\n",
                (long long)u2, dev_u2);
    std::printf("  scaa    %9lld params  ref  7.82 M  dev %+6.2f%% (budget 20%%)\n",
                (long long)scaa_total, dev_sc);
    std::puts(
        "  deviation cause: block internals are under-specified; this build uses\n"
        "  standard two-conv residual blocks with 1x1 skip projections on width\n"
        "  changes, and one 3x3 conv+norm unit per fusion step (two per scale) --\n"
        "  doubling the fusion convs would overshoot the reference by ~28%.");

    const int64_t closed = ScaaModel<float>::count_parameters(ScaaConfig::paper());
    ScaaModel<float> live(ScaaConfig::paper(), 1);
    const int64_t enumerated = live.params().total_parameters();
    std::printf("  mem-estimator %lld / closed-form %lld / live model %lld\n",
                (long long)scaa_total, (long long)closed, (long long)enumerated);
    bool ok = std::abs(dev_u2) <= 15.0 && std::abs(dev_sc) <= 20.0;
    ok = ok && scaa_total == closed && closed == enumerated;
    return ok;
}

static bool criterion3() {
    std::puts("== criterion 3: gradient integrity ==");
    const double t0 = now_s();
    Rng rng(404);
    double worst = 0.0;
    const char* worst_name = "-";
    auto probe = [&](const char* name, std::vector<Tensor<double>> leaves,
                     std::function<Tensor<double>()> f) {
        const double rel = fd_max_rel(std::move(leaves), f);
        if (rel > worst) {
            worst = rel;
            worst_name = name;
        }
    };

    {
        auto a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng, 0.5, 1.5);
        probe("add/mul/div", {a, b}, [=] { return div(add(a, mul(a, b)), b); });
        probe("scalar ops", {a}, [=] {
            return rsub_scalar(add_scalar(mul_scalar(a, 1.7), 0.3), 2.0);
        });
        probe("sigmoid+mean", {a}, [=] { return mean_all(sigmoid(a)); });
        probe("softmax", {a}, [=] { return softmax(a, 1); });
        probe("reshape/permute", {a}, [=] { return reshape(permute(a, {1, 0}), {2, 6}); });
        probe("sum_all", {a}, [=] { return sum_all(mul(a, a)); });
    }
    {
        std::vector<double> v;
        for (int i = 0; i < 12; ++i) v.push_back(0.15 * (i + 1) * (i % 2 ? 1 : -1));
        auto a = Tensor<double>::from_vector({3, 4}, std::move(v), true);
        probe("relu", {a}, [=] { return relu(a); });
    }
    {
        auto a = rand_tensor({2, 3}, rng), b = rand_tensor({2, 3}, rng);
        probe("concat+slice", {a, b}, [=] { return slice0(concat<double>({a, b}, 0), 3); });
    }
    {
        auto v = rand_tensor({3}, rng);
        probe("broadcast", {v}, [=] { return broadcast_spatial(v, {2, 2}); });
    }
    {
        auto x = rand_tensor({2, 5, 5}, rng), w = rand_tensor({3, 2, 3, 3}, rng);
        auto b = rand_tensor({3}, rng);
        probe("conv2d", {x, w, b}, [=] { return conv2d(x, w, b, 1, 1); });
        auto w2 = rand_tensor({2, 2, 2, 2}, rng);
        auto b2 = rand_tensor({2}, rng);
        auto x4 = rand_tensor({2, 4, 4}, rng);
        probe("conv2d stride2", {x4, w2, b2}, [=] { return conv2d(x4, w2, b2, 2, 1); });
    }
    {
        auto x = rand_tensor({1, 3, 3, 3}, rng), w = rand_tensor({2, 1, 3, 3, 3}, rng);
        auto b = rand_tensor({2}, rng);
        probe("conv3d", {x, w, b}, [=] { return conv3d(x, w, b, 1, 1); });
    }
    {
        std::vector<double> v(16);
        for (size_t i = 0; i < v.size(); ++i) v[i] = 0.37 * (double)i - 2.0;  // distinct
        auto x = Tensor<double>::from_vector({1, 4, 4}, std::move(v), true);
        probe("maxpool2d", {x}, [=] { return maxpool(x, {2, 2}); });
        probe("adaptive2d", {x}, [=] { return adaptive_avg_pool(x, {3, 2}); });
        probe("nearest2x", {x}, [=] { return upsample_nearest2x(x, 2); });
        probe("linear2x", {x}, [=] { return upsample_linear2x(x, 2); });
        probe("inorm", {x}, [=] {
            auto g = Tensor<double>::from_vector({1}, {1.3}, true);
            auto b = Tensor<double>::from_vector({1}, {-0.2}, true);
            return instance_norm(x, g, b);
        });
    }
    {
        std::vector<double> v(24);
        for (size_t i = 0; i < v.size(); ++i) v[i] = 0.19 * (double)((7 * i) % 24) - 1.0;
        auto x = Tensor<double>::from_vector({1, 2, 4, 3}, std::move(v), true);
        probe("maxpool3d", {x}, [=] { return maxpool(x, {2, 2, 1}); });
        probe("adaptive3d", {x}, [=] { return adaptive_avg_pool(x, {1, 2, 2}); });
    }
    {
        auto kv = rand_tensor({3, 4}, rng), qv = rand_tensor({4}, rng);
        probe("contract dj,j->d", {kv, qv}, [=] { return contract(kv, qv, "dj,j->d"); });
        auto f = rand_tensor({2, 3, 2, 2}, rng), att = rand_tensor({3}, rng);
        probe("contract cdhw,d->chw", {f, att}, [=] { return contract(f, att, "cdhw,d->chw"); });
    }
    std::printf("  primitives: 20 ops probed, worst %.3e (%s), budget 1e-5\n", worst, worst_name);
    const bool prim_ok = worst < 1e-5;

    GradCheckOptions opt;
    opt.samples_per_tensor = 5;
    opt.tolerance = 1e-4;
    opt.seed = 1;
    const GradCheckReport rep = grad_check_micro(Variant::SCAA, opt);
    double graph_worst = 0.0;
    for (const auto& e : rep.entries) graph_worst = std::max(graph_worst, e.max_rel);
    std::printf("  whole graph: %zu tensors, worst %.3e, budget 1e-4 -> %s\n",
                rep.entries.size(), graph_worst, rep.all_pass ? "ok" : "FAIL");
    const double el = now_s() - t0;
    std::printf("  elapsed %.1f s (budget 300 s)\n", el);
    return prim_ok && rep.all_pass && el < 300.0;
}

static bool criterion4() {
    std::puts("== criterion 4: attention invariants ==");
    Rng rng(808);
    int64_t calls = 0, vectors = 0;
    double worst_sum = 0.0, worst_shift = 0.0, worst_perm = 0.0;
    bool ok = true;

    for (int rep = 0; rep < 25 && ok; ++rep) {
        auto cfg = random_tiny_config(rng);
        for (int k = 0; k < 4 && ok; ++k) {
            ScaaModel<double> model(cfg, mix_seed(909, (uint64_t)rep, (uint64_t)k));
            const int64_t Dk = rep % 6 == 0 ? 1 : 1 + rng.uniform_int(6);
            const int64_t H3 = 1 + rng.uniform_int(5), W3 = 1 + rng.uniform_int(5);
            Rng drng(mix_seed(17, (uint64_t)rep, (uint64_t)k));
            auto f3d = rand_tensor({cfg.ch3d[(size_t)k], Dk, H3, W3}, drng);
            auto f2d = rand_tensor({cfg.ch2d[(size_t)(k + 1)], 2 * H3, 2 * W3}, drng);
            const int64_t z = drng.uniform_int(Dk << (k + 2));

            std::vector<AttentionRecord> recs;
            auto base = model.msfa(k, f2d, f3d, z, &recs);
            ++calls;
            for (const auto& r : recs) {
                double s = 0.0;
                for (double w : r.weights) {
                    s += w;
                    ok = ok && w >= 0.0;
                }
                worst_sum = std::max(worst_sum, std::abs(s - 1.0));
                ++vectors;
            }

            // uniform logit shift: adding a constant to every key-projection
            // bias shifts every depth logit by the same amount
            for (int64_t h = 0; h < cfg.heads[(size_t)k]; ++h) {
                auto bias = model.params().get("msfa.s" + std::to_string(k + 2) + ".head" +
                                               std::to_string(h) + ".k.b");
                for (auto& v : bias.mutable_value()) v += 0.37;
            }
            std::vector<AttentionRecord> shifted;
            model.msfa(k, f2d, f3d, z, &shifted);
            for (size_t i = 0; i < recs.size(); ++i)
                for (size_t d = 0; d < recs[i].weights.size(); ++d)
                    worst_shift = std::max(
                        worst_shift, std::abs(shifted[i].weights[d] - recs[i].weights[d]));

            // depth permutation: weights permute with the slabs, the
            // aggregate is unchanged
            std::vector<int64_t> perm((size_t)Dk);
            for (int64_t d = 0; d < Dk; ++d) perm[(size_t)d] = d;
            drng.shuffle(perm);
            const int64_t C3 = cfg.ch3d[(size_t)k], plane = H3 * W3;
            std::vector<double> pv((size_t)(C3 * Dk * plane));
            for (int64_t c = 0; c < C3; ++c)
                for (int64_t d = 0; d < Dk; ++d)
                    for (int64_t p = 0; p < plane; ++p)
                        pv[(size_t)((c * Dk + d) * plane + p)] =
                            f3d.value()[(size_t)((c * Dk + perm[(size_t)d]) * plane + p)];
            auto f3dp = Tensor<double>::from_vector({C3, Dk, H3, W3}, std::move(pv));
            std::vector<AttentionRecord> permuted;
            auto pout = model.msfa(k, f2d, f3dp, z, &permuted);
            for (size_t i = 0; i < shifted.size(); ++i)
                for (int64_t d = 0; d < Dk; ++d)
                    worst_perm = std::max(
                        worst_perm, std::abs(permuted[i].weights[(size_t)d] -
                                             shifted[i].weights[(size_t)perm[(size_t)d]]));
            for (size_t h = 0; h < pout.head_agg.size(); ++h)
                for (size_t i = 0; i < pout.head_agg[h].value().size(); ++i)
                    worst_perm =
                        std::max(worst_perm, std::abs(pout.head_agg[h].value()[i] -
                                                      base.head_agg[h].value()[i]));
        }
    }
    // one-hot variant: sums are exact by construction
    for (int rep = 0; rep < 4; ++rep) {
        auto cfg = random_tiny_config(rng);
        cfg.variant = Variant::CCA;
        ScaaModel<double> model(cfg, (uint64_t)rep);
        Rng drng(mix_seed(19, (uint64_t)rep));
        auto f3d = rand_tensor({cfg.ch3d[0], 3, 2, 2}, drng);
        auto f2d = rand_tensor({cfg.ch2d[1], 4, 4}, drng);
        std::vector<AttentionRecord> recs;
        model.msfa(0, f2d, f3d, rep, &recs);
        ++calls;
        for (const auto& r : recs) {
            double s = 0.0;
            for (double w : r.weights) s += w;
            ok = ok && s == 1.0;
            ++vectors;
        }
    }
    std::printf("  %lld msfa calls, %lld attention vectors\n", (long long)calls,
                (long long)vectors);
    std::printf("  |sum-1| worst %.3e, shift worst %.3e, permutation worst %.3e (budget 1e-6)\n",
                worst_sum, worst_shift, worst_perm);
    return ok && calls >= 100 && worst_sum <= 1e-6 && worst_shift <= 1e-6 && worst_perm <= 1e-6;
}

static bool criterion5() {
    std::puts("== criterion 5: loss and metric oracles ==");
    bool ok = true;

    // soft dice against hand evaluations
    auto phi_hand = [](const std::vector<double>& m, const std::vector<double>& g, double a,
                       double b, double eps) {
        double tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < m.size(); ++i) {
            tp += m[i] * g[i];
            fp += m[i] * (1.0 - g[i]);
            fn += (1.0 - m[i]) * g[i];
        }
        return tp / (tp + a * fp + b * fn + eps);
    };
    Rng rng(313);
    int dice_cases = 0;
    double dice_worst = 0.0;
    auto dice_case = [&](std::vector<double> m, std::vector<double> g, double a, double b) {
        DiceConfig cfg;
        cfg.alpha = a;
        cfg.beta = b;
        const double hand = phi_hand(m, g, a, b, cfg.eps);
        const int64_t n = (int64_t)m.size();
        const double got = soft_dice_phi(Tensor<double>::from_vector({n}, std::move(m)),
                                         Tensor<double>::from_vector({n}, std::move(g)), cfg)
                               .item();
        dice_worst = std::max(dice_worst, std::abs(got - hand));
        ++dice_cases;
    };
    dice_case({1, 1, 0, 0}, {1, 1, 0, 0}, 0.5, 0.5);
    dice_case({1, 1, 0, 0}, {0, 0, 1, 1}, 0.5, 0.5);
    dice_case({1, 0, 1, 0}, {1, 1, 0, 0}, 0.5, 0.5);
    dice_case({0.9, 0.1, 0.7, 0.2}, {1, 0, 1, 0}, 0.5, 0.5);
    dice_case({0.9, 0.1, 0.7, 0.2}, {1, 0, 1, 0}, 0.3, 0.7);
    dice_case({0.9, 0.1, 0.7, 0.2}, {1, 0, 1, 0}, 0.7, 0.3);
    dice_case({0, 0, 0}, {1, 1, 1}, 0.5, 0.5);
    dice_case({1, 1, 1}, {1, 1, 1}, 0.5, 0.5);
    dice_case({0.5, 0.5}, {0, 0}, 0.5, 0.5);
    dice_case({0.25, 0.75, 0.5, 1.0, 0.0}, {0, 1, 1, 1, 0}, 0.4, 0.9);
    for (int i = 0; i < 4; ++i) {
        std::vector<double> m(32), g(32);
        for (auto& v : m) v = rng.uniform();
        for (auto& v : g) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        dice_case(m, g, rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9));
    }
    std::printf("  soft dice: %d cases, worst |diff| %.3e (budget 1e-7)\n", dice_cases,
                dice_worst);
    ok = ok && dice_cases >= 10 && dice_worst <= 1e-7;

    // DSC endpoints are exact
    std::vector<uint8_t> ident(64, 0);
    for (size_t i = 0; i < 20; ++i) ident[i] = 1;
    std::vector<uint8_t> other(64, 0);
    for (size_t i = 30; i < 40; ++i) other[i] = 1;
    ok = ok && dsc_percent(ident, ident, 1) == 100.0;
    ok = ok && dsc_percent(ident, other, 1) == 0.0;

    // hd95 equals the all-pairs oracle bit for bit
    const std::array<int64_t, 3> dims{16, 16, 16};
    const std::array<double, 3> spacings[] = {{1, 1, 1}, {2.5, 0.7, 1.3}, {0.5, 2.0, 1.0}};
    int compared = 0;
    for (int it = 0; it < 200 && compared < 55; ++it) {
        Rng prng(mix_seed(515, (uint64_t)it));
        auto mask = [&]() {
            std::vector<uint8_t> m(16 * 16 * 16, 0);
            const int boxes = 1 + (int)prng.uniform_int(2);
            for (int bxi = 0; bxi < boxes; ++bxi) {
                int64_t z0 = prng.uniform_int(12), y0 = prng.uniform_int(12),
                        x0 = prng.uniform_int(12);
                int64_t dz = 2 + prng.uniform_int(4), dy = 2 + prng.uniform_int(4),
                        dx = 2 + prng.uniform_int(4);
                for (int64_t z = z0; z < std::min<int64_t>(16, z0 + dz); ++z)
                    for (int64_t y = y0; y < std::min<int64_t>(16, y0 + dy); ++y)
                        for (int64_t x = x0; x < std::min<int64_t>(16, x0 + dx); ++x)
                            m[(size_t)((z * 16 + y) * 16 + x)] = 1;
            }
            for (int f = 0; f < 6; ++f)
                m[(size_t)prng.uniform_int(16 * 16 * 16)] ^= 1;
            return m;
        };
        auto a = mask(), b = mask();
        const auto& sp = spacings[it % 3];
        auto got = hd95(a, b, dims, sp, 1);
        auto want = ref_hd95(a, b, dims, sp, 1);
        if (got.has_value() != want.has_value()) {
            ok = false;
            break;
        }
        if (!got) continue;
        if (*got != *want) {  // exact equality required
            std::printf("  hd95 mismatch: got %.17g want %.17g\n", *got, *want);
            ok = false;
            break;
        }
        ++compared;
    }
    std::printf("  hd95: %d random 16^3 pairs matched the brute-force oracle exactly\n", compared);
    ok = ok && compared >= 50;
    return ok;
}

static bool criterion6() {
    std::puts("== criterion 6: brute-force msfa equivalence ==");
    Rng rng(606);
    int configs = 0, depth_one = 0, single_head = 0;
    double worst = 0.0;
    for (int rep = 0; rep < 24; ++rep) {
        auto cfg = random_tiny_config(rng);
        if (rep % 5 == 0)
            for (auto& h : cfg.heads) h = 1;
        const int k = rep % 4;
        ScaaModel<double> model(cfg, mix_seed(151, (uint64_t)rep));
        const int64_t Dk = rep % 8 == 0 ? 1 : 1 + rng.uniform_int(5);
        const int64_t H3 = 1 + rng.uniform_int(4), W3 = 1 + rng.uniform_int(4);
        Rng drng(mix_seed(23, (uint64_t)rep));
        auto f3d = rand_tensor({cfg.ch3d[(size_t)k], Dk, H3, W3}, drng);
        auto f2d = rand_tensor({cfg.ch2d[(size_t)(k + 1)], 2 * H3, 2 * W3}, drng);

        std::vector<AttentionRecord> recs;
        auto got = model.msfa(k, f2d, f3d, drng.uniform_int(Dk << (k + 2)), &recs);
        auto want = oracle_msfa(model, k, f2d, f3d);
        for (size_t h = 0; h < want.att.size(); ++h) {
            for (size_t d = 0; d < want.att[h].size(); ++d)
                worst = std::max(worst, std::abs(recs[h].weights[d] - want.att[h][d]));
            for (size_t i = 0; i < want.agg[h].size(); ++i)
                worst = std::max(worst,
                                 std::abs(got.head_agg[h].value()[i] - want.agg[h][i]));
        }
        ++configs;
        if (Dk == 1) ++depth_one;
        if (cfg.heads[(size_t)k] == 1) ++single_head;
    }
    std::printf("  %d configurations (%d with depth 1, %d single-head), worst |diff| %.3e "
                "(budget 1e-6)\n",
                configs, depth_one, single_head, worst);
    return configs >= 20 && depth_one >= 1 && single_head >= 1 && worst <= 1e-6;
}

static bool criterion7(ToyRun& toy) {
    std::puts("== criterion 7: toy end-to-end training ==");
    const double t0 = now_s();
    auto spec = PhantomSpec::default3();
    std::vector<VolumeSample> train_set, held;
    for (int i = 0; i < 8; ++i)
        train_set.push_back(generate_phantom(spec, mix_seed(7000, (uint64_t)i),
                                             "train" + std::to_string(i)));
    for (int i = 0; i < 2; ++i)
        held.push_back(generate_phantom(spec, mix_seed(9000, (uint64_t)i),
                                        "held" + std::to_string(i)));
    toy.dims = held[0].dims;

    auto mcfg = ScaaConfig::desk(3);
    mcfg.variant = Variant::SCAA_STAR;
    TrainConfig tcfg;
    tcfg.lr = kToyLr;
    tcfg.max_steps = kToySteps;
    tcfg.epochs = 1000000;
    tcfg.slices_per_step = kToySlices;
    tcfg.seed = kToySeed;
    ScaaModel<float> model(mcfg, tcfg.seed);
    AdamState<float> adam;
    adam.lr = tcfg.lr;
    adam.init(model.params());
    train<float>(model, train_set, tcfg, adam,
                 [&](int64_t step, const StepStats& st, int64_t) {
                     toy.losses.push_back(st.total);
                     if (step % 50 == 0)
                         std::printf("  step %3lld  loss %.4f\n", (long long)step, st.total);
                 });

    // smoothed loss: quarter means must decrease strictly
    const size_t q = toy.losses.size() / 4;
    double quarters[4];
    for (int i = 0; i < 4; ++i) {
        double acc = 0.0;
        const size_t lo = (size_t)i * q, hi = i == 3 ? toy.losses.size() : lo + q;
        for (size_t j = lo; j < hi; ++j) acc += toy.losses[j];
        quarters[i] = acc / (double)(hi - lo);
    }
    std::printf("  quarter-mean loss: %.4f  %.4f  %.4f  %.4f\n", quarters[0], quarters[1],
                quarters[2], quarters[3]);
    const bool decreasing =
        quarters[0] > quarters[1] && quarters[1] > quarters[2] && quarters[2] > quarters[3];

    double acc = 0.0;
    int n = 0;
    for (size_t i = 0; i < held.size(); ++i) {
        InferResult res = infer(model, held[i], i == 0);  // keep one attention trace
        if (i == 0) toy.heldout_attention = std::move(res.attention);
        for (const auto& m : evaluate_labels(res.pred, held[i])) {
            std::printf("  %s class %d  dsc %6.2f\n", held[i].id.c_str(), m.cls, m.dsc);
            acc += m.dsc;
            ++n;
        }
    }
    toy.mean_dsc = acc / (double)n;
    toy.trained = true;
    const double el = now_s() - t0;
    std::printf("  held-out mean dsc %.2f%% (budget >= 70%%), %lld steps, %.0f s "
                "(budget 1800 s)\n",
                toy.mean_dsc, (long long)kToySteps, el);
    return toy.mean_dsc >= 70.0 && decreasing && kToySteps <= 300 && el < 1800.0;
}

static bool criterion8() {
    std::puts("== criterion 8: ablation harness ==");
    const fs::path data = g_work / "c8_data";
    const fs::path out = g_work / "c8_ablate";
    fs::remove_all(data);
    fs::remove_all(out);
    int rc = run_cli("gen --out " + data.string() + " --count 3 --seed 77", "c8.log");
    if (rc != 0) {
        std::printf("  gen failed with exit code %d\n", rc);
        return false;
    }
    char cmd[512];
    std::snprintf(cmd, sizeof(cmd), "ablate --data %s --out %s --steps %lld --slices 4 --lr %g "
                  "--seed 9",
                  data.string().c_str(), out.string().c_str(), (long long)kAblateSteps, kToyLr);
    rc = run_cli(cmd, "c8.log");
    if (rc != 0) {
        std::printf("  ablate failed with exit code %d (see logs/c8.log)\n", rc);
        return false;
    }

    std::ifstream in(out / "ablation.csv");
    std::string line;
    std::map<std::string, std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("variant,", 0) == 0) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!cells.empty()) rows[cells[0]] = cells;
    }
    bool ok = rows.size() == 4;
    for (const char* v : {"ca", "cca", "scaa", "scaa-star"})
        if (!rows.count(v)) {
            std::printf("  missing variant row '%s'\n", v);
            ok = false;
        }
    if (ok) {
        const double cca_onehot = std::stod(rows["cca"][5]);
        const double scaa_entpos = std::stod(rows["scaa"][6]);
        std::printf("  cca onehot fraction %.3f (must be exactly 1), scaa entropy>0 fraction "
                    "%.3f (budget 0.9)\n",
                    cca_onehot, scaa_entpos);
        ok = cca_onehot == 1.0 && scaa_entpos >= 0.9;
        for (const auto& [name, cells] : rows)
            std::printf("  %-10s params %s  final loss %s  mean dsc %s\n", name.c_str(),
                        cells[1].c_str(), cells[2].c_str(), cells[3].c_str());
    }
    return ok;
}

static bool criterion9(const ToyRun& toy) {
    std::puts("== criterion 9: attention locality at scale 2 ==");
    if (!toy.trained) {
        std::puts("  skipped: criterion 7 training unavailable");
        return false;
    }
    const int64_t D2 = toy.dims[0] / 4;
    double mass = 0.0;
    int64_t n = 0;
    for (const auto& r : toy.heldout_attention) {
        if (r.scale != 2) continue;
        int64_t c = r.slice_z >> 2;
        c = std::min(std::max<int64_t>(c, 0), D2 - 1);
        const int64_t w0 = std::min(std::max<int64_t>(c - 1, 0), D2 - 3);
        double m = 0.0;
        for (int64_t d = w0; d < w0 + 3; ++d) m += r.weights[(size_t)d];
        mass += m;
        ++n;
    }
    const double mean_mass = n ? mass / (double)n : 0.0;
    const double baseline = 3.0 / (double)D2;
    const fs::path csv = g_work / "c9_attention.csv";
    write_attention_csv(csv.string(), toy.heldout_attention, "acceptance criterion 9");
    std::printf("  %lld scale-2 attention vectors; mean mass on the 3 depth bins nearest the "
                "slice %.4f vs uniform %.4f\n",
                (long long)n, mean_mass, baseline);
    std::printf("  depth-weight table -> %s\n", csv.string().c_str());
    return n > 0 && mean_mass > baseline;
}

static bool criterion10() {
    std::puts("== criterion 10: determinism ==");
    const fs::path data = g_work / "c10_data";
    const fs::path run = g_work / "c10_run";
    const fs::path pred = g_work / "c10_pred";
    bool ok = true;

    // Each subcommand runs twice with identical flags into the same paths; the
    // first run's outputs are snapshotted and removed in between.
    auto check_pair = [&](const char* what, const std::string& args,
                          const std::vector<fs::path>& outputs) {
        std::map<std::string, std::string> first;
        for (int round = 0; round < 2; ++round) {
            for (const auto& o : outputs) fs::remove_all(o);
            const int rc = run_cli(args, "c10.log");
            if (rc != 0) {
                std::printf("  %-12s exit code %d (see logs/c10.log)\n", what, rc);
                ok = false;
                return;
            }
            std::map<std::string, std::string> snap;
            for (const auto& o : outputs) {
                if (fs::is_directory(o)) {
                    for (auto& [k, v] : snapshot_dir(o)) snap[o.filename().string() + "/" + k] = v;
                } else if (fs::exists(o)) {
                    snap[o.filename().string()] = read_file(o);
                }
            }
            if (round == 0) {
                first = std::move(snap);
            } else {
                const bool same = !first.empty() && first == snap;
                std::printf("  %-12s %zu output files %s\n", what, first.size(),
                            same ? "byte-identical" : "DIFFER");
                ok = ok && same;
            }
        }
    };

    check_pair("gen", "gen --out " + data.string() + " --count 2 --seed 5", {data});
    check_pair("train",
               "train --data " + data.string() + " --out " + run.string() +
                   " --preset micro --steps 4 --slices 2 --lr 0.001 --seed 3 "
                   "--checkpoint-every 2",
               {run});
    const std::string ckpt = (run / "checkpoint_final.ckpt").string();
    check_pair("infer",
               "infer --ckpt " + ckpt + " --data " + data.string() + " --out " + pred.string() +
                   " --attention",
               {pred});
    check_pair("eval",
               "eval --pred " + pred.string() + " --ref " + data.string() + " --out " +
                   (g_work / "c10_metrics.csv").string(),
               {g_work / "c10_metrics.csv"});
    check_pair("memest", "memest --arch scaa --csv " + (g_work / "c10_mem.csv").string(),
               {g_work / "c10_mem.csv"});
    check_pair("attn-export",
               "attn-export --ckpt " + ckpt + " --data " + data.string() + " --out " +
                   (g_work / "c10_attn.csv").string(),
               {g_work / "c10_attn.csv"});
    return ok;
}

int main(int argc, char** argv) {
    if (argc < 3) {
        std::fprintf(stderr, "usage: acceptance <scaa-cli> <workdir> [criteria,...]\n");
        return 99;
    }
    g_cli = argv[1];
    g_work = argv[2];
    fs::remove_all(g_work);
    fs::create_directories(g_work / "logs");
    std::set<int> only;
    if (argc > 3) {
        std::stringstream ss(argv[3]);
        std::string tok;
        while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    }
    auto wanted = [&](int id) { return only.empty() || only.count(id); };

    ToyRun toy;
    struct Entry {
        int id;
        const char* title;
        bool pass;
    };
    std::vector<Entry> results;
    auto run = [&](int id, const char* title, const std::function<bool()>& fn) {
        if (wanted(id)) results.push_back({id, title, fn()});
    };
    run(1, "memory-table reproduction", criterion1);
    run(2, "parameter counts", criterion2);
    run(3, "gradient integrity", criterion3);
    run(4, "attention invariants", criterion4);
    run(5, "loss/metric oracles", criterion5);
    run(6, "brute-force msfa equivalence", criterion6);
    run(7, "toy end-to-end training", [&] { return criterion7(toy); });
    run(8, "ablation harness", criterion8);
    run(9, "attention locality", [&] { return criterion9(toy); });
    run(10, "determinism", criterion10);

    std::puts("");
    int failed = 0;
    for (const auto& r : results) {
        std::printf("criterion %2d (%s): %s\n", r.id, r.title, r.pass ? "PASS" : "FAIL");
        if (!r.pass) ++failed;
    }
    std::printf("acceptance: %d/%zu criteria passed\n", (int)results.size() - failed,
                results.size());
    return failed;
}
