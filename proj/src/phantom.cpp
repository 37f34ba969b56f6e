#include "scaa/phantom.hpp"

#include <cmath>

namespace scaa {

OrganKind parse_organ_kind(const std::string& s) {
    if (s == "ellipsoid") return OrganKind::Ellipsoid;
    if (s == "tube") return OrganKind::Tube;
    if (s == "blob") return OrganKind::Blob;
    fail("unknown organ kind '", s, "' (expected ellipsoid|tube|blob)");
}

const char* organ_kind_name(OrganKind k) {
    switch (k) {
        case OrganKind::Ellipsoid: return "ellipsoid";
        case OrganKind::Tube: return "tube";
        case OrganKind::Blob: return "blob";
    }
    return "?";
}

PhantomSpec PhantomSpec::default3() {
    PhantomSpec s;
    s.organs = {
        {OrganKind::Ellipsoid, 0.80, 0.90, 0.20, 0.30},
        {OrganKind::Tube, 0.45, 0.55, 0.055, 0.085},
        {OrganKind::Blob, 0.80, 0.90, 0.07, 0.11},
    };
    return s;
}

void PhantomSpec::validate() const {
    SCAA_CHECK(dims[0] >= 8 && dims[1] >= 8 && dims[2] >= 8, "phantom: dims too small [", dims[0],
               ",", dims[1], ",", dims[2], "]");
    SCAA_CHECK(!organs.empty() && organs.size() <= 254, "phantom: need 1..254 organs, got ",
               organs.size());
    SCAA_CHECK(noise_sigma >= 0.0, "phantom: negative noise_sigma");
    for (const auto& o : organs) {
        SCAA_CHECK(o.size_lo > 0.0 && o.size_hi >= o.size_lo && o.size_hi < 0.5,
                   "phantom: organ size range must satisfy 0 < lo <= hi < 0.5");
        SCAA_CHECK(o.intensity_hi >= o.intensity_lo, "phantom: organ intensity range inverted");
    }
}

bool PlacedOrgan::contains(double z, double y, double x) const {
    switch (kind) {
        case OrganKind::Ellipsoid:
        case OrganKind::Blob: {
            const double dz = (z - cz) / az, dy = (y - cy) / ay, dx = (x - cx) / ax;
            return dz * dz + dy * dy + dx * dx <= 1.0;
        }
        case OrganKind::Tube: {
            if (z < z0 || z > z1) return false;
            const double dy = y - cy, dx = x - cx;
            return dy * dy + dx * dx <= ax * ax;
        }
    }
    return false;
}

namespace {

PlacedOrgan place_organ(const OrganSpec& spec, const std::array<int64_t, 3>& dims, Rng& rng) {
    const double D = (double)dims[0], H = (double)dims[1], W = (double)dims[2];
    PlacedOrgan p{};
    p.kind = spec.kind;
    p.intensity = rng.uniform(spec.intensity_lo, spec.intensity_hi);
    switch (spec.kind) {
        case OrganKind::Ellipsoid:
            p.cz = rng.uniform(0.32, 0.52) * D;
            p.cy = rng.uniform(0.32, 0.52) * H;
            p.cx = rng.uniform(0.30, 0.48) * W;
            p.az = rng.uniform(spec.size_lo, spec.size_hi) * D;
            p.ay = rng.uniform(spec.size_lo, spec.size_hi) * H;
            p.ax = rng.uniform(spec.size_lo, spec.size_hi) * W;
            break;
        case OrganKind::Tube:
            p.cy = rng.uniform(0.68, 0.82) * H;
            p.cx = rng.uniform(0.68, 0.82) * W;
            p.ax = rng.uniform(spec.size_lo, spec.size_hi) * std::min(H, W);
            p.z0 = rng.uniform(0.02, 0.10) * D;
            p.z1 = rng.uniform(0.90, 0.98) * D;
            break;
        case OrganKind::Blob:
            p.cz = rng.uniform(0.62, 0.82) * D;
            p.cy = rng.uniform(0.25, 0.45) * H;
            p.cx = rng.uniform(0.60, 0.80) * W;
            p.az = rng.uniform(spec.size_lo, spec.size_hi) * D;
            p.ay = rng.uniform(spec.size_lo, spec.size_hi) * H;
            p.ax = rng.uniform(spec.size_lo, spec.size_hi) * W;
            break;
    }
    return p;
}

}  // namespace

std::vector<PlacedOrgan> sample_organ_placement(const PhantomSpec& spec, uint64_t seed,
                                                uint64_t attempt) {
    Rng rng(mix_seed(seed, 0x9a17, attempt));
    std::vector<PlacedOrgan> organs;
    organs.reserve(spec.organs.size());
    for (const auto& o : spec.organs) organs.push_back(place_organ(o, spec.dims, rng));
    return organs;
}

VolumeSample generate_phantom(const PhantomSpec& spec, uint64_t seed, const std::string& id) {
    spec.validate();
    const int64_t D = spec.dims[0], H = spec.dims[1], W = spec.dims[2];
    const int64_t n = D * H * W;
    const size_t nc = spec.organs.size();

    for (uint64_t attempt = 0; attempt < 20; ++attempt) {
        Rng rng(mix_seed(seed, 0x9a17, attempt));
        std::vector<PlacedOrgan> organs;
        for (const auto& o : spec.organs) organs.push_back(place_organ(o, spec.dims, rng));

        VolumeSample v;
        v.id = id;
        v.dims = spec.dims;
        v.spacing = spec.spacing;
        v.num_classes = (int64_t)nc;
        v.labels.assign((size_t)n, 0);
        std::vector<int64_t> voxels_per_class(nc, 0);
        for (int64_t z = 0; z < D; ++z)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x) {
                    uint8_t lbl = 0;
                    for (size_t c = 0; c < nc; ++c)
                        if (organs[c].contains((double)z, (double)y, (double)x))
                            lbl = (uint8_t)(c + 1);  // later classes carve earlier ones
                    v.labels[(size_t)((z * H + y) * W + x)] = lbl;
                }
        for (uint8_t l : v.labels)
            if (l) ++voxels_per_class[(size_t)(l - 1)];
        bool ok = true;
        for (size_t c = 0; c < nc; ++c) ok = ok && voxels_per_class[c] > 0;
        if (!ok) continue;

        v.image.resize((size_t)n);
        for (int64_t i = 0; i < n; ++i) {
            const uint8_t l = v.labels[(size_t)i];
            const double base = l == 0 ? spec.background : organs[(size_t)(l - 1)].intensity;
            v.image[(size_t)i] = (float)(base + spec.noise_sigma * rng.normal());
        }
        v.validate();
        return v;
    }
    fail("generate_phantom: could not place all ", nc, " organs for seed ", seed,
         " (some class always empty)");
}

void elastic_deform(VolumeSample& v, double magnitude, int64_t grid, uint64_t seed) {
    SCAA_CHECK(grid >= 2, "elastic_deform: grid must be >= 2");
    SCAA_CHECK(magnitude >= 0.0, "elastic_deform: negative magnitude");
    if (magnitude == 0.0) return;
    const int64_t D = v.dims[0], H = v.dims[1], W = v.dims[2];
    Rng rng(mix_seed(seed, 0xe1a5));
    const int64_t gn = grid * grid * grid;
    std::array<std::vector<double>, 3> field;
    for (auto& f : field) {
        f.resize((size_t)gn);
        for (auto& x : f) x = magnitude * rng.normal();
    }

    // Invertibility guard: the displacement gradient between adjacent grid
    // nodes must stay below 1. Rescale the whole field if needed.
    const double cell = (double)(std::min({D, H, W}) - 1) / (double)(grid - 1);
    double max_diff = 0.0;
    auto gidx = [&](int64_t a, int64_t b, int64_t c) { return (size_t)((a * grid + b) * grid + c); };
    for (int ax = 0; ax < 3; ++ax)
        for (int64_t a = 0; a < grid; ++a)
            for (int64_t b = 0; b < grid; ++b)
                for (int64_t c = 0; c + 1 < grid; ++c) {
                    max_diff = std::max(
                        max_diff, std::abs(field[(size_t)ax][gidx(a, b, c + 1)] -
                                           field[(size_t)ax][gidx(a, b, c)]));
                    max_diff = std::max(
                        max_diff, std::abs(field[(size_t)ax][gidx(a, c + 1, b)] -
                                           field[(size_t)ax][gidx(a, c, b)]));
                    max_diff = std::max(
                        max_diff, std::abs(field[(size_t)ax][gidx(c + 1, a, b)] -
                                           field[(size_t)ax][gidx(c, a, b)]));
                }
    if (max_diff > 0.9 * cell) {
        const double s = 0.9 * cell / max_diff;
        for (auto& f : field)
            for (auto& x : f) x *= s;
    }

    auto grid_at = [&](const std::vector<double>& f, double gz, double gy, double gx) {
        const auto clampi = [&](double t) {
            return std::min(std::max(t, 0.0), (double)(grid - 1));
        };
        gz = clampi(gz);
        gy = clampi(gy);
        gx = clampi(gx);
        const int64_t z0 = std::min((int64_t)gz, grid - 2), y0 = std::min((int64_t)gy, grid - 2),
                      x0 = std::min((int64_t)gx, grid - 2);
        const double fz = gz - (double)z0, fy = gy - (double)y0, fx = gx - (double)x0;
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dz ? fz : 1.0 - fz) * (dy ? fy : 1.0 - fy) *
                                     (dx ? fx : 1.0 - fx);
                    acc += w * f[gidx(z0 + dz, y0 + dy, x0 + dx)];
                }
        return acc;
    };

    const bool has_image = !v.image.empty();
    std::vector<float> img_out(has_image ? v.image.size() : 0);
    std::vector<uint8_t> lbl_out(v.labels.size());
    auto sample_image = [&](double z, double y, double x) {
        z = std::min(std::max(z, 0.0), (double)(D - 1));
        y = std::min(std::max(y, 0.0), (double)(H - 1));
        x = std::min(std::max(x, 0.0), (double)(W - 1));
        const int64_t z0 = std::min((int64_t)z, D - 2 >= 0 ? D - 2 : 0);
        const int64_t y0 = std::min((int64_t)y, H - 2 >= 0 ? H - 2 : 0);
        const int64_t x0 = std::min((int64_t)x, W - 2 >= 0 ? W - 2 : 0);
        const double fz = z - (double)z0, fy = y - (double)y0, fx = x - (double)x0;
        double acc = 0.0;
        for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double w = (dz ? fz : 1.0 - fz) * (dy ? fy : 1.0 - fy) *
                                     (dx ? fx : 1.0 - fx);
                    const int64_t zz = std::min(z0 + dz, D - 1), yy = std::min(y0 + dy, H - 1),
                                  xx = std::min(x0 + dx, W - 1);
                    acc += w * (double)v.image[(size_t)((zz * H + yy) * W + xx)];
                }
        return (float)acc;
    };

    for (int64_t z = 0; z < D; ++z)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                const double gz = (double)z / (double)(D - 1) * (double)(grid - 1);
                const double gy = (double)y / (double)(H - 1) * (double)(grid - 1);
                const double gx = (double)x / (double)(W - 1) * (double)(grid - 1);
                const double sz = (double)z + grid_at(field[0], gz, gy, gx);
                const double sy = (double)y + grid_at(field[1], gz, gy, gx);
                const double sx = (double)x + grid_at(field[2], gz, gy, gx);
                const size_t o = (size_t)((z * H + y) * W + x);
                if (has_image) img_out[o] = sample_image(sz, sy, sx);
                if (!v.labels.empty()) {
                    const int64_t nz = std::min(std::max((int64_t)std::llround(sz), (int64_t)0), D - 1);
                    const int64_t ny = std::min(std::max((int64_t)std::llround(sy), (int64_t)0), H - 1);
                    const int64_t nx = std::min(std::max((int64_t)std::llround(sx), (int64_t)0), W - 1);
                    lbl_out[o] = v.labels[(size_t)((nz * H + ny) * W + nx)];
                }
            }
    if (has_image) v.image = std::move(img_out);
    if (!v.labels.empty()) v.labels = std::move(lbl_out);
}

void jitter(VolumeSample& v, double sigma, int64_t max_shift, uint64_t seed) {
    SCAA_CHECK(sigma >= 0.0 && max_shift >= 0, "jitter: invalid parameters");
    const int64_t D = v.dims[0], H = v.dims[1], W = v.dims[2];
    Rng rng(mix_seed(seed, 0x717e));
    std::array<int64_t, 3> shift{};
    for (auto& s : shift) s = rng.uniform_int(2 * max_shift + 1) - max_shift;

    if (shift[0] || shift[1] || shift[2]) {
        const bool has_image = !v.image.empty();
        std::vector<float> img_out(has_image ? v.image.size() : 0, 0.0f);
        std::vector<uint8_t> lbl_out(v.labels.size(), 0);
        for (int64_t z = 0; z < D; ++z) {
            const int64_t sz = z - shift[0];
            if (sz < 0 || sz >= D) continue;
            for (int64_t y = 0; y < H; ++y) {
                const int64_t sy = y - shift[1];
                if (sy < 0 || sy >= H) continue;
                for (int64_t x = 0; x < W; ++x) {
                    const int64_t sx = x - shift[2];
                    if (sx < 0 || sx >= W) continue;
                    const size_t o = (size_t)((z * H + y) * W + x);
                    const size_t s = (size_t)((sz * H + sy) * W + sx);
                    if (has_image) img_out[o] = v.image[s];
                    if (!v.labels.empty()) lbl_out[o] = v.labels[s];
                }
            }
        }
        if (has_image) v.image = std::move(img_out);
        if (!v.labels.empty()) v.labels = std::move(lbl_out);
    }
    if (sigma > 0.0 && !v.image.empty())
        for (auto& x : v.image) x = (float)((double)x + sigma * rng.normal());
}

}  // namespace scaa
