#include "scaa/metrics.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace scaa {

double dsc_percent(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& ref, int cls) {
    SCAA_CHECK(pred.size() == ref.size(), "dsc_percent: size mismatch ", pred.size(), " vs ",
               ref.size());
    int64_t np = 0, nr = 0, inter = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == cls, r = ref[i] == cls;
        np += p;
        nr += r;
        inter += p && r;
    }
    if (np == 0 && nr == 0) return 100.0;
    if (np == 0 || nr == 0) return 0.0;
    return 200.0 * (double)inter / (double)(np + nr);
}

double percentile(std::vector<double> values, double q) {
    SCAA_CHECK(!values.empty(), "percentile: empty sample");
    SCAA_CHECK(q >= 0.0 && q <= 1.0, "percentile: q must be in [0,1]");
    std::sort(values.begin(), values.end());
    const double pos = q * (double)(values.size() - 1);
    const size_t lo = (size_t)pos;
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - (double)lo;
    return values[lo] + (values[lo + 1] - values[lo]) * frac;
}

namespace {

struct Point {
    double z, y, x;
};

// Foreground voxels of `cls` with at least one background 6-neighbor;
// out-of-volume counts as background.
std::vector<Point> boundary_points(const std::vector<uint8_t>& labels,
                                   const std::array<int64_t, 3>& dims,
                                   const std::array<double, 3>& spacing, int cls) {
    const int64_t D = dims[0], H = dims[1], W = dims[2];
    auto at = [&](int64_t z, int64_t y, int64_t x) -> bool {
        if (z < 0 || z >= D || y < 0 || y >= H || x < 0 || x >= W) return false;
        return labels[(size_t)((z * H + y) * W + x)] == cls;
    };
    std::vector<Point> pts;
    for (int64_t z = 0; z < D; ++z)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                if (!at(z, y, x)) continue;
                if (!at(z - 1, y, x) || !at(z + 1, y, x) || !at(z, y - 1, x) || !at(z, y + 1, x) ||
                    !at(z, y, x - 1) || !at(z, y, x + 1))
                    pts.push_back({(double)z * spacing[0], (double)y * spacing[1],
                                   (double)x * spacing[2]});
            }
    return pts;
}

// Directed nearest-neighbor distances from each point of `a` to the set `b`.
void directed_distances(const std::vector<Point>& a, const std::vector<Point>& b,
                        std::vector<double>& out) {
    const size_t base = out.size();
    out.resize(base + a.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int64_t i = 0; i < (int64_t)a.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const Point& q : b) {
            const double dz = a[(size_t)i].z - q.z;
            const double dy = a[(size_t)i].y - q.y;
            const double dx = a[(size_t)i].x - q.x;
            const double d2 = dz * dz + dy * dy + dx * dx;
            if (d2 < best) best = d2;
        }
        out[base + (size_t)i] = std::sqrt(best);
    }
}

}  // namespace

std::optional<double> hd95(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& ref,
                           const std::array<int64_t, 3>& dims, const std::array<double, 3>& spacing,
                           int cls) {
    SCAA_CHECK((int64_t)pred.size() == dims[0] * dims[1] * dims[2], "hd95: pred size ", pred.size(),
               " does not match dims");
    SCAA_CHECK(pred.size() == ref.size(), "hd95: size mismatch ", pred.size(), " vs ", ref.size());
    bool has_p = false, has_r = false;
    for (size_t i = 0; i < pred.size() && !(has_p && has_r); ++i) {
        has_p = has_p || pred[i] == cls;
        has_r = has_r || ref[i] == cls;
    }
    if (!has_p || !has_r) return std::nullopt;
    auto bp = boundary_points(pred, dims, spacing, cls);
    auto br = boundary_points(ref, dims, spacing, cls);
    std::vector<double> pooled;
    pooled.reserve(bp.size() + br.size());
    directed_distances(bp, br, pooled);
    directed_distances(br, bp, pooled);
    return percentile(std::move(pooled), 0.95);
}

std::vector<ClassMetrics> evaluate_labels(const VolumeSample& pred, const VolumeSample& ref) {
    SCAA_CHECK(pred.dims == ref.dims, "evaluate_labels: dims mismatch");
    SCAA_CHECK(!pred.labels.empty() && !ref.labels.empty(), "evaluate_labels: missing labels");
    const int64_t classes = std::max(pred.num_classes, ref.num_classes);
    std::vector<ClassMetrics> out;
    for (int c = 1; c <= (int)classes; ++c) {
        ClassMetrics m;
        m.cls = c;
        m.dsc = dsc_percent(pred.labels, ref.labels, c);
        m.hd95 = hd95(pred.labels, ref.labels, ref.dims, ref.spacing, c);
        out.push_back(m);
    }
    return out;
}

}  // namespace scaa
