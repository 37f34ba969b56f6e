#pragma once

// Synthetic labeled volumes: analytic organ shapes rasterized into a label
// map with a matching intensity image. Geometry is sampled per volume from a
// seeded stream, so a (spec, seed) pair always yields the same voxels.

#include "scaa/volume.hpp"

namespace scaa {

enum class OrganKind { Ellipsoid, Tube, Blob };

OrganKind parse_organ_kind(const std::string& s);
const char* organ_kind_name(OrganKind k);

struct OrganSpec {
    OrganKind kind = OrganKind::Ellipsoid;
    // Intensity band the organ is drawn from (one value per volume).
    double intensity_lo = 0.5, intensity_hi = 0.6;
    // Size range as a fraction of the volume extent (semi-axis or radius).
    double size_lo = 0.2, size_hi = 0.3;
};

struct PhantomSpec {
    std::array<int64_t, 3> dims{64, 64, 64};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    double background = 0.15;
    double noise_sigma = 0.02;
    std::vector<OrganSpec> organs;  // classes 1..N, later classes carve earlier ones

    // Three organs: a large ellipsoid, a full-depth tube, and a small blob.
    // The ellipsoid and the blob share an intensity band, so single-slice
    // appearance cannot always separate them.
    static PhantomSpec default3();

    void validate() const;
};

// One sampled organ: analytic shape parameters in voxel units. Ellipsoids and
// blobs cover {p : sum(((p-c)/a)^2) <= 1}; tubes cover {p : z0 <= z <= z1,
// (y-cy)^2 + (x-cx)^2 <= ax^2}.
struct PlacedOrgan {
    OrganKind kind = OrganKind::Ellipsoid;
    double cz = 0, cy = 0, cx = 0;  // center
    double az = 1, ay = 1, ax = 1;  // semi-axes / radius
    double z0 = 0, z1 = 0;          // tube depth extent
    double intensity = 0;

    bool contains(double z, double y, double x) const;
};

// Geometry drawn for one placement attempt; generate_phantom rasterizes
// attempts 0, 1, ... and keeps the first one where every class survives
// carving.
std::vector<PlacedOrgan> sample_organ_placement(const PhantomSpec& spec, uint64_t seed,
                                                uint64_t attempt);

// Rasterizes one phantom. Throws if any class ends up empty after carving
// (retries internally with derived sub-seeds first).
VolumeSample generate_phantom(const PhantomSpec& spec, uint64_t seed, const std::string& id);

// Smooth random warp: a coarse grid of displacement vectors (grid^3 nodes per
// axis) is upsampled trilinearly to a dense field u, and output(p) = input(p +
// u(p)); image trilinear, labels nearest. `magnitude` is the displacement
// standard deviation in voxels; the field is rescaled if adjacent grid nodes
// differ enough to risk folding (|grad u| < 1 heuristic).
void elastic_deform(VolumeSample& v, double magnitude, int64_t grid, uint64_t seed);

// Integer translation (zero fill) plus additive Gaussian intensity noise.
void jitter(VolumeSample& v, double sigma, int64_t max_shift, uint64_t seed);

}  // namespace scaa
