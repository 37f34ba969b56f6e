#pragma once

// Evaluation metrics on hard label volumes: DSC in percent and the 95th
// percentile Hausdorff distance (HD95) of the boundary point sets.

#include <optional>

#include "scaa/volume.hpp"

namespace scaa {

// Dice score in percent for one class. Both masks empty scores 100, exactly
// one empty scores 0.
double dsc_percent(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& ref, int cls);

// Pooled symmetric 95th percentile of boundary-to-boundary distances, linear
// interpolation between order statistics, spacing-scaled. A boundary voxel is
// a foreground voxel with at least one background 6-neighbor; voxels beyond
// the volume count as background. Undefined (nullopt) when either mask is
// empty.
std::optional<double> hd95(const std::vector<uint8_t>& pred, const std::vector<uint8_t>& ref,
                           const std::array<int64_t, 3>& dims, const std::array<double, 3>& spacing,
                           int cls);

struct ClassMetrics {
    int cls = 0;
    double dsc = 0.0;
    std::optional<double> hd95;
};

// Per-class metrics of a predicted labeling against the reference.
std::vector<ClassMetrics> evaluate_labels(const VolumeSample& pred, const VolumeSample& ref);

// Linear-interpolated percentile (q in [0,1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

}  // namespace scaa
