#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "scaa/common.hpp"

namespace scaa {

// A volume with optional voxel labels. Data is row-major z,y,x (depth
// outermost); labels use 0 for background and 1..num_classes for organs.
struct VolumeSample {
    std::string id;
    std::array<int64_t, 3> dims{0, 0, 0};  // D, H, W
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    int64_t num_classes = 0;
    std::vector<float> image;     // may be empty for label-only volumes
    std::vector<uint8_t> labels;  // may be empty for unlabeled volumes

    int64_t voxels() const { return dims[0] * dims[1] * dims[2]; }

    void validate() const {
        SCAA_CHECK(dims[0] > 0 && dims[1] > 0 && dims[2] > 0, "volume '", id, "': bad dims [",
                   dims[0], ",", dims[1], ",", dims[2], "]");
        if (!image.empty())
            SCAA_CHECK((int64_t)image.size() == voxels(), "volume '", id, "': image has ",
                       image.size(), " voxels, dims imply ", voxels());
        if (!labels.empty()) {
            SCAA_CHECK((int64_t)labels.size() == voxels(), "volume '", id, "': labels have ",
                       labels.size(), " voxels, dims imply ", voxels());
            for (uint8_t v : labels)
                SCAA_CHECK(v <= num_classes, "volume '", id, "': label ", (int)v,
                           " exceeds num_classes ", num_classes);
        }
    }
};

}  // namespace scaa
