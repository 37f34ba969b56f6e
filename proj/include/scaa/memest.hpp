#pragma once

// Analytic activation-memory and parameter model. An architecture is an
// ordered layer list; shapes are propagated through it, and the memory total
// counts value+gradient storage (float32) for the output of every convolution
// and normalization layer. Per-item layers scale with batch size; layers
// derived only from whole-volume inputs are counted once.

#include <string>
#include <vector>

#include "scaa/model.hpp"

namespace scaa {

enum class LayerKind { Input, Conv, Norm, Pool, Upsample, Concat, Add, Attend };

const char* layer_kind_name(LayerKind k);
LayerKind parse_layer_kind(const std::string& s);

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Input;
    // Source layer names; empty means the preceding layer (invalid for Input).
    std::vector<std::string> srcs;
    int64_t channels = 0;  // conv: out channels; input: channels
    int64_t kernel = 3;    // conv
    int64_t stride = 1;    // conv, pool
    int64_t factor = 2;    // upsample
    // Explicit output extent for adaptive pool / upsample-to / broadcast.
    std::vector<int64_t> target;
    std::vector<int64_t> extent;  // input only
    bool per_volume = false;      // input only; everything else inherits
};

struct ResolvedLayer {
    std::string name;
    LayerKind kind = LayerKind::Input;
    int64_t in_channels = 0, out_channels = 0;
    std::vector<int64_t> extent;
    bool flagged = false;  // conv/norm outputs count toward memory
    bool per_item = true;
    int64_t elements = 0;
    int64_t params = 0;
};

struct ArchSpec {
    std::string name;
    int64_t batch = 1;
    std::vector<LayerSpec> layers;
};

struct MemReport {
    std::string arch;
    int64_t batch = 1;
    std::vector<ResolvedLayer> layers;
    int64_t flagged_elements_per_item = 0;
    int64_t flagged_elements_per_volume = 0;
    int64_t param_count = 0;
    // Value + gradient at 4 bytes each.
    int64_t activation_bytes = 0;
    int64_t param_bytes = 0;

    double activation_gb() const { return (double)activation_bytes / 1e9; }
    double estimate_gb() const { return (double)(activation_bytes + param_bytes) / 1e9; }
    double activation_gib() const { return (double)activation_bytes / 1073741824.0; }
};

// Shape propagation + accounting. Throws on any chain break (unknown source,
// channel mismatch, non-divisible stride, rank mismatch), naming the layer.
MemReport estimate(const ArchSpec& spec);
int64_t count_params(const ArchSpec& spec);

// Reference architectures at 256^3 volumes / 256^2 slices:
//   unet2d        classic five-scale U-Net, channels 64..1024, batch 4
//   unet3d        same structure in 3D, channels 16..256, batch 1
//   scaa3dEncoder the volumetric context branch of this codebase, batch 1
//   scaa2dPath    the per-slice branch (encoder, fusion, decoder), batch 4
ArchSpec builtin_arch(const std::string& name);

// SCAA branches generated from a model config; parameter totals of the two
// branches sum to ScaaModel::count_parameters(cfg) for every variant.
ArchSpec scaa_3d_encoder_arch(const ScaaConfig& cfg, int64_t extent = 256);
ArchSpec scaa_2d_path_arch(const ScaaConfig& cfg, int64_t extent = 256);

ArchSpec read_arch_file(const std::string& path);
void write_arch_file(const std::string& path, const ArchSpec& spec);

std::string format_mem_table(const MemReport& r);
std::string mem_report_csv(const MemReport& r);

}  // namespace scaa
