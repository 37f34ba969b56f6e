"""Context-attentive volumetric segmentation toolkit."""

from ._core import (
    Model,
    Volume,
    dsc,
    generate_phantom,
    hd95,
    make_volume,
    mem_estimate,
    model_parameter_count,
    read_volume,
    write_volume,
)

__all__ = [
    "Model",
    "Volume",
    "dsc",
    "generate_phantom",
    "hd95",
    "make_volume",
    "mem_estimate",
    "model_parameter_count",
    "read_volume",
    "write_volume",
]
