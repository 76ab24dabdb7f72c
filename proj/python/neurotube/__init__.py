"""Neuron volume segmentation, skeleton tracing and morphology metrics."""

from ._core import (
    ArgumentError,
    ContractError,
    DimensionError,
    EmptyTrace,
    IncompatibleCheckpoint,
    Model,
    ParseError,
    UndefinedDistance,
    dice,
    gen_phantom,
    hd95,
    load_archive,
    load_volume,
    neuron_distance,
    normalize_swc,
    save_archive,
    save_volume,
    trace,
    write_fixture_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "ContractError",
    "DimensionError",
    "EmptyTrace",
    "IncompatibleCheckpoint",
    "Model",
    "ParseError",
    "UndefinedDistance",
    "dice",
    "gen_phantom",
    "hd95",
    "load_archive",
    "load_volume",
    "neuron_distance",
    "normalize_swc",
    "save_archive",
    "save_volume",
    "trace",
    "write_fixture_checkpoint",
]
