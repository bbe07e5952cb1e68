"""Python bindings for wisa-lab.

Arrays are float64 numpy arrays; annotations and reports are plain dicts.
"""

from ._core import (
    NUM_CATEGORIES,
    ContractError,
    DatasetError,
    DimensionError,
    IoError,
    MoPAWeights,
    NumericError,
    ParseError,
    UsageError,
    attention_maps,
    bce_multilabel,
    categories,
    classify,
    combined_loss,
    dataset_stats,
    generate_clip,
    make_dataset,
    mopa_forward,
    perturb,
    read_clip,
    scenario_kinds,
    validate_annotation,
)

__version__ = "0.1.0"
