"""Python bindings for the ishm C++ library."""

from ._ishm import (
    GENERATOR_VERSION,
    AttnConfig,
    CnnConfig,
    Dataset,
    GenConfig,
    HashMismatch,
    InvalidConfig,
    InvalidDistribution,
    InvalidParameter,
    IoError,
    IshmError,
    Model,
    ShapeError,
    UndefinedMetric,
    auc,
    drop_table,
    export_csv,
    generate,
    load_dataset,
    load_model,
    save_dataset,
    train_attn,
    train_cnn,
)

__all__ = [name for name in dir() if not name.startswith("_")]
