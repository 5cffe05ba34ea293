"""Conditional GAN engine for rosette images with leaf-count conditioning.

The heavy lifting lives in the compiled extension; this package re-exports
its surface: model construction and sampling (`Gan`, `TrainConfig`), the
training loop (`train`), the data pipeline (`synth_rosette`, `preprocess`,
`augment`, `load_dataset`, `export_ax`) and the evaluation harness
(`count_metrics`, `kfold_split`, `fit_count_regressor`,
`augmentation_experiment`, `gradcheck_report`).
"""

from rosettegan._core import (
    Gan,
    TrainConfig,
    RegressorConfig,
    CountRegressor,
    augment,
    augment_variant,
    augmentation_experiment,
    cli,
    count_metrics,
    export_ax,
    fit_count_regressor,
    gan_losses,
    gradcheck_report,
    kfold_split,
    load_dataset,
    make_condition,
    preprocess,
    sample_noise_and_condition,
    spatial_replicate,
    synth_rosette,
    train,
)

__all__ = [
    "Gan",
    "TrainConfig",
    "RegressorConfig",
    "CountRegressor",
    "augment",
    "augment_variant",
    "augmentation_experiment",
    "cli",
    "count_metrics",
    "export_ax",
    "fit_count_regressor",
    "gan_losses",
    "gradcheck_report",
    "kfold_split",
    "load_dataset",
    "make_condition",
    "preprocess",
    "sample_noise_and_condition",
    "spatial_replicate",
    "synth_rosette",
    "train",
]

__version__ = "0.1.0"
