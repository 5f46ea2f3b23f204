"""Latent-distribution morphing with deep-kernel density flows."""

from ._core import (
    Checkpoint,
    ConfigError,
    DomainError,
    IoError,
    NumericError,
    ebm_morph,
    evaluate,
    f_conjugate,
    f_divergence,
    kernel_gram,
    load_checkpoint,
    mmd2,
    mode_coverage,
    refine,
    run_gradchecks,
    sample_target,
    train,
)

__all__ = [
    "Checkpoint",
    "ConfigError",
    "DomainError",
    "IoError",
    "NumericError",
    "ebm_morph",
    "evaluate",
    "f_conjugate",
    "f_divergence",
    "kernel_gram",
    "load_checkpoint",
    "mmd2",
    "mode_coverage",
    "refine",
    "run_gradchecks",
    "sample_target",
    "train",
]
