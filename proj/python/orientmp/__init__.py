"""Rotation-invariant point-cloud message passing with learned orientations."""

from ._core import (
    Error,
    Model,
    OrientationNet,
    fps,
    gen_shapes,
    gram_schmidt,
    knn,
    read_dataset,
    run_cli,
    sample_rotation,
    simulate_nbody,
    verify,
)

__all__ = [
    "Error",
    "Model",
    "OrientationNet",
    "fps",
    "gen_shapes",
    "gram_schmidt",
    "knn",
    "read_dataset",
    "run_cli",
    "sample_rotation",
    "simulate_nbody",
    "verify",
]
