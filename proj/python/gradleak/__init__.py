"""Gradient inversion attack toolkit: SAPAG and the DLG Euclidean baseline.

Thin python surface over the C++ core. Arrays are float64 numpy arrays;
model/init/attack configurations are plain dicts mirroring the JSON schema
used by the experiment CLI.
"""

from gradleak._core import (
    GradientSnapshot,
    GradleakError,
    Vocabulary,
    builtin_patterns,
    capture,
    estimate_sigma2,
    forward,
    init_weights,
    load_image,
    load_snapshot,
    loss,
    make_q_weights,
    match_batch,
    mse,
    pseudoinverse,
    psnr,
    recover_tokens,
    run_attack,
    run_experiment,
    run_text_attack,
    save_image,
    ssim,
    synthetic_vocabulary,
)

__all__ = [
    "GradientSnapshot",
    "GradleakError",
    "Vocabulary",
    "builtin_patterns",
    "capture",
    "estimate_sigma2",
    "forward",
    "init_weights",
    "load_image",
    "load_snapshot",
    "loss",
    "make_q_weights",
    "match_batch",
    "mse",
    "pseudoinverse",
    "psnr",
    "recover_tokens",
    "run_attack",
    "run_experiment",
    "run_text_attack",
    "save_image",
    "ssim",
    "synthetic_vocabulary",
]
