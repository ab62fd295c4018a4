# Copyright (c) 2026, The Serpent Authors
# SPDX-License-Identifier: Apache-2.0
"""Selective state space image restoration."""

from ._core import (
    CheckpointMismatch,
    ImageError,
    Model,
    degrade,
    discretize_zoh,
    gaussian_kernel,
    lti_kernel,
    lti_scan,
    psnr,
    read_png,
    reroll,
    selective_scan,
    ssim,
    unroll,
    unroll_order,
    write_png,
)

__all__ = [
    "CheckpointMismatch",
    "ImageError",
    "Model",
    "degrade",
    "discretize_zoh",
    "gaussian_kernel",
    "lti_kernel",
    "lti_scan",
    "psnr",
    "read_png",
    "reroll",
    "selective_scan",
    "ssim",
    "unroll",
    "unroll_order",
    "write_png",
]
