"""Synthetic frame generation, fractional interpolation, quality metrics.

Future frames come from propagating an encoded frame with integer powers
of the operator and decoding; frames between two time steps use the real
fractional power instead.  Raw generator output is real-valued and noisy,
so a 3x3 median filter is offered for display; metrics are computed on
the raw output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import median_filter

from .coder import CouplingCoder, decode, encode
from .exceptions import ShapeMismatchError
from .koopman import advance, fractional_power

PSNR_CAP_DB = 99.0


@dataclass
class QualityReport:
    """Similarity of two frames on three scales.

    mse_sim in (0, 1]: 1 - mean squared error (1 means identical).
    psnr in dB with peak 1.0, capped at 99 for error-free pairs.
    uqi in [-1, 1]: correlation, luminance and contrast agreement.
    """

    mse_sim: float
    psnr: float
    uqi: float


def generate_future(model: CouplingCoder, k, frame, steps: int,
                    clamp: bool = True) -> np.ndarray:
    """dec(K^m enc(frame)): the frame `steps` time steps ahead."""
    emb = encode(model, frame)
    out = decode(model, advance(k, emb, steps))
    return np.clip(out, 0.0, 1.0) if clamp else out


def interpolate(model: CouplingCoder, k, frame, fraction: float,
                clamp: bool = True) -> np.ndarray:
    """dec(K^r enc(frame)) for a real r in (0, 1): a frame between two
    time steps.  Propagates BranchCut/NotDiagonalizable from the power."""
    emb = encode(model, frame)
    out = decode(model, fractional_power(k, fraction) @ emb)
    return np.clip(out, 0.0, 1.0) if clamp else out


def generate_sequence(model: CouplingCoder, k, frame, steps: int,
                      clamp: bool = True) -> np.ndarray:
    """[steps, w, w] stack of the next `steps` generated frames."""
    emb = encode(model, frame)
    frames = []
    for _ in range(steps):
        emb = k @ emb
        out = decode(model, emb)
        frames.append(np.clip(out, 0.0, 1.0) if clamp else out)
    return np.stack(frames)


def denoise(frame) -> np.ndarray:
    """3x3 median filter for displaying generated frames."""
    return median_filter(np.asarray(frame, dtype=np.float64), size=3)


def image_metrics(a, b) -> QualityReport:
    """Compare two same-shaped frames with values in [0, 1].

    uqi uses global (whole-image) population statistics and is defined as
    0 whenever its denominator vanishes, e.g. for a constant pair.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeMismatchError(f"frame shapes differ: {x.shape} vs {y.shape}")
    err = float(((x - y) ** 2).mean())
    mse_sim = 1.0 - err
    if err == 0.0:
        psnr = PSNR_CAP_DB
    else:
        psnr = min(10.0 * np.log10(1.0 / err), PSNR_CAP_DB)
    mu_x, mu_y = float(x.mean()), float(y.mean())
    var_x, var_y = float(x.var()), float(y.var())
    cov = float(((x - mu_x) * (y - mu_y)).mean())
    denom = (var_x + var_y) * (mu_x * mu_x + mu_y * mu_y)
    uqi = 0.0 if denom == 0.0 else 4.0 * cov * mu_x * mu_y / denom
    return QualityReport(mse_sim=mse_sim, psnr=float(psnr), uqi=uqi)
