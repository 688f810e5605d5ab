"""Optimal Video Segment: fixed-length gait-cycle extraction.

A benchmark frame M is compared against every frame F of the stream with a
normalized pixel-mismatch score

    s(F) = (1 / w^2) * sum_ij [ M_ij (1 - F_ij) + F_ij (1 - M_ij) ]

which is 0 for identical frames and 1 for complementary ones.  The frame
whose score series has the highest variance becomes the benchmark; local
maxima of its series (frames in anti-phase with the benchmark) mark cycle
boundaries once peaks closer than half a cycle have been suppressed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_blas_funcs

from .dataio import SilhouetteSequence
from .exceptions import (
    NonBinaryInputError,
    NoPeriodicityError,
    SequenceTooShortError,
    ShapeMismatchError,
)


@dataclass
class SimilaritySeries:
    """Mismatch score of every frame against the chosen benchmark frame."""

    benchmark_index: int
    values: np.ndarray  # [L], floats in [0, 1]


@dataclass
class GaitCycle:
    """One fixed-length cycle cut out of a source sequence."""

    frames: np.ndarray  # [T, w, w]
    subject_id: int
    start_index: int

    @property
    def cycle_len(self) -> int:
        return self.frames.shape[0]

    @property
    def w(self) -> int:
        return self.frames.shape[1]


def new_op_counter() -> dict:
    """Multiply-add counter passed to the pairwise similarity routines."""
    return {"madds": 0}


def pairwise_cost_estimate(n_frames: int, w: int) -> int:
    """Nominal cost of all-pairs similarity: C(L, 2) * w^2 multiply-adds."""
    return n_frames * (n_frames - 1) // 2 * w * w


def _require_binary(frames):
    vals = np.asarray(frames)
    if not np.all((vals == 0.0) | (vals == 1.0)):
        raise NonBinaryInputError("frame values must be exactly 0 or 1")


def similarity(benchmark, frame) -> float:
    """Normalized mismatch count between two binary frames (symmetric)."""
    m = np.asarray(benchmark, dtype=np.float64)
    f = np.asarray(frame, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeMismatchError(f"frames must be square 2-D, got {m.shape}")
    if m.shape != f.shape:
        raise ShapeMismatchError(f"frame shapes differ: {m.shape} vs {f.shape}")
    _require_binary(m)
    _require_binary(f)
    return float((m * (1.0 - f) + f * (1.0 - m)).mean())


def pairwise_similarity_matrix(frames, op_counter=None) -> np.ndarray:
    """[L, L] matrix of pairwise mismatch scores between binary frames.

    For binary frames the mismatch count between frames a and b is
    popcount(a) + popcount(b) - 2 a.b, so a single symmetric rank-k update
    (BLAS syrk, one triangle) covers all C(L, 2) pairs.
    """
    stack = np.asarray(frames, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise ShapeMismatchError(f"expected [L, w, w] frames, got {stack.shape}")
    _require_binary(stack)
    n_frames, w = stack.shape[0], stack.shape[1]
    flat = np.ascontiguousarray(stack.reshape(n_frames, -1))
    syrk, = get_blas_funcs(("syrk",), (flat,))
    gram_upper = syrk(alpha=1.0, a=flat)  # upper triangle of flat @ flat.T
    gram = np.triu(gram_upper) + np.triu(gram_upper, 1).T
    counts = np.diag(gram)
    scores = (counts[:, None] + counts[None, :] - 2.0 * gram) / float(w * w)
    if op_counter is not None:
        # one triangle plus the diagonal actually ran through the BLAS update
        op_counter["madds"] += n_frames * (n_frames + 1) // 2 * w * w
    return np.clip(scores, 0.0, 1.0)


def select_benchmark(seq: SilhouetteSequence, cycle_len: int,
                     op_counter=None) -> SimilaritySeries:
    """Pick the frame whose mismatch series has maximal variance.

    Ties break toward the lowest frame index.  Needs at least two cycles of
    frames to see the periodic structure.
    """
    n_frames = len(seq)
    if n_frames < 2 * cycle_len:
        raise SequenceTooShortError(
            f"need >= {2 * cycle_len} frames for cycle length {cycle_len}, "
            f"got {n_frames}")
    scores = pairwise_similarity_matrix(seq.frames, op_counter)
    variances = scores.var(axis=1)
    best = int(np.argmax(variances))  # argmax returns the first (lowest) index
    return SimilaritySeries(benchmark_index=best, values=scores[best].copy())


def _strict_local_maxima(values):
    # peaks strictly above both neighbors; a flat run higher than both of
    # its shoulders counts once, at its leftmost index
    peaks = []
    n = len(values)
    i = 1
    while i < n - 1:
        if values[i] > values[i - 1]:
            j = i
            while j + 1 < n and values[j + 1] == values[i]:
                j += 1
            if j < n - 1 and values[i] > values[j + 1]:
                peaks.append(i)
            i = j + 1
        else:
            i += 1
    return peaks


def find_segments(series, cycle_len: int, use_minima: bool = False) -> list:
    """Cycle-boundary indices from a similarity series.

    Strict local maxima are kept greedily in descending value order with a
    minimum inter-peak gap of ceil(cycle_len / 2): a candidate within that
    distance of an already-kept peak (i.e. half a cycle or closer, which
    can never hold a full cycle) is dropped.  Survivors are returned
    ascending.  ``use_minima`` segments on minima instead (the alternative
    reading of where a cycle starts); spacing is the same.
    """
    values = series.values if isinstance(series, SimilaritySeries) else series
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1:
        raise ShapeMismatchError(f"series must be 1-D, got shape {values.shape}")
    if values.size < 2 * cycle_len:
        raise SequenceTooShortError(
            f"series of length {values.size} is too short for cycle length "
            f"{cycle_len}")
    if use_minima:
        values = -values
    peaks = _strict_local_maxima(values)
    if len(peaks) < 2:
        raise NoPeriodicityError(
            f"found {len(peaks)} usable peaks, need at least 2")
    min_gap = math.ceil(cycle_len / 2)
    kept = []
    for idx in sorted(peaks, key=lambda p: (-values[p], p)):
        if all(abs(idx - k) > min_gap for k in kept):
            kept.append(idx)
    if len(kept) < 2:
        raise NoPeriodicityError(
            f"only {len(kept)} peaks survive the {min_gap}-frame gap rule")
    return sorted(kept)


def extract_cycles(seq: SilhouetteSequence, cuts, cycle_len: int) -> list:
    """Materialize one [T, w, w] cycle per cut; cuts running past the end
    of the sequence are dropped."""
    n_frames = len(seq)
    cycles = []
    for cut in cuts:
        if cut < 0:
            raise ShapeMismatchError(f"negative cut index {cut}")
        if cut + cycle_len <= n_frames:
            cycles.append(GaitCycle(frames=seq.frames[cut:cut + cycle_len].copy(),
                                    subject_id=seq.subject_id,
                                    start_index=int(cut)))
    return cycles


def segment_sequence(seq: SilhouetteSequence, cycle_len: int,
                     use_minima: bool = False, op_counter=None) -> list:
    """Benchmark selection, peak finding and cycle extraction in one call."""
    series = select_benchmark(seq, cycle_len, op_counter)
    cuts = find_segments(series, cycle_len, use_minima=use_minima)
    return extract_cycles(seq, cuts, cycle_len)
