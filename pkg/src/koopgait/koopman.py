"""Koopman operator algebra on embedding frames.

The operator K is a plain [w, w] float array advancing embedding frames by
matrix multiplication: X_{t+1} = K X_t.  Per-cycle operators are obtained
either in closed form (the least-squares normal equations, optionally via
the literal per-pair augmented system) or by full-batch Adam on the linear
restriction loss; the loss is a convex quadratic in K, so the two routes
agree.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coder import CouplingCoder, coupled_losses, encode
from .exceptions import (
    BranchCutError,
    DegenerateCycleError,
    DimMismatchError,
    NonFiniteLossError,
    NotDiagonalizableError,
    NumericalFailureError,
)
from .optim import Adam


@dataclass
class Spectrum:
    """Eigenvalues of an operator with their decay rates and frequencies."""

    eigenvalues: np.ndarray  # complex, sorted by descending magnitude
    magnitudes: np.ndarray   # |lambda_i|, the per-mode decay rate
    angles: np.ndarray       # principal angle in (-pi, pi], the frequency


def _cycle_frames(cycle):
    return np.asarray(getattr(cycle, "frames", cycle), dtype=np.float64)


def _check_square(k):
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise DimMismatchError(f"operator must be square, got {k.shape}")
    if not np.all(np.isfinite(k)):
        raise NumericalFailureError("operator has non-finite entries")
    return k


def advance(k, frame, steps: int) -> np.ndarray:
    """K^m applied to an embedding frame (m = 0 returns the frame)."""
    k = _check_square(k)
    x = np.asarray(frame, dtype=np.float64)
    if steps < 0:
        raise DimMismatchError(f"step count must be >= 0, got {steps}")
    if x.shape[0] != k.shape[0]:
        raise DimMismatchError(
            f"operator {k.shape} cannot act on frame {x.shape}")
    return np.linalg.matrix_power(k, steps) @ x


def cycle_losses(coder, k, cycle):
    """(loss0, loss1, loss2) of one cycle under the wraparound convention.

    ``coder=None`` evaluates the losses with the identity map in place of
    the autoencoder, which is handy for hand-checkable cases.
    """
    frames = _cycle_frames(cycle)
    k = _check_square(k)
    if coder is None:
        emb = frames
        pred = np.matmul(k, emb)
        emb_next = np.roll(emb, -1, axis=0)
        res1 = pred - emb_next
        loss1 = 0.5 * float((res1 * res1).sum())
        return 0.0, loss1, loss1
    losses, _, _ = coupled_losses(coder, frames[None], k,
                                  loss_weights=(1.0, 1.0, 1.0), want_grads=False)
    return losses


def encode_cycle(coder, cycle) -> np.ndarray:
    """Embedding tensor [T, w, w] of a cycle (eval-mode running statistics)."""
    frames = _cycle_frames(cycle)
    if coder is None:
        return frames
    return encode(coder, frames)


def loss1_from_embedding(emb, k) -> float:
    """Linear-restriction loss of an already-encoded cycle."""
    pred = np.matmul(k, emb)
    res = pred - np.roll(emb, -1, axis=0)
    return 0.5 * float((res * res).sum())


def grad_loss1_from_embedding(emb, k) -> np.ndarray:
    """d loss1 / dK = sum_t (K X_t - X_{t+1}) X_t^T."""
    res = np.matmul(k, emb) - np.roll(emb, -1, axis=0)
    return np.einsum("tij,tkj->ik", res, emb)


def _gram_blocks(emb):
    emb_next = np.roll(emb, -1, axis=0)
    gram = np.einsum("tij,tkj->ik", emb, emb)        # sum_t X_t X_t^T
    cross = np.einsum("tij,tkj->ik", emb_next, emb)  # sum_t X_{t+1} X_t^T
    return gram, cross


def fit_closed_form(coder, cycle, rcond: float = 1e-10) -> np.ndarray:
    """Minimum-norm least-squares operator for one cycle.

    Solves K (sum_t X_t X_t^T) = sum_t X_{t+1} X_t^T; singular Gram
    matrices fall back to the pseudo-inverse with singular values below
    ``rcond * sigma_max`` discarded.
    """
    frames = _cycle_frames(cycle)
    if not np.any(frames):
        raise DegenerateCycleError("all frames are zero; nothing to fit")
    emb = encode_cycle(coder, cycle)
    gram, cross = _gram_blocks(emb)
    # gram is symmetric: K = cross . pinv(gram) via the min-norm lstsq solve
    k_t, _, _, _ = np.linalg.lstsq(gram, cross.T, rcond=rcond)
    return k_t.T


def assemble_augmented_system(emb) -> np.ndarray:
    """Literal per-pair augmented matrices, summed: S = sum_t [A_t | b_t].

    Each snapshot pair contributes A_t = X_t X_t^T stacked beside
    b_t = X_t X_{t+1}^T; summing gives the [w, 2w] augmented system of the
    whole problem whose solution columns are the rows of K.
    """
    emb = np.asarray(emb, dtype=np.float64)
    w = emb.shape[1]
    total = np.zeros((w, 2 * w))
    for t in range(emb.shape[0]):
        x_t = emb[t]
        x_next = emb[(t + 1) % emb.shape[0]]
        total[:, :w] += x_t @ x_t.T
        total[:, w:] += x_t @ x_next.T
    return total


def fit_closed_form_pooled(coder, cycles, rcond: float = 1e-10) -> np.ndarray:
    """One operator for several cycles at once: the normal-equation blocks
    of every cycle are summed before solving.  This is the closed-form
    counterpart of the shared prototype produced by coder training."""
    gram_total = None
    cross_total = None
    signal = False
    for cycle in cycles:
        signal = signal or bool(np.any(_cycle_frames(cycle)))
        emb = encode_cycle(coder, cycle)
        gram, cross = _gram_blocks(emb)
        gram_total = gram if gram_total is None else gram_total + gram
        cross_total = cross if cross_total is None else cross_total + cross
    if gram_total is None or not signal:
        raise DegenerateCycleError("no nonzero cycles to pool")
    k_t, _, _, _ = np.linalg.lstsq(gram_total, cross_total.T, rcond=rcond)
    return k_t.T


def fit_closed_form_augmented(coder, cycle, rcond: float = 1e-10) -> np.ndarray:
    """Solve the summed augmented system instead of the Gram form; the two
    agree because the left block of S is exactly the Gram matrix."""
    frames = _cycle_frames(cycle)
    if not np.any(frames):
        raise DegenerateCycleError("all frames are zero; nothing to fit")
    emb = encode_cycle(coder, cycle)
    augmented = assemble_augmented_system(emb)
    w = emb.shape[1]
    k_t, _, _, _ = np.linalg.lstsq(augmented[:, :w], augmented[:, w:], rcond=rcond)
    return k_t.T


def fit_gradient_descent(coder, cycle, prototype_k, lr: float = 0.01,
                         epochs: int = 400, adam=(0.9, 0.999, 1e-8),
                         return_trace: bool = False):
    """Full-batch Adam on loss1 over K with the coder frozen.

    Starts from ``prototype_k`` (typically the shared operator from coder
    training) and returns the final K; with ``return_trace`` the per-epoch
    post-update loss values come back too.  The loss is convex in K, so
    the iterate heads toward the closed-form solution.
    """
    if lr <= 0:
        raise NonFiniteLossError(f"learning rate must be positive, got {lr}")
    emb = encode_cycle(coder, cycle)
    k = np.array(prototype_k, dtype=np.float64)
    if k.shape != emb.shape[1:]:
        raise DimMismatchError(
            f"prototype {k.shape} does not match embedding {emb.shape[1:]}")
    # the gradient sum_t (K X_t - X_{t+1}) X_t^T collapses to K G - C with
    # the Gram and cross blocks fixed, so each epoch costs one small gemm
    gram, cross = _gram_blocks(emb)
    opt = Adam({"k": k}, lr=lr, betas=adam[:2], eps=adam[2])
    trace = []
    for _ in range(epochs):
        grad = k @ gram - cross
        if not np.all(np.isfinite(grad)):
            raise NonFiniteLossError("gradient diverged; lower the learning rate")
        opt.step({"k": grad})
        loss = loss1_from_embedding(emb, k)
        if not np.isfinite(loss):
            raise NonFiniteLossError("loss diverged; lower the learning rate")
        trace.append(loss)
    if return_trace:
        return k, trace
    return k


def spectrum(k) -> Spectrum:
    """Eigenvalues sorted by descending magnitude (ties by ascending angle)."""
    k = _check_square(k)
    try:
        values = np.linalg.eigvals(k)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigenvalue solver failed: {exc}") from exc
    magnitudes = np.abs(values)
    angles = np.angle(values)
    order = np.lexsort((angles, -magnitudes))
    return Spectrum(eigenvalues=values[order], magnitudes=magnitudes[order],
                    angles=angles[order])


def save_spectrum_csv(spec: Spectrum, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "re", "im", "magnitude", "angle"])
        for i, lam in enumerate(spec.eigenvalues):
            writer.writerow([i, lam.real, lam.imag,
                             spec.magnitudes[i], spec.angles[i]])


def fractional_power(k, exponent: float) -> np.ndarray:
    """Principal real matrix power K^r through the eigendecomposition.

    Requires K diagonalizable (eigenvector condition number <= 1e12) with
    no eigenvalue on the closed negative real axis, where the principal
    branch is undefined.
    """
    k = _check_square(k)
    try:
        values, vectors = np.linalg.eig(k)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"eigendecomposition failed: {exc}") from exc
    cond = np.linalg.cond(vectors)
    if not np.isfinite(cond) or cond > 1e12:
        raise NotDiagonalizableError(
            f"eigenvector matrix condition {cond:.3e} exceeds 1e12")
    scale = max(float(np.abs(values).max()), np.finfo(float).tiny)
    on_axis = (values.real <= 0.0) & (np.abs(values.imag) <= 1e-12 * scale)
    if np.any(on_axis):
        bad = values[on_axis][0]
        raise BranchCutError(
            f"eigenvalue {bad} lies on the closed negative real axis")
    powered = vectors @ np.diag(values.astype(complex) ** exponent) @ np.linalg.inv(vectors)
    norm = np.linalg.norm(k)
    residue = float(np.abs(powered.imag).max())
    if residue > 1e-6 * max(norm, np.finfo(float).tiny):
        raise NumericalFailureError(
            f"imaginary residue {residue:.3e} exceeds 1e-6 * ||K||")
    return powered.real


def convexity_probe(coder, cycle, k_a, k_b, n_points: int = 11,
                    rel_tol: float = 1e-9) -> bool:
    """Check the convex-combination inequality of loss1 along K_a..K_b.

    Samples ``n_points`` evenly spaced mixes and verifies
    L(mix) <= lam L(K_a) + (1 - lam) L(K_b) + rel_tol * scale with
    scale = max(L(K_a), L(K_b), 1).
    """
    emb = encode_cycle(coder, cycle)
    k_a = _check_square(k_a)
    k_b = _check_square(k_b)
    loss_a = loss1_from_embedding(emb, k_a)
    loss_b = loss1_from_embedding(emb, k_b)
    scale = max(loss_a, loss_b, 1.0)
    for lam in np.linspace(0.0, 1.0, n_points):
        mixed = loss1_from_embedding(emb, lam * k_a + (1.0 - lam) * k_b)
        if mixed > lam * loss_a + (1.0 - lam) * loss_b + rel_tol * scale:
            return False
    return True
