"""Two-phase training: shared coder plus prototype operator, then frozen
per-cycle operator fits.

Phase one jointly Adam-optimizes the ET parameters and one shared operator
K on mini-batches of cycles (the default only checks the linear
restriction, whose zero already forces the prediction restriction to
zero).  The trained K then seeds phase two, where every cycle gets its own
operator with all coder layers frozen, either by gradient descent or by
the closed-form least-squares solve.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .coder import (
    CouplingCoder,
    coupled_losses,
    init_coder,
    update_running_stats,
)
from .exceptions import (
    BadSpecError,
    EmptyInputError,
    InconsistentShapesError,
)
from .koopman import fit_closed_form, fit_gradient_descent
from .optim import Adam, clip_global_norm


def default_k_init(w: int, mode: str = "scaled"):
    """Elementwise Gaussian init for the shared operator.

    The nominal values are mean 1 and variance 4; at ``w = 64`` a matrix of
    such entries has norm far beyond what repeated multiplication over a
    cycle tolerates, so the default divides both by w (mean 1/w, std 2/w).
    ``mode="paper"`` keeps the literal mean 1 / std 2 reading.
    """
    if mode == "paper":
        return 1.0, 2.0
    if mode == "scaled":
        return 1.0 / w, 2.0 / w
    raise BadSpecError(f"unknown k-init mode {mode!r}")


@dataclass
class TrainConfig:
    """Hyperparameters of the coder-training phase."""

    batch_size: int = 4
    lr: float = 1e-3
    epochs: int = 2000
    loss_weights: tuple = (0.0, 1.0, 0.0)
    adam: tuple = (0.9, 0.999, 1e-8)
    seed: int = 0
    k_init: tuple = None     # (mean, std); None -> default_k_init(w)
    clip_norm: float = 10.0  # global-norm gradient clip; 0 disables

    def validate(self):
        if self.lr <= 0:
            raise BadSpecError(f"learning rate must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise BadSpecError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise BadSpecError(f"batch size must be >= 1, got {self.batch_size}")
        weights = tuple(float(v) for v in self.loss_weights)
        if len(weights) != 3 or any(v < 0 for v in weights):
            raise BadSpecError(f"loss weights must be 3 values >= 0, got {weights}")
        if not any(v > 0 for v in weights):
            raise BadSpecError("at least one loss weight must be positive")


@dataclass
class TrainTrace:
    """Per-epoch loss values and wall-clock seconds."""

    loss0: list = field(default_factory=list)
    loss1: list = field(default_factory=list)
    loss2: list = field(default_factory=list)
    total: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def __len__(self):
        return len(self.total)


def stack_cycles(cycles) -> np.ndarray:
    """[B, T, w, w] array from GaitCycle objects or raw per-cycle arrays."""
    if len(cycles) == 0:
        raise EmptyInputError("need at least one cycle")
    arrays = [np.asarray(getattr(c, "frames", c), dtype=np.float64) for c in cycles]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise InconsistentShapesError(
            f"cycles disagree on shape: {sorted({a.shape for a in arrays})}")
    if len(shape) != 3 or shape[1] != shape[2]:
        raise InconsistentShapesError(f"cycles must be [T, w, w], got {shape}")
    return np.stack(arrays)


def train_coder(cycles, cfg: TrainConfig, activation: str = "none",
                dtype=np.float64):
    """Phase one: returns (frozen coder, prototype K, trace).

    Mini-batch losses and gradients are normalized per cycle so the
    learning rate is independent of batch size.  The trace records the
    epoch mean of the optimized losses; legs whose weight is zero are
    probed once per epoch on the last batch so loss0/loss2 are always
    reported.  Deterministic for a fixed seed and thread count.
    """
    cfg.validate()
    data = stack_cycles(cycles)
    n_cycles, _, w = data.shape[0], data.shape[1], data.shape[2]
    lam = tuple(float(v) for v in cfg.loss_weights)

    rng = np.random.default_rng(cfg.seed)
    model = init_coder(w, rng, dtype=dtype, activation=activation).train()
    k_mean, k_std = cfg.k_init if cfg.k_init is not None else default_k_init(w)
    k = rng.normal(k_mean, k_std, (w, w)).astype(dtype)

    params = dict(model.parameters())
    params["k"] = k
    opt = Adam(params, lr=cfg.lr, betas=cfg.adam[:2], eps=cfg.adam[2])

    trace = TrainTrace()
    for _ in range(cfg.epochs):
        started = time.perf_counter()
        order = rng.permutation(n_cycles)
        sums = np.zeros(3)
        computed = np.zeros(3, dtype=bool)
        n_batches = 0
        last_batch = None
        for lo in range(0, n_cycles, cfg.batch_size):
            batch = data[order[lo:lo + cfg.batch_size]]
            last_batch = batch
            scale = 1.0 / batch.shape[0]
            losses, grads, bn_stats = coupled_losses(
                model, batch, k,
                loss_weights=(lam[0] * scale, lam[1] * scale, lam[2] * scale),
                want_grads=True)
            if cfg.clip_norm:
                clip_global_norm(grads, cfg.clip_norm)
            opt.step(grads)
            update_running_stats(model, bn_stats)
            for i in range(3):
                if lam[i] > 0.0:
                    sums[i] += losses[i] * scale
                    computed[i] = True
            n_batches += 1
        epoch = sums / n_batches
        if not computed.all():
            # probe the unweighted legs so every trace row reports all three
            probe, _, _ = coupled_losses(model, last_batch, k,
                                         loss_weights=(1.0, 1.0, 1.0),
                                         want_grads=False)
            for i in range(3):
                if not computed[i]:
                    epoch[i] = probe[i] / last_batch.shape[0]
        trace.loss0.append(float(epoch[0]))
        trace.loss1.append(float(epoch[1]))
        trace.loss2.append(float(epoch[2]))
        trace.total.append(float(lam[0] * epoch[0] + lam[1] * epoch[1]
                                 + lam[2] * epoch[2]))
        trace.seconds.append(time.perf_counter() - started)

    model.eval()
    return model, k, trace


def fit_all_matrices(model: CouplingCoder, prototype_k, cycles,
                     method: str = "gd", lr: float = 0.01, epochs: int = 400,
                     adam=(0.9, 0.999, 1e-8)) -> list:
    """Phase two: one operator per cycle with the coder frozen.

    ``method="gd"`` runs full-batch Adam from the prototype (batch size 1);
    ``method="analytic"`` takes the closed-form least-squares solution.
    Results come back as (cycle_index, K) in input order.
    """
    if method not in ("gd", "analytic"):
        raise BadSpecError(f"unknown fit method {method!r}")
    if method == "gd" and prototype_k is None:
        raise BadSpecError("gradient-descent fitting needs a prototype operator")
    model.eval()
    fitted = []
    for idx, cycle in enumerate(cycles):
        if method == "analytic":
            k = fit_closed_form(model, cycle)
        else:
            k = fit_gradient_descent(model, cycle, prototype_k,
                                     lr=lr, epochs=epochs, adam=adam)
        fitted.append((idx, k))
    return fitted
