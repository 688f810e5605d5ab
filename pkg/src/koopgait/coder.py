"""Invertible checkerboard-coupling autoencoder with hand-written gradients.

One frame is split by pixel-coordinate parity into two half-vectors and
coded additively:

    y1 = u1 + f(u2)
    y2 = u2 + g(y1)

Decoding subtracts in reverse order (u2 = y2 - g(y1), u1 = y1 - f(u2)), so
the map is exactly invertible for any functions f and g.  Both are "equal
transforms" (ET): a dense layer followed by batch normalization (an
optional tanh can be switched on), mapping half-vectors to half-vectors.
The embedding frame keeps the w x w shape by writing y1/y2 back into the
even/odd parity positions, so a w x w transition matrix can act on it by
ordinary matrix multiplication.

Everything here is plain numpy; the backward pass (`coder_backward`)
differentiates the explicit compute graph, including through batch-norm
statistics in training mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import dataio
from .exceptions import (
    DimMismatchError,
    NonFiniteLossError,
    OddResolutionError,
    TensorIOError,
)

PARAM_KEYS = ("f.weight", "f.bias", "f.gamma", "f.beta",
              "g.weight", "g.bias", "g.gamma", "g.beta")


# ---------------------------------------------------------------------------
# checkerboard partition
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _parity_masks(w: int):
    rows, cols = np.indices((w, w))
    even = (rows + cols) % 2 == 0
    return even, ~even


def checkerboard_split(frames):
    """Split [..., w, w] into (u1, u2) of shape [..., w*w/2].

    u1 takes the pixels with even (row + col) parity in row-major order; u2
    takes the odd ones.  Width must be even so the halves match.
    """
    arr = np.asarray(frames)
    w = arr.shape[-1]
    if arr.shape[-2] != w:
        raise DimMismatchError(f"frames must be square, got {arr.shape}")
    if w % 2 != 0:
        raise OddResolutionError(f"checkerboard split needs even width, got {w}")
    even, odd = _parity_masks(w)
    return arr[..., even], arr[..., odd]


def checkerboard_merge(u1, u2, w: int):
    """Inverse of :func:`checkerboard_split`."""
    u1 = np.asarray(u1)
    u2 = np.asarray(u2)
    half = w * w // 2
    if u1.shape != u2.shape or u1.shape[-1] != half:
        raise DimMismatchError(
            f"halves must both have last dim {half}, got {u1.shape} / {u2.shape}")
    even, odd = _parity_masks(w)
    out = np.empty(u1.shape[:-1] + (w, w), dtype=u1.dtype)
    out[..., even] = u1
    out[..., odd] = u2
    return out


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

@dataclass
class ETBlock:
    """Dense + batch-norm transform from half-vectors to half-vectors."""

    weight: np.ndarray          # [half, half]
    bias: np.ndarray            # [half]
    bn_gamma: np.ndarray        # [half]
    bn_beta: np.ndarray         # [half]
    bn_mean: np.ndarray         # running mean, [half]
    bn_var: np.ndarray          # running variance, [half]
    bn_eps: float = 1e-5
    bn_momentum: float = 0.9
    training_mode: bool = False
    activation: str = "none"    # "none" or "tanh"

    @property
    def half(self) -> int:
        return self.weight.shape[0]


@dataclass
class CouplingCoder:
    """The pair of ET blocks plus the partition geometry."""

    et_f: ETBlock
    et_g: ETBlock
    w: int

    @property
    def half(self) -> int:
        return self.w * self.w // 2

    @property
    def dtype(self):
        return self.et_f.weight.dtype

    @property
    def training_mode(self) -> bool:
        return self.et_f.training_mode

    def train(self):
        self.et_f.training_mode = True
        self.et_g.training_mode = True
        return self

    def eval(self):
        self.et_f.training_mode = False
        self.et_g.training_mode = False
        return self

    def parameters(self) -> dict:
        """Live references to the trainable arrays, keyed like the gradients."""
        return {
            "f.weight": self.et_f.weight, "f.bias": self.et_f.bias,
            "f.gamma": self.et_f.bn_gamma, "f.beta": self.et_f.bn_beta,
            "g.weight": self.et_g.weight, "g.bias": self.et_g.bias,
            "g.gamma": self.et_g.bn_gamma, "g.beta": self.et_g.bn_beta,
        }

    def num_trainable(self) -> int:
        return sum(p.size for p in self.parameters().values())


def init_coder(w: int, rng=None, dtype=np.float64, activation: str = "none",
               bn_eps: float = 1e-5, bn_momentum: float = 0.9) -> CouplingCoder:
    """Fresh coder: Glorot-uniform dense weights, identity batch norm."""
    if w % 2 != 0:
        raise OddResolutionError(f"coder width must be even, got {w}")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    half = w * w // 2
    bound = np.sqrt(6.0 / (half + half))

    def block():
        return ETBlock(
            weight=rng.uniform(-bound, bound, (half, half)).astype(dtype),
            bias=np.zeros(half, dtype=dtype),
            bn_gamma=np.ones(half, dtype=dtype),
            bn_beta=np.zeros(half, dtype=dtype),
            bn_mean=np.zeros(half, dtype=dtype),
            bn_var=np.ones(half, dtype=dtype),
            bn_eps=bn_eps,
            bn_momentum=bn_momentum,
            activation=activation,
        )

    return CouplingCoder(et_f=block(), et_g=block(), w=w)


# ---------------------------------------------------------------------------
# ET forward / backward
# ---------------------------------------------------------------------------

def _et_forward(block: ETBlock, x, training: bool):
    # x: [N, half] -> (out, cache)
    a = x @ block.weight.T + block.bias
    if training:
        mu = a.mean(axis=0)
        var = a.var(axis=0)
    else:
        mu = block.bn_mean
        var = block.bn_var
    inv = 1.0 / np.sqrt(var + block.bn_eps)
    xhat = (a - mu) * inv
    y = block.bn_gamma * xhat + block.bn_beta
    if block.activation == "tanh":
        out = np.tanh(y)
        act_cache = out
    else:
        out = y
        act_cache = None
    cache = (x, xhat, inv, act_cache, training, mu, var)
    return out, cache


def _et_backward(block: ETBlock, dout, cache, grads, prefix):
    # reverse of _et_forward; accumulates parameter grads, returns dx
    x, xhat, inv, act_cache, training, _, _ = cache
    if block.activation == "tanh":
        dy = dout * (1.0 - act_cache * act_cache)
    else:
        dy = dout
    grads[prefix + ".gamma"] += (dy * xhat).sum(axis=0)
    grads[prefix + ".beta"] += dy.sum(axis=0)
    dxhat = dy * block.bn_gamma
    if training:
        n = dxhat.shape[0]
        da = (inv / n) * (n * dxhat
                          - dxhat.sum(axis=0)
                          - xhat * (dxhat * xhat).sum(axis=0))
    else:
        da = dxhat * inv
    grads[prefix + ".weight"] += da.T @ x
    grads[prefix + ".bias"] += da.sum(axis=0)
    return da @ block.weight


def et_apply(block: ETBlock, x) -> np.ndarray:
    """Apply one ET block: batchnorm(weight @ x + bias), no trailing
    nonlinearity unless the tanh option is on.

    In training mode the batch statistics of the rows of ``x`` are used, so
    ``x`` must be 2-D; in eval mode the stored running statistics apply and
    a single vector is fine.
    """
    arr = np.asarray(x, dtype=block.weight.dtype)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != block.half:
        raise DimMismatchError(
            f"ET input must have last dim {block.half}, got {np.shape(x)}")
    out, _ = _et_forward(block, arr, block.training_mode)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# encode / decode
# ---------------------------------------------------------------------------

def _as_frame_batch(coder, frames):
    arr = np.asarray(frames, dtype=coder.dtype)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != coder.w or arr.shape[2] != coder.w:
        raise DimMismatchError(
            f"expected frames of shape [{coder.w}, {coder.w}], got {np.shape(frames)}")
    return arr, single


def encode(coder: CouplingCoder, frames) -> np.ndarray:
    """Map frames to embedding frames of the same shape.

    Accepts one [w, w] frame or a stack [N, w, w].  In training mode the
    ET batch statistics are taken over the N frames passed here.
    """
    batch, single = _as_frame_batch(coder, frames)
    u1, u2 = checkerboard_split(batch)
    training = coder.training_mode
    f_out, _ = _et_forward(coder.et_f, u2, training)
    y1 = u1 + f_out
    g_out, _ = _et_forward(coder.et_g, y1, training)
    y2 = u2 + g_out
    emb = checkerboard_merge(y1, y2, coder.w)
    return emb[0] if single else emb


def decode(coder: CouplingCoder, embeddings) -> np.ndarray:
    """Exact inverse of :func:`encode` (run the coder in eval mode so f and
    g are input-independent; training-mode decode matches an encode only
    when both see the same batch)."""
    batch, single = _as_frame_batch(coder, embeddings)
    y1, y2 = checkerboard_split(batch)
    training = coder.training_mode
    g_out, _ = _et_forward(coder.et_g, y1, training)
    u2 = y2 - g_out
    f_out, _ = _et_forward(coder.et_f, u2, training)
    u1 = y1 - f_out
    rec = checkerboard_merge(u1, u2, coder.w)
    return rec[0] if single else rec


# ---------------------------------------------------------------------------
# joint loss / gradient engine
# ---------------------------------------------------------------------------

def _as_cycle_batch(coder, cycles):
    arr = np.asarray(cycles, dtype=coder.dtype)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[2] != coder.w or arr.shape[3] != coder.w:
        raise DimMismatchError(
            f"expected cycles of shape [B, T, {coder.w}, {coder.w}], got "
            f"{np.shape(cycles)}")
    if arr.shape[1] < 2:
        raise DimMismatchError(f"cycles need T >= 2, got T={arr.shape[1]}")
    return arr


def coupled_losses(coder: CouplingCoder, cycles, k_matrix, loss_weights=(1.0, 1.0, 1.0),
                   want_grads=False, training=None):
    """Losses (and optionally gradients) of the coupled coder/operator graph.

    cycles: [B, T, w, w] (or a single [T, w, w]) batch of gait cycles with
    the periodic wraparound convention that frame T+1 is frame 1.  Returns
    ``(losses, grads, bn_stats)`` where losses is the tuple
    (loss0, loss1, loss2) of raw sums over the batch:

        loss0 = 1/2 sum_t ||G_t - dec(enc(G_t))||^2
        loss1 = 1/2 sum_t ||enc(G_{t+1}) - K enc(G_t)||^2
        loss2 = 1/2 sum_t ||G_{t+1} - dec(K enc(G_t))||^2

    grads maps the eight ET parameter names plus "k" to arrays (None when
    ``want_grads`` is false); gradients cover lam0*loss0 + lam1*loss1 +
    lam2*loss2 for the given weights.  bn_stats carries the encode-side
    batch means/variances in training mode so a trainer can update
    running statistics (the engine itself never mutates the coder).
    """
    lam0, lam1, lam2 = (float(v) for v in loss_weights)
    batch = _as_cycle_batch(coder, cycles)
    if training is None:
        training = coder.training_mode
    n_cycles, cycle_len, w = batch.shape[0], batch.shape[1], batch.shape[2]
    n = n_cycles * cycle_len
    k = np.asarray(k_matrix, dtype=coder.dtype)
    if k.shape != (w, w):
        raise DimMismatchError(f"K must be [{w}, {w}], got {k.shape}")

    flat = batch.reshape(n, w, w)
    u1, u2 = checkerboard_split(flat)

    # encode all frames
    f_out, cache_f = _et_forward(coder.et_f, u2, training)
    y1 = u1 + f_out
    g_out, cache_g = _et_forward(coder.et_g, y1, training)
    y2 = u2 + g_out
    emb = checkerboard_merge(y1, y2, w).reshape(n_cycles, cycle_len, w, w)

    pred_emb = np.matmul(k, emb)                      # K enc(G_t)
    emb_next = np.roll(emb, -1, axis=1)               # enc(G_{t+1}), wraparound
    res1 = pred_emb - emb_next
    loss1 = 0.5 * float((res1 * res1).sum())

    # reconstruction leg: literal decode of the encodings
    rec_res = cache_g0 = cache_f0 = None
    loss0 = 0.0
    if lam0 > 0.0 or not want_grads:
        g0_out, cache_g0 = _et_forward(coder.et_g, y1, training)
        u2_rec = y2 - g0_out
        f0_out, cache_f0 = _et_forward(coder.et_f, u2_rec, training)
        u1_rec = y1 - f0_out
        rec_res = checkerboard_merge(u1_rec, u2_rec, w) - flat
        loss0 = 0.5 * float((rec_res * rec_res).sum())

    # prediction leg: decode of K enc(G_t) against G_{t+1}
    res2 = cache_g2 = cache_f2 = None
    loss2 = 0.0
    if lam2 > 0.0 or not want_grads:
        pred_flat = pred_emb.reshape(n, w, w)
        py1, py2 = checkerboard_split(pred_flat)
        g2_out, cache_g2 = _et_forward(coder.et_g, py1, training)
        u2_dec = py2 - g2_out
        f2_out, cache_f2 = _et_forward(coder.et_f, u2_dec, training)
        u1_dec = py1 - f2_out
        pred_frames = checkerboard_merge(u1_dec, u2_dec, w).reshape(batch.shape)
        res2 = pred_frames - np.roll(batch, -1, axis=1)
        loss2 = 0.5 * float((res2 * res2).sum())

    total = lam0 * loss0 + lam1 * loss1 + lam2 * loss2
    if not np.isfinite(total):
        raise NonFiniteLossError(
            f"loss is not finite (loss0={loss0}, loss1={loss1}, loss2={loss2})")

    bn_stats = None
    if training:
        bn_stats = {"f": (cache_f[5], cache_f[6]), "g": (cache_g[5], cache_g[6])}

    if not want_grads:
        return (loss0, loss1, loss2), None, bn_stats

    grads = {key: np.zeros_like(val) for key, val in coder.parameters().items()}
    grads["k"] = np.zeros_like(k)
    d_emb = np.zeros_like(emb)
    d_pred = np.zeros_like(pred_emb)
    dy1 = np.zeros_like(y1)
    dy2 = np.zeros_like(y2)

    if lam2 > 0.0:
        d_pred_frames = (lam2 * res2).reshape(n, w, w)
        du1_dec, du2_dec_direct = checkerboard_split(d_pred_frames)
        dpy1 = du1_dec.copy()
        du2_dec = du2_dec_direct + _et_backward(coder.et_f, -du1_dec, cache_f2,
                                                grads, "f")
        dpy2 = du2_dec
        dpy1 += _et_backward(coder.et_g, -du2_dec, cache_g2, grads, "g")
        d_pred += checkerboard_merge(dpy1, dpy2, w).reshape(pred_emb.shape)

    if lam1 > 0.0:
        d_pred += lam1 * res1
        d_emb += np.roll(-lam1 * res1, 1, axis=1)

    if lam1 > 0.0 or lam2 > 0.0:
        grads["k"] += np.einsum("btij,btkj->ik", d_pred, emb)
        d_emb += np.matmul(k.T, d_pred)

    if lam0 > 0.0:
        d_rec = (lam0 * rec_res)
        du1_rec, du2_rec_direct = checkerboard_split(d_rec)
        dy1 += du1_rec
        du2_rec = du2_rec_direct + _et_backward(coder.et_f, -du1_rec, cache_f0,
                                                grads, "f")
        dy2 += du2_rec
        dy1 += _et_backward(coder.et_g, -du2_rec, cache_g0, grads, "g")

    d_emb_flat = d_emb.reshape(n, w, w)
    dy1_emb, dy2_emb = checkerboard_split(d_emb_flat)
    dy1 += dy1_emb
    dy2 += dy2_emb

    # encode backward: y2 = u2 + g(y1), y1 = u1 + f(u2)
    dy1 += _et_backward(coder.et_g, dy2, cache_g, grads, "g")
    _et_backward(coder.et_f, dy1, cache_f, grads, "f")

    for key, val in grads.items():
        if not np.all(np.isfinite(val)):
            raise NonFiniteLossError(f"gradient for {key} is not finite")
    return (loss0, loss1, loss2), grads, bn_stats


def coder_backward(coder: CouplingCoder, cycles, k_matrix, loss_weights) -> dict:
    """Exact analytic gradients of lam0*loss0 + lam1*loss1 + lam2*loss2 with
    respect to every ET parameter and K, via reverse-mode differentiation of
    the explicit compute graph."""
    _, grads, _ = coupled_losses(coder, cycles, k_matrix, loss_weights,
                                 want_grads=True)
    return grads


def update_running_stats(coder: CouplingCoder, bn_stats) -> None:
    """Fold one batch's encode-side statistics into the running BN state:
    running = momentum * running + (1 - momentum) * batch."""
    for name, block in (("f", coder.et_f), ("g", coder.et_g)):
        mu, var = bn_stats[name]
        m = block.bn_momentum
        block.bn_mean[...] = m * block.bn_mean + (1.0 - m) * mu
        block.bn_var[...] = m * block.bn_var + (1.0 - m) * var


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_BLOCK_TENSORS = ("weight", "bias", "bn_gamma", "bn_beta", "bn_mean", "bn_var")


def save_coder(coder: CouplingCoder, dir_path) -> None:
    """Checkpoint: a directory of IKA1 tensors plus a JSON metadata file."""
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "w": coder.w,
        "bn_eps": coder.et_f.bn_eps,
        "bn_momentum": coder.et_f.bn_momentum,
        "activation": coder.et_f.activation,
    }
    try:
        (out / "meta.json").write_text(json.dumps(meta, indent=2))
    except OSError as exc:
        raise TensorIOError(f"{out}: {exc}") from exc
    for name, block in (("f", coder.et_f), ("g", coder.et_g)):
        for attr in _BLOCK_TENSORS:
            dataio.save_tensor(getattr(block, attr), out / f"{name}_{attr}.ika1")


def load_coder(dir_path) -> CouplingCoder:
    """Load a checkpoint back as a float64 coder in eval mode."""
    src = Path(dir_path)
    try:
        meta = json.loads((src / "meta.json").read_text())
    except OSError as exc:
        raise TensorIOError(f"{src}: {exc}") from exc

    def block(name):
        tensors = {attr: dataio.load_tensor(src / f"{name}_{attr}.ika1").astype(np.float64)
                   for attr in _BLOCK_TENSORS}
        return ETBlock(bn_eps=float(meta["bn_eps"]),
                       bn_momentum=float(meta["bn_momentum"]),
                       activation=meta.get("activation", "none"),
                       training_mode=False,
                       **tensors)

    return CouplingCoder(et_f=block("f"), et_g=block("g"), w=int(meta["w"]))
