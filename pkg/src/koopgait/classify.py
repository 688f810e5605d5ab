"""Logistic-regression identification over flattened operators.

A fitted operator is flattened row-major into a w^2 feature vector; class
scores are w_c . F(K) + b_c.  The multiclass head is multinomial softmax
(the one-vs-rest variant is available by flag), trained full-batch with
backtracking line search so the loss never increases.  Per-class weight
vectors reshape back to [w, w] maps whose magnitudes show which operator
entries drive the decision.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dataio
from .exceptions import (
    DimMismatchError,
    EmptyInputError,
    SingleClassError,
    UnfittedModelError,
)


@dataclass
class ClassifierModel:
    classes: list                 # ordered labels
    weights: np.ndarray           # [n_classes, w*w]
    biases: np.ndarray            # [n_classes]
    reg_weight: float = 200.0
    max_iter: int = 2000
    n_iter: int = 0
    converged: bool = False
    one_vs_rest: bool = False
    loss_trace: list = None       # objective value per solver iteration


def _flatten(k, dim=None) -> np.ndarray:
    arr = np.asarray(k, dtype=np.float64).ravel()  # row-major, pinned everywhere
    if dim is not None and arr.size != dim:
        raise DimMismatchError(f"operator flattens to {arr.size}, model wants {dim}")
    return arr


def _softmax(scores):
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(scores):
    shifted = scores - scores.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _descend(x, y_onehot, l2, max_iter, tol):
    # full-batch gradient descent with Armijo backtracking; zero init,
    # biases unpenalized, data term is the per-sample mean
    n, dim = x.shape
    n_classes = y_onehot.shape[1]
    weights = np.zeros((n_classes, dim))
    biases = np.zeros(n_classes)

    def objective(w, b):
        logp = _log_softmax(x @ w.T + b)
        return -(logp * y_onehot).sum() / n + 0.5 * l2 * float((w * w).sum())

    def gradients(w, b):
        probs = _softmax(x @ w.T + b)
        delta = (probs - y_onehot) / n
        return delta.T @ x + l2 * w, delta.sum(axis=0)

    value = objective(weights, biases)
    trace = [value]
    step = 1.0
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        grad_w, grad_b = gradients(weights, biases)
        gnorm2 = float((grad_w * grad_w).sum() + (grad_b * grad_b).sum())
        if np.sqrt(gnorm2) <= tol:
            converged = True
            iterations -= 1
            break
        step = min(step * 2.0, 1024.0)
        for _ in range(60):
            w_new = weights - step * grad_w
            b_new = biases - step * grad_b
            v_new = objective(w_new, b_new)
            if v_new <= value - 1e-4 * step * gnorm2:
                break
            step *= 0.5
        weights, biases, value = w_new, b_new, v_new
        trace.append(value)
    return weights, biases, iterations, converged, trace


def fit_logreg(samples, reg_weight: float = 200.0, max_iter: int = 2000,
               tol: float = 1e-6, one_vs_rest: bool = False) -> ClassifierModel:
    """Fit on (operator, label) pairs.

    ``reg_weight`` is an inverse penalty: the L2 strength is 1/reg_weight,
    so the stated default of 200 keeps regularization minimal.  The solver
    is deterministic (zero init, full batch) and stops once the gradient
    norm drops to ``tol`` or after ``max_iter`` iterations.
    """
    if len(samples) == 0:
        raise EmptyInputError("no training samples")
    labels = [lab for _, lab in samples]
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise SingleClassError(f"need >= 2 distinct labels, got {classes}")
    x = np.stack([_flatten(k) for k, _ in samples])
    index = {c: i for i, c in enumerate(classes)}
    y = np.zeros((len(samples), len(classes)))
    y[np.arange(len(samples)), [index[lab] for lab in labels]] = 1.0
    l2 = 1.0 / float(reg_weight)

    if one_vs_rest:
        weights = np.zeros((len(classes), x.shape[1]))
        biases = np.zeros(len(classes))
        total_iter = 0
        converged = True
        for i in range(len(classes)):
            onehot = np.stack([1.0 - y[:, i], y[:, i]], axis=1)
            w2, b2, it, conv, _ = _descend(x, onehot, l2, max_iter, tol)
            weights[i] = w2[1] - w2[0]
            biases[i] = b2[1] - b2[0]
            total_iter = max(total_iter, it)
            converged = converged and conv
        return ClassifierModel(classes=classes, weights=weights, biases=biases,
                               reg_weight=reg_weight, max_iter=max_iter,
                               n_iter=total_iter, converged=converged,
                               one_vs_rest=True)

    weights, biases, iterations, converged, trace = _descend(x, y, l2,
                                                             max_iter, tol)
    return ClassifierModel(classes=classes, weights=weights, biases=biases,
                           reg_weight=reg_weight, max_iter=max_iter,
                           n_iter=iterations, converged=converged,
                           loss_trace=trace)


def predict(model: ClassifierModel, k):
    """(label, per-class probabilities) for one operator; ties break toward
    the earlier class in ``model.classes``."""
    if model.weights is None:
        raise UnfittedModelError("model has no weights")
    features = _flatten(k, model.weights.shape[1])
    scores = model.weights @ features + model.biases
    probs = _softmax(scores)
    return model.classes[int(np.argmax(scores))], probs


def rank1_accuracy(model: ClassifierModel, samples) -> float:
    """Fraction of (operator, label) pairs whose top prediction is right."""
    if len(samples) == 0:
        raise EmptyInputError("no evaluation samples")
    hits = sum(1 for k, lab in samples if predict(model, k)[0] == lab)
    return hits / len(samples)


def export_weight_maps(model: ClassifierModel) -> dict:
    """Per-class [w, w] maps of absolute weights, reshaped row-major to
    mirror the flattening order."""
    if model.weights is None:
        raise UnfittedModelError("model has no weights")
    dim = model.weights.shape[1]
    w = int(round(np.sqrt(dim)))
    if w * w != dim:
        raise DimMismatchError(f"feature dim {dim} is not a square")
    return {c: np.abs(model.weights[i]).reshape(w, w)
            for i, c in enumerate(model.classes)}


def save_weight_maps(model: ClassifierModel, dir_path) -> list:
    """Write every class map as an IKA1 tensor plus a PGM heatmap scaled
    linearly to 0..255; returns the written paths."""
    maps = export_weight_maps(model)
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for label, weight_map in maps.items():
        base = out / f"weight_map_class{label}"
        dataio.save_tensor(weight_map, base.with_suffix(".ika1"))
        peak = weight_map.max()
        heat = weight_map / peak if peak > 0 else weight_map
        dataio.write_pgm(base.with_suffix(".pgm"), heat)
        written.extend([base.with_suffix(".ika1"), base.with_suffix(".pgm")])
    return written
