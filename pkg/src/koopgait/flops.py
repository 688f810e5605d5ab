"""Analytical FLOPs accounting for layer specs and whole-model reports.

Counts multiply-add pairs times two, biases/BN/activations excluded:

    conv2d: 2 * C_in * N^2 * C_out * W * H
    conv3d: 2 * C_in * N^3 * C_out * W * H * T
    dense:  2 * I * O

All arithmetic stays in exact Python integers until report formatting.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .exceptions import BadSpecError

KINDS = ("conv2d", "conv3d", "dense")

FL_SCORE_NUMERATOR = 10 ** 8


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one compute layer."""

    kind: str
    c_in: int = 0
    c_out: int = 0
    n: int = 0          # kernel size
    width: int = 0
    height: int = 0
    time: int = 0
    i: int = 0          # dense fan-in
    o: int = 0          # dense fan-out
    uses: int = 1
    name: str = ""


_REQUIRED = {
    "conv2d": ("c_in", "c_out", "n", "width", "height"),
    "conv3d": ("c_in", "c_out", "n", "width", "height", "time"),
    "dense": ("i", "o"),
}


def _validated(spec: LayerSpec) -> LayerSpec:
    if spec.kind not in KINDS:
        raise BadSpecError(f"unknown layer kind {spec.kind!r}")
    for fld in _REQUIRED[spec.kind] + ("uses",):
        if getattr(spec, fld) < 1:
            raise BadSpecError(f"{spec.kind} layer needs {fld} >= 1, got "
                               f"{getattr(spec, fld)}")
    return spec


def layer_flops(spec: LayerSpec) -> int:
    """FLOPs of one layer, multiplied by its repetition count."""
    _validated(spec)
    if spec.kind == "conv2d":
        base = 2 * spec.c_in * spec.n ** 2 * spec.c_out * spec.width * spec.height
    elif spec.kind == "conv3d":
        base = (2 * spec.c_in * spec.n ** 3 * spec.c_out
                * spec.width * spec.height * spec.time)
    else:
        base = 2 * spec.i * spec.o
    return base * spec.uses


def fc_conv_ratio(i: int, o: int, c_in: int, c_out: int, n: int,
                  w_post: int, h_post: int) -> float:
    """Cost ratio of a dense layer over a post-pooling conv layer:
    2IO / (2 c_in n^2 c_out w_post h_post)."""
    for name, val in (("i", i), ("o", o), ("c_in", c_in), ("c_out", c_out),
                      ("n", n), ("w_post", w_post), ("h_post", h_post)):
        if val < 1:
            raise BadSpecError(f"{name} must be >= 1, got {val}")
    return (2 * i * o) / (2 * c_in * n ** 2 * c_out * w_post * h_post)


def fl_score(flops: int) -> float:
    """Convenience scale 10^8 / FLOPs for comparing model complexity."""
    if flops <= 0:
        raise BadSpecError(f"FLOPs must be positive, got {flops}")
    return FL_SCORE_NUMERATOR / flops


@dataclass
class CostEntry:
    name: str
    kind: str
    flops: int


@dataclass
class CostReport:
    entries: list           # CostEntry per layer, input order
    total: int
    dense_total: int
    conv_total: int

    @property
    def score(self) -> float:
        return fl_score(self.total)


def model_cost(specs) -> CostReport:
    """Sum layer FLOPs and split the total into dense vs convolutional."""
    specs = list(specs)
    if not specs:
        raise BadSpecError("layer list is empty")
    entries = []
    dense_total = 0
    conv_total = 0
    for idx, spec in enumerate(specs):
        flops = layer_flops(spec)
        entries.append(CostEntry(name=spec.name or f"layer_{idx}",
                                 kind=spec.kind, flops=flops))
        if spec.kind == "dense":
            dense_total += flops
        else:
            conv_total += flops
    return CostReport(entries=entries, total=dense_total + conv_total,
                      dense_total=dense_total, conv_total=conv_total)


def load_layer_specs(path) -> list:
    """Read a JSON list of layer objects into LayerSpec values."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadSpecError(f"{path}: {exc}") from exc
    if not isinstance(raw, list):
        raise BadSpecError(f"{path}: expected a JSON list of layer objects")
    specs = []
    for idx, obj in enumerate(raw):
        if not isinstance(obj, dict) or "kind" not in obj:
            raise BadSpecError(f"{path}: layer {idx} is not an object with 'kind'")
        known = {f for f in LayerSpec.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise BadSpecError(f"{path}: layer {idx} has unknown fields {unknown}")
        specs.append(LayerSpec(**obj))
    return specs


def bundled_spec_path(name: str) -> Path:
    """Path of a spec file shipped with the package (e.g. 'invka_default')."""
    ref = resources.files("koopgait").joinpath("specs", f"{name}.json")
    path = Path(str(ref))
    if not path.exists():
        raise BadSpecError(f"no bundled spec named {name!r}")
    return path


def save_cost_csv(report: CostReport, path) -> None:
    """Per-layer breakdown plus a total row; FL Score to three significant
    figures, raw counts exact."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "kind", "flops", "share"])
        for entry in report.entries:
            writer.writerow([entry.name, entry.kind, entry.flops,
                             f"{entry.flops / report.total:.4f}"])
        writer.writerow(["total", "", report.total, "1.0000"])
        writer.writerow(["fl_score", "", f"{report.score:.3g}", ""])


def stacked_rows(reports: dict) -> list:
    """(label, dense_flops, conv_flops) rows ready for a stacked bar chart."""
    return [(label, rep.dense_total, rep.conv_total)
            for label, rep in reports.items()]
