"""Silhouette sequence loading, IKA1 tensor files, and synthetic walker data.

Frames are square ``[w, w]`` float arrays with values in ``[0, 1]``; binary
silhouettes hold exactly ``{0.0, 1.0}``.  Sequences stack frames into
``[L, w, w]``.  Tensors are exchanged on disk in the IKA1 format:

    bytes 0-3   magic ``b"IKA1"``
    byte  4     u8 ndim (1..3)
    then        ndim little-endian u32 extents
    then        row-major little-endian float32 payload
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import (
    BadMagicError,
    BadSpecError,
    DimMismatchError,
    MissingDirectoryError,
    TensorIOError,
    TooFewFramesError,
    UnreadableImageError,
)

IKA1_MAGIC = b"IKA1"

_IMAGE_SUFFIXES = {".pgm", ".png"}


# ---------------------------------------------------------------------------
# domain containers
# ---------------------------------------------------------------------------

@dataclass
class SilhouetteSequence:
    """Ordered stack of same-sized silhouette frames from one source."""

    frames: np.ndarray  # [L, w, w], float32, values in [0, 1]
    source_id: str
    subject_id: int

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 3 or f.shape[1] != f.shape[2]:
            raise DimMismatchError(f"sequence frames must be [L, w, w], got {f.shape}")
        if f.shape[0] < 2:
            raise TooFewFramesError(f"sequence needs >= 2 frames, got {f.shape[0]}")
        self.frames = f

    def __len__(self):
        return self.frames.shape[0]

    @property
    def w(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the deterministic synthetic walker dataset."""

    n_subjects: int = 10
    cycles_per_subject: int = 6
    period: int = 12
    w: int = 64
    noise: float = 0.0
    seed: int = 0

    def validate(self):
        if self.n_subjects < 1 or self.cycles_per_subject < 1:
            raise BadSpecError("n_subjects and cycles_per_subject must be >= 1")
        if self.period < 4:
            raise BadSpecError(f"period must be >= 4, got {self.period}")
        if not (0.0 <= self.noise <= 1.0):
            raise BadSpecError(f"noise must lie in [0, 1], got {self.noise}")
        if self.w < 8 or self.w % 2 != 0:
            raise BadSpecError(f"frame width must be an even number >= 8, got {self.w}")


# ---------------------------------------------------------------------------
# image reading / writing
# ---------------------------------------------------------------------------

def _pgm_header_tokens(data: bytes, count: int):
    """Yield `count` whitespace-separated tokens after the magic, skipping
    '#' comments; returns (tokens, offset just past the single whitespace
    byte that terminates the header)."""
    tokens = []
    i = 2  # past the magic
    while len(tokens) < count:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i] != 0x0A:
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        if i == j:
            raise ValueError("truncated PGM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i + 1  # exactly one whitespace byte after maxval


def read_pgm(path) -> np.ndarray:
    """Read a P2 (ascii) or P5 (binary) 8-bit PGM as floats in [0, 1]."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise UnreadableImageError(f"{path}: {exc}") from exc
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise UnreadableImageError(f"{path}: not a P2/P5 PGM file")
    try:
        (width, height, maxval), offset = _pgm_header_tokens(data, 3)
        width, height, maxval = int(width), int(height), int(maxval)
        if width < 1 or height < 1 or not (0 < maxval <= 255):
            raise ValueError(f"bad PGM header ({width}x{height}, maxval {maxval})")
        if magic == b"P5":
            pixels = np.frombuffer(data, dtype=np.uint8, count=width * height,
                                   offset=offset)
            if pixels.size != width * height:
                raise ValueError("truncated P5 payload")
        else:
            values = data[offset - 1:].split()
            if len(values) < width * height:
                raise ValueError("truncated P2 payload")
            pixels = np.array([int(v) for v in values[:width * height]], dtype=np.int64)
            if pixels.min() < 0 or pixels.max() > maxval:
                raise ValueError("P2 sample out of range")
    except (ValueError, struct.error) as exc:
        raise UnreadableImageError(f"{path}: {exc}") from exc
    img = pixels.reshape(height, width).astype(np.float64) / float(maxval)
    return img


def write_pgm(path, image) -> None:
    """Write a [h, w] array with values in [0, 1] as a binary (P5) PGM."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise DimMismatchError(f"PGM image must be 2-D, got shape {img.shape}")
    pixels = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + pixels.tobytes())
    except OSError as exc:
        raise TensorIOError(f"{path}: {exc}") from exc


def _read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            gray = im.convert("L")
            return np.asarray(gray, dtype=np.float64) / 255.0
    except OSError as exc:
        raise UnreadableImageError(f"{path}: {exc}") from exc


def read_gray_image(path) -> np.ndarray:
    """Read a PGM or 8-bit grayscale PNG as floats in [0, 1]."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        return _read_png(path)
    raise UnreadableImageError(f"{path}: unsupported image type {suffix!r}")


def resize_nearest(image, w: int) -> np.ndarray:
    """Nearest-neighbor resize of a 2-D image to [w, w] (center sampling)."""
    img = np.asarray(image)
    h0, w0 = img.shape
    rows = np.minimum(((np.arange(w) + 0.5) * h0 / w).astype(np.int64), h0 - 1)
    cols = np.minimum(((np.arange(w) + 0.5) * w0 / w).astype(np.int64), w0 - 1)
    return img[np.ix_(rows, cols)]


def binarize(image, threshold: float = 0.5) -> np.ndarray:
    """Threshold a [0, 1] image to exact {0, 1} float32 values."""
    return (np.asarray(image) >= threshold).astype(np.float32)


def parse_subject_id(name: str):
    """First integer group in a directory/file name, or None."""
    m = re.search(r"\d+", name)
    return int(m.group()) if m else None


def load_sequence(dir_path, w: int, subject_id=None) -> SilhouetteSequence:
    """Load a lexicographically ordered directory of silhouette images.

    Images are resized to ``w x w`` by nearest neighbor and binarized at 0.5
    after normalizing to [0, 1].  The subject id defaults to the first
    integer in the directory name (0 when absent).
    """
    path = Path(dir_path)
    if not path.is_dir():
        raise MissingDirectoryError(str(path))
    files = sorted(p for p in path.iterdir()
                   if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES)
    if len(files) < 2:
        raise TooFewFramesError(
            f"{path}: found {len(files)} image files, need at least 2")
    frames = np.stack([binarize(resize_nearest(read_gray_image(p), w)) for p in files])
    if subject_id is None:
        subject_id = parse_subject_id(path.name)
        subject_id = 0 if subject_id is None else subject_id
    return SilhouetteSequence(frames=frames, source_id=path.name,
                              subject_id=int(subject_id))


def save_sequence_images(seq: SilhouetteSequence, dir_path) -> list:
    """Write one PGM per frame (frame_0000.pgm, ...); returns the paths."""
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, frame in enumerate(seq.frames):
        p = out / f"frame_{i:04d}.pgm"
        write_pgm(p, frame)
        paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# IKA1 tensor files
# ---------------------------------------------------------------------------

def save_tensor(tensor, path) -> None:
    """Serialize a 1-3 dimensional array as float32 in IKA1 format."""
    arr = np.asarray(tensor)
    if not (1 <= arr.ndim <= 3):
        raise DimMismatchError(f"IKA1 stores 1-3 dims, got {arr.ndim}")
    if any(e < 1 for e in arr.shape):
        raise DimMismatchError(f"all extents must be >= 1, got {arr.shape}")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    blob = (IKA1_MAGIC
            + struct.pack("<B", arr.ndim)
            + struct.pack(f"<{arr.ndim}I", *arr.shape)
            + payload.tobytes())
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise TensorIOError(f"{path}: {exc}") from exc


def load_tensor(path) -> np.ndarray:
    """Read an IKA1 file back into a float32 array (bit-exact round trip)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise TensorIOError(f"{path}: {exc}") from exc
    if raw[:4] != IKA1_MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < 5:
        raise DimMismatchError(f"{path}: truncated header")
    ndim = raw[4]
    if not (1 <= ndim <= 3):
        raise DimMismatchError(f"{path}: ndim byte is {ndim}, expected 1-3")
    if len(raw) < 5 + 4 * ndim:
        raise DimMismatchError(f"{path}: truncated extent list")
    extents = struct.unpack_from(f"<{ndim}I", raw, 5)
    if any(e < 1 for e in extents):
        raise DimMismatchError(f"{path}: zero extent in {extents}")
    count = int(np.prod(extents))
    expected = 5 + 4 * ndim + 4 * count
    if len(raw) != expected:
        raise DimMismatchError(
            f"{path}: payload is {len(raw)} bytes, extents {extents} "
            f"require {expected}")
    values = np.frombuffer(raw, dtype="<f4", offset=5 + 4 * ndim, count=count)
    return values.reshape(extents).copy()


# ---------------------------------------------------------------------------
# synthetic walker generator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkerParams:
    """Subject-specific walker: leg swing amplitudes (radians) and phase."""

    amp_left: float
    amp_right: float
    phase: float


def sample_walker_params(rng: np.random.Generator, n_subjects: int) -> list:
    """Draw n deterministic, well-separated walkers from `rng`.

    Left amplitude and the right/left ratio are sampled on shuffled jittered
    grids so that no two subjects collapse onto the same gait; the ratio
    stays below 0.9 so the two legs never swing symmetrically (the
    foreground-area series then has the full period, not half of it).
    Amplitudes stay inside the bar-overlap regime of the renderer (swing
    separation below the bar width/length ratio), which keeps the
    frame-mismatch series sharply peaked instead of saturating -- that is
    what makes cycle boundaries recoverable to +-1 frame under pixel noise.
    """
    amp_order = rng.permutation(n_subjects)
    ratio_order = rng.permutation(n_subjects)
    params = []
    for i in range(n_subjects):
        amp = 0.26 + 0.16 * (amp_order[i] + rng.uniform(0.15, 0.85)) / n_subjects
        ratio = 0.60 + 0.30 * (ratio_order[i] + rng.uniform(0.15, 0.85)) / n_subjects
        phase = rng.uniform(0.0, 2.0 * math.pi)
        params.append(WalkerParams(amp_left=float(amp),
                                   amp_right=float(amp * ratio),
                                   phase=float(phase)))
    return params


def _stamp_bar(img, x0, y0, angle, length, radius):
    # fill pixels within `radius` of the segment from (x0, y0) tilted by
    # `angle` from straight down
    w = img.shape[0]
    x1 = x0 + length * math.sin(angle)
    y1 = y0 + length * math.cos(angle)
    ys, xs = np.mgrid[0:w, 0:w].astype(np.float64)
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    t = np.clip(((xs - x0) * dx + (ys - y0) * dy) / seg2, 0.0, 1.0)
    dist2 = (xs - (x0 + t * dx)) ** 2 + (ys - (y0 + t * dy)) ** 2
    img[dist2 <= radius * radius] = 1.0


def render_walker_frame(params: WalkerParams, t: int, period: int, w: int) -> np.ndarray:
    """One binary frame of the torso-plus-two-legs walker at time step t.

    The pose depends on t only through t mod period, so frames repeat
    bit-exactly every `period` steps.
    """
    tau = (t % period) / period
    theta_l = params.amp_left * math.sin(2.0 * math.pi * tau + params.phase)
    theta_r = params.amp_right * math.sin(2.0 * math.pi * tau + params.phase + math.pi)

    img = np.zeros((w, w), dtype=np.float32)
    cx = w / 2.0
    torso_top, torso_bot = int(round(0.12 * w)), int(round(0.55 * w))
    half_width = 0.09 * w
    c0 = max(int(math.floor(cx - half_width)), 0)
    c1 = min(int(math.ceil(cx + half_width)), w)
    img[torso_top:torso_bot, c0:c1] = 1.0

    # thick bars relative to length: over the sampled swing range the two
    # poses of a leg always overlap, so pose mismatch grows with phase
    # distance instead of saturating mid-swing
    hip_y = 0.55 * w
    hip_off = 0.12 * w
    leg_len = 0.44 * w
    leg_radius = max(0.10 * w, 0.6)
    _stamp_bar(img, cx - hip_off, hip_y, theta_l, leg_len, leg_radius)
    _stamp_bar(img, cx + hip_off, hip_y, theta_r, leg_len, leg_radius)
    return img


def generate_synthetic_dataset(spec: SyntheticSpec) -> list:
    """Render one sequence per subject; same seed gives bit-identical output.

    Each sequence holds ``cycles_per_subject`` full periods plus a
    half-period lead-in.  With noise > 0, every pixel is independently
    flipped with that probability (frames stay binary).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    all_params = sample_walker_params(rng, spec.n_subjects)
    length = spec.cycles_per_subject * spec.period + spec.period // 2
    sequences = []
    for sid, params in enumerate(all_params):
        frames = np.stack([render_walker_frame(params, t, spec.period, spec.w)
                           for t in range(length)])
        if spec.noise > 0.0:
            flips = rng.random(frames.shape) < spec.noise
            frames = np.where(flips, 1.0 - frames, frames).astype(np.float32)
        sequences.append(SilhouetteSequence(frames=frames,
                                            source_id=f"subject_{sid:03d}",
                                            subject_id=sid))
    return sequences
