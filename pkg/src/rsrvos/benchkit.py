"""Benchmark construction tools: sequence scoring for filtering, first-frame
referring-expression generation, and a frame-access auditor."""
from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage as ndi

from .core import as_mask, centroid, check_scalar_map, dilate

log = logging.getLogger(__name__)

SPATIAL_TERMS = (
    ("top-left", "top", "top-right"),
    ("left", "center", "right"),
    ("bottom-left", "bottom", "bottom-right"),
)
LAPLACIAN_5 = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


@dataclass(frozen=True)
class VdsWeights:
    lambda_c: float = 1.0
    lambda_d: float = 1.0
    lambda_b: float = 1.0

    def __post_init__(self):
        ws = (self.lambda_c, self.lambda_d, self.lambda_b)
        if min(ws) < 0 or max(ws) <= 0:
            raise ValueError("VDS weights must be non-negative with at least one positive")


@dataclass(frozen=True)
class PromptParts:
    spatial_term: str
    attribute: str
    template: int = 0

    def render(self) -> str:
        if self.spatial_term == "center":
            return f"the {self.attribute} at the center"
        return f"the {self.attribute} at the {self.spatial_term}"


def contrast_score(frame0, target, band: int = 3) -> float:
    f = check_scalar_map(frame0, "frame")
    t = as_mask(target)
    if f.shape != t.shape:
        raise ValueError("frame and target mask differ in shape")
    if not t.any():
        raise ValueError("empty target")
    if band < 1:
        raise ValueError("band must be >= 1")
    ring = dilate(t, band) & ~t
    if not ring.any():
        raise ValueError("target fills the frame; no background ring")
    return abs(float(f[t].mean()) - float(f[ring].mean()))


def density_score(instances_per_frame) -> float:
    counts = list(instances_per_frame)
    if not counts:
        raise ValueError("density needs at least one frame")
    return float(sum(counts)) / len(counts)


def laplacian_response(frame) -> np.ndarray:
    return ndi.correlate(check_scalar_map(frame, "frame"), LAPLACIAN_5, mode="constant", cval=0.0)


def laplacian_sharpness(frames) -> float:
    """Mean over frames of the variance of the 5-point Laplacian (zero-padded)."""
    frames = list(frames)
    if not frames:
        raise ValueError("sharpness needs at least one frame")
    return float(np.mean([laplacian_response(f).var() for f in frames]))


def normalize_over_corpus(values) -> np.ndarray:
    v = np.asarray(list(values), dtype=np.float64)
    if v.size == 0:
        return v
    lo, hi = v.min(), v.max()
    if hi == lo:
        log.warning("all corpus values equal; normalised to 0")
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def blur_score(sharpness_normalized: float) -> float:
    if not 0.0 <= sharpness_normalized <= 1.0:
        raise ValueError("normalised sharpness must lie in [0, 1]")
    return 1.0 - sharpness_normalized


def vds(contrast: float, density: float, blur: float, weights: VdsWeights = VdsWeights()) -> float:
    for name, v in (("contrast", contrast), ("density", density), ("blur", blur)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"normalised {name} must lie in [0, 1], got {v}")
    return weights.lambda_c * contrast - weights.lambda_d * density - weights.lambda_b * blur


@dataclass
class VideoStats:
    video_id: str
    contrast: float
    density: float
    sharpness: float


def score_corpus(stats: Sequence[VideoStats], weights: VdsWeights = VdsWeights()) -> list[dict]:
    """Normalise each component over the corpus and score every video, best first."""
    stats = list(stats)
    c = normalize_over_corpus([s.contrast for s in stats])
    d = normalize_over_corpus([s.density for s in stats])
    sh = normalize_over_corpus([s.sharpness for s in stats])
    rows = []
    for i, s in enumerate(stats):
        b = blur_score(float(sh[i]))
        rows.append({
            "video_id": s.video_id,
            "contrast": float(c[i]),
            "density": float(d[i]),
            "blur": b,
            "raw": {"contrast": s.contrast, "density": s.density, "sharpness": s.sharpness},
            "vds": vds(float(c[i]), float(d[i]), b, weights),
        })
    rows.sort(key=lambda r: (-r["vds"], r["video_id"]))
    return rows


def grid_cell(x: float, y: float, width: int, height: int) -> tuple[int, int]:
    """(row, col) of the 3x3 cell holding (x, y); cells are half-open, the last closed."""
    if not (0 <= x <= width and 0 <= y <= height):
        raise ValueError(f"point ({x}, {y}) outside the {width}x{height} frame")
    col = min(int(3 * x // width), 2)
    row = min(int(3 * y // height), 2)
    return row, col


def prompt_parts(mask, category: str) -> PromptParts:
    m = as_mask(mask)
    if not m.any():
        raise ValueError("cannot describe an empty mask")
    if not category or not category.strip():
        raise ValueError("category must be a non-empty phrase")
    h, w = m.shape
    x, y = centroid(m)
    row, col = grid_cell(x, y, w, h)
    return PromptParts(SPATIAL_TERMS[row][col], category.strip())


def generate_prompt(frames, annotations, category: str) -> str:
    """Expression for the target, built from the first frame's annotation only.

    ``frames`` and ``annotations`` are indexable per-frame sources (typically
    recorders); only index 0 of ``annotations`` is read and no frame is needed.
    """
    return prompt_parts(annotations[0], category).render()


class RecordingFrameProvider(Sequence):
    """Indexable wrapper that logs every read and every emitted output."""

    def __init__(self, items):
        self._items = items
        self.reads: list[int] = []
        self.emits: list[tuple[int, int]] = []  # (frame index, number of reads so far)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, t):
        if isinstance(t, slice):
            raise TypeError("slicing would hide which frames are read")
        self.reads.append(int(t))
        return self._items[t]

    def emit(self, t: int) -> None:
        self.emits.append((int(t), len(self.reads)))


def audit_causality(recorders, lookahead: int = 0) -> bool:
    """True iff, before each emitted output for frame ``t``, no read exceeded ``max(t, lookahead)``.

    Reads after the last emit are checked against frame 0 when nothing was
    emitted (a one-shot generator), otherwise they are ignored.
    """
    if isinstance(recorders, RecordingFrameProvider):
        recorders = [recorders]
    for rec in recorders:
        emits = rec.emits or [(0, len(rec.reads))]
        for t, n in emits:
            limit = max(t, lookahead)
            if any(i > limit for i in rec.reads[:n]):
                return False
    return True


def audit_prompt_generator(generator, frames, annotations, category: str) -> tuple[bool, Optional[str]]:
    """Run ``generator(frames, annotations, category)`` through recorders and audit it."""
    fr, an = RecordingFrameProvider(frames), RecordingFrameProvider(annotations)
    text = generator(fr, an, category)
    return audit_causality([fr, an]), text
