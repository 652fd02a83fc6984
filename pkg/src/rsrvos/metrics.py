"""Region (J) and contour (F) accuracy, their recalls and the J&F mean."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import as_mask, boundary, dilate, mask_iou

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetricConfig:
    tau_rec: float = 0.5
    contour_dilation: int = 1

    def __post_init__(self):
        if not 0.0 < self.tau_rec < 1.0:
            raise ValueError("tau_rec must lie in (0, 1)")
        if self.contour_dilation < 0:
            raise ValueError("contour_dilation must be >= 0")


def _aligned(preds, gts):
    if len(preds) != len(gts):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(gts)} ground-truth frames")
    out = []
    for i, (p, g) in enumerate(zip(preds, gts)):
        p, g = as_mask(p), as_mask(g)
        if p.shape != g.shape:
            raise ValueError(f"frame {i}: prediction {p.shape} vs ground truth {g.shape}")
        out.append((p, g))
    return out


def evaluated_frames(gts) -> list[int]:
    """Indices of frames with a non-empty ground-truth mask."""
    return [i for i, g in enumerate(gts) if as_mask(g).any()]


def _mean_over(values, frames) -> float:
    if not frames:
        log.warning("no frame with non-empty ground truth; mean defined as 1.0")
        return 1.0
    return float(np.mean([values[i] for i in frames]))


def region_similarity(preds, gts) -> tuple[list[float], float]:
    pairs = _aligned(preds, gts)
    js = [mask_iou(p, g) for p, g in pairs]
    return js, _mean_over(js, evaluated_frames(gts))


def boundary_f(pred, gt, dilation: int = 1) -> float:
    p, g = as_mask(pred), as_mask(gt)
    if not p.any() and not g.any():
        return 1.0
    bp, bg = boundary(p), boundary(g)
    np_, ng = np.count_nonzero(bp), np.count_nonzero(bg)
    precision = np.count_nonzero(bp & dilate(bg, dilation)) / np_ if np_ else 0.0
    recall = np.count_nonzero(bg & dilate(bp, dilation)) / ng if ng else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def contour_accuracy(preds, gts, cfg: MetricConfig = MetricConfig()) -> tuple[list[float], float]:
    pairs = _aligned(preds, gts)
    fs = [boundary_f(p, g, cfg.contour_dilation) for p, g in pairs]
    return fs, _mean_over(fs, evaluated_frames(gts))


def jf_mean(j_mean: float, f_mean: float) -> float:
    return (j_mean + f_mean) / 2.0


def recalls(scores, tau_rec: float = 0.5) -> float:
    """Fraction of scores strictly above ``tau_rec``; 1.0 for an empty set."""
    s = np.asarray(list(scores), dtype=np.float64)
    if s.size == 0:
        log.warning("recall over an empty frame set; defined as 1.0")
        return 1.0
    return float(np.count_nonzero(s > tau_rec)) / s.size


@dataclass
class EvalReport:
    j_frames: list
    f_frames: list
    frames: list  # evaluated frame indices (non-empty ground truth)
    j_mean: float
    j_recall: float
    f_mean: float
    f_recall: float
    jf: float = field(init=False)

    def __post_init__(self):
        self.jf = jf_mean(self.j_mean, self.f_mean)

    def to_dict(self) -> dict:
        return {
            "J&F": self.jf,
            "J": self.j_mean,
            "J-Recall": self.j_recall,
            "F": self.f_mean,
            "F-Recall": self.f_recall,
            "frames": self.frames,
            "J_per_frame": self.j_frames,
            "F_per_frame": self.f_frames,
        }


def evaluate(preds, gts, cfg: MetricConfig = MetricConfig()) -> EvalReport:
    js, j_mean = region_similarity(preds, gts)
    fs, f_mean = contour_accuracy(preds, gts, cfg)
    frames = evaluated_frames(gts)
    return EvalReport(
        j_frames=js,
        f_frames=fs,
        frames=frames,
        j_mean=j_mean,
        j_recall=recalls([js[i] for i in frames], cfg.tau_rec),
        f_mean=f_mean,
        f_recall=recalls([fs[i] for i in frames], cfg.tau_rec),
    )
