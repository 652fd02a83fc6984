"""Motion-consistency calibration of the initial mask.

The initial mask ``R0`` is checked against the motion observed over an
adaptively sized window of following frames: coherently moving pixels next to
the reliably moving core are added, motion outliers are removed, and the
surviving motion component most associated with the high-confidence semantic
region is fused back with it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage as ndi

from .core import (
    as_mask,
    boundary_distance,
    check_scalar_map,
    connected_components,
    largest_component,
    morph_close_fill,
)
from .flow import CachedProvider, WindowSearchConfig, adaptive_window_search, motion_intensity

log = logging.getLogger(__name__)

_NEIGHBOURHOOD = ndi.generate_binary_structure(2, 2)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationConfig:
    tau_sem: float = 0.8
    alpha: float = 2.0
    beta: float = 3.5
    lambda_assoc: float = 0.5
    sigma_s: float = 10.0
    sigma_floor: float = 0.25
    morph_radius: int = 1
    window: WindowSearchConfig = field(default_factory=WindowSearchConfig)

    def __post_init__(self):
        if not 0.0 < self.tau_sem < 1.0:
            raise ValueError("tau_sem must lie in (0, 1)")
        if not self.beta > self.alpha > 0.0:
            raise ValueError("need beta > alpha > 0")
        if self.sigma_s <= 0 or self.sigma_floor <= 0:
            raise ValueError("sigma_s and sigma_floor must be positive")
        if self.lambda_assoc < 0:
            raise ValueError("lambda_assoc must be >= 0")
        if self.morph_radius < 0:
            raise ValueError("morph_radius must be >= 0")


@dataclass
class CalibrationReport:
    n_star: Optional[int]
    mu_d: float = math.nan
    sigma_d: float = math.nan
    pixels_added: int = 0
    pixels_removed: int = 0
    k_star: int = 0
    scores: dict = field(default_factory=dict)
    fallback: bool = False
    frames_used: int = 0

    def to_dict(self) -> dict:
        return {
            "n_star": self.n_star,
            "mu_d": None if math.isnan(self.mu_d) else self.mu_d,
            "sigma_d": None if math.isnan(self.sigma_d) else self.sigma_d,
            "pixels_added": self.pixels_added,
            "pixels_removed": self.pixels_removed,
            "k_star": self.k_star,
            "scores": {str(k): v for k, v in self.scores.items()},
            "fallback": self.fallback,
            "frames_used": self.frames_used,
        }


def extract_semantic_anchor_region(confidence, tau_sem: float) -> np.ndarray:
    return check_scalar_map(confidence, "confidence") > tau_sem


def identify_moving_region(r0, motion, tau_motion: float) -> np.ndarray:
    """Largest connected component of the ``r0`` pixels whose motion exceeds ``tau_motion``."""
    r0 = as_mask(r0)
    motion = check_scalar_map(motion, "motion")
    return largest_component(r0 & (motion > tau_motion))


def motion_statistics(d_map, region, sigma_floor: float) -> tuple[float, float]:
    region = as_mask(region)
    if not region.any():
        raise ValueError("motion statistics need a non-empty region")
    vals = check_scalar_map(d_map, "D")[region]
    return float(vals.mean()), max(float(vals.std()), sigma_floor)


def expand_mask(r_moving, d_map, mu: float, sigma: float, alpha: float) -> np.ndarray:
    """Grow ``r_moving`` through 8-neighbours whose motion lies within ``alpha * sigma`` of ``mu``.

    Growth is repeated to a fixed point, i.e. the result is every band pixel
    8-connected to the moving core through band pixels.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    r = as_mask(r_moving)
    d_map = check_scalar_map(d_map, "D")
    band = np.abs(d_map - mu) < alpha * sigma
    if not r.any():
        return r.copy()
    # a band pixel is reachable iff its band component touches the core's dilation
    reach = ndi.binary_dilation(r, structure=_NEIGHBOURHOOD) & band
    labels, _ = ndi.label(band, structure=_NEIGHBOURHOOD)
    hit = np.unique(labels[reach])
    hit = hit[hit > 0]
    return r | np.isin(labels, hit)


def prune_outliers(r_expand, d_map, mu: float, sigma: float, beta: float) -> np.ndarray:
    if beta <= 0:
        raise ValueError("beta must be > 0")
    r = as_mask(r_expand)
    outlier = np.abs(check_scalar_map(d_map, "D") - mu) > beta * sigma
    return r & ~outlier


def association_score(component, anchor, lambda_assoc: float, sigma_s: float) -> float:
    c, a = as_mask(component), as_mask(anchor)
    nc, na = np.count_nonzero(c), np.count_nonzero(a)
    if nc == 0 or na == 0:
        raise ValueError("association needs non-empty component and anchor")
    overlap = np.count_nonzero(c & a) / min(nc, na)
    return overlap + lambda_assoc * math.exp(-boundary_distance(c, a) / sigma_s)


def select_motion_verified(r_refine, anchor, cfg: CalibrationConfig) -> tuple[np.ndarray, int, dict]:
    """Component of ``r_refine`` with the highest association to ``anchor``.

    Ties go to the larger component, then to the smaller id. Returns the
    component mask, its id (0 when ``r_refine`` is empty) and all scores.
    """
    if not as_mask(anchor).any():
        raise ValueError("anchor region is empty")
    cs = connected_components(r_refine)
    if cs.count == 0:
        return np.zeros_like(cs.labels, dtype=bool), 0, {}
    scores = {k: association_score(m, anchor, cfg.lambda_assoc, cfg.sigma_s) for k, m in cs}
    k_star = min(scores, key=lambda k: (-scores[k], -cs.sizes[k - 1], k))
    return cs.mask(k_star), k_star, scores


def motion_evidence(fields, accumulate: bool) -> tuple[np.ndarray, np.ndarray]:
    """Return (D, map compared against tau_motion).

    In accumulate mode the threshold applies to the path length over the
    window (``n * D``), the same quantity the window search thresholds.
    """
    d_map = motion_intensity(fields)
    return d_map, (d_map * len(fields) if accumulate else d_map)


def calibrate(r0, confidence, field_provider, cfg: CalibrationConfig = CalibrationConfig()):
    """Full calibration. Returns ``(calibrated_mask, CalibrationReport)``.

    Falls back to the closed semantic anchor region when no motion window is
    found or no pixel of ``r0`` moves reliably.
    """
    r0 = as_mask(r0)
    conf = check_scalar_map(confidence, "confidence")
    if conf.shape != r0.shape:
        raise ValueError(f"confidence {conf.shape} and R0 {r0.shape} differ in shape")
    anchor = extract_semantic_anchor_region(conf, cfg.tau_sem)
    if not r0.any() and not anchor.any():
        raise CalibrationError("no initial evidence")

    provider = field_provider if isinstance(field_provider, CachedProvider) else CachedProvider(field_provider)
    n_star = adaptive_window_search(provider, r0, cfg.window) if r0.any() else None
    report = CalibrationReport(n_star=n_star)

    r_moving = None
    if n_star is None:
        log.warning("no motion window found up to n_max=%d; semantic-only calibration", cfg.window.n_max)
    else:
        fields = provider.window(n_star)
        d_map, evidence = motion_evidence(fields, cfg.window.accumulate)
        r_moving = identify_moving_region(r0, evidence, cfg.window.tau_motion)
        if not r_moving.any():
            log.warning("no reliably moving pixels inside R0; semantic-only calibration")
            r_moving = None
    report.frames_used = provider.computed + 1 if provider.computed else 0

    if r_moving is None or not anchor.any():
        report.fallback = True
        base = anchor if anchor.any() else r0
        out = morph_close_fill(base, cfg.morph_radius)
        report.pixels_added = int(np.count_nonzero(out & ~r0))
        report.pixels_removed = int(np.count_nonzero(r0 & ~out))
        return out, report

    mu, sigma = motion_statistics(d_map, r_moving, cfg.sigma_floor)
    r_expand = expand_mask(r_moving, d_map, mu, sigma, cfg.alpha)
    r_refine = prune_outliers(r_expand, d_map, mu, sigma, cfg.beta)
    r_motion, k_star, scores = select_motion_verified(r_refine, anchor, cfg)
    out = morph_close_fill(anchor | r_motion, cfg.morph_radius)

    report.mu_d, report.sigma_d = mu, sigma
    report.k_star, report.scores = k_star, scores
    report.pixels_added = int(np.count_nonzero(out & ~r0))
    report.pixels_removed = int(np.count_nonzero(r0 & ~out))
    return out, report
