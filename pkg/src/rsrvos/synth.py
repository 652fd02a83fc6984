"""Seeded synthetic sequences with exact ground truth.

A textured target translates over a static textured background. Optional
static lookalike distractors, an occluder bar, and a corrupted initial
confidence map (eroded ground truth plus injected static blobs) make the
scenarios used by the calibration and memory checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage as ndi

from .core import dilate

KEPT_CONF = 0.9
INJECTED_CONF = 0.7


@dataclass(frozen=True)
class Occluder:
    span: tuple = (0, 0)  # inclusive frame range [t_a, t_b]
    orientation: str = "horizontal"  # bar across the full frame
    position: int = 0  # first row (horizontal) or column (vertical)
    thickness: int = 10
    intensity: float = 0.05


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    frames: int = 20
    size: tuple = (128, 128)  # (W, H)
    shape: str = "ellipse"  # or "rect"
    target_radii: tuple = (8, 6)  # (rx, ry) half-extents in px
    start: Optional[tuple] = None  # (x, y) of the silhouette centre at t = 0
    velocity: tuple = (1.0, 0.0)
    target_intensity: float = 0.85
    background_intensity: float = 0.35
    texture: float = 0.04
    n_distractors: int = 0
    distractor_similarity: float = 0.9
    occluder: Optional[Occluder] = None
    erosion_fraction: float = 0.0
    erosion_radius: int = 0
    n_injected: int = 0
    injected_radius: int = 4
    injected_gap: float = 10.0
    noise: float = 0.01

    def __post_init__(self):
        w, h = self.size
        if self.frames < 2:
            raise ValueError("need at least 2 frames")
        if w < 8 or h < 8:
            raise ValueError("frame too small")
        if self.shape not in ("ellipse", "rect"):
            raise ValueError(f"unknown shape {self.shape!r}")
        if min(self.target_radii) < 1:
            raise ValueError("target radii must be >= 1")
        if not 0.0 <= self.distractor_similarity <= 1.0:
            raise ValueError("distractor_similarity must lie in [0, 1]")
        if not 0.0 <= self.erosion_fraction < 1.0:
            raise ValueError("erosion_fraction must lie in [0, 1)")
        if self.erosion_radius < 0 or self.n_injected < 0 or self.n_distractors < 0:
            raise ValueError("counts and radii must be >= 0")
        if self.occluder is not None:
            ta, tb = self.occluder.span
            if not 0 <= ta <= tb < self.frames:
                raise ValueError("occluder span must satisfy 0 <= t_a <= t_b < T")


@dataclass
class SynthSequence:
    config: SynthConfig
    frames: list
    masks: list  # visible ground truth per frame
    gt_confidence: np.ndarray
    confidence: np.ndarray  # corrupted initial confidence
    flows: list  # ground-truth (dx, dy) field from frame t to t + 1
    distractor_masks: list = field(default_factory=list)
    injected_mask: Optional[np.ndarray] = None
    unoccluded: list = field(default_factory=list)  # full silhouettes per frame


def _template(shape: str, radii) -> np.ndarray:
    rx, ry = radii
    yy, xx = np.mgrid[-ry : ry + 1, -rx : rx + 1]
    if shape == "rect":
        return np.ones_like(xx, dtype=bool)
    return (xx / (rx + 0.5)) ** 2 + (yy / (ry + 0.5)) ** 2 <= 1.0


def _paste(canvas: np.ndarray, patch: np.ndarray, x0: int, y0: int) -> None:
    """Add ``patch`` into ``canvas`` with its top-left corner at (x0, y0), clipped."""
    h, w = canvas.shape[:2]
    ph, pw = patch.shape[:2]
    ys, xs = max(y0, 0), max(x0, 0)
    ye, xe = min(y0 + ph, h), min(x0 + pw, w)
    if ys >= ye or xs >= xe:
        return
    canvas[ys:ye, xs:xe] += patch[ys - y0 : ye - y0, xs - x0 : xe - x0]


def _splat(canvas_shape, patch: np.ndarray, x: float, y: float) -> np.ndarray:
    """Bilinear splat of ``patch`` whose top-left corner sits at sub-pixel (x, y)."""
    out = np.zeros(canvas_shape)
    ix, iy = int(np.floor(x)), int(np.floor(y))
    fx, fy = x - ix, y - iy
    for dy, wy in ((0, 1 - fy), (1, fy)):
        for dx, wx in ((0, 1 - fx), (1, fx)):
            wgt = wx * wy
            if wgt > 0:
                _paste(out, wgt * patch, ix + dx, iy + dy)
    return out


def _smooth_texture(rng, shape, amplitude: float, sigma: float = 2.0) -> np.ndarray:
    n = ndi.gaussian_filter(rng.standard_normal(shape), sigma)
    s = n.std()
    return amplitude * n / s if s > 0 else n


def _occluder_mask(occ: Occluder, shape) -> np.ndarray:
    h, w = shape
    m = np.zeros((h, w), dtype=bool)
    if occ.orientation == "horizontal":
        m[max(occ.position, 0) : occ.position + occ.thickness, :] = True
    elif occ.orientation == "vertical":
        m[:, max(occ.position, 0) : occ.position + occ.thickness] = True
    else:
        raise ValueError(f"unknown occluder orientation {occ.orientation!r}")
    return m


def _erode_fraction(mask: np.ndarray, fraction: float) -> np.ndarray:
    """Remove the ``fraction`` of pixels closest to the background (ties in raster order)."""
    n = int(np.count_nonzero(mask))
    k = int(round(fraction * n))
    if k == 0:
        return mask.copy()
    dist = ndi.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1]
    idx = np.flatnonzero(mask)
    order = np.argsort(dist.ravel()[idx], kind="stable")
    out = mask.copy().ravel()
    out[idx[order[:k]]] = False
    return out.reshape(mask.shape)


def generate(cfg: SynthConfig) -> SynthSequence:
    rng = np.random.default_rng(cfg.seed)
    w, h = cfg.size
    shape = (h, w)
    tpl = _template(cfg.shape, cfg.target_radii)
    th, tw = tpl.shape
    rx, ry = cfg.target_radii
    vx, vy = cfg.velocity
    last = cfg.frames - 1

    if cfg.start is None:
        # pick a start that keeps the whole trajectory inside the frame
        lo_x = rx + 1 + max(0.0, -vx * last)
        hi_x = w - rx - 2 - max(0.0, vx * last)
        lo_y = ry + 1 + max(0.0, -vy * last)
        hi_y = h - ry - 2 - max(0.0, vy * last)
        if lo_x > hi_x or lo_y > hi_y:
            raise ValueError("trajectory leaves the frame for every start position")
        start = (rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y))
    else:
        start = tuple(float(v) for v in cfg.start)
    centres = [(start[0] + vx * t, start[1] + vy * t) for t in range(cfg.frames)]
    for cx, cy in centres:
        if cx - rx < 0 or cy - ry < 0 or cx + rx > w - 1 or cy + ry > h - 1:
            raise ValueError("target trajectory leaves the frame")

    background = cfg.background_intensity + _smooth_texture(rng, shape, cfg.texture)
    tex = cfg.target_intensity + _smooth_texture(rng, tpl.shape, cfg.texture, sigma=1.0)
    patch = np.where(tpl, tex, 0.0)
    alpha_patch = tpl.astype(np.float64)

    # silhouettes at rounded positions
    silhouettes = []
    for cx, cy in centres:
        m = np.zeros(shape, dtype=bool)
        x0 = int(np.floor(cx - rx + 0.5))
        y0 = int(np.floor(cy - ry + 0.5))
        m[y0 : y0 + th, x0 : x0 + tw] = tpl
        silhouettes.append(m)

    # static distractors away from the swept target region
    swept = dilate(np.logical_or.reduce(silhouettes), int(max(rx, ry)) + 4)
    occupied = swept.copy()
    distractor_masks = []
    dlevel = cfg.background_intensity + cfg.distractor_similarity * (cfg.target_intensity - cfg.background_intensity)
    for _ in range(cfg.n_distractors):
        for _attempt in range(500):
            x0 = int(rng.integers(1, w - tw - 1))
            y0 = int(rng.integers(1, h - th - 1))
            m = np.zeros(shape, dtype=bool)
            m[y0 : y0 + th, x0 : x0 + tw] = tpl
            if not (m & occupied).any():
                break
        else:
            raise ValueError("could not place distractors without overlapping the target path")
        occupied |= dilate(m, 4)
        distractor_masks.append(m)
        dtex = dlevel + _smooth_texture(rng, tpl.shape, cfg.texture, sigma=1.0)
        background = np.where(m, 0.0, background)
        _paste(background, np.where(tpl, dtex, 0.0), x0, y0)

    occ_mask = _occluder_mask(cfg.occluder, shape) if cfg.occluder is not None else None
    frames, masks, flows = [], [], []
    for t, (cx, cy) in enumerate(centres):
        x0, y0 = cx - rx, cy - ry
        layer = _splat(shape, patch, x0, y0)
        alpha = _splat(shape, alpha_patch, x0, y0)
        frame = background * (1.0 - alpha) + layer
        visible = silhouettes[t].copy()
        if occ_mask is not None and cfg.occluder.span[0] <= t <= cfg.occluder.span[1]:
            frame = np.where(occ_mask, cfg.occluder.intensity, frame)
            visible &= ~occ_mask
        if cfg.noise > 0:
            frame = frame + cfg.noise * rng.standard_normal(shape)
        frames.append(np.clip(frame, 0.0, 1.0))
        masks.append(visible)
        fl = np.zeros(shape + (2,))
        if t < last:
            fl[visible] = (vx, vy)
        flows.append(fl)
    flows = flows[:-1]

    gt0 = masks[0]
    kept = gt0
    if cfg.erosion_radius > 0:
        kept = ndi.binary_erosion(kept, iterations=cfg.erosion_radius, border_value=0)
    if cfg.erosion_fraction > 0:
        kept = _erode_fraction(kept, cfg.erosion_fraction)
    injected = _inject(rng, cfg, shape, gt0, distractor_masks)
    conf = np.zeros(shape)
    conf[injected] = INJECTED_CONF
    conf[kept] = KEPT_CONF
    return SynthSequence(
        config=cfg,
        frames=frames,
        masks=masks,
        gt_confidence=gt0.astype(np.float64),
        confidence=conf,
        flows=flows,
        distractor_masks=distractor_masks,
        injected_mask=injected,
        unoccluded=silhouettes,
    )


def _inject(rng, cfg: SynthConfig, shape, gt0, distractor_masks) -> np.ndarray:
    """Static disks at least ``injected_gap`` px from the target, on distractors when available."""
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    if cfg.n_injected == 0:
        return out
    far = ndi.distance_transform_edt(~gt0) >= cfg.injected_gap + cfg.injected_radius
    yy, xx = np.mgrid[0:h, 0:w]
    r = cfg.injected_radius
    hosts = list(distractor_masks)
    for i in range(cfg.n_injected):
        if i < len(hosts):
            ys, xs = np.nonzero(hosts[i])
            cx, cy = xs.mean(), ys.mean()
        else:
            for _attempt in range(500):
                cx = rng.uniform(r, w - 1 - r)
                cy = rng.uniform(r, h - 1 - r)
                disk_ = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
                if (disk_ <= far).all() and not (dilate(disk_, 2) & out).any():
                    break
            else:
                raise ValueError("could not place injected components")
        disk_ = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        out |= disk_ & far
    return out


def scenario_suite(name: str, seeds) -> list[SynthConfig]:
    if name not in _PRESETS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(_PRESETS)}")
    return [_PRESETS[name](int(s)) for s in seeds]


def _weak_saliency(seed: int) -> SynthConfig:
    rng = np.random.default_rng(10_000 + seed)
    ang = rng.uniform(0, 2 * np.pi)
    return SynthConfig(
        seed=seed,
        frames=8,
        size=(480, 480),
        target_radii=(9, 6),
        velocity=(0.8 * np.cos(ang), 0.8 * np.sin(ang)),
        n_distractors=0,
        erosion_fraction=0.3,
        n_injected=2,
    )


def _distractors(seed: int) -> SynthConfig:
    rng = np.random.default_rng(20_000 + seed)
    ang = rng.uniform(0, 2 * np.pi)
    return SynthConfig(
        seed=seed,
        frames=14,
        size=(160, 160),
        target_radii=(9, 7),
        velocity=(1.0 * np.cos(ang), 1.0 * np.sin(ang)),
        n_distractors=3,
        distractor_similarity=0.9,
        erosion_fraction=0.3,
        n_injected=2,
    )


def _occlusion(seed: int) -> SynthConfig:
    rng = np.random.default_rng(30_000 + seed)
    x = rng.uniform(30, 98)
    return SynthConfig(
        seed=seed,
        frames=30,
        size=(128, 128),
        target_radii=(8, 5),
        start=(x, 20.0),
        velocity=(rng.uniform(-0.3, 0.3), 2.0),
        occluder=Occluder(span=(0, 29), orientation="horizontal", position=50, thickness=20),
        erosion_fraction=0.3,
        n_injected=2,
        injected_radius=6,
    )


def _slow_motion(seed: int) -> SynthConfig:
    return SynthConfig(seed=seed, frames=12, size=(96, 96), target_radii=(7, 5), velocity=(0.3, 0.0))


_PRESETS = {
    "weak_saliency": _weak_saliency,
    "distractors": _distractors,
    "occlusion": _occlusion,
    "slow_motion": _slow_motion,
}


def reappearance_frame(seq: SynthSequence, fraction: float = 0.5) -> Optional[int]:
    """First frame after a fully hidden stretch whose visible area is at least
    ``fraction`` of the unoccluded silhouette; None if the target is never hidden."""
    hidden = False
    for t, (vis, full) in enumerate(zip(seq.masks, seq.unoccluded)):
        if not vis.any():
            hidden = True
        elif hidden and np.count_nonzero(vis) >= fraction * np.count_nonzero(full):
            return t
    return None
