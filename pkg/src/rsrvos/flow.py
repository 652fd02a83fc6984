"""Dense displacement estimation and the motion measures built on it."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numba
import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import uniform_filter

from .core import as_mask, check_field, check_scalar_map, connected_components
from .io import read_rst1

log = logging.getLogger(__name__)

FieldProvider = Callable[[int], np.ndarray]


@dataclass(frozen=True)
class WindowSearchConfig:
    n0: int = 2
    delta_n: int = 2
    n_max: int = 12
    tau_motion: float = 1.0
    accumulate: bool = True

    def __post_init__(self):
        if not 1 <= self.n0 <= self.n_max:
            raise ValueError("window search needs 1 <= n0 <= n_max")
        if self.delta_n < 1:
            raise ValueError("delta_n must be >= 1")
        if not self.tau_motion > 0:
            raise ValueError("tau_motion must be > 0")


@dataclass(frozen=True)
class BlockMatchConfig:
    block: int = 4
    search: int = 7
    step: int = 2
    verify: int = 0  # residual-check window side length (odd); 0 disables

    def __post_init__(self):
        if self.block < 1 or self.search < 1 or self.step < 1:
            raise ValueError("block, search and step must all be >= 1")
        if self.verify < 0 or (self.verify > 0 and self.verify % 2 == 0):
            raise ValueError("verify must be 0 or an odd window size")


def candidate_order(search: int) -> np.ndarray:
    """(dy, dx) offsets ordered by squared magnitude, then dy, then dx."""
    cands = sorted(
        (dx * dx + dy * dy, dy, dx)
        for dy in range(-search, search + 1)
        for dx in range(-search, search + 1)
    )
    return np.array([(dy, dx) for _, dy, dx in cands], dtype=np.int64)


@numba.njit(cache=True, nogil=True)
def _block_match(a, b_pad, block, search, ys, xs, cands):
    h, w = a.shape
    ny, nx = ys.shape[0], xs.shape[0]
    best = np.zeros((ny, nx))
    seen = False
    out = np.zeros((ny, nx, 2), np.int64)
    integral = np.zeros((h + 1, w + 1))
    for c in range(cands.shape[0]):
        dy = cands[c, 0]
        dx = cands[c, 1]
        for y in range(h):
            run = 0.0
            for x in range(w):
                run += abs(a[y, x] - b_pad[y + search + dy, x + search + dx])
                integral[y + 1, x + 1] = integral[y, x + 1] + run
        for j in range(ny):
            y0 = max(ys[j] - block, 0)
            y1 = min(ys[j] + block + 1, h)
            for i in range(nx):
                x0 = max(xs[i] - block, 0)
                x1 = min(xs[i] + block + 1, w)
                s = integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
                # integral-image rounding must not override the tie-break order
                if not seen or s < best[j, i] - 1e-9 * max(1.0, best[j, i]):
                    best[j, i] = s
                    out[j, i, 0] = dx
                    out[j, i, 1] = dy
        seen = True
    return out


def _sample_axis(n: int, step: int) -> np.ndarray:
    idx = np.arange(0, n, step)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def estimate_displacement(frame_a, frame_b, cfg: BlockMatchConfig = BlockMatchConfig()) -> np.ndarray:
    """Block-matching displacement field from ``frame_a`` to ``frame_b``.

    Each sampled pixel gets the integer offset ``d`` minimising the sum of
    absolute differences between the block around it in ``frame_a`` and the
    block around ``p + d`` in ``frame_b``. The sparse field is then bilinearly
    densified. Returns an ``(H, W, 2)`` array of ``(dx, dy)``.
    """
    a = check_scalar_map(frame_a, "frame_a")
    b = check_scalar_map(frame_b, "frame_b")
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    ys, xs = _sample_axis(h, cfg.step), _sample_axis(w, cfg.step)
    b_pad = np.pad(b, cfg.search, mode="edge")
    sparse = _block_match(a, b_pad, cfg.block, cfg.search, ys, xs, candidate_order(cfg.search))
    field = densify(sparse.astype(np.float64), ys, xs, (h, w))
    if cfg.verify > 0:
        field = verify_field(a, b, field, cfg.verify)
    return field


def verify_field(frame_a, frame_b, field, size: int = 1) -> np.ndarray:
    """Zero the displacement wherever it explains the local window no better than no motion.

    Block matching assigns a moving object's offset to background pixels
    within a block half-size of it; comparing the small-window SAD at the
    (rounded) displacement against the SAD at zero offset removes that halo.
    """
    a = check_scalar_map(frame_a, "frame_a")
    b = check_scalar_map(frame_b, "frame_b")
    fld = check_field(field)
    h, w = a.shape
    gy, gx = np.mgrid[0:h, 0:w]
    tx = np.clip(gx + np.rint(fld[..., 0]).astype(np.int64), 0, w - 1)
    ty = np.clip(gy + np.rint(fld[..., 1]).astype(np.int64), 0, h - 1)
    moved = np.abs(a - b[ty, tx])
    still = np.abs(a - b)
    if size > 1:
        moved = uniform_filter(moved, size, mode="nearest")
        still = uniform_filter(still, size, mode="nearest")
    keep = moved < still
    return np.where(keep[..., None], fld, 0.0)


def densify(sparse: np.ndarray, ys: np.ndarray, xs: np.ndarray, shape) -> np.ndarray:
    h, w = shape
    if len(ys) == h and len(xs) == w:
        return sparse
    if len(ys) == 1 or len(xs) == 1:
        # degenerate grid: nearest-sample broadcast
        iy = np.clip(np.searchsorted(ys, np.arange(h)), 0, len(ys) - 1)
        ix = np.clip(np.searchsorted(xs, np.arange(w)), 0, len(xs) - 1)
        return sparse[np.ix_(iy, ix)]
    interp = RegularGridInterpolator((ys, xs), sparse, method="linear")
    gy, gx = np.mgrid[0:h, 0:w]
    return interp(np.stack([gy.ravel(), gx.ravel()], axis=1)).reshape(h, w, 2)


def _check_fields(fields: Sequence) -> list[np.ndarray]:
    if len(fields) == 0:
        raise ValueError("need at least one displacement field")
    out = [check_field(f) for f in fields]
    shape = out[0].shape
    for f in out[1:]:
        if f.shape != shape:
            raise ValueError(f"field shapes differ: {shape} vs {f.shape}")
    return out


def motion_intensity(fields: Sequence) -> np.ndarray:
    """Per-pixel mean displacement magnitude over the given fields."""
    fs = _check_fields(fields)
    total = np.zeros(fs[0].shape[:2])
    for f in fs:
        total += np.hypot(f[..., 0], f[..., 1])
    return total / len(fs)


def accumulated_displacement(fields: Sequence, region, accumulate: bool = True) -> float:
    """Displacement of ``region`` over the window, in pixels.

    ``accumulate=True``: norm of the region mean of the summed vectors.
    ``accumulate=False``: region mean of the motion-intensity map.
    """
    fs = _check_fields(fields)
    r = as_mask(region)
    if r.shape != fs[0].shape[:2]:
        raise ValueError("region and fields differ in shape")
    if not r.any():
        raise ValueError("region is empty")
    if accumulate:
        summed = np.sum([f[r] for f in fs], axis=0)
        return float(np.hypot(*summed.mean(axis=0)))
    return float(motion_intensity(fs)[r].mean())


class CachedProvider:
    """Memoises a field provider so each step is computed once, in order."""

    def __init__(self, provider: FieldProvider):
        self._provider = provider
        self._fields: list[np.ndarray] = []

    def __call__(self, t: int) -> np.ndarray:
        while len(self._fields) <= t:
            self._fields.append(check_field(self._provider(len(self._fields))))
        return self._fields[t]

    def window(self, n: int) -> list[np.ndarray]:
        return [self(t) for t in range(n)]

    @property
    def computed(self) -> int:
        return len(self._fields)


def adaptive_window_search(provider, r0, cfg: WindowSearchConfig = WindowSearchConfig()) -> Optional[int]:
    """Smallest window ``n`` for which some component of ``r0`` moves more than ``tau_motion``.

    Windows are tried as ``n0, n0 + delta_n, ...`` up to ``n_max``. Returns
    ``None`` when no window qualifies.
    """
    r0 = as_mask(r0)
    if not r0.any():
        raise ValueError("initial region is empty")
    cached = provider if isinstance(provider, CachedProvider) else CachedProvider(provider)
    components = [m for _, m in connected_components(r0)]
    for n in range(cfg.n0, cfg.n_max + 1, cfg.delta_n):
        try:
            fields = cached.window(n)
        except IndexError:
            log.info("sequence too short for window %d", n)
            return None
        for comp in components:
            if accumulated_displacement(fields, comp, cfg.accumulate) > cfg.tau_motion:
                return n
    return None


def frame_pair_provider(frames: Sequence, cfg: BlockMatchConfig = BlockMatchConfig()) -> FieldProvider:
    """Provider estimating the field between frames ``t`` and ``t + 1`` on demand."""

    def provide(t: int) -> np.ndarray:
        if t + 1 >= len(frames):
            raise IndexError(f"no frame pair for step {t}: only {len(frames)} frames")
        return estimate_displacement(frames[t], frames[t + 1], cfg)

    return provide


def rst1_provider(paths: Sequence) -> FieldProvider:
    """Provider reading externally computed ``(H, W, 2)`` fields from RST1 files."""

    def provide(t: int) -> np.ndarray:
        if t >= len(paths):
            raise IndexError(f"no flow file for step {t}")
        return check_field(read_rst1(paths[t]))

    return provide
