"""Raster primitives shared by every stage.

Masks are boolean ``(H, W)`` arrays, scalar maps are float ``(H, W)`` arrays,
feature maps are float ``(H, W, d)`` arrays and displacement fields are float
``(H, W, 2)`` arrays holding ``(dx, dy)``. Pixel coordinates are reported as
``(x, y)`` = ``(column, row)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage as ndi

_STRUCT_4 = ndi.generate_binary_structure(2, 1)
_STRUCT_8 = ndi.generate_binary_structure(2, 2)


def as_mask(a) -> np.ndarray:
    m = np.asarray(a)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"mask must be a non-empty 2-D array, got shape {m.shape}")
    return m.astype(bool, copy=False)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return _STRUCT_4
    if connectivity == 8:
        return _STRUCT_8
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


@dataclass(frozen=True)
class ComponentSet:
    """Labelled connected components; label 0 is background, 1..count are components."""

    labels: np.ndarray
    count: int
    sizes: np.ndarray = field(repr=False)  # sizes[k - 1] is |C_k|
    bboxes: tuple = field(repr=False)  # slice pairs from ndi.find_objects

    def mask(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.count:
            raise IndexError(f"component id {k} outside 1..{self.count}")
        return self.labels == k

    def pixels(self, k: int) -> np.ndarray:
        """(n, 2) array of (x, y) coordinates of component ``k``."""
        ys, xs = np.nonzero(self.mask(k))
        return np.stack([xs, ys], axis=1)

    def __iter__(self):
        for k in range(1, self.count + 1):
            yield k, self.mask(k)

    def largest(self) -> int:
        """Id of the largest component (smallest id on ties); 0 when empty."""
        if self.count == 0:
            return 0
        return int(np.argmax(self.sizes)) + 1


def connected_components(mask, connectivity: int = 8) -> ComponentSet:
    m = as_mask(mask)
    labels, count = ndi.label(m, structure=_structure(connectivity))
    sizes = np.bincount(labels.ravel(), minlength=count + 1)[1:]
    return ComponentSet(labels, int(count), sizes, tuple(ndi.find_objects(labels)))


def largest_component(mask, connectivity: int = 8) -> np.ndarray:
    cs = connected_components(mask, connectivity)
    if cs.count == 0:
        return np.zeros_like(cs.labels, dtype=bool)
    return cs.mask(cs.largest())


def boundary(mask) -> np.ndarray:
    """Foreground pixels with at least one background 4-neighbour (outside counts as background)."""
    m = as_mask(mask)
    inner = ndi.binary_erosion(m, structure=_STRUCT_4, border_value=0)
    return m & ~inner


def boundary_distance(a, b) -> float:
    """Minimum Euclidean distance between boundary pixel centres of ``a`` and ``b``."""
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise ValueError("empty mask has no boundary")
    ba, bb = boundary(a), boundary(b)
    if (ba & bb).any():
        return 0.0
    dist = ndi.distance_transform_edt(~bb)
    return float(dist[ba].min())


@lru_cache(maxsize=32)
def disk(radius: int) -> np.ndarray:
    """Discrete disk: offsets whose centre distance is <= radius."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    se = (xx * xx + yy * yy) <= r * r
    se.setflags(write=False)
    return se


def fill_holes(mask) -> np.ndarray:
    return ndi.binary_fill_holes(as_mask(mask))


def morph_close_fill(mask, radius: int = 1) -> np.ndarray:
    """Closing with a disk followed by filling of enclosed holes.

    The closing runs on a zero-padded canvas so that it stays extensive at the
    image border.
    """
    m = as_mask(mask)
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius > 0 and m.any():
        pad = radius + 1
        big = np.pad(m, pad)
        se = disk(radius)
        big = ndi.binary_dilation(big, structure=se)
        big = ndi.binary_erosion(big, structure=se, border_value=0)
        m = big[pad:-pad, pad:-pad] | m
    return ndi.binary_fill_holes(m)


def mask_iou(a, b) -> float:
    a, b = as_mask(a), as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def centroid(mask) -> tuple[float, float]:
    m = as_mask(mask)
    ys, xs = np.nonzero(m)
    if xs.size == 0:
        raise ValueError("centroid of an empty mask is undefined")
    return float(xs.mean()), float(ys.mean())


def dilate(mask, radius: int) -> np.ndarray:
    m = as_mask(mask)
    if radius <= 0 or not m.any():
        return m.copy()
    # same set as dilation by disk(radius), but cost independent of the radius
    return ndi.distance_transform_edt(~m) <= radius


def check_scalar_map(a, name: str = "map", unit: bool = False) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} has non-finite values")
    if unit and (arr.min(initial=0.0) < 0.0 or arr.max(initial=0.0) > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def check_field(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValueError(f"displacement field must be (H, W, 2), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("displacement field has non-finite components")
    return arr


def check_features(a) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] < 1:
        raise ValueError(f"feature map must be (H, W, d) with d >= 1, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("feature map has non-finite values")
    return arr
