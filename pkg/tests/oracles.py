"""Slow, obviously-correct reference implementations used only by the tests."""
import math
from collections import deque

import numpy as np

N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
N8 = N4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def pixel_set(m):
    return {(int(y), int(x)) for y, x in zip(*np.nonzero(m))}


def flood_components(m, connectivity=8):
    """List of pixel sets, found by BFS."""
    nb = N4 if connectivity == 4 else N8
    h, w = m.shape
    left = pixel_set(m)
    comps = []
    while left:
        seed = min(left)
        comp, queue = {seed}, deque([seed])
        left.discard(seed)
        while queue:
            y, x = queue.popleft()
            for dy, dx in nb:
                p = (y + dy, x + dx)
                if p in left:
                    left.discard(p)
                    comp.add(p)
                    queue.append(p)
        comps.append(comp)
    return comps


def disk_offsets(r):
    return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dx * dx + dy * dy <= r * r]


def set_dilate(m, r):
    h, w = m.shape
    out = np.zeros_like(m, dtype=bool)
    for y, x in pixel_set(m):
        for dy, dx in disk_offsets(r):
            if 0 <= y + dy < h and 0 <= x + dx < w:
                out[y + dy, x + dx] = True
    return out


def boundary_pixels(m):
    h, w = m.shape
    out = set()
    for y, x in pixel_set(m):
        for dy, dx in N4:
            yy, xx = y + dy, x + dx
            if not (0 <= yy < h and 0 <= xx < w) or not m[yy, xx]:
                out.add((y, x))
                break
    return out


def boundary_distance(a, b):
    ba, bb = boundary_pixels(a), boundary_pixels(b)
    return min(math.hypot(y - v, x - u) for y, x in ba for v, u in bb)


def block_sad_match(a, b, block, search, y, x):
    """Exhaustive SAD search at one pixel with the documented tie-break."""
    h, w = a.shape
    bp = np.pad(b, search, mode="edge")
    y0, y1 = max(y - block, 0), min(y + block + 1, h)
    x0, x1 = max(x - block, 0), min(x + block + 1, w)
    best = None
    for dy in range(-search, search + 1):
        for dx in range(-search, search + 1):
            patch = bp[y0 + search + dy : y1 + search + dy, x0 + search + dx : x1 + search + dx]
            sad = float(np.abs(a[y0:y1, x0:x1] - patch).sum())
            key = (round(sad, 9), dx * dx + dy * dy, dy, dx)
            if best is None or key < best[0]:
                best = (key, (dx, dy))
    return best[1]


def region_grow(core, band):
    """BFS from the core through 8-neighbours inside band."""
    h, w = core.shape
    out = core.copy()
    queue = deque(pixel_set(core))
    while queue:
        y, x = queue.popleft()
        for dy, dx in N8:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w and band[yy, xx] and not out[yy, xx]:
                out[yy, xx] = True
                queue.append((yy, xx))
    return out


def dense_softmax(scores):
    top = max(scores)
    ex = [math.exp(s - top) for s in scores]
    z = sum(ex)
    return [e / z for e in ex]
