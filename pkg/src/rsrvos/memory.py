"""Decoupled three-store memory: a fixed semantic anchor, a gated short-term
FIFO and a quality-gated discriminative pool, read out by weighted attention.

Stored entries are mask-pooled ``d``-vectors; queries are per-pixel features.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ComponentSet, as_mask, check_features, check_scalar_map

ANCHOR, SHORT, DISC = "anchor", "short", "discriminative"


class MemoryError_(RuntimeError):
    """Memory bank used in an invalid state."""


@dataclass(frozen=True)
class SemanticAnchor:
    vector: np.ndarray
    scale: float  # norm of the pooled feature before normalisation
    source_frame: int = 0

    def __post_init__(self):
        self.vector.setflags(write=False)


@dataclass
class MemoryEntry:
    vector: np.ndarray
    timestamp: int
    kind: str
    quality: Optional[float] = None


@dataclass(frozen=True)
class QueryProjection:
    matrix: Optional[np.ndarray] = None  # None means identity

    def __post_init__(self):
        if self.matrix is not None:
            m = np.asarray(self.matrix, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or not np.isfinite(m).all():
                raise ValueError("query projection must be a finite square matrix")
            object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class QualityInputs:
    conf_mean: float
    delta_area: float
    anchor_sim: float


@dataclass(frozen=True)
class MemoryConfig:
    window: int = 4
    eta: float = 1.0
    gate_percentile: float = 60.0
    tau_amb: float = 0.1
    tau_reg: float = 0.5
    n_max: int = 7
    omega: tuple = (1.0, 1.0, 1.0)
    rel_bias: Optional[tuple] = None  # length window - 1; zeros when None
    robust_weights: tuple = (0.5, 0.5, 0.5)
    innovation_region: str = "target"  # or "frame"

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("short-term window L must be >= 2")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if not 0.0 < self.gate_percentile < 100.0:
            raise ValueError("gate_percentile must lie in (0, 100)")
        if not 0.0 <= self.tau_reg <= 1.0:
            raise ValueError("tau_reg must lie in [0, 1]")
        if self.disc_quota < 0:
            raise ValueError("n_max too small for the anchor plus L - 1 short-term entries")
        if len(self.omega) != 3:
            raise ValueError("omega needs three fusion weights")
        if self.rel_bias is None:
            object.__setattr__(self, "rel_bias", (0.0,) * (self.window - 1))
        if len(self.rel_bias) != self.window - 1:
            raise ValueError("rel_bias must have L - 1 elements")
        if self.innovation_region not in ("target", "frame"):
            raise ValueError("innovation_region must be 'target' or 'frame'")

    @property
    def disc_quota(self) -> int:
        return self.n_max - 1 - (self.window - 1)


# --- kernels -----------------------------------------------------------------


def encode_semantic_anchor(feat0, mask, source_frame: int = 0) -> SemanticAnchor:
    f = check_features(feat0)
    m = as_mask(mask)
    if m.shape != f.shape[:2]:
        raise ValueError("mask and feature map differ in shape")
    if not m.any():
        raise ValueError("anchor mask is empty")
    pooled = f[m].mean(axis=0)
    norm = float(np.linalg.norm(pooled))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError("degenerate anchor: pooled feature has zero norm")
    return SemanticAnchor(pooled / norm, norm, source_frame)


def project_query(f, phi: QueryProjection = QueryProjection()) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if phi.matrix is None:
        return f
    if f.shape[-1] != phi.matrix.shape[1]:
        raise ValueError(f"feature dim {f.shape[-1]} does not match projection {phi.matrix.shape}")
    return f @ phi.matrix.T


def softmax(x, axis: int = -1) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def attend(queries, memory, bias=None) -> np.ndarray:
    """Scaled dot-product attention with keys = values = ``memory`` rows."""
    q = np.asarray(queries, dtype=np.float64)
    m = np.asarray(memory, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValueError("attention needs at least one memory entry")
    if q.ndim != 2 or q.shape[1] != m.shape[1]:
        raise ValueError(f"query shape {q.shape} incompatible with memory {m.shape}")
    if m.shape[0] == 1:
        # softmax over a single entry is exactly 1
        if not np.isfinite(q).all():
            raise ValueError("non-finite attention scores")
        return np.broadcast_to(m, q.shape).copy()
    scores = q @ m.T / math.sqrt(m.shape[1])
    if bias is not None:
        b = np.asarray(bias, dtype=np.float64).reshape(-1)
        if b.shape[0] != m.shape[0]:
            raise ValueError("bias length must equal the number of memory entries")
        scores = scores + b
    if not np.isfinite(scores).all():
        raise ValueError("non-finite attention scores")
    return softmax(scores, axis=1) @ m


def recency_weights(timestamps: Sequence[int], t: int, eta: float) -> np.ndarray:
    ts = np.asarray(timestamps, dtype=np.float64)
    logits = -eta * (t - ts)
    return softmax(logits)


def nearest_rank_percentile(values: Sequence[float], percentile: float) -> float:
    vals = sorted(values)
    if not vals:
        raise ValueError("percentile of an empty history")
    rank = max(1, math.ceil(percentile / 100.0 * len(vals)))
    return float(vals[rank - 1])


def short_register_gate(g: float, history: Sequence[float], percentile: float, bootstrap: int = 0) -> bool:
    """True iff ``g`` exceeds the nearest-rank percentile of ``history``.

    While fewer than ``max(bootstrap, 1)`` values have been seen the gate is open.
    """
    if len(history) < max(bootstrap, 1):
        return True
    return g > nearest_rank_percentile(history, percentile)


def occlusion_weight(feat, conf) -> np.ndarray:
    f = check_features(feat)
    c = check_scalar_map(conf, "confidence")
    if c.shape != f.shape[:2]:
        raise ValueError("confidence and features differ in shape")
    if c.min() < 0.0 or c.max() > 1.0:
        raise ValueError("confidence must lie in [0, 1]")
    return f * c[..., None]


def kl_divergence(p, q, atol: float = 1e-6) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("KL needs two 1-D distributions of equal length")
    if (p < 0).any() or (q < 0).any() or abs(p.sum() - 1) > atol or abs(q.sum() - 1) > atol:
        raise ValueError("KL inputs must be normalised probability vectors")
    support = p > 0
    if (q[support] == 0).any():
        return math.inf
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def robustness_score(q: QualityInputs, weights=(0.5, 0.5, 0.5)) -> float:
    w1, w2, w3 = weights
    s = w1 * q.conf_mean - w2 * q.delta_area + w3 * max(q.anchor_sim, 0.0)
    return min(max(s, 0.0), 1.0)


def _cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cosine similarity between every row of a and every row of b; zero rows give 0."""
    na = np.linalg.norm(a, axis=1, keepdims=True)
    nb = np.linalg.norm(b, axis=1, keepdims=True)
    na[na == 0] = 1.0
    nb[nb == 0] = 1.0
    return (a / na) @ (b / nb).T


def pooled_features(candidates: ComponentSet, feat) -> np.ndarray:
    """(K, d) mean feature of every component."""
    f = check_features(feat)
    labels = candidates.labels.ravel()
    flat = f.reshape(-1, f.shape[2])
    k = candidates.count
    sums = np.stack([np.bincount(labels, weights=flat[:, c], minlength=k + 1) for c in range(flat.shape[1])], axis=1)
    return sums[1:] / candidates.sizes[:, None]


# --- stores -------------------------------------------------------------------


class ShortTermBuffer:
    def __init__(self, window: int, eta: float, gate_percentile: float, rel_bias=None):
        self.window = window
        self.eta = eta
        self.gate_percentile = gate_percentile
        self.rel_bias = np.zeros(window - 1) if rel_bias is None else np.asarray(rel_bias, dtype=np.float64)
        self.entries: deque[MemoryEntry] = deque()
        self.history: list[float] = []

    @property
    def capacity(self) -> int:
        return self.window - 1

    def __len__(self):
        return len(self.entries)

    def vectors(self) -> np.ndarray:
        return np.stack([e.vector for e in self.entries])

    def timestamps(self) -> list[int]:
        return [e.timestamp for e in self.entries]

    def bias(self) -> np.ndarray:
        # newest entry always takes the last bias element
        return self.rel_bias[self.capacity - len(self.entries):]

    def push(self, vector: np.ndarray, t: int) -> None:
        if self.entries and t <= self.entries[-1].timestamp:
            raise MemoryError_("short-term timestamps must strictly increase")
        if len(self.entries) == self.capacity:
            self.entries.popleft()
        self.entries.append(MemoryEntry(np.array(vector, dtype=np.float64), t, SHORT))

    def predictor(self, t: int) -> np.ndarray:
        w = recency_weights(self.timestamps(), t, self.eta)
        return w @ self.vectors()


class DiscriminativePool:
    def __init__(self, quota: int, tau_amb: float, tau_reg: float):
        self.quota = quota
        self.tau_amb = tau_amb
        self.tau_reg = tau_reg
        self.prototypes: list[MemoryEntry] = []

    def __len__(self):
        return len(self.prototypes)

    def vectors(self) -> np.ndarray:
        return np.stack([e.vector for e in self.prototypes])

    def add(self, vector, quality: float, t: int) -> None:
        if self.quota == 0:
            return
        if len(self.prototypes) >= self.quota:
            self.prototypes.pop()  # lowest quality, oldest among equals
        self.prototypes.append(MemoryEntry(np.array(vector, dtype=np.float64), t, DISC, float(quality)))
        self.prototypes.sort(key=lambda e: (-e.quality, e.timestamp))


def innovation_score(feat, short: ShortTermBuffer, region, t: int) -> float:
    """Mean residual over ``region`` between ``feat`` and the recency-weighted buffer predictor."""
    f = check_features(feat)
    r = as_mask(region)
    if len(short) == 0:
        raise ValueError("innovation is undefined for an empty buffer")
    if not r.any():
        raise ValueError("innovation region is empty")
    pred = short.predictor(t)
    return float(np.linalg.norm(f[r] - pred, axis=1).mean())


@dataclass
class StepRecord:
    t: int
    innovation: Optional[float] = None
    short_registered: bool = False
    kl: Optional[float] = None
    quality: Optional[float] = None
    disc_registered: bool = False
    size: int = 0

    def to_dict(self) -> dict:
        kl = self.kl
        if kl is not None and not math.isfinite(kl):
            kl = None
        return {
            "t": self.t,
            "G": self.innovation,
            "short_registered": self.short_registered,
            "KL": kl,
            "s_t": self.quality,
            "disc_registered": self.disc_registered,
            "bank_size": self.size,
        }


class MemoryBank:
    """Anchor + short-term FIFO + discriminative pool under a shared capacity."""

    def __init__(self, cfg: MemoryConfig = MemoryConfig()):
        self.cfg = cfg
        self.anchor: Optional[SemanticAnchor] = None
        self.short = ShortTermBuffer(cfg.window, cfg.eta, cfg.gate_percentile, cfg.rel_bias)
        self.disc = DiscriminativePool(cfg.disc_quota, cfg.tau_amb, cfg.tau_reg)
        self.omega = tuple(float(w) for w in cfg.omega)
        self.n_max = cfg.n_max
        self._last_region: Optional[np.ndarray] = None
        self._last_area: Optional[int] = None
        self._last_feat: Optional[np.ndarray] = None

    def initialize(self, anchor: SemanticAnchor, region, feat0=None) -> None:
        if self.anchor is not None:
            raise MemoryError_("bank already initialised")
        self.anchor = anchor
        self._last_region = as_mask(region).copy()
        self._last_area = int(np.count_nonzero(region))
        self._last_feat = None if feat0 is None else np.array(feat0)

    def __len__(self):
        return (self.anchor is not None) + len(self.short) + len(self.disc)

    def entries(self) -> list[MemoryEntry]:
        out = []
        if self.anchor is not None:
            out.append(MemoryEntry(np.array(self.anchor.vector), self.anchor.source_frame, ANCHOR))
        out.extend(self.short.entries)
        out.extend(self.disc.prototypes)
        return out

    def stored_vectors(self) -> np.ndarray:
        return np.stack([e.vector for e in self.entries()])

    def active_weight(self) -> float:
        """Sum of the fusion weights of non-empty stores."""
        w1, w2, w3 = self.omega
        return w1 + (w2 if len(self.short) else 0.0) + (w3 if len(self.disc) else 0.0)

    def update(self, feat, conf, mask, candidates: Optional[ComponentSet], t: int) -> StepRecord:
        """Registration after the frame-``t`` readout has been consumed."""
        if self.anchor is None:
            raise MemoryError_("bank uninitialized")
        f = check_features(feat)
        c = check_scalar_map(conf, "confidence")
        m = as_mask(mask)
        rec = StepRecord(t)

        region = m if m.any() else self._last_region
        area = int(np.count_nonzero(m))
        if c.shape != f.shape[:2] or c.min() < 0.0 or c.max() > 1.0:
            raise ValueError("confidence must match the features and lie in [0, 1]")
        # occlusion-weighted pooling, evaluated on the region only
        pooled_w = (f[region] * c[region][:, None]).mean(axis=0)

        duplicate = self._last_feat is not None and np.array_equal(self._last_feat, f)
        if len(self.short) == 0:
            rec.short_registered = not duplicate
        else:
            omega = region if self.cfg.innovation_region == "target" else np.ones_like(region)
            g = 0.0 if duplicate else innovation_score(f, self.short, omega, t)
            rec.innovation = g
            open_ = short_register_gate(g, self.short.history, self.short.gate_percentile, self.short.capacity)
            rec.short_registered = open_ and not duplicate
            self.short.history.append(g)
        if rec.short_registered:
            self.short.push(pooled_w, t)

        dists = hypothesis_distributions(candidates, f, self) if candidates is not None else None
        rec.kl = math.inf if dists is None else kl_divergence(*dists)
        raw = f[region].mean(axis=0)
        norm = np.linalg.norm(raw)
        sim = float(raw @ self.anchor.vector / norm) if norm > 0 else 0.0
        prev_area = self._last_area if self._last_area is not None else area
        q = QualityInputs(
            conf_mean=float(c[m].mean()) if m.any() else 0.0,
            delta_area=abs(area - prev_area) / max(prev_area, 1),
            anchor_sim=sim,
        )
        rec.quality = robustness_score(q, self.cfg.robust_weights)
        rec.disc_registered = maybe_register_discriminative(self, pooled_w, rec.kl, rec.quality, t)

        if m.any():
            self._last_region = m.copy()
        self._last_area = area
        self._last_feat = f.copy()
        rec.size = len(self)
        if rec.size > self.n_max:
            raise MemoryError_(f"capacity exceeded: {rec.size} > {self.n_max}")
        return rec

    def snapshot(self) -> dict:
        import base64

        from .io import encode_rst1

        def enc(v):
            return base64.b64encode(encode_rst1(np.asarray(v, dtype=np.float32)[None, :])).decode("ascii")

        return {
            "omega": list(self.omega),
            "n_max": self.n_max,
            "entries": [
                {"kind": e.kind, "timestamp": e.timestamp, "quality": e.quality, "vector": enc(e.vector)}
                for e in self.entries()
            ],
        }


def fuse(q, bank: MemoryBank) -> np.ndarray:
    """Weighted sum of anchor, short-term and discriminative attention readouts.

    Empty stores contribute zero. Accepts ``(P, d)`` or ``(H, W, d)`` queries.
    """
    if bank.anchor is None:
        raise MemoryError_("bank uninitialized")
    q = np.asarray(q, dtype=np.float64)
    flat = q.reshape(-1, q.shape[-1])
    w1, w2, w3 = bank.omega
    out = w1 * attend(flat, bank.anchor.vector[None, :])
    if len(bank.short):
        out += w2 * attend(flat, bank.short.vectors(), bank.short.bias())
    if len(bank.disc):
        out += w3 * attend(flat, bank.disc.vectors())
    return out.reshape(q.shape)


def hypothesis_distributions(candidates: Optional[ComponentSet], feat, bank: MemoryBank):
    """Distributions over stored entries for the two candidates most similar to the anchor.

    Returns ``(P_main, P_alt)`` or ``None`` with fewer than two candidates.
    """
    if candidates is None or candidates.count < 2:
        return None
    pooled = pooled_features(candidates, feat)
    sims = _cosine_rows(pooled, bank.anchor.vector[None, :])[:, 0]
    order = sorted(range(candidates.count), key=lambda i: (-sims[i], -candidates.sizes[i], i))
    stored = bank.stored_vectors()
    cos = _cosine_rows(pooled[order[:2]], stored)
    return softmax(cos[0]), softmax(cos[1])


def maybe_register_discriminative(bank: MemoryBank, f_pooled, kl: float, s_t: float, t: int) -> bool:
    if kl < bank.disc.tau_amb and s_t > bank.disc.tau_reg and bank.disc.quota > 0:
        bank.disc.add(f_pooled, s_t, t)
        return True
    return False


def step(bank: MemoryBank, feat, conf, candidates, t: int, mask=None, phi: QueryProjection = QueryProjection()):
    """Readout for frame ``t`` followed by registration; returns ``(F_fused, StepRecord)``.

    The readout is taken before anything from frame ``t`` is written.
    ``mask`` defaults to ``conf > 0.5``.
    """
    f = check_features(feat)
    fused = fuse(project_query(f, phi), bank)
    if mask is None:
        mask = check_scalar_map(conf, "confidence") > 0.5
    rec = bank.update(f, conf, mask, candidates, t)
    return fused, rec


class FifoMemory:
    """Single-store baseline: the frame-0 entry plus the most recent frames, no gating.

    Every frame's raw pooled feature is written; readout is one attention over
    all entries. Used as the memory of the ablation variants without the
    decoupled stores.
    """

    def __init__(self, n_max: int = 7):
        if n_max < 2:
            raise ValueError("FIFO memory needs room for at least one recent frame")
        self.n_max = n_max
        self.anchor: Optional[SemanticAnchor] = None
        self.recent: deque[MemoryEntry] = deque()
        self._last_region = None

    def initialize(self, anchor: SemanticAnchor, region, feat0=None) -> None:
        self.anchor = anchor
        self._last_region = as_mask(region).copy()

    def __len__(self):
        return (self.anchor is not None) + len(self.recent)

    def readout(self, q) -> np.ndarray:
        if self.anchor is None:
            raise MemoryError_("bank uninitialized")
        q = np.asarray(q, dtype=np.float64)
        mem = [self.anchor.vector] + [e.vector for e in self.recent]
        return attend(q.reshape(-1, q.shape[-1]), np.stack(mem)).reshape(q.shape)

    def update(self, feat, conf, mask, candidates, t: int) -> StepRecord:
        f = check_features(feat)
        m = as_mask(mask)
        region = m if m.any() else self._last_region
        if len(self.recent) == self.n_max - 1:
            self.recent.popleft()
        self.recent.append(MemoryEntry(f[region].mean(axis=0), t, SHORT))
        if m.any():
            self._last_region = m.copy()
        return StepRecord(t, short_registered=True, size=len(self))
