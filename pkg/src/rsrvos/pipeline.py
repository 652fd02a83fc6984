"""Online sequence segmentation: calibrated initialisation, then per-frame
memory readout and mask decoding."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage as ndi

from .core import as_mask, check_features, check_scalar_map, connected_components, largest_component
from .flow import BlockMatchConfig, CachedProvider, frame_pair_provider
from .io import read_frame_png, read_rst1
from .memory import (
    FifoMemory,
    MemoryBank,
    MemoryConfig,
    QueryProjection,
    encode_semantic_anchor,
    fuse,
    project_query,
)
from .tmcc import CalibrationConfig, calibrate

log = logging.getLogger(__name__)

VARIANTS = ("full", "tmcc", "dami", "baseline")


@dataclass
class SequenceRecord:
    video_id: str
    frames: Sequence  # paths or (H, W) arrays, in order
    annotations: Optional[Sequence] = None
    expression: str = ""
    category: str = ""
    features: Optional[Sequence] = None  # per-frame (H, W, d) RST1 paths for feature = "file"

    def __post_init__(self):
        if len(self.frames) < 2:
            raise ValueError(f"{self.video_id}: a sequence needs at least 2 frames")
        if self.annotations is not None and len(self.annotations) != len(self.frames):
            raise ValueError(f"{self.video_id}: {len(self.annotations)} annotations for {len(self.frames)} frames")


@dataclass(frozen=True)
class PipelineConfig:
    resize: Optional[tuple] = (480, 480)  # (W, H); None keeps the native size
    feature: str = "toy"
    feature_dim: int = 8
    sim_threshold: float = 0.6
    init_threshold: float = 0.5
    texture_weight: float = 0.3
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    block: BlockMatchConfig = field(default_factory=lambda: BlockMatchConfig(verify=3))

    def __post_init__(self):
        if self.resize is not None and (len(self.resize) != 2 or min(self.resize) < 1):
            raise ValueError("resize must be a positive (width, height) pair")
        if self.feature not in ("toy", "file"):
            raise ValueError("feature must be 'toy' or 'file'")
        if not 4 <= self.feature_dim <= 16:
            raise ValueError("feature_dim must lie in 4..16")
        if not 0.0 < self.sim_threshold < 1.0:
            raise ValueError("sim_threshold must lie in (0, 1)")
        if not 0.0 < self.init_threshold < 1.0:
            raise ValueError("init_threshold must lie in (0, 1)")
        if self.texture_weight < 0:
            raise ValueError("texture_weight must be >= 0")


# --- resizing -------------------------------------------------------------------


def resize_scalar(a, size) -> np.ndarray:
    """Bilinear resize of a float map to ``size = (W, H)``."""
    a = np.asarray(a, dtype=np.float32)
    if size is None or (a.shape[1], a.shape[0]) == tuple(size):
        return a.astype(np.float64)
    im = Image.fromarray(a, mode="F").resize(tuple(size), Image.BILINEAR)
    return np.asarray(im, dtype=np.float64)


def resize_mask(m, size) -> np.ndarray:
    m = as_mask(m)
    if size is None or (m.shape[1], m.shape[0]) == tuple(size):
        return m.copy()
    im = Image.fromarray(m.astype(np.uint8) * 255).resize(tuple(size), Image.NEAREST)
    return np.asarray(im) > 0


class FrameSource:
    """Lazily loaded, resized frames; indexable like a list."""

    def __init__(self, frames: Sequence, size=None):
        self._frames = frames
        self._size = size
        self._cache: dict[int, np.ndarray] = {}

    def __len__(self):
        return len(self._frames)

    def __getitem__(self, t: int) -> np.ndarray:
        if t < 0 or t >= len(self._frames):
            raise IndexError(f"frame {t} out of range")
        if t not in self._cache:
            src = self._frames[t]
            if isinstance(src, (str, Path)):
                if not Path(src).exists():
                    raise FileNotFoundError(f"missing frame file: {src}")
                src = read_frame_png(src)
            self._cache[t] = resize_scalar(src, self._size)
        return self._cache[t]


# --- features and decoding --------------------------------------------------------


def _local_stats(frame: np.ndarray, size: int):
    mean = ndi.uniform_filter(frame, size, mode="nearest")
    sq = ndi.uniform_filter(frame * frame, size, mode="nearest")
    return mean, np.sqrt(np.maximum(sq - mean * mean, 0.0))


def _unit_scale(c: np.ndarray) -> np.ndarray:
    lo, hi = c.min(), c.max()
    if hi - lo <= 1e-12:
        return np.zeros_like(c)
    return (c - lo) / (hi - lo)


# channel order of toy_features; False marks texture (std, gradient, laplacian) channels
_APPEARANCE = (True, True, False, False, False, True, False, False) + (True, False) * 4


def channel_weights(d: int, texture_weight: float) -> np.ndarray:
    """Per-channel weights: 1 for intensity/mean channels, ``texture_weight`` otherwise.

    Texture channels are near zero except at edges, so after standardisation
    their edge responses are many deviations large and would dominate pooled
    target vectors.
    """
    return np.where(np.array(_APPEARANCE[:d]), 1.0, float(texture_weight))


def toy_features(frame, d: int = 8) -> np.ndarray:
    """Local-statistics descriptor, each channel scaled to [0, 1] per frame.

    Channels: intensity, 3x3 mean, 3x3 std, |d/dx|, |d/dy|, 7x7 mean, 7x7 std,
    |laplacian|, then mean/std pairs at 11, 15, 19, 23 px.
    """
    f = check_scalar_map(frame, "frame")
    if not 4 <= d <= 16:
        raise ValueError("d must lie in 4..16")
    m3, s3 = _local_stats(f, 3)
    m7, s7 = _local_stats(f, 7)
    gx = np.abs(ndi.correlate1d(f, [-0.5, 0.0, 0.5], axis=1, mode="nearest"))
    gy = np.abs(ndi.correlate1d(f, [-0.5, 0.0, 0.5], axis=0, mode="nearest"))
    lap = np.abs(ndi.laplace(f, mode="nearest"))
    chans = [f, m3, s3, gx, gy, m7, s7, lap]
    for size in (11, 15, 19, 23):
        if len(chans) >= d:
            break
        chans.extend(_local_stats(f, size))
    return np.stack([_unit_scale(c) for c in chans[:d]], axis=-1)


def standardize(feat) -> np.ndarray:
    """Zero-mean, unit-variance channels over the frame; constant channels become 0."""
    f = np.asarray(feat, dtype=np.float64)
    flat = f.reshape(-1, f.shape[-1])
    mu = flat.mean(axis=0)
    sd = np.sqrt(np.maximum((flat * flat).mean(axis=0) - mu * mu, 0.0))
    inv = np.where(sd > 1e-12, 1.0 / np.where(sd > 1e-12, sd, 1.0), 0.0)
    return (f - mu) * inv


def decode_mask(fused, query, theta_sim: float):
    """Confidence = projection of the query on the readout direction.

    Queries longer than one anchor unit are shrunk to unit length first, so
    the confidence is ``max(0, cos) * min(|q|, 1)``: strong but misaligned
    structure and weak near-average pixels both score low. Mask is the
    largest 8-connected component of ``confidence > theta_sim``.
    Returns ``(mask, confidence)``.
    """
    F = np.asarray(fused, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    if F.shape != q.shape or F.ndim != 3:
        raise ValueError("readout and query must both be (H, W, d)")
    fn = np.linalg.norm(F, axis=-1)
    qn = np.linalg.norm(q, axis=-1)
    proj = np.einsum("hwc,hwc->hw", q, F) / np.where(fn > 0, fn, 1.0)
    conf = np.clip(proj / np.maximum(qn, 1.0), 0.0, 1.0)
    conf[fn == 0] = 0.0
    return largest_component(conf > theta_sim), conf


def saliency(mask) -> float:
    m = as_mask(mask)
    return float(np.count_nonzero(m)) / m.size


# --- sequence driver ------------------------------------------------------------------


@dataclass
class FrameResult:
    t: int
    mask: np.ndarray
    confidence: Optional[np.ndarray]
    diagnostics: dict


@dataclass
class SequenceResult:
    masks: list
    diagnostics: list
    calibration: Optional[dict]
    initial_region: np.ndarray
    lookahead: int  # highest frame index read before the frame-0 output
    bank: object = None
    seconds: float = 0.0


def encode_frame(frame, cfg: PipelineConfig) -> np.ndarray:
    """Toy descriptor, standardised per channel and with texture channels down-weighted."""
    f = standardize(toy_features(frame, cfg.feature_dim))
    return f * channel_weights(cfg.feature_dim, cfg.texture_weight)


def iter_segment(
    frames,
    initial_confidence,
    cfg: PipelineConfig = PipelineConfig(),
    variant: str = "full",
    field_provider=None,
    feature_fn=None,
    phi: QueryProjection = QueryProjection(),
    state: Optional[dict] = None,
):
    """Generator yielding one ``FrameResult`` per frame, in order.

    ``frames`` is indexable; frame ``t`` is only read when its turn comes,
    except for the look-ahead window the initial calibration needs.
    ``feature_fn(t, frame)`` replaces the toy encoder. Features are divided by
    the norm of the frame-0 pooled target feature so the anchor has unit scale.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    state = {} if state is None else state
    conf0 = check_scalar_map(initial_confidence, "initial confidence", unit=True)
    frame0 = frames[0]
    if conf0.shape != np.shape(frame0):
        raise ValueError(f"initial confidence {conf0.shape} does not match frame 0 {np.shape(frame0)}")
    r0 = conf0 > cfg.init_threshold

    calib = None
    if variant in ("full", "tmcc"):
        provider = field_provider if field_provider is not None else frame_pair_provider(frames, cfg.block)
        region, report = calibrate(r0, conf0, CachedProvider(provider), cfg.calibration)
        calib = report.to_dict()
    else:
        region = r0.copy()
    if not region.any():
        raise ValueError("empty initial region")

    if feature_fn is None:
        feature_fn = lambda t, fr: encode_frame(fr, cfg)  # noqa: E731
    f0 = check_features(feature_fn(0, frame0))
    scale = float(np.linalg.norm(f0[region].mean(axis=0)))
    if scale == 0.0:
        raise ValueError("degenerate anchor: pooled feature has zero norm")
    f0 = f0 / scale
    anchor = encode_semantic_anchor(f0, region)
    memory = MemoryBank(cfg.memory) if variant in ("full", "dami") else FifoMemory(cfg.memory.n_max)
    memory.initialize(anchor, region, f0)
    state.update(memory=memory, calibration=calib, initial_region=region, anchor=anchor)

    yield FrameResult(0, region, None, {
        "t": 0,
        "area": int(np.count_nonzero(region)),
        "saliency": saliency(region),
        "bank_size": len(memory),
        "calibration": calib,
    })

    for t in range(1, len(frames)):
        f = check_features(feature_fn(t, frames[t])) / scale
        q = project_query(f, phi)
        fused = fuse(q, memory) if isinstance(memory, MemoryBank) else memory.readout(q)
        mask, conf = decode_mask(fused, q, cfg.sim_threshold)
        candidates = connected_components(conf > cfg.sim_threshold)
        rec = memory.update(f, conf, mask, candidates, t)
        diag = rec.to_dict()
        diag.update(area=int(np.count_nonzero(mask)), saliency=saliency(mask), candidates=candidates.count)
        yield FrameResult(t, mask, conf, diag)


def _file_features(paths, size):
    def load(t, _frame):
        f = check_features(read_rst1(paths[t]))
        if size is not None and (f.shape[1], f.shape[0]) != tuple(size):
            f = np.stack([resize_scalar(f[..., c], size) for c in range(f.shape[2])], axis=-1)
        return f

    return load


def segment_sequence(
    record,
    initial_confidence,
    cfg: PipelineConfig = PipelineConfig(),
    variant: str = "full",
    field_provider=None,
    feature_fn=None,
    frames=None,
) -> SequenceResult:
    """Segment every frame of ``record`` (a SequenceRecord or a list of frames).

    ``frames`` may supply a pre-built indexable frame source (e.g. an access
    recorder); otherwise frames are loaded and resized from the record.
    """
    start = time.perf_counter()
    is_record = isinstance(record, SequenceRecord)
    if frames is None:
        frames = FrameSource(record.frames if is_record else record, cfg.resize)
    if feature_fn is None and cfg.feature == "file":
        if not is_record or record.features is None:
            raise ValueError("feature = 'file' needs a SequenceRecord with feature paths")
        feature_fn = _file_features(record.features, cfg.resize)
    conf0 = np.asarray(initial_confidence, dtype=np.float64)
    if cfg.resize is not None and (conf0.shape[1], conf0.shape[0]) != tuple(cfg.resize):
        conf0 = np.clip(resize_scalar(conf0, cfg.resize), 0.0, 1.0)
    state: dict = {}
    masks, diags = [], []
    emit = getattr(frames, "emit", None)  # access recorders log each output
    for res in iter_segment(frames, conf0, cfg, variant, field_provider, feature_fn, state=state):
        masks.append(res.mask)
        diags.append(res.diagnostics)
        if emit is not None:
            emit(res.t)
    calib = state.get("calibration")
    return SequenceResult(
        masks=masks,
        diagnostics=diags,
        calibration=calib,
        initial_region=state["initial_region"],
        lookahead=max(calib["frames_used"] - 1, 0) if calib else 0,
        bank=state.get("memory"),
        seconds=time.perf_counter() - start,
    )


def overlay(frame, mask, color=(255, 64, 0), alpha: float = 0.5) -> np.ndarray:
    """RGB uint8 image with ``mask`` alpha-blended over the grayscale ``frame``."""
    g = np.clip(np.asarray(frame, dtype=np.float64), 0.0, 1.0) * 255.0
    rgb = np.repeat(g[..., None], 3, axis=2)
    m = as_mask(mask)
    rgb[m] = (1 - alpha) * rgb[m] + alpha * np.asarray(color, dtype=np.float64)
    return np.round(rgb).astype(np.uint8)
