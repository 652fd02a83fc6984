"""Bundled acceptance checks, shared by ``rsrvos selfcheck`` and the test suite.

Every check is deterministic (fixed seeds), compares the library against an
independently coded oracle or a recorded property, and reports its wall time
against a budget.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage as ndi

from .benchkit import (
    RecordingFrameProvider,
    VideoStats,
    audit_causality,
    audit_prompt_generator,
    contrast_score,
    generate_prompt,
    laplacian_sharpness,
    score_corpus,
)
from .core import connected_components, mask_iou
from .flow import WindowSearchConfig, adaptive_window_search, estimate_displacement, frame_pair_provider
from .memory import (
    MemoryBank,
    MemoryConfig,
    MemoryEntry,
    SemanticAnchor,
    attend,
    fuse,
    kl_divergence,
)
from .metrics import boundary_f, evaluate
from .pipeline import PipelineConfig, segment_sequence
from .synth import SynthConfig, generate, reappearance_frame, scenario_suite
from .tmcc import calibrate


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    seconds: float
    budget: float
    detail: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.passed and self.seconds < self.budget

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        facts = ", ".join(f"{k}={_fmt(v)}" for k, v in self.detail.items())
        return f"[{status}] {self.number}. {self.name} ({self.seconds:.1f}s / {self.budget:g}s) {facts}"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _timed(number: int, name: str, budget: float, fn: Callable[[], tuple[bool, dict]]) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(number, name, bool(passed), time.perf_counter() - t0, budget, detail)


# --- oracles ----------------------------------------------------------------------


def oracle_iou(a: np.ndarray, b: np.ndarray) -> float:
    sa = {(int(y), int(x)) for y, x in zip(*np.nonzero(a))}
    sb = {(int(y), int(x)) for y, x in zip(*np.nonzero(b))}
    union = sa | sb
    return 1.0 if not union else len(sa & sb) / len(union)


def oracle_boundary(m: np.ndarray) -> list[tuple[int, int]]:
    h, w = m.shape
    out = []
    for y in range(h):
        for x in range(w):
            if not m[y, x]:
                continue
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                yy, xx = y + dy, x + dx
                if not (0 <= yy < h and 0 <= xx < w) or not m[yy, xx]:
                    out.append((y, x))
                    break
    return out


def oracle_boundary_f(pred: np.ndarray, gt: np.ndarray, tol: float = 1.0) -> float:
    """Exhaustive pairwise matching of boundary pixels within Euclidean ``tol``."""
    bp, bg = oracle_boundary(pred), oracle_boundary(gt)
    if not bp and not bg:
        return 1.0
    if not bp or not bg:
        return 0.0

    def matched(src, dst):
        return sum(any(math.hypot(y - v, x - u) <= tol for v, u in dst) for y, x in src)

    p = matched(bp, bg) / len(bp)
    r = matched(bg, bp) / len(bg)
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def oracle_attend(q: np.ndarray, m: np.ndarray, bias=None) -> np.ndarray:
    n, d = m.shape
    out = np.zeros((q.shape[0], d))
    for i in range(q.shape[0]):
        scores = [sum(q[i, c] * m[j, c] for c in range(d)) / math.sqrt(d) for j in range(n)]
        if bias is not None:
            scores = [s + float(b) for s, b in zip(scores, bias)]
        top = max(scores)
        ex = [math.exp(s - top) for s in scores]
        z = sum(ex)
        for j in range(n):
            out[i] += ex[j] / z * m[j]
    return out


# --- criteria ---------------------------------------------------------------------


def check_metric_oracle(pairs: int = 200, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        j_err = f_err = 0.0
        for _ in range(pairs):
            density = rng.uniform(0.05, 0.7, size=2)
            a = rng.random((16, 16)) < density[0]
            b = rng.random((16, 16)) < density[1]
            if rng.random() < 0.5:  # blobby shapes as well as speckle
                a = ndi.binary_opening(a) | ndi.binary_closing(a) & a
                b = ndi.binary_closing(b)
            j_err = max(j_err, abs(mask_iou(a, b) - oracle_iou(a, b)))
            f_err = max(f_err, abs(boundary_f(a, b, 1) - oracle_boundary_f(a, b, 1.0)))
        return j_err <= 1e-9 and f_err <= 1e-6, {"max_J_err": j_err, "max_F_err": f_err}

    return _timed(1, "metric oracle equivalence", 5.0, run)


def _random_bank(rng, d: int) -> MemoryBank:
    cfg = MemoryConfig(omega=tuple(rng.uniform(0.2, 1.5, size=3)), rel_bias=tuple(rng.normal(0, 0.5, size=3)))
    bank = MemoryBank(cfg)
    v = rng.normal(size=d)
    bank.anchor = SemanticAnchor(v / np.linalg.norm(v), 1.0, 0)
    for t in range(1, 1 + rng.integers(0, cfg.window)):
        bank.short.push(rng.normal(size=d), t)
    for t in range(rng.integers(0, cfg.disc_quota + 1)):
        bank.disc.prototypes.append(MemoryEntry(rng.normal(size=d), 10 + t, "discriminative", float(rng.random())))
    return bank


def check_attention_oracle(instances: int = 500, kl_vectors: int = 1000, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        err = 0.0
        for _ in range(instances):
            d = int(rng.integers(1, 9))
            n = int(rng.integers(1, 8))
            p = int(rng.integers(1, 65))
            q = rng.normal(scale=2.0, size=(p, d))
            m = rng.normal(scale=2.0, size=(n, d))
            bias = rng.normal(size=n) if rng.random() < 0.5 else None
            err = max(err, float(np.abs(attend(q, m, bias) - oracle_attend(q, m, bias)).max()))
            bank = _random_bank(rng, d)
            w1, w2, w3 = bank.omega
            ref = w1 * oracle_attend(q, bank.anchor.vector[None, :])
            if len(bank.short):
                ref += w2 * oracle_attend(q, bank.short.vectors(), bank.short.bias())
            if len(bank.disc):
                ref += w3 * oracle_attend(q, bank.disc.vectors())
            err = max(err, float(np.abs(fuse(q, bank) - ref).max()))
        kl_ok = True
        for _ in range(kl_vectors):
            k = int(rng.integers(2, 9))
            a = rng.dirichlet(np.ones(k))
            b = rng.dirichlet(np.ones(k))
            same, diff = kl_divergence(a, a), kl_divergence(a, b)
            kl_ok &= abs(same) <= 1e-9 and diff >= 0.0 and (diff > 1e-9) == (not np.allclose(a, b, atol=0, rtol=0))
        return err <= 1e-6 and kl_ok, {"max_err": err, "kl_ok": kl_ok}

    return _timed(2, "attention oracle equivalence", 5.0, run)


def check_tmcc_recovery(seeds: int = 50, cfg: PipelineConfig = PipelineConfig()) -> CheckResult:
    def run():
        recovered, removed = [], []
        for suite in ("distractors", "weak_saliency"):
            for sc in scenario_suite(suite, range(seeds)):
                s = generate(sc)
                r0 = s.confidence > cfg.init_threshold
                out, _ = calibrate(r0, s.confidence, frame_pair_provider(s.frames, cfg.block), cfg.calibration)
                gt, inj = s.masks[0], s.injected_mask
                recovered.append(np.count_nonzero(out & gt) / np.count_nonzero(gt))
                removed.append(1.0 - np.count_nonzero(out & inj) / max(np.count_nonzero(inj), 1))
        rec, rem = float(np.mean(recovered)), float(np.mean(removed))
        return rec >= 0.95 and rem >= 0.95, {"recovered": rec, "removed": rem, "runs": len(recovered)}

    return _timed(3, "TMCC recovery/suppression", 60.0, run)


def _structured_frame(rng, base: np.ndarray, region: np.ndarray, duplicate_of=None):
    """Target-like features plus a confidence map with the target and a lookalike blob."""
    if duplicate_of is not None:
        return duplicate_of
    f = base + rng.normal(scale=rng.uniform(0.05, 0.6), size=base.shape)
    h, w = region.shape
    conf = np.zeros((h, w))
    conf[region] = rng.uniform(0.6, 1.0)
    if rng.random() < 0.7:
        y, x = rng.integers(0, h - 6), rng.integers(0, w - 6)
        conf[y : y + 5, x : x + 5] = np.maximum(conf[y : y + 5, x : x + 5], rng.uniform(0.55, 1.0))
    if rng.random() < 0.3:
        conf = np.clip(conf * rng.uniform(0.0, 1.2, size=conf.shape), 0, 1)
    return f, conf


def check_memory_invariants(runs: int = 100, frames: int = 30, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        size_ok = anchor_ok = dup_ok = fifo_ok = True
        max_size = disc_total = dup_total = 0
        h = w = 24
        for _ in range(runs):
            bank = MemoryBank(MemoryConfig())
            region = np.zeros((h, w), dtype=bool)
            region[8:16, 8:16] = True
            base = rng.normal(size=(h, w, 8))
            base[region] = rng.normal(size=8) + 0.1 * rng.normal(size=(int(region.sum()), 8))
            f0 = base.copy()
            v = f0[region].mean(axis=0)
            bank.initialize(SemanticAnchor(v / np.linalg.norm(v), 1.0, 0), region, f0)
            anchor_bytes = bank.anchor.vector.tobytes()
            registered: list[int] = []
            prev = (f0, np.where(region, 0.9, 0.0))
            for t in range(1, frames):
                duplicate = rng.random() < 0.2
                f, conf = _structured_frame(rng, base, region, prev if duplicate else None)
                rec = bank.update(f, conf, conf > 0.5, connected_components(conf > 0.5), t)
                if rec.short_registered:
                    registered.append(t)
                size = len(bank)
                max_size = max(max_size, size)
                size_ok &= size <= 7
                anchor_ok &= bank.anchor.vector.tobytes() == anchor_bytes and not bank.anchor.vector.flags.writeable
                if duplicate:
                    dup_total += 1
                    dup_ok &= not rec.short_registered
                fifo_ok &= bank.short.timestamps() == registered[-bank.short.capacity :]
                disc_total += rec.disc_registered
                prev = (f, conf)
        passed = size_ok and anchor_ok and dup_ok and fifo_ok
        return passed, {
            "max_bank": max_size,
            "anchor_stable": anchor_ok,
            "duplicates": dup_total,
            "dup_rejected": dup_ok,
            "fifo_order": fifo_ok,
            "disc_registrations": disc_total,
        }

    return _timed(4, "memory invariants", 60.0, run)


VARIANT_ORDER = ("full", "tmcc", "dami", "baseline")


def occlusion_runs(seeds: int = 30, cfg: PipelineConfig = PipelineConfig(resize=None)) -> dict:
    """Per-variant J&F and re-lock flags on the occlusion suite (shared by 5 and 6)."""
    out = {v: {"jf": [], "relock": []} for v in VARIANT_ORDER}
    t0 = time.perf_counter()
    for sc in scenario_suite("occlusion", range(seeds)):
        s = generate(sc)
        ra = reappearance_frame(s)
        for v in VARIANT_ORDER:
            res = segment_sequence(s.frames, s.confidence, cfg, v)
            out[v]["jf"].append(evaluate(res.masks, s.masks).jf)
            hits = ra is not None and any(
                mask_iou(res.masks[t], s.masks[t]) > 0.5 for t in range(ra, min(ra + 4, len(s.masks)))
            )
            out[v]["relock"].append(bool(hits))
    out["seconds"] = time.perf_counter() - t0
    return out


def check_ablation(runs: dict) -> CheckResult:
    jf = {v: float(np.mean(runs[v]["jf"])) for v in VARIANT_ORDER}
    passed = (
        jf["full"] >= jf["tmcc"] >= jf["baseline"]
        and jf["full"] >= jf["dami"] >= jf["baseline"]
        and jf["full"] - jf["baseline"] > 0
    )
    return CheckResult(5, "ablation direction", passed, runs["seconds"], 600.0, {f"J&F[{v}]": jf[v] for v in VARIANT_ORDER})


def check_relock(runs: dict) -> CheckResult:
    rate = {v: float(np.mean(runs[v]["relock"])) for v in ("full", "tmcc")}
    passed = rate["full"] >= 0.8 and rate["full"] > rate["tmcc"]
    return CheckResult(6, "occlusion re-lock", passed, runs["seconds"], 300.0, {"relock[full]": rate["full"], "relock[tmcc]": rate["tmcc"]})


def check_vds_and_slow_motion(seeds: int = 5) -> CheckResult:
    def run():
        stats, pairs = [], []
        for seed in range(seeds):
            s = generate(SynthConfig(seed=seed, frames=4, size=(64, 64), velocity=(1.0, 0.5), n_distractors=seed % 3))
            c = contrast_score(s.frames[0], s.masks[0])
            dens = float(1 + len(s.distractor_masks))
            blurred = [ndi.gaussian_filter(f, 1.5) for f in s.frames]
            stats.append(VideoStats(f"v{seed}", c, dens, laplacian_sharpness(s.frames)))
            stats.append(VideoStats(f"v{seed}-blur", c, dens, laplacian_sharpness(blurred)))
            pairs.append((f"v{seed}", f"v{seed}-blur"))
        scores = {r["video_id"]: r["vds"] for r in score_corpus(stats)}
        vds_ok = all(scores[b] < scores[a] for a, b in pairs)
        n_stars = []
        for sc in scenario_suite("slow_motion", range(seeds)):
            s = generate(sc)
            n_stars.append(adaptive_window_search(lambda t, s=s: s.flows[t], s.masks[0], WindowSearchConfig(tau_motion=1.0)))
        return vds_ok and all(n == 4 for n in n_stars), {"blur_lower": vds_ok, "n_star": n_stars}

    return _timed(7, "VDS ordering + slow-motion window", 10.0, run)


def _adversarial_prompt(frames, annotations, category):
    annotations[5]
    return generate_prompt(frames, annotations, category)


def check_causality(cfg: PipelineConfig = PipelineConfig(resize=None)) -> CheckResult:
    def run():
        prompt_ok = seg_ok = True
        lookaheads = []
        n_max = cfg.calibration.window.n_max
        for name in ("weak_saliency", "distractors", "occlusion", "slow_motion"):
            s = generate(scenario_suite(name, [0])[0])
            ok, _ = audit_prompt_generator(generate_prompt, s.frames, s.masks, "vehicle")
            prompt_ok &= ok
            rec = RecordingFrameProvider(s.frames)
            res = segment_sequence(s.frames, s.confidence, cfg, "full", frames=rec)
            lookaheads.append(res.lookahead)
            seg_ok &= res.lookahead <= n_max and audit_causality(rec, lookahead=res.lookahead)
        probe_ok, _ = audit_prompt_generator(_adversarial_prompt, s.frames, s.masks, "vehicle")
        return prompt_ok and seg_ok and not probe_ok, {
            "prompt": prompt_ok,
            "segment": seg_ok,
            "lookahead": lookaheads,
            "probe_caught": not probe_ok,
        }

    return _timed(8, "causality audit", 60.0, run)


def check_performance(frames: int = 100, cfg: PipelineConfig = PipelineConfig()) -> CheckResult:
    def run():
        s = generate(SynthConfig(seed=1, frames=frames, size=(480, 480), target_radii=(20, 14),
                                 velocity=(1.5, 0.8), erosion_fraction=0.3, n_injected=2))
        estimate_displacement(s.frames[0][:32, :32], s.frames[1][:32, :32], cfg.block)  # JIT warm-up
        res = segment_sequence(s.frames, s.confidence, cfg, "full")
        return res.seconds < 30.0, {"segment_s": res.seconds, "frames": len(res.masks)}

    return _timed(9, "performance (100 x 480x480)", 60.0, run)


def run_all(report: Callable[[str], None] = print) -> list[CheckResult]:
    t0 = time.perf_counter()
    results = []
    for fn in (check_metric_oracle, check_attention_oracle, check_tmcc_recovery, check_memory_invariants):
        results.append(fn())
        report(results[-1].line())
    runs = occlusion_runs()
    for fn in (check_ablation, check_relock):
        results.append(fn(runs))
        report(results[-1].line())
    for fn in (check_vds_and_slow_motion, check_causality, check_performance):
        results.append(fn())
        report(results[-1].line())
    total = time.perf_counter() - t0
    report(f"[{'PASS' if total < 900 else 'FAIL'}] selfcheck total {total:.1f}s / 900s")
    return results
