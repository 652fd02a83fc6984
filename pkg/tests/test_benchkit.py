import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage as ndi

from rsrvos import benchkit as bk
from rsrvos.benchkit import VdsWeights


def test_contrast_examples():
    f = np.zeros((12, 12))
    t = np.zeros((12, 12), bool)
    t[4:7, 4:7] = True
    f[t] = 1.0
    assert bk.contrast_score(f, t, 1) == 1.0 and bk.contrast_score(f, t, 3) == 1.0
    assert bk.contrast_score(np.full((12, 12), 0.3), t, 2) == 0.0
    g = np.full((12, 12), 0.3)
    g[t] = 0.8
    assert bk.contrast_score(g, t, 2) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        bk.contrast_score(g, np.zeros_like(t), 2)
    with pytest.raises(ValueError):
        bk.contrast_score(g, t, 0)


def test_contrast_region_mean_oracle():
    rng = np.random.default_rng(0)
    f = rng.random((15, 15))
    t = np.zeros((15, 15), bool)
    t[5:9, 6:10] = True
    ring = [(y, x) for y in range(15) for x in range(15) if not t[y, x]
            and min((y - v) ** 2 + (x - u) ** 2 for v, u in zip(*np.nonzero(t))) <= 4]
    want = abs(f[t].mean() - np.mean([f[p] for p in ring]))
    assert bk.contrast_score(f, t, 2) == pytest.approx(want)


def test_density_examples():
    assert bk.density_score([1] * 10) == 1.0
    assert bk.density_score([0, 0, 0]) == 0
    assert bk.density_score([2, 3, 4]) == 3.0


def conv5(frame):
    h, w = frame.shape
    p = np.pad(frame, 1)
    out = np.zeros_like(frame)
    for y in range(h):
        for x in range(w):
            out[y, x] = p[y, x + 1] + p[y + 2, x + 1] + p[y + 1, x] + p[y + 1, x + 2] - 4 * p[y + 1, x + 1]
    return out


def test_sharpness_examples():
    assert bk.laplacian_sharpness([np.full((8, 8), 0.7)] * 2) == pytest.approx(conv5(np.full((8, 8), 0.7)).var())
    step = np.zeros((16, 16))
    step[:, 8:] = 1.0
    blurred = ndi.gaussian_filter(step, 2.0)
    assert bk.laplacian_sharpness([step]) > bk.laplacian_sharpness([blurred])
    assert bk.laplacian_sharpness([step]) == pytest.approx(conv5(step).var())
    imp = np.zeros((9, 9))
    imp[4, 4] = 1.0
    resp = np.array([-4.0, 1, 1, 1, 1] + [0.0] * 76)
    assert bk.laplacian_sharpness([imp]) == pytest.approx(resp.var())


def test_constant_interior_frames_have_zero_sharpness_away_from_border():
    # zero padding makes the border respond; a zero frame is exactly flat
    assert bk.laplacian_sharpness([np.zeros((6, 6))]) == 0.0


def test_normalize_examples(caplog):
    assert bk.normalize_over_corpus([2, 4, 6]).tolist() == [0, 0.5, 1]
    assert bk.normalize_over_corpus([3, 3]).tolist() == [0, 0]
    assert "equal" in caplog.text
    assert bk.normalize_over_corpus([1, 5]).tolist() == [0, 1]


def test_blur_and_vds_examples():
    assert bk.blur_score(0) == 1 and bk.blur_score(1) == 0 and bk.blur_score(0.3) == pytest.approx(0.7)
    assert bk.vds(1, 0, 0) == 1
    assert bk.vds(0.5, 0.5, 0.5) == -0.5
    with pytest.raises(ValueError):
        bk.vds(1.2, 0, 0)
    with pytest.raises(ValueError):
        VdsWeights(0, 0, 0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 1),
       st.floats(0.1, 2), st.floats(0.1, 2), st.floats(0.1, 2))
def test_vds_monotone(c, d, b, eps, lc, ld, lb):
    w = VdsWeights(lc, ld, lb)
    base = bk.vds(c, d, b, w)
    if b + eps <= 1:
        assert bk.vds(c, d, b + eps, w) < base
    if d + eps <= 1:
        assert bk.vds(c, d + eps, b, w) < base
    if c + eps <= 1:
        assert bk.vds(c + eps, d, b, w) > base


def test_blurred_copy_ranks_lower():
    rng = np.random.default_rng(0)
    frames = [ndi.gaussian_filter(rng.random((32, 32)), 0.5) for _ in range(3)]
    blurred = [ndi.gaussian_filter(f, 2.0) for f in frames]
    stats = [bk.VideoStats("orig", 0.4, 1.0, bk.laplacian_sharpness(frames)),
             bk.VideoStats("blur", 0.4, 1.0, bk.laplacian_sharpness(blurred)),
             bk.VideoStats("other", 0.7, 2.0, bk.laplacian_sharpness([rng.random((32, 32))]))]
    scores = {r["video_id"]: r["vds"] for r in bk.score_corpus(stats)}
    assert scores["blur"] < scores["orig"]


def mask_at(x, y, w=90, h=60):
    m = np.zeros((h, w), bool)
    m[y, x] = True
    return m


def test_prompt_examples():
    assert bk.generate_prompt(None, [mask_at(5, 5)], "wide-bodied aircraft") == "the wide-bodied aircraft at the top-left"
    assert bk.generate_prompt(None, [mask_at(85, 55)], "yacht") == "the yacht at the bottom-right"
    m = np.zeros((9, 9), bool)
    m[3:6, 3:6] = True
    assert bk.generate_prompt(None, [m], "ship") == "the ship at the center"
    with pytest.raises(ValueError):
        bk.generate_prompt(None, [np.zeros((4, 4), bool)], "ship")


@given(st.floats(0, 90), st.floats(0, 60))
def test_grid_partition(x, y):
    row, col = bk.grid_cell(x, y, 90, 60)
    assert 0 <= row <= 2 and 0 <= col <= 2
    assert col == min(int(x // 30), 2) and row == min(int(y // 20), 2)
    terms = [t for r in bk.SPATIAL_TERMS for t in r]
    assert len(set(terms)) == 9


def test_grid_cell_boundaries():
    assert bk.grid_cell(30, 0, 90, 60) == (0, 1)
    assert bk.grid_cell(29.999, 0, 90, 60) == (0, 0)
    assert bk.grid_cell(90, 60, 90, 60) == (2, 2)
    with pytest.raises(ValueError):
        bk.grid_cell(91, 0, 90, 60)


def test_audit_examples():
    frames = [np.zeros((4, 4))] * 8
    anns = [mask_at(1, 1, 4, 4)] * 8
    ok, text = bk.audit_prompt_generator(bk.generate_prompt, frames, anns, "car")
    assert ok and text == "the car at the top-left"

    def probe(fr, an, cat):
        fr[5]
        return "x"

    assert not bk.audit_prompt_generator(probe, frames, anns, "car")[0]

    def twice(fr, an, cat):
        fr[0]
        fr[0]
        return bk.generate_prompt(fr, an, cat)

    assert bk.audit_prompt_generator(twice, frames, anns, "car")[0]


def test_audit_causality_with_emits():
    rec = bk.RecordingFrameProvider(list(range(10)))
    for t in range(4):
        rec[t]
        rec.emit(t)
    assert bk.audit_causality(rec)
    rec2 = bk.RecordingFrameProvider(list(range(10)))
    rec2[0], rec2[2]
    rec2.emit(0)
    assert not bk.audit_causality(rec2)
    assert bk.audit_causality(rec2, lookahead=2)
    with pytest.raises(TypeError):
        rec2[0:3]
