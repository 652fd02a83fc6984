import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import ndimage as ndi

from rsrvos import flow
from rsrvos.flow import BlockMatchConfig, WindowSearchConfig
from oracles import block_sad_match


def texture(seed, shape=(40, 40)):
    return np.random.default_rng(seed).random(shape)


def shifted(a, dx, dy):
    # b(p + d) = a(p): content moves by (dx, dy)
    return np.roll(np.roll(a, dy, axis=0), dx, axis=1)


def test_identical_and_uniform_frames_give_zero_field():
    a = texture(0)
    assert np.all(flow.estimate_displacement(a, a) == 0)
    u = np.full((20, 20), 0.4)
    assert np.all(flow.estimate_displacement(u, u + 0.0) == 0)


def test_translation_recovered_in_interior():
    a = texture(1)
    b = shifted(a, 2, 0)
    f = flow.estimate_displacement(a, b, BlockMatchConfig(search=3))
    inner = f[8:-8, 8:-8]
    assert np.all(inner[..., 0] == 2) and np.all(inner[..., 1] == 0)


@given(st.integers(0, 10_000), st.integers(-3, 3), st.integers(-3, 3))
def test_integer_translation_property(seed, dx, dy):
    a = texture(seed, (36, 36))
    f = flow.estimate_displacement(a, shifted(a, dx, dy), BlockMatchConfig(search=4, step=1))
    inner = f[8:-8, 8:-8]
    ok = (inner[..., 0] == dx) & (inner[..., 1] == dy)
    assert ok.mean() >= 0.95


@given(st.integers(0, 10_000))
def test_block_match_matches_exhaustive_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((14, 15))
    b = ndi.shift(a, (rng.uniform(-2, 2), rng.uniform(-2, 2)), order=1, mode="nearest") + rng.normal(0, 0.05, a.shape)
    cfg = BlockMatchConfig(block=2, search=3, step=1)
    f = flow.estimate_displacement(a, b, cfg)
    for y in range(0, 14, 3):
        for x in range(0, 15, 3):
            assert tuple(f[y, x].astype(int)) == block_sad_match(a, b, 2, 3, y, x)


def test_candidate_order_tiebreak():
    c = flow.candidate_order(1)
    assert c[0].tolist() == [0, 0]
    assert [tuple(v) for v in c[1:5]] == [(-1, 0), (0, -1), (0, 1), (1, 0)]


def test_verify_keeps_true_motion_and_drops_halo():
    a = np.full((30, 30), 0.3)
    a[10:16, 10:16] = 0.6 + 0.4 * texture(5, (6, 6))  # textured target on a flat background
    b = shifted(a, 2, 0)
    raw = flow.estimate_displacement(a, b, BlockMatchConfig(verify=0))
    ver = flow.estimate_displacement(a, b, BlockMatchConfig(verify=3))
    moving_raw = np.hypot(*np.moveaxis(raw, -1, 0)) > 0
    moving_ver = np.hypot(*np.moveaxis(ver, -1, 0)) > 0
    assert moving_ver.sum() < moving_raw.sum()
    assert moving_ver[11:15, 12:16].all()
    with pytest.raises(ValueError):
        BlockMatchConfig(verify=2)


def test_motion_intensity_examples():
    const = np.zeros((3, 3, 2))
    const[..., 0], const[..., 1] = 3, 4
    assert np.allclose(flow.motion_intensity([const, const]), 5.0)
    f1 = np.zeros((1, 1, 2))
    f1[0, 0] = (1, 0)
    f2 = np.zeros((1, 1, 2))
    f2[0, 0] = (0, 1)
    assert flow.motion_intensity([f1, f2])[0, 0] == pytest.approx(1.0)
    assert np.all(flow.motion_intensity([np.zeros((2, 2, 2))]) == 0)
    with pytest.raises(ValueError):
        flow.motion_intensity([])
    with pytest.raises(ValueError):
        flow.motion_intensity([np.zeros((2, 2, 2)), np.zeros((3, 2, 2))])


field_lists = st.integers(1, 5).flatmap(lambda n: st.lists(
    st.builds(lambda s: np.random.default_rng(s).normal(size=(4, 5, 2)), st.integers(0, 10**6)),
    min_size=n, max_size=n))


@given(field_lists, st.randoms())
def test_motion_intensity_properties(fields, rnd):
    d = flow.motion_intensity(fields)
    perm = list(fields)
    rnd.shuffle(perm)
    assert np.allclose(d, flow.motion_intensity(perm))
    assert (d >= 0).all()
    zeroed = [f.copy() for f in fields]
    for f in zeroed:
        f[0, 0] = 0
    assert flow.motion_intensity(zeroed)[0, 0] == 0


def test_accumulated_displacement_examples():
    f = np.zeros((4, 4, 2))
    f[..., 0] = 0.3
    r = np.ones((4, 4), bool)
    assert flow.accumulated_displacement([f] * 4, r, True) == pytest.approx(1.2)
    assert flow.accumulated_displacement([f] * 4, r, False) == pytest.approx(0.3)
    z = np.zeros((4, 4, 2))
    assert flow.accumulated_displacement([z] * 3, r, True) == 0
    assert flow.accumulated_displacement([z] * 3, r, False) == 0
    with pytest.raises(ValueError):
        flow.accumulated_displacement([f], np.zeros((4, 4), bool))


def uniform_provider(v, shape=(12, 12), region=None):
    def provide(t):
        f = np.zeros(shape + (2,))
        m = region if region is not None else np.ones(shape, bool)
        f[m] = v
        return f
    return provide


def simulate_n_star(speed, tau, n0, dn, n_max):
    # accumulation oracle: displacement after n steps is n * speed
    for n in range(n0, n_max + 1, dn):
        if n * speed > tau:
            return n
    return None


def test_window_search_examples():
    r0 = np.zeros((12, 12), bool)
    r0[4:8, 4:8] = True
    cfg = WindowSearchConfig(n0=1, delta_n=1, tau_motion=1.0)
    assert flow.adaptive_window_search(uniform_provider((0.3, 0.0)), r0, cfg) == 4 == simulate_n_star(0.3, 1.0, 1, 1, 12)
    assert flow.adaptive_window_search(uniform_provider((2.0, 0.0)), r0, WindowSearchConfig()) == 2
    assert flow.adaptive_window_search(uniform_provider((0.0, 0.0)), r0, WindowSearchConfig(n_max=10)) is None


def test_window_search_needs_one_component_only():
    r0 = np.zeros((12, 12), bool)
    r0[1:3, 1:3] = True
    r0[7:11, 7:11] = True
    moving = np.zeros((12, 12), bool)
    moving[1:3, 1:3] = True
    n = flow.adaptive_window_search(uniform_provider((0.6, 0.0), region=moving), r0, WindowSearchConfig(n0=1, delta_n=1))
    assert n == 2


@given(st.floats(0.05, 3.0), st.floats(0.2, 4.0), st.floats(0.2, 4.0))
def test_window_search_monotone_in_tau(speed, t1, t2):
    r0 = np.zeros((12, 12), bool)
    r0[3:9, 3:9] = True
    lo, hi = sorted((t1, t2))
    a = flow.adaptive_window_search(uniform_provider((speed, 0.0)), r0, WindowSearchConfig(1, 1, 12, lo))
    b = flow.adaptive_window_search(uniform_provider((speed, 0.0)), r0, WindowSearchConfig(1, 1, 12, hi))
    big = 10**9
    assert (a or big) <= (b or big)
    assert a == simulate_n_star(speed, lo, 1, 1, 12) or abs(a * speed - lo) < 1e-9


def test_short_sequence_returns_none():
    frames = [texture(3, (16, 16))] * 2
    r0 = np.ones((16, 16), bool)
    assert flow.adaptive_window_search(flow.frame_pair_provider(frames), r0) is None


def test_cached_provider_computes_each_step_once():
    calls = []

    def p(t):
        calls.append(t)
        return np.zeros((2, 2, 2))

    c = flow.CachedProvider(p)
    c.window(3)
    c.window(2)
    c(4)
    assert calls == [0, 1, 2, 3, 4] and c.computed == 5


def test_rst1_provider(tmp_path):
    from rsrvos.io import write_rst1

    f = np.zeros((3, 3, 2), np.float32)
    f[..., 1] = 1.5
    write_rst1(tmp_path / "f0.rst1", f)
    prov = flow.rst1_provider([tmp_path / "f0.rst1"])
    assert np.allclose(prov(0)[..., 1], 1.5)
    with pytest.raises(IndexError):
        prov(1)


def test_config_validation():
    with pytest.raises(ValueError):
        WindowSearchConfig(n0=0)
    with pytest.raises(ValueError):
        WindowSearchConfig(n0=5, n_max=4)
    with pytest.raises(ValueError):
        WindowSearchConfig(tau_motion=0)
    with pytest.raises(ValueError):
        BlockMatchConfig(block=0)
    with pytest.raises(ValueError):
        flow.estimate_displacement(np.zeros((4, 4)), np.zeros((4, 5)))
