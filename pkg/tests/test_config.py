import pytest

from rsrvos.config import AppConfig, ConfigError, dump_config, from_dict, load_config, worker_count


def test_defaults_without_file():
    cfg = load_config(None)
    assert cfg == AppConfig()
    assert cfg.block.verify == 3
    assert cfg.pipeline_config().block == cfg.block


def test_section_overrides(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[flow]\nn_max = 8\n[memory]\nomega = [0.5, 0.3, 0.2]\n[pipeline]\nresize = "native"\n')
    cfg = load_config(p)
    assert cfg.window.n_max == 8 and cfg.calibration_config().window.n_max == 8
    assert cfg.memory.omega == (0.5, 0.3, 0.2)
    assert cfg.pipeline.resize is None


@pytest.mark.parametrize("data", [{"bogus": {}}, {"flow": {"nope": 1}}, {"flow": 3}, {"memory": {"eta": -1.0}}])
def test_rejections(data):
    with pytest.raises(ConfigError):
        from_dict(data)


def test_bad_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[flow\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_dump_round_trip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(dump_config(AppConfig()))
    assert load_config(p) == AppConfig()
    p.write_text("[vds]\nlambda_b = 2.0\nband = 4\n")
    cfg = load_config(p)
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


def test_worker_count(monkeypatch):
    monkeypatch.setenv("RSRVOS_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.delenv("RSRVOS_THREADS")
    assert worker_count() >= 1
    for bad in ("0", "-2", "many"):
        monkeypatch.setenv("RSRVOS_THREADS", bad)
        with pytest.raises(ConfigError):
            worker_count()


def test_window_override_resizes_default_bias():
    cfg = from_dict({"memory": {"window": 3, "n_max": 6}})
    assert cfg.memory.rel_bias == (0.0, 0.0)
