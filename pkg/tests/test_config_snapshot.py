import math
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kahler_flow import config, snapshot
from kahler_flow.config import ConfigError, RunConfig

finite = dict(allow_nan=False, allow_infinity=False)


@st.composite
def configs(draw):
    s_max = draw(st.floats(0.2, 0.99, **finite))
    lo = draw(st.floats(0.0, 5.0, **finite))
    return RunConfig(
        n=draw(st.integers(1, 3)),
        family=draw(st.sampled_from(["model_ball", "perturbed_model", "flat"])),
        c=draw(st.floats(1e-3, 1e3, **finite)),
        eps=draw(st.floats(-1.0, 1.0, **finite)),
        s_c=draw(st.floats(0.0, 1.0, **finite)),
        w=draw(st.floats(1e-3, 1.0, **finite)),
        bump_power=draw(st.integers(5, 12)),
        N=draw(st.integers(16, 4096)),
        s_max=s_max,
        s_buf=s_max * draw(st.floats(0.01, 0.99, **finite)),
        sigma=draw(st.floats(1e-3, 1.0, **finite)),
        T_end=draw(st.floats(0.0, 100.0, **finite)),
        cadence=draw(st.floats(1e-3, 5.0, **finite)),
        snapshot_every=draw(st.integers(1, 100)),
        early_stop=draw(st.floats(0.0, 1.0, **finite)),
        seed=draw(st.integers(0, 2**64 - 1)),
        out=draw(st.from_regex(r"[A-Za-z0-9_./-]{1,20}", fullmatch=True)),
        force=draw(st.booleans()),
        schwarz_slack=draw(st.floats(0.0, 1.0, **finite)),
        fit_window=(lo, lo + draw(st.floats(0.5, 10.0, **finite))),
        hsc_budget=draw(st.integers(1, 512)),
    )


@given(configs())
def test_config_round_trip(cfg):
    assert config.parse(config.serialize(cfg)) == cfg


def test_defaults_round_trip_and_sections():
    text = config.serialize(RunConfig())
    assert config.parse(text) == RunConfig()
    assert [ln for ln in text.splitlines() if ln.startswith("[")] == ["[geometry]", "[grid]", "[run]", "[verdict]"]


def test_partial_file_uses_defaults():
    cfg = config.parse("[geometry]\nn = 2\n[run]\nT_end = 3.5  # short\n")
    assert cfg == RunConfig(n=2, T_end=3.5)


@pytest.mark.parametrize(
    "text,match",
    [
        ("[geometry]\nn = 4\n", "n must be"),
        ("[geometry]\nfamily = torus\n", "family"),
        ("[grid]\nN = 8\n", "N must be"),
        ("[grid]\nN = many\n", "bad value"),
        ("[grid]\ns_buf = 0.95\n", "s_buf"),
        ("[grid]\nsigma = 0\n", "sigma"),
        ("[run]\nT_end = inf\n", "T_end"),
        ("[run]\nseed = -1\n", "seed"),
        ("[run]\nforce = maybe\n", "bad value"),
        ("[verdict]\nfit_window = 8, 2\n", "fit_window"),
        ("[verdict]\nfit_window = 1, 2, 3\n", "two numbers"),
        ("[geometry]\ncolour = red\n", "unknown key"),
        ("[misc]\nx = 1\n", "unknown section"),
        ("n = 1\n", "malformed"),
    ],
)
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        config.parse(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        config.load(tmp_path / "absent.cfg")


def test_replace_validates():
    with pytest.raises(ConfigError):
        RunConfig().replace(N=4)
    with pytest.raises(ConfigError):
        RunConfig().replace(colour=1)


def test_presets():
    fp = config.fixed_point(3)
    assert (fp.family, fp.c, fp.N, fp.T_end) == ("model_ball", 4.0, 256, 5.0)
    bm = config.benchmark(2, N=128)
    assert (bm.family, bm.c, bm.eps, bm.N) == ("perturbed_model", 3.0, 0.05, 128)


# snapshots -------------------------------------------------------------------------

awkward = [0.0, -0.0, 5e-324, -2.2250738585072014e-308, 1.7976931348623157e308, math.pi, 1 / 3]


@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=40), st.floats(0, 1e3, **finite))
def test_snapshot_round_trip_is_bit_exact(values, t):
    phi = np.array(values + awkward)
    snap = snapshot.Snapshot(config.serialize(RunConfig()), t, 7, 1234, 1e-5, phi, [(t - 0.25, phi[::-1].copy())])
    back = snapshot.loads(snapshot.dumps(snap))
    assert back.phi.tobytes() == phi.tobytes()
    assert back.history[0][1].tobytes() == phi[::-1].tobytes()
    assert (back.t, back.index, back.steps, back.last_dt) == (t, 7, 1234, 1e-5)
    assert config.parse(back.config_text) == RunConfig()


@pytest.mark.parametrize(
    "mangle",
    [
        lambda s: s.replace("kahler-flow-state 1", "other 9"),
        lambda s: "\n".join(s.split("\n")[:-6]),
        lambda s: s.replace("0x0.0p+0", "0xzz", 1),
    ],
)
def test_snapshot_rejects_damage(mangle):
    text = snapshot.dumps(snapshot.Snapshot("[run]\n", 1.0, 1, 1, 0.1, np.zeros(8), []))
    with pytest.raises(snapshot.SnapshotError):
        snapshot.loads(mangle(text))


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "f.txt"
    snapshot.atomic_write(target, "one\n")
    snapshot.atomic_write(target, "two\n")
    assert target.read_text() == "two\n"
    assert os.listdir(tmp_path) == ["f.txt"]


def test_atomic_write_cleans_up_on_failure(tmp_path):
    with pytest.raises(TypeError):
        snapshot.atomic_write(tmp_path / "g.txt", 42)
    assert os.listdir(tmp_path) == []


def test_latest_picks_largest_time(tmp_path):
    assert snapshot.latest(tmp_path) is None
    for t in (2.0, 10.0, 9.75):
        snapshot.write(tmp_path, snapshot.Snapshot("[run]\n", t, 0, 0, 0.0, np.zeros(4), []))
    (tmp_path / "snapshot_99.state.tmp").write_text("junk")
    assert snapshot.latest(tmp_path).name == "snapshot_10.000000.state"
    assert snapshot.read(snapshot.latest(tmp_path)).t == 10.0
