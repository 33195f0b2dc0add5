import json
import math
import os
import pathlib

import numpy as np
import pytest

import tipping

FIXTURES = pathlib.Path(os.environ.get("TIPPING_FIXTURE_DIR", pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures"))


def test_tip_forecast_cases():
    delayed = tipping.tip_forecast([-0.5, 0.0], [1.0, 0.0], [2.0, 0.0])
    assert delayed["case"] == "Delayed"
    assert delayed["n_star"] == pytest.approx(0.5 * math.exp(-1.5), rel=1e-12)
    assert delayed["n_star_ceil"] == 1
    never = tipping.tip_forecast([1.0, 0.0], [1.0, 0.0], [0.0, 1.0])
    assert never["case"] == "Never"
    assert never["n_star_ceil"] is None
    with pytest.raises(tipping.TippingError):
        tipping.tip_forecast([1.0], [1.0, 0.0], [0.0, 1.0])


def test_hsf_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    original = tipping.StateSet(
        dim=4,
        layer_count=3,
        groups=[
            tipping.Group("B", "safe phrase", rng.standard_normal((3, 2, 4)).astype(np.float32)),
            tipping.Group("D", "unsafe phrase", rng.standard_normal((3, 5, 4)).astype(np.float32)),
        ],
        meta={"source": "smoke"},
    )
    path = tmp_path / "set.hsf"
    written = tipping.save_hsf(original, path)
    assert written == path.stat().st_size
    loaded = tipping.load_hsf(path)
    assert (loaded.dim, loaded.layer_count, loaded.meta) == (4, 3, {"source": "smoke"})
    for a, b in zip(original.groups, loaded.groups):
        assert (a.label, a.phrase, a.token_count) == (b.label, b.phrase, b.token_count)
        np.testing.assert_array_equal(a.data, b.data)


def test_shape_errors_are_reported(tmp_path):
    bad = tipping.StateSet(dim=4, layer_count=3, groups=[tipping.Group("B", "x", np.zeros((2, 1, 4), np.float32))])
    with pytest.raises(tipping.TippingError):
        tipping.save_hsf(bad, tmp_path / "bad.hsf")


def test_replay_matches_the_expected_onset():
    expected = json.loads((FIXTURES / "replay_expected.json").read_text())
    rows = tipping.replay(str(FIXTURES / "replay_conversation.hsf"), expected["warn_threshold_n"])
    onset = next(r["turn_index"] for r in rows if r["warning"])
    assert onset == expected["warning_onset"]
    assert [r["role"] for r in rows] == [r["role"] for r in expected["trace"]]


def test_regimes_and_map():
    assert tipping.classify_letters("AB" * 50) == "C2"
    xs = tipping.iterate_map(1.5, rho=1.0, x0=0.2, steps=200)
    assert len(xs) == 201
    assert abs(xs[-1] - 1.0) < 1e-9


def test_toy_and_cli():
    assert tipping.toy_tip_steps("bare", 0, 2) == [4, 4, 4]
    code, out, _ = tipping.run_cli(["forecast", "tip", "--c", "-0.5,0", "--b", "1,0", "--d", "2,0"])
    assert code == 0
    assert json.loads(out)["n_star_ceil"] == 1
    assert tipping.run_cli(["no-such-command"])[0] == 2
