import json
from pathlib import Path

import numpy as np
import pytest

from lmpnn.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from lmpnn.optim import AdamState, adam_step

import oracles

FROZEN = json.loads((Path(__file__).parent / "data" / "frozen_oracles.json").read_text())


def test_first_step_delta():
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, AdamState(), 1e-3)
    # m_hat = v_hat = 1, so the step is -lr / (1 + eps)
    assert p["w"][0] == -1e-3 / (1 + 1e-8)
    assert p["w"][0] == pytest.approx(-9.99999995e-4, abs=1e-11)


def test_zero_gradient_is_fixed_point():
    p = {"w": np.array([0.5, -2.0])}
    st = AdamState()
    adam_step(p, {"w": np.array([1.0, 1.0])}, st, 1e-3)
    before = p["w"].copy()
    m_before = st.first_moment["w"].copy()
    for _ in range(3):
        adam_step(p, {"w": np.zeros(2)}, st, 1e-3)
    assert np.all(np.abs(st.first_moment["w"]) < np.abs(m_before))
    # moments decay but the bias-corrected step stays nonzero; with no
    # history at all zero gradients leave parameters unchanged
    fresh = {"w": before.copy()}
    adam_step(fresh, {"w": np.zeros(2)}, AdamState(), 1e-3)
    assert np.array_equal(fresh["w"], before)


def test_matches_scalar_trace():
    ref = FROZEN["adam"]
    p = {"w": np.array(ref["p0"])}
    st = AdamState()
    got = []
    for g in ref["grads"]:
        adam_step(p, {"w": np.array(g)}, st, ref["lr"])
        got.append(float(p["w"]))
    assert np.allclose(got, ref["trace"], rtol=0, atol=1e-12)
    assert oracles.adam_scalar_trace(ref["p0"], ref["grads"], ref["lr"]) == ref["trace"]
    assert st.step == len(ref["grads"])


def test_two_identical_steps():
    p = {"w": np.array(1.0)}
    st = AdamState()
    for _ in range(2):
        adam_step(p, {"w": np.array(0.3)}, st, 1e-2)
    assert float(p["w"]) == pytest.approx(oracles.adam_scalar_trace(1.0, [0.3, 0.3], 1e-2)[-1], abs=1e-12)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState(), 1e-3)


def test_checkpoint_round_trip(tmp_path):
    params = {"a": np.arange(6.0).reshape(2, 3), "gamma": np.array(1.25), "b": np.array([-1e-300, np.pi])}
    st = AdamState()
    adam_step(params, {"a": np.ones((2, 3)), "gamma": np.array(0.5), "b": np.ones(2)}, st, 1e-3)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, {"note": "x", "gammas": {"single": ["gamma"]}}, st)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    loaded, meta, adam = load_checkpoint(path)
    assert set(loaded) == set(params)
    for k in params:
        assert loaded[k].shape == params[k].shape
        assert np.array_equal(loaded[k], params[k])
    assert meta["note"] == "x"
    assert adam.step == 1
    assert np.array_equal(adam.second_moment["a"], st.second_moment["a"])
    assert not list(tmp_path.glob("*.tmp"))


def test_checkpoint_rejects_other_files(tmp_path):
    bad = tmp_path / "x.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(bad)
