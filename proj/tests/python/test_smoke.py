# SPDX-License-Identifier: Apache-2.0
import math

import pytest

import gammaguard as gg


def test_canonical_round_trip_and_counts():
    r50 = gg.canonical("resnet50")
    assert len(r50["stages"]) == 4
    assert gg.role_counts(r50) == {"gamma0": 1, "gamma_last": 16, "gamma_down": 4, "gamma_others": 32}
    assert gg.role_counts(gg.canonical("resnet18")) == {
        "gamma0": 1, "gamma_last": 8, "gamma_down": 3, "gamma_others": 8}


def test_plan_policies():
    r18 = gg.canonical("resnet18")
    decayed = {p: sum(e["decay"] for e in gg.plan(r18, policy=p)) for p in ("guidelines", "all", "weights-only")}
    assert decayed == {"guidelines": 16, "all": 20, "weights-only": 0}
    roles = gg.roles(r18)
    assert roles["stem.norm.gamma"] == "gamma0"
    assert roles["stage1.block0.down.norm.gamma"] == "gamma_down"


def test_formulas():
    assert gg.propagate_v1(4.0, [1, 1]) == pytest.approx([2.5, 1.75])
    assert gg.propagate_preact(1.0, [0.5, 2.0]) == pytest.approx([1.25, 5.25])
    assert gg.reset_downsample_v1(2, 1) == 2.5
    assert gg.reset_downsample_preact(2, 1) == 5.0
    assert gg.early_stage_variance(3) == 4.5
    g = [0.3, 1.7, 2.2, 0.0, 1.0]
    for a, b in zip(gg.propagate_v1(7.0, g), gg.propagate_v1_closed_form(7.0, g)):
        assert math.isclose(a, b, rel_tol=1e-12)


def test_profile_and_simulation():
    p18 = gg.canonical("preact18")
    prof = gg.profile(p18)
    assert [r["out_var"] for r in prof["rows"]] == pytest.approx([2, 3, 2, 3, 2, 3, 2, 3])
    sim = gg.simulate(p18, batch=1024, trials=2, width=64, seed=1)
    assert sim["comparison"]["max"] < 0.15
    assert sim == gg.simulate(p18, batch=1024, trials=2, width=64, seed=1)


def test_update_norm_slope():
    res = gg.update_norm(width=32, batch=256)
    assert -2.2 <= res["fit"]["slope"] <= -1.8
    assert res["fit"]["r2"] >= 0.99


def test_errors():
    with pytest.raises(ValueError):
        gg.canonical("resnet19")
    with pytest.raises(ValueError):
        gg.profile('{"name": ')
    with pytest.raises(ValueError):
        gg.simulate(gg.canonical("resnet18"), batch=8)


def test_run_checks_subset():
    results = gg.run_checks([4, 9])
    assert [r["id"] for r in results] == [4, 9]
    assert all(r["passed"] for r in results)
