import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from v2xsched import _kernels
from v2xsched.cam import (
    CamThresholds,
    CamTracker,
    check_trigger,
    CamState,
    first_trigger_step,
    generate_cam_stream,
    generate_periodic_stream,
    heading_diff,
    hybrid_assignment,
    stream_ipts,
)
from v2xsched.mobility import ConfigurationError, Kinematics, gen_curved_highway, make_trace, sample


def _straight(v, n=200):
    x = np.arange(n) * v * 0.1
    return make_trace(0, 0, x, np.zeros(n), np.full(n, v), np.full(n, 90.0))


@pytest.mark.parametrize("v,ipt", [(5.0, 800), (10.0, 400), (20.0, 200), (40.0, 100), (2.0, 1000), (1.0, 1000)])
def test_constant_speed_ipt_is_analytic(v, ipt):
    # position trigger fires after ceil(4 / (v * 0.1)) steps, capped at 1 s
    ev = generate_cam_stream(_straight(v))
    ipts = set(stream_ipts(ev))
    assert ipts == {ipt}
    assert ev[0].t == 0 and ev[0].trigger_cause == "time"


def test_strict_thresholds_need_one_more_step():
    ev = generate_cam_stream(_straight(20.0), CamThresholds(strict=True))
    assert set(stream_ipts(ev)) == {300}


def test_heading_trigger_on_arc():
    # 11 m/s on r = 22 m turns 2.865 deg per step: heading fires at step 2 before position (4 m at 4 steps)
    tr = gen_curved_highway(22.0, 360.0, 1, 1, 11.0, 10_000)[0]
    ev = generate_cam_stream(tr)
    assert {e.trigger_cause for e in ev[1:]} == {"heading"}
    assert set(stream_ipts(ev)) == {200}


def test_speed_trigger():
    n = 100
    speed = np.arange(n) * 0.5  # 4 m/s reached after 8 steps
    tr = make_trace(0, 0, np.zeros(n), np.zeros(n), speed, np.zeros(n))
    causes = [e.trigger_cause for e in generate_cam_stream(tr)]
    assert "speed" in causes


def test_trigger_order_prefers_time():
    ref = Kinematics(0, 0.0, 0.0, 10.0, 0.0)
    cur = Kinematics(1000, 100.0, 0.0, 30.0, 90.0)
    assert check_trigger(CamState(ref, 0), cur, 1000) == "time"
    assert check_trigger(CamState(ref, 0), cur, 900) == "position"


def _brute_force(tr, th):
    """Reference fold straight from the rules, one grid sample at a time."""
    out = []
    ref = None
    for i in range(len(tr)):
        cur = sample(tr, tr.t0 + 100 * i)
        if ref is None:
            out.append((cur.t, "time"))
            ref = CamState(cur, cur.t)
            continue
        c = check_trigger(ref, cur, cur.t, th)
        if c:
            out.append((cur.t, c))
            ref = CamState(cur, cur.t)
    return out


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_kernel_matches_brute_force(seed, strict):
    rng = np.random.default_rng(seed)
    n = 300
    speed = np.clip(10 + np.cumsum(rng.normal(0, 0.6, n)), 0, 40)
    heading = (np.cumsum(rng.normal(0, 1.5, n))) % 360.0
    rad = np.radians(heading)
    x = np.cumsum(speed * 0.1 * np.sin(rad))
    y = np.cumsum(speed * 0.1 * np.cos(rad))
    tr = make_trace(3, -500, x, y, speed, heading)
    th = CamThresholds(strict=strict)
    got = [(e.t, e.trigger_cause) for e in generate_cam_stream(tr, th)]
    assert got == _brute_force(tr, th)


def test_tracker_matches_stream():
    tr = gen_curved_highway(22.0, 90.0, 1, 1, 11.0, 20_000, straight_length=60.0, speed_jitter=0.5, seed=5)[0]
    tk = CamTracker()
    got = []
    for i in range(len(tr)):
        cur = sample(tr, tr.t0 + 100 * i)
        c = tk.update(cur)
        if c:
            got.append(cur.t)
    assert got == [e.t for e in generate_cam_stream(tr)]


def test_first_trigger_step():
    ref = Kinematics(0, 0.0, 0.0, 10.0, 90.0)
    fut = [Kinematics(100 * k, k * 1.0, 0.0, 10.0, 90.0) for k in range(1, 20)]
    assert first_trigger_step(ref, fut) == (4, "position")
    assert first_trigger_step(ref, []) == (10, "time")


def test_heading_diff_wraps():
    assert heading_diff(359.0, 1.0) == pytest.approx(2.0)
    assert heading_diff(90.0, 270.0) == pytest.approx(180.0)


def test_periodic_stream_with_phase():
    tr = _straight(10.0, 50)
    ev = generate_periodic_stream(tr, 300, phase=200)
    assert [e.t for e in ev] == list(range(200, 4901, 300))
    assert stream_ipts(ev) == [300] * (len(ev) - 1)
    with pytest.raises(ConfigurationError):
        generate_periodic_stream(tr, 300, phase=300)
    with pytest.raises(ConfigurationError):
        generate_periodic_stream(tr, 250, allowed=range(100, 1001, 100))


@pytest.mark.parametrize("frac,expect", [(0.5, [False, True] * 3), (0.0, [False] * 6), (1.0, [True] * 6)])
def test_hybrid_assignment(frac, expect):
    got = hybrid_assignment([5, 1, 3, 2, 6, 4], frac)
    assert [got[k] for k in range(1, 7)] == expect


@given(st.integers(1, 60), st.floats(0.0, 1.0))
def test_hybrid_assignment_counts(n, frac):
    got = hybrid_assignment(range(n), frac)
    assert sum(got.values()) == math.floor(n * frac + 1e-12)


def test_backends_agree_on_cam_scan():
    bk = _kernels.backends()
    if "cython" not in bk:
        pytest.skip("compiled backend not built")
    tr = gen_curved_highway(22.0, 90.0, 2, 5, [11.0, 13.0], 30_000, straight_length=80.0, speed_jitter=0.7, seed=9)
    for t in tr:
        args = (np.ascontiguousarray(t.x), np.ascontiguousarray(t.y), np.ascontiguousarray(t.speed),
                np.ascontiguousarray(t.heading), 4.0, 4.0, 4.0, 10, False, 1e-9)
        a = bk["python"].cam_scan(*args)
        b = bk["cython"].cam_scan(*args)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
