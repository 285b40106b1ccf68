import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from v2xsched.mobility import (
    GRID_MS,
    ConfigurationError,
    TraceParseError,
    TraceQueryError,
    TraceSet,
    export_trace,
    gen_curved_highway,
    gen_straight_highway,
    import_trace,
    make_trace,
    normalize_heading,
    sample,
)


def test_straight_highway_kinematics():
    trs = gen_straight_highway(2, 3, 25.0, [20.0, 25.0], 5000, seed=0, directions=[1, -1])
    assert len(trs) == 6
    for tr in trs:
        lane = tr.vehicle // 3
        v = [20.0, 25.0][lane]
        assert np.all(tr.speed == v)
        assert np.all(tr.heading == (90.0 if lane == 0 else 270.0))
        assert np.all(tr.y == lane * 3.5)
        step = np.diff(tr.x)
        assert np.allclose(step, (1 if lane == 0 else -1) * v * GRID_MS / 1000.0)
        assert tr.covers(0, 5000)


def test_history_preroll_starts_before_zero():
    trs = gen_straight_highway(1, 2, 30.0, 20.0, 1000, history_ms=60_000, phase_jitter=True, seed=3)
    for tr in trs:
        assert -60_100 < tr.t0 <= -60_000
        assert tr.covers(-60_000, 1000)


def test_curved_heading_rate_matches_radius():
    r, v = 22.0, 11.0
    trs = gen_curved_highway(r, 90.0, 2, 4, [v, v], 30_000, seed=0, straight_length=120.0)
    expect = math.degrees(v * 0.1 / r)
    for tr in trs:
        d = np.abs((np.diff(tr.heading) + 180.0) % 360.0 - 180.0)
        on_arc = d[(d > 0.5 * expect)]
        assert on_arc.size > 0
        # samples fully inside an arc turn by exactly v*dt/r; segment joins turn by less
        assert np.max(on_arc) == pytest.approx(expect, rel=1e-9)
        assert np.all(d <= expect + 1e-9)
        # straight segments have zero turn rate
        assert np.sum(d < 1e-9) > 0


def test_curved_lanes_keep_radius_and_speed():
    trs = gen_curved_highway(50.0, 90.0, 3, 3, [10.0, 10.0, 10.0], 20_000, straight_length=0.0)
    for tr in trs:
        step = np.hypot(np.diff(tr.x), np.diff(tr.y))
        # arc length is exact; the chord differs from it only at turn reversals
        assert np.allclose(step, 1.0, rtol=1e-4)


def test_ring_road_closes():
    r = 30.0
    tr = gen_curved_highway(r, 360.0, 1, 1, 10.0, 60_000)[0]
    period_ms = 2 * math.pi * r / 10.0 * 1000.0
    k = int(round(period_ms / GRID_MS))
    # one lap later the vehicle is back within one step of the start
    assert math.hypot(tr.x[k] - tr.x[0], tr.y[k] - tr.y[0]) < 1.0 + 1e-9


def test_straight_radius_infinite():
    tr = gen_curved_highway(math.inf, 90.0, 1, 1, 15.0, 2000)[0]
    assert np.all(tr.y == 0.0)
    assert np.all(tr.heading == 90.0)


@pytest.mark.parametrize("kw", [dict(radius=0.0), dict(radius=-1.0), dict(lanes=0), dict(speeds=-1.0)])
def test_curved_rejects_bad_geometry(kw):
    args = dict(radius=20.0, arc_angle=90.0, lanes=1, vehicles=1, speeds=10.0, duration=1000)
    args.update(kw)
    with pytest.raises(ConfigurationError):
        gen_curved_highway(**args)


def test_export_import_roundtrip_exact(tmp_path):
    trs = gen_curved_highway(22.0, 90.0, 2, 4, [11.0, 12.0], 5000, seed=2, straight_length=40.0,
                             speed_jitter=0.5, phase_jitter=True, start_jitter=True)
    p = tmp_path / "t.csv"
    export_trace(trs, p)
    back = import_trace(p)
    assert len(back) == len(trs)
    for a, b in zip(sorted(trs, key=lambda t: t.vehicle), sorted(back, key=lambda t: t.vehicle)):
        assert a.t0 == b.t0
        for col in ("x", "y", "speed", "heading"):
            assert np.array_equal(getattr(a, col), getattr(b, col))


def test_import_resamples_off_grid(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text(
        "vehicle_id,t_ms,x_m,y_m,speed_mps,heading_deg\n"
        "1,0,0,0,10,350\n"
        "1,250,2.5,0,10,10\n"
    )
    tr = import_trace(p)[0]
    assert len(tr) == 3
    assert tr.x[1] == pytest.approx(1.0)
    # heading interpolates over the short arc through north
    assert tr.heading[1] == pytest.approx(358.0)


@pytest.mark.parametrize(
    "body,msg",
    [
        ("vehicle_id,t_ms,x_m\n1,0,0\n", "missing columns"),
        ("vehicle_id,t_ms,x_m,y_m,speed_mps,heading_deg\n1,100,0,0,1,0\n1,0,0,0,1,0\n", "not sorted"),
        ("vehicle_id,t_ms,x_m,y_m,speed_mps,heading_deg\n1,0,0,0,1,0\n1,5000,0,0,1,0\n", "gap"),
        ("vehicle_id,t_ms,x_m,y_m,speed_mps,heading_deg\n1,0,abc,0,1,0\n", "row 2"),
    ],
)
def test_import_errors_name_row(tmp_path, body, msg):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(TraceParseError, match=msg):
        import_trace(p)


def test_import_empty_warns(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("vehicle_id,t_ms,x_m,y_m,speed_mps,heading_deg\n")
    with pytest.warns(UserWarning):
        assert import_trace(p) == []


def test_sample_interpolates_and_bounds():
    tr = make_trace(0, 0, [0.0, 1.0, 2.0], [0.0, 0.0, 0.0], [1.0, 3.0, 5.0], [10.0, 20.0, 30.0])
    k = sample(tr, 150)
    assert k.x == pytest.approx(1.5)
    assert k.speed == pytest.approx(4.0)
    assert k.heading == pytest.approx(25.0)
    assert sample(tr, 200).x == 2.0
    with pytest.raises(TraceQueryError):
        sample(tr, 201)
    with pytest.raises(TraceQueryError):
        sample(tr, -1)


def test_negative_speed_rejected():
    with pytest.raises(ConfigurationError):
        make_trace(0, 0, [0.0], [0.0], [-1.0], [0.0])


def test_trace_columns_read_only():
    tr = make_trace(0, 0, [0.0, 1.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        tr.x[0] = 5.0


def test_traceset_positions_match_sample():
    trs = gen_straight_highway(2, 2, 30.0, [10.0, 12.0], 3000, phase_jitter=True, seed=4)
    ts = TraceSet(trs)
    for t in (0, 37, 1234, 2999):
        pos = ts.positions(t)
        for k, tr in enumerate(trs):
            s = sample(tr, t)
            assert pos[k] == pytest.approx([s.x, s.y])


def test_traceset_duplicate_ids():
    tr = make_trace(1, 0, [0.0], [0.0], [0.0], [0.0])
    with pytest.raises(ConfigurationError):
        TraceSet([tr, tr])


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_normalize_heading_range(h):
    out = normalize_heading(h)
    assert 0.0 <= out < 360.0


@settings(max_examples=30, deadline=None)
@given(st.floats(5.0, 500.0), st.floats(1.0, 40.0))
def test_curved_positions_continuous(radius, speed):
    tr = gen_curved_highway(radius, 90.0, 1, 1, speed, 20_000, straight_length=50.0)[0]
    step = np.hypot(np.diff(tr.x), np.diff(tr.y))
    assert np.all(step <= speed * 0.1 + 1e-9)
    assert np.all(step >= 0.0)
