import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from v2xsched import _kernels
from v2xsched.config import MacConfig
from v2xsched.mac import (
    Grant,
    Packet,
    SensingWindow,
    create_grant,
    draw_c_resel,
    dynamic_grant_tx,
    on_tx_opportunity,
    select_resource,
    update_sensing,
)

NSUB = 3


def _cfg(**kw):
    base = dict(scheduler="nr-sps")
    base.update(kw)
    return MacConfig(**base)


def _window(cfg, now=1100):
    win = SensingWindow(cfg.window_ms, NSUB)
    for sf in range(now - cfg.window_ms, now):
        update_sensing(win, sf, rssi_dbm=np.full(NSUB, -100.4))
    return win


def test_sensing_rejects_future_entries():
    win = SensingWindow(1000, NSUB)
    with pytest.raises(ValueError, match="future"):
        win.record_sci(501, 0, 1, 100, -80.0, now=500)


def test_sensing_evicts_old_scis():
    win = SensingWindow(100, NSUB)
    update_sensing(win, 10, scis=[(10, 0, 1, 100, -80.0)])
    assert len(win.scis(50)) == 1
    update_sensing(win, 200)
    assert len(win.scis(201)) == 0


def test_strong_reservation_is_excluded():
    cfg = _cfg()
    now = 1100
    win = _window(cfg, now)
    # every subchannel of subframe now+10 is reserved one RRI after a sensed SCI
    for s in range(NSUB):
        win.record_sci(now - 90, s, 1, 100, -60.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        sel = select_resource(win, now, 100, cfg, rng, NSUB)
        assert sel.resource.subframe != now + 10
    assert sel.candidate_count == sel.total - NSUB


def test_final_sci_rri_zero_is_not_a_reservation():
    cfg = _cfg()
    now = 1100
    win = _window(cfg, now)
    for s in range(NSUB):
        win.record_sci(now - 90, s, 1, 0, -60.0)
    sel = select_resource(win, now, 100, cfg, np.random.default_rng(0), NSUB)
    assert sel.candidate_count == sel.total


def test_half_duplex_projection_at_all_rris():
    cfg = _cfg()
    now = 1100
    win = _window(cfg, now)
    win.record_own_tx(now - 95)  # projects to now+5 (100), and never again inside the window
    win.record_own_tx(now - 190)  # now+10 (200)
    rng = np.random.default_rng(1)
    picks = {select_resource(win, now, 100, cfg, rng, NSUB).resource.subframe for _ in range(500)}
    assert now + 5 not in picks and now + 10 not in picks


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 400))
def test_candidate_floor_holds(seed, n_sci):
    cfg = _cfg()
    now = 1100
    rng = np.random.default_rng(seed)
    win = _window(cfg, now)
    for _ in range(n_sci):
        sf = int(rng.integers(now - 1100, now))
        win.record_sci(sf, int(rng.integers(0, NSUB)), 1, int(rng.choice([100, 200, 500])), float(rng.uniform(-130, -50)))
    for _ in range(int(rng.integers(0, 15))):
        win.record_own_tx(int(rng.integers(now - 1100, now)))
    sel = select_resource(win, now, 100, cfg, rng, NSUB)
    # the threshold only stops climbing at the floor or once every SCI sits below it
    scis = win.scis(now)
    top = scis[:, 4].max() if len(scis) else -np.inf
    assert sel.candidate_count >= math.ceil(0.2 * sel.total - 1e-9) or sel.threshold_dbm >= top
    assert sel.mask.reshape(-1)[(sel.resource.subframe - now - cfg.t1) * NSUB + sel.resource.sub_start]


def test_cv2x_keeps_lowest_rssi():
    cfg = MacConfig(scheduler="cv2x-sps")
    now = 1000
    win = SensingWindow(1000, NSUB)
    loud = np.array([-70.0, -70.0, -100.4])
    for sf in range(0, now):
        update_sensing(win, sf, rssi_dbm=loud)
    rng = np.random.default_rng(0)
    subs = {select_resource(win, now, 100, cfg, rng, NSUB).resource.sub_start for _ in range(100)}
    assert subs == {2}


def test_c_resel_uniform_chi_square():
    cfg = MacConfig()
    rng = np.random.default_rng(123)
    draws = np.array([draw_c_resel(cfg, rng) for _ in range(22_000)])
    assert draws.min() == 5 and draws.max() == 15
    counts = np.bincount(draws - 5, minlength=11)
    assert stats.chisquare(counts).pvalue > 0.001


def _grant(cfg, c=3, rri=100):
    return Grant(0, 1, 1, 1200, rri, c, c)


def test_grant_lifecycle_ends_with_rri_zero():
    cfg = _cfg()
    g = _grant(cfg, c=4)
    rng = np.random.default_rng(0)
    rris, ended = [], None
    t = g.next_tx
    while ended is None:
        a = on_tx_opportunity(g, [Packet(t - 2)], t, cfg, rng)
        rris.append(a.sci.rri)
        ended = a.ended
        t = g.next_tx
    assert rris == [100, 100, 100, 0]
    assert ended == "expired" and g.scis == 4


def test_keep_probability_renews():
    cfg = _cfg(keep_probability=1.0)
    g = _grant(cfg, c=1)
    a = on_tx_opportunity(g, [Packet(1190)], 1200, cfg, np.random.default_rng(0))
    assert a.ended is None and a.sci.rri == 100 and 5 <= g.c_resel <= 15


def test_predicted_rri_moves_reservation():
    cfg = _cfg()
    g = _grant(cfg, c=5)
    a = on_tx_opportunity(g, [Packet(1190)], 1200, cfg, np.random.default_rng(0), next_rri=300)
    assert a.sci.rri == 300 and g.next_tx == 1500 and g.rri == 300 and g.c_resel == 4


@pytest.mark.parametrize("gb,ended,next_tx", [(True, "break", 1200), (False, None, 1300)])
def test_missed_opportunity_grant_breaking(gb, ended, next_tx):
    cfg = _cfg(grant_breaking=gb)
    g = _grant(cfg, c=5)
    a = on_tx_opportunity(g, [], 1200, cfg, np.random.default_rng(0))
    assert a.kind == "miss" and a.ended == ended and g.next_tx == next_tx


def test_no_gb_silent_expiry():
    cfg = _cfg()
    g = _grant(cfg, c=1)
    a = on_tx_opportunity(g, [], 1200, cfg, np.random.default_rng(0))
    assert a.ended == "expired-silent"


def test_opportunity_time_checked():
    cfg = _cfg()
    with pytest.raises(ValueError):
        on_tx_opportunity(_grant(cfg), [Packet(0)], 1199, cfg, np.random.default_rng(0))


def test_create_grant_and_dynamic():
    cfg = _cfg()
    win = _window(cfg)
    rng = np.random.default_rng(4)
    g, sel = create_grant(win, 1100, 300, cfg, rng, NSUB, grant_id=9)
    assert 1104 <= g.next_tx <= 1200 and 5 <= g.c_resel == g.c_initial <= 15 and g.rri == 300
    sci, sel = dynamic_grant_tx(win, 1100, cfg, rng, NSUB, sender=3)
    assert sci.rri == 0 and sci.sender == 3 and 1104 <= sci.reserved_resource.subframe <= 1200


def test_candidate_mask_backends_agree():
    bk = _kernels.backends()
    if "cython" not in bk:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(0)
    for _ in range(20):
        n = int(rng.integers(0, 300))
        args = (97, 2, 2, rng.integers(-10, 110, n).astype(np.int64), rng.integers(0, 3, n).astype(np.int64),
                rng.integers(1, 3, n).astype(np.int64), rng.uniform(-130, -60, n), -110.0,
                (rng.random(97) < 0.1).astype(np.uint8))
        assert np.array_equal(bk["python"].candidate_mask(*args), bk["cython"].candidate_mask(*args))
