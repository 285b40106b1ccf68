import numpy as np
import pytest

from v2xsched.eventlog import EventLog
from v2xsched.metrics import (
    cam_ipt_stats,
    compute_metrics,
    confusion,
    confusion_from_pairs,
    delta_col,
    pdr_by_distance,
    rri_error,
    write_pdr_csv,
    write_summary_csv,
)


def _tx(log, tid, v, t, sub=0, rri=100, x=0.0, y=0.0, sub_len=1):
    log.add("tx", tid, v, t, sub, sub_len, rri, 0, t - 4, x, y, 0)


@pytest.mark.parametrize("sep,expect", [(80.0, 2), (499.0, 2), (600.0, 0)])
def test_delta_col_two_vehicles(sep, expect):
    log = EventLog()
    _tx(log, 0, 1, 100, x=0.0)
    _tx(log, 1, 2, 100, x=sep)
    assert delta_col(log) == expect
    assert delta_col(log, pairwise=True) == expect // 2


def test_delta_col_needs_same_subframe_and_subchannel():
    log = EventLog()
    _tx(log, 0, 1, 100, sub=0)
    _tx(log, 1, 2, 100, sub=1)
    _tx(log, 2, 3, 101, sub=0)
    assert delta_col(log) == 0
    _tx(log, 3, 4, 100, sub=1, sub_len=2, x=10.0)  # spans 1..2, hits vehicle 2
    assert delta_col(log) == 2


def test_pdr_bins():
    log = EventLog()
    rows = [(0, 1, 10.0, 1), (0, 2, 40.0, 0), (0, 3, 60.0, 1), (0, 4, 70.0, 1), (0, 5, 600.0, 1)]
    for tid, rx, d, ok in rows:
        log.add("rx", tid, rx, d, ok, 0 if ok else 1, 10.0, -80.0)
    c = pdr_by_distance(log, 50.0)
    assert c.rows() == [(0.0, 50.0, 0.5, 1, 2), (50.0, 100.0, 1.0, 2, 2)]


def test_mean_ipt_rri_error_on_alternating_ipts():
    # MAC IPTs alternate 200 / 400 while every SCI advertises 300: error 0 +- 100
    log = EventLog()
    t = 0
    for k in range(41):
        _tx(log, k, 1, t, rri=300)
        t += 200 if k % 2 == 0 else 400
    st = rri_error(log)
    assert st.mean == pytest.approx(0.0) and st.std == pytest.approx(100.0)
    assert st.predictions == 40 and st.inaccuracies == 40 and st.accuracy == 0.0
    ipt = cam_ipt_stats(log)
    assert ipt.ipt_mean == pytest.approx(300.0) and ipt.ipt_std == pytest.approx(100.0)


def test_final_sci_excluded_from_rri_error():
    log = EventLog()
    _tx(log, 0, 1, 0, rri=100)
    _tx(log, 1, 1, 100, rri=0)
    _tx(log, 2, 1, 350, rri=100)
    st = rri_error(log)
    assert st.predictions == 1 and st.inaccuracies == 0


def test_confusion_matrix(tmp_path):
    cm = confusion_from_pairs([100, 100, 300, 200], [100, 140, 300, 980])
    assert cm.counts[0, 0] == 2 and cm.counts[2, 2] == 1 and cm.counts[1, 9] == 1
    assert cm.accuracy == pytest.approx(0.75)
    p = tmp_path / "c.csv"
    cm.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0].split(",")[1:] == [str(g) for g in range(100, 1001, 100)]
    assert lines[1].split(",")[:2] == ["100", "50.0000"]
    total = sum(float(x) for line in lines[1:] for x in line.split(",")[1:])
    assert total == pytest.approx(100.0)


def _random_log(seed=0):
    rng = np.random.default_rng(seed)
    log = EventLog()
    for k in range(200):
        _tx(log, k, int(rng.integers(0, 8)), int(rng.integers(0, 5000)), int(rng.integers(0, 3)),
            int(rng.choice([0, 100, 300])), float(rng.uniform(0, 800)), float(rng.uniform(0, 10)))
        for rx in range(3):
            log.add("rx", k, rx, float(rng.uniform(0, 700)), int(rng.integers(0, 2)), 0, float(rng.normal()), -90.0)
    for v in range(8):
        for t in np.sort(rng.integers(0, 5000, 30)):
            log.add("cam", v, int(t), 1, -1)
    log.add("miss", 1, 10, 0)
    log.add("drop", 2, 11, 5)
    return log


def test_metrics_recompute_from_persisted_log_bit_exact(tmp_path):
    log = _random_log()
    a = compute_metrics(log)
    log.write_csv(tmp_path / "log")
    b = compute_metrics(EventLog.read_csv(tmp_path / "log"))
    assert a.summary_row() == b.summary_row()
    assert a.pdr.rows() == b.pdr.rows()
    assert np.array_equal(a.confusion.counts, b.confusion.counts)
    write_pdr_csv(a.pdr, tmp_path / "p1.csv")
    write_pdr_csv(b.pdr, tmp_path / "p2.csv")
    write_summary_csv({"x": a.summary_row()}, tmp_path / "s1.csv")
    write_summary_csv({"x": b.summary_row()}, tmp_path / "s2.csv")
    assert (tmp_path / "p1.csv").read_bytes() == (tmp_path / "p2.csv").read_bytes()
    assert (tmp_path / "s1.csv").read_bytes() == (tmp_path / "s2.csv").read_bytes()
    assert a.misses == 1 and a.drops == 1


def test_read_csv_rejects_bad_header(tmp_path):
    log = _random_log()
    log.write_csv(tmp_path)
    (tmp_path / "tx.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        EventLog.read_csv(tmp_path)


def test_empty_log():
    m = compute_metrics(EventLog())
    assert m.delta_col == 0 and m.rri.predictions == 0 and m.pdr.rows() == []
    assert np.isnan(m.ipt.ipt_mean)
