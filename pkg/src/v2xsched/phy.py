"""Radio abstraction: log-distance path loss, shadowing, SINR reception, sensing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ChannelConfig, PhyConfig

# RxOutcome.failure_cause codes
RX_OK = 0
RX_COLLISION = 1
RX_PROPAGATION = 2
RX_HALF_DUPLEX = 3
RX_CAUSES = ("none", "collision_sinr", "propagation", "half_duplex")


def db_to_mw(dbm):
    return np.power(10.0, np.asarray(dbm, dtype=float) / 10.0)


def mw_to_db(mw):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(mw)


def path_loss(d, phy: PhyConfig = PhyConfig()):
    """PL0 + 10 n log10(d / d0), distances below d0 clamped to d0."""
    d = np.maximum(np.asarray(d, dtype=float), phy.d0_m)
    return phy.pl0_db + 10.0 * phy.pl_exponent * np.log10(d / phy.d0_m)


def rx_power(tx_dbm, d, shadowing_db=0.0, phy: PhyConfig = PhyConfig()):
    return tx_dbm - path_loss(d, phy) + shadowing_db


def noise_floor(bandwidth_hz: float, noise_figure_db: float) -> float:
    return -174.0 + 10.0 * np.log10(bandwidth_hz) + noise_figure_db


@dataclass(frozen=True)
class TxRecord:
    sender: int
    sub_start: int
    sub_len: int
    x: float
    y: float


@dataclass
class SubframeResult:
    """Outcome of one subframe, one row per (tx, in-range receiver)."""

    tx_index: np.ndarray  # index into the subframe's tx list
    receiver: np.ndarray  # receiver row index
    distance: np.ndarray
    decoded: np.ndarray
    cause: np.ndarray
    sinr_db: np.ndarray
    rsrp_dbm: np.ndarray
    # (n_receivers, n_subchannels) total received power per subchannel, linear mW
    rssi_mw: np.ndarray
    half_duplex: np.ndarray  # per receiver: transmitting this subframe


def resolve_subframe(
    txs: list[TxRecord],
    rx_pos: np.ndarray,
    rx_ids: np.ndarray,
    channel: ChannelConfig,
    phy: PhyConfig,
    rng: np.random.Generator | None,
    shadowing: np.ndarray | None = None,
) -> SubframeResult:
    """Resolve every (transmission, receiver) pair of one subframe.

    ``rx_pos`` (N, 2) and ``rx_ids`` (N,) list all radios. ``shadowing`` (n_tx, N) in dB
    overrides the per-link draws from ``rng``. SINR is computed per subchannel of the
    transmission and the worst one decides. Links beyond ``sensing_range_m`` are not
    modeled and contribute no energy.
    """
    n_tx, n_rx, n_sub = len(txs), len(rx_ids), channel.subchannels
    noise_mw = db_to_mw(noise_floor(channel.subchannel_hz, phy.noise_figure_db))
    rssi = np.full((n_rx, n_sub), float(noise_mw))
    tx_pos = np.array([[t.x, t.y] for t in txs], dtype=float).reshape(n_tx, 2)
    dist = np.sqrt(((tx_pos[:, None, :] - rx_pos[None, :, :]) ** 2).sum(axis=-1))
    if shadowing is None:
        if phy.shadow_sigma_db > 0 and rng is not None:
            shadowing = rng.normal(0.0, phy.shadow_sigma_db, size=(n_tx, n_rx))
        else:
            shadowing = np.zeros((n_tx, n_rx))
    p_dbm = rx_power(phy.tx_power_dbm, dist, shadowing, phy)
    senders = np.array([t.sender for t in txs], dtype=np.int64)
    is_self = senders[:, None] == rx_ids[None, :]
    in_range = (dist <= phy.sensing_range_m) & ~is_self
    p_mw = np.where(in_range, db_to_mw(p_dbm), 0.0)
    occ = np.zeros((n_tx, n_sub), dtype=bool)
    for k, t in enumerate(txs):
        occ[k, t.sub_start : t.sub_start + t.sub_len] = True
    rssi += p_mw.T @ occ.astype(float)
    hd = np.isin(rx_ids, senders)

    # worst subchannel of each transmission per receiver; p is flat across them
    sinr_full = np.empty((n_tx, n_rx))
    alone = np.empty(n_tx, dtype=bool)
    for k in range(n_tx):
        interf = rssi[:, occ[k]].max(axis=1) - p_mw[k]
        sinr_full[k] = p_dbm[k] - mw_to_db(np.maximum(interf, 1e-300))
        alone[k] = bool(np.all(occ[:, occ[k]].sum(axis=0) == 1))
    ti, ri = np.nonzero(in_range)
    sinr = sinr_full[ti, ri]
    cause = np.where(sinr >= phy.decode_sinr_db, RX_OK, RX_COLLISION).astype(np.int8)
    # losses with no co-channel interferer are propagation losses
    cause[(cause == RX_COLLISION) & alone[ti]] = RX_PROPAGATION
    cause[hd[ri]] = RX_HALF_DUPLEX
    decoded = cause == RX_OK
    return SubframeResult(
        tx_index=ti,
        receiver=ri,
        distance=dist[ti, ri],
        decoded=decoded,
        cause=cause,
        sinr_db=sinr,
        rsrp_dbm=p_dbm[ti, ri],
        rssi_mw=rssi,
        half_duplex=hd,
    )
