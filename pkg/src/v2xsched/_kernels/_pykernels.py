"""Reference numpy implementations of the hot kernels.

Array layouts match the compiled module: time-major ``(T, B, .)`` float64, C-contiguous.
Gate blocks along the last axis of stacked GRU arrays are ordered reset, update, candidate.
"""
import math

import numpy as np

# test hook: scale applied to each gate's pre-activation gradient in gru_backward
_GATE_GRAD_SCALE = {"r": 1.0, "z": 1.0, "c": 1.0}


def cam_scan(x, y, speed, heading, pos_thr, head_thr, speed_thr, time_steps, strict, eps):
    n = len(x)
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int8)
    idx = [0]
    causes = [1]
    ref = 0

    def hit(delta, thr):
        return delta > thr + eps if strict else delta >= thr - eps

    for i in range(1, n):
        if i - ref >= time_steps:
            c = 1
        elif hit(math.hypot(x[i] - x[ref], y[i] - y[ref]), pos_thr):
            c = 2
        else:
            d = abs(heading[i] - heading[ref]) % 360.0
            if hit(min(d, 360.0 - d), head_thr):
                c = 3
            elif hit(abs(speed[i] - speed[ref]), speed_thr):
                c = 4
            else:
                continue
        idx.append(i)
        causes.append(c)
        ref = i
    return np.array(idx, dtype=np.int64), np.array(causes, dtype=np.int8)


def _sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def gru_forward(xw, U, h0):
    """Run one GRU layer over a sequence.

    xw: (T, B, 3H) input projections with biases folded in; U: (H, 3H) recurrent
    weights; h0: (B, H). Returns hidden states and the gate activations (each (T, B, H)).
    """
    T, B, H3 = xw.shape
    H = H3 // 3
    hs = np.empty((T, B, H))
    r = np.empty((T, B, H))
    z = np.empty((T, B, H))
    c = np.empty((T, B, H))
    U_rz = U[:, : 2 * H]
    U_c = U[:, 2 * H :]
    h = h0
    for t in range(T):
        a = xw[t, :, : 2 * H] + h @ U_rz
        rt = _sigmoid(a[:, :H])
        zt = _sigmoid(a[:, H:])
        ct = np.tanh(xw[t, :, 2 * H :] + (rt * h) @ U_c)
        h = (1.0 - zt) * h + zt * ct
        r[t], z[t], c[t], hs[t] = rt, zt, ct, h
    return hs, r, z, c


def gru_backward(dh_out, U, h0, hs, r, z, c):
    """Backpropagate through one GRU layer.

    dh_out: (T, B, H) loss gradient w.r.t. each emitted hidden state. Returns the
    gradient w.r.t. the gate pre-activations ``da`` (T, B, 3H) and w.r.t. ``h0``.
    """
    T, B, H = hs.shape
    U_rz_T = np.ascontiguousarray(U[:, : 2 * H].T)
    U_c_T = np.ascontiguousarray(U[:, 2 * H :].T)
    da = np.empty((T, B, 3 * H))
    sr, sz, sc = _GATE_GRAD_SCALE["r"], _GATE_GRAD_SCALE["z"], _GATE_GRAD_SCALE["c"]
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        h_prev = hs[t - 1] if t > 0 else h0
        dh = dh_out[t] + dh_next
        zt, ct, rt = z[t], c[t], r[t]
        da_c = dh * zt * (1.0 - ct * ct) * sc
        da_z = dh * (ct - h_prev) * zt * (1.0 - zt) * sz
        d_rh = da_c @ U_c_T
        da_r = d_rh * h_prev * rt * (1.0 - rt) * sr
        da[t, :, :H] = da_r
        da[t, :, H : 2 * H] = da_z
        da[t, :, 2 * H :] = da_c
        dh_next = dh * (1.0 - zt) + d_rh * rt + da[t, :, : 2 * H] @ U_rz_T
    return da, dh_next


def candidate_mask(n_sub, n_pos, width, res_off, res_start, res_len, res_rsrp, threshold, blocked):
    """Availability of candidates in a selection window.

    Candidates are (subframe offset in [0, n_sub), first subchannel in [0, n_pos)).
    A reservation at subframe offset ``res_off`` covering ``res_start .. +res_len``
    excludes every overlapping candidate when its RSRP exceeds ``threshold``.
    ``blocked`` is a bool array over subframe offsets excluded outright.
    """
    mask = np.ones((n_sub, n_pos), dtype=bool)
    mask[np.asarray(blocked, dtype=bool)] = False
    for k in range(len(res_off)):
        o = res_off[k]
        if o < 0 or o >= n_sub or not res_rsrp[k] > threshold:
            continue
        lo = max(0, res_start[k] - width + 1)
        hi = min(n_pos, res_start[k] + res_len[k])
        if lo < hi:
            mask[o, lo:hi] = False
    return mask
