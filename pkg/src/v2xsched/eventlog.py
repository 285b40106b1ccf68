"""Append-only event log; the only input of every metric."""
from __future__ import annotations

import csv
import os

import numpy as np

I8, I1, F8 = np.int64, np.int8, np.float64

SCHEMAS = {
    # one row per CAM handed to the MAC (ipt -1 when unknown)
    "cam": [("vehicle", I8), ("t", I8), ("cause", I1), ("ipt", I8)],
    # one row per transmission; rri is the advertised reservation (0 = relinquish)
    "tx": [
        ("tx_id", I8), ("vehicle", I8), ("t", I8), ("sub_start", I8), ("sub_len", I8),
        ("rri", I8), ("grant_id", I8), ("gen_t", I8), ("x", F8), ("y", F8), ("dynamic", I1),
    ],
    # one row per (transmission, receiver within sensing range)
    "rx": [
        ("tx_id", I8), ("receiver", I8), ("distance", F8), ("decoded", I1), ("cause", I1),
        ("sinr", F8), ("rsrp", F8),
    ],
    # a grant opportunity with no packet queued (no energy on the air)
    "miss": [("vehicle", I8), ("t", I8), ("grant_id", I8)],
    # grant lifecycle; event 0 = create, 1 = end (reason per GRANT_REASONS)
    "grant": [
        ("vehicle", I8), ("t", I8), ("grant_id", I8), ("event", I1), ("reason", I1),
        ("rri", I8), ("c_resel", I8), ("sub_start", I8), ("candidates", I8), ("total", I8),
    ],
    "predict": [
        ("vehicle", I8), ("t", I8), ("gen_t", I8), ("predicted_ipt", I8), ("rri", I8), ("cold", I1),
    ],
    # a queued CAM replaced by a newer one before it could be sent
    "drop": [("vehicle", I8), ("t", I8), ("gen_t", I8)],
    "hook": [("t", I8), ("hook", I1)],
}
GRANT_REASONS = ("create", "expired", "expired-silent", "break", "end-of-run")
HOOKS = ("mobility", "cam", "mac", "phy", "sensing")


class EventLog:
    def __init__(self):
        self._rows = {k: [] for k in SCHEMAS}
        self._chunks = {k: [] for k in SCHEMAS}
        self._frozen = None

    def add(self, kind: str, *row):
        self._rows[kind].append(row)
        self._frozen = None

    def add_block(self, kind: str, **columns):
        """Append many rows at once from equal-length column arrays."""
        names = [n for n, _ in SCHEMAS[kind]]
        n = len(columns[names[0]])
        arr = np.empty(n, dtype=SCHEMAS[kind])
        for name in names:
            arr[name] = columns[name]
        self._chunks[kind].append(arr)
        self._frozen = None

    def table(self, kind: str) -> np.ndarray:
        if self._frozen is None:
            self._frozen = {}
        if kind not in self._frozen:
            # a kind is filled either row-wise or block-wise, so this keeps append order
            parts = list(self._chunks[kind])
            if self._rows[kind]:
                parts.append(np.array(self._rows[kind], dtype=SCHEMAS[kind]))
            if not parts:
                self._frozen[kind] = np.zeros(0, dtype=SCHEMAS[kind])
            elif len(parts) == 1:
                self._frozen[kind] = parts[0]
            else:
                self._frozen[kind] = np.concatenate(parts)
            # merge so later tables are cheap; row order is stable per kind
            self._rows[kind], self._chunks[kind] = [], [self._frozen[kind]]
        return self._frozen[kind]

    def __getitem__(self, kind):
        return self.table(kind)

    def counts(self) -> dict:
        return {k: len(self.table(k)) for k in SCHEMAS}

    def write_csv(self, directory) -> list[str]:
        """One ``<kind>.csv`` per record kind; floats written with repr for exact reload."""
        os.makedirs(directory, exist_ok=True)
        paths = []
        for kind, schema in SCHEMAS.items():
            path = os.path.join(directory, f"{kind}.csv")
            tab = self.table(kind)
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([n for n, _ in schema])
                floats = [dt == F8 for _, dt in schema]
                for row in tab.tolist():
                    w.writerow([repr(v) if f else v for v, f in zip(row, floats)])
            paths.append(path)
        return paths

    @classmethod
    def read_csv(cls, directory) -> "EventLog":
        log = cls()
        for kind, schema in SCHEMAS.items():
            path = os.path.join(directory, f"{kind}.csv")
            if not os.path.exists(path):
                continue
            with open(path, newline="") as fh:
                r = csv.reader(fh)
                header = next(r, None)
                if header != [n for n, _ in schema]:
                    raise ValueError(f"{path}: unexpected header {header}")
                rows = [
                    tuple(float(v) if dt == F8 else int(v) for v, (_, dt) in zip(row, schema))
                    for row in r
                ]
            if rows:
                log._chunks[kind].append(np.array(rows, dtype=schema))
        return log
