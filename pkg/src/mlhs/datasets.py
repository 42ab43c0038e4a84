"""Trajectory datasets of (state, label, time) tuples and their binary file format.

File layout (all little-endian): magic ``MLHS1``, then a header with the
field kind (uint32: 0 linear, 1 reaction-diffusion, 2 channel flow), grid
dims nx, ny (uint32), tuple count (uint64), dt (float64), followed by the
samples-per-trajectory count and the step index of the first collected tuple
(uint64 each, so per-tuple times can be rebuilt), then raw float64 tuples in
(state, label) order. The channel-flow kind appends the resolved drift field
to every tuple because the stored state lives on cell centers and the drift
cannot be recomputed from it.
"""

import csv
import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"MLHS1"
KIND_CODES = {"linear": 0, "rd": 1, "ns": 2}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}


@dataclass
class TrajectoryDataset:
    kind: str
    states: np.ndarray  # (N, d_state)
    labels: np.ndarray  # (N, d_label)
    dt: float
    nx: int
    ny: int
    traj_len: int       # tuples per trajectory
    start_step: int = 0
    drifts: np.ndarray = None  # (N, d_state), channel-flow only

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=float)
        self.labels = np.ascontiguousarray(self.labels, dtype=float)
        if self.kind not in KIND_CODES:
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.states.shape[0] != self.labels.shape[0]:
            raise ValueError("states and labels must pair up")
        if self.traj_len <= 0 or self.states.shape[0] % self.traj_len:
            raise ValueError("tuple count must be a multiple of traj_len")
        if self.drifts is not None:
            self.drifts = np.ascontiguousarray(self.drifts, dtype=float)
            if self.drifts.shape != self.states.shape:
                raise ValueError("drifts must match states shape")

    @property
    def n_tuples(self):
        return self.states.shape[0]

    @property
    def n_traj(self):
        return self.n_tuples // self.traj_len

    def times(self):
        """Per-tuple simulation times, t_k = (start_step + k) dt within each trajectory."""
        k = np.arange(self.traj_len) + self.start_step
        return np.tile(k * self.dt, self.n_traj)

    def split(self, train_frac=0.8):
        """Split by whole trajectories; the leading fraction goes to train."""
        n_train = max(1, int(round(train_frac * self.n_traj)))
        n_train = min(n_train, self.n_traj)
        cut = n_train * self.traj_len
        def make(sl):
            return TrajectoryDataset(
                kind=self.kind, states=self.states[sl], labels=self.labels[sl],
                dt=self.dt, nx=self.nx, ny=self.ny, traj_len=self.traj_len,
                start_step=self.start_step,
                drifts=None if self.drifts is None else self.drifts[sl],
            )
        if cut == self.n_tuples:
            return make(slice(None)), None
        return make(slice(0, cut)), make(slice(cut, None))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack(
                "<IIIQdQQ", KIND_CODES[self.kind], self.nx, self.ny,
                self.n_tuples, self.dt, self.traj_len, self.start_step,
            ))
            for i in range(self.n_tuples):
                fh.write(self.states[i].astype("<f8").tobytes())
                fh.write(self.labels[i].astype("<f8").tobytes())
                if self.kind == "ns":
                    fh.write(self.drifts[i].astype("<f8").tobytes())

    def export_csv(self, path):
        """Flattened CSV (one row per tuple) for inspection."""
        t = self.times()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            d_s = self.states.shape[1]
            d_l = self.labels.shape[1]
            w.writerow(["index", "t"]
                       + [f"s{j}" for j in range(d_s)]
                       + [f"y{j}" for j in range(d_l)])
            for i in range(self.n_tuples):
                w.writerow([i, format(t[i], ".17g")]
                           + [format(x, ".17g") for x in self.states[i]]
                           + [format(x, ".17g") for x in self.labels[i]])


def state_dim(kind, nx, ny):
    if kind == "linear":
        return nx
    if kind == "rd":
        return 2 * nx * ny
    return 2 * nx * ny  # ns: two centered velocity components


def label_dim(kind, nx, ny, d_state):
    if kind == "linear":
        return -1  # variable; resolved from file size
    if kind == "rd":
        return d_state
    return nx * ny  # ns: pressure at centers


def load_dataset(path):
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        kind_code, nx, ny, count, dt, traj_len, start_step = struct.unpack(
            "<IIIQdQQ", fh.read(struct.calcsize("<IIIQdQQ")))
        kind = KIND_NAMES.get(kind_code)
        if kind is None:
            raise ValueError(f"{path}: unknown field kind code {kind_code}")
        payload = np.frombuffer(fh.read(), dtype="<f8")
    d_s = state_dim(kind, nx, ny)
    if kind == "linear":
        # state dim is nx, label dim inferred from the record size
        rec = payload.size // count if count else 0
        d_l = rec - d_s
    else:
        d_l = label_dim(kind, nx, ny, d_s)
    rec = d_s + d_l + (d_s if kind == "ns" else 0)
    if payload.size != count * rec:
        raise ValueError(f"{path}: truncated payload")
    table = payload.reshape(count, rec)
    drifts = table[:, d_s + d_l :].copy() if kind == "ns" else None
    return TrajectoryDataset(
        kind=kind, states=table[:, :d_s].copy(), labels=table[:, d_s : d_s + d_l].copy(),
        dt=dt, nx=nx, ny=ny, traj_len=traj_len, start_step=start_step, drifts=drifts,
    )


def file_checksum(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
