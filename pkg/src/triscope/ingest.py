"""Notification-log parsing and assembly of the Users x Features x Hours
tensor.

The wire format is UTF-8 CSV with header ``user_id,timestamp`` and one
message per line (timestamp = integer Unix seconds, treated as UTC). Per
user, the inter-arrival time between consecutive messages lands in the hour
bin of the *later* message; a user's first message yields no inter-arrival.

Ten features per (user, hour):

==== ===============================================================
 0-5  two-state HMM descriptors (stay probabilities, means, SDs)
 6    mean inter-arrival (0 when fewer than two values)
 7    population variance of inter-arrivals (same rule)
 8    Shannon entropy of the inter-arrival histogram (same rule)
 9    message count in the hour
==== ===============================================================

The entropy histogram uses 16 log-spaced bins on [1 s, 3600 s] plus an
underflow bin (< 1 s) and an overflow bin (>= 3600 s).

Hours with at least ``min_obs`` inter-arrivals get their own HMM fit;
sparser hours fall back to the user's whole-window fit, and users whose
whole window is too sparse get zeros. Provenance of every cell is retained.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .hmm import baum_welch, extract_features

__all__ = [
    "FEATURE_NAMES",
    "PROV_ZERO",
    "PROV_FALLBACK",
    "PROV_HOUR",
    "NotificationLog",
    "HourlyDeltas",
    "FeatureTensor",
    "HmmConfig",
    "parse_log",
    "write_log",
    "compute_deltas",
    "hour_summary_features",
    "build_feature_tensor",
    "preprocess",
    "user_seed",
]

HOUR = 3600

FEATURE_NAMES = (
    "hmm_stay_0",
    "hmm_stay_1",
    "hmm_mean_0",
    "hmm_mean_1",
    "hmm_sd_0",
    "hmm_sd_1",
    "dt_mean",
    "dt_variance",
    "dt_entropy",
    "msg_count",
)

PROV_ZERO = 0
PROV_FALLBACK = 1
PROV_HOUR = 2

_HEADER = "user_id,timestamp"

# 16 log-spaced bins on [1, 3600] seconds; searchsorted(..., "right") maps
# values < 1 to bin 0 (underflow) and values >= 3600 to bin 17 (overflow).
_ENTROPY_EDGES = np.logspace(0.0, np.log10(3600.0), 17)


@dataclass(frozen=True, eq=False)
class NotificationLog:
    """Messages sorted by (user_id, timestamp), deduplicated, all within
    ``[window_start, window_start + 3600 * window_hours)``."""

    users: np.ndarray  # str array
    timestamps: np.ndarray  # int64, parallel to users
    window_start: int
    window_hours: int

    @property
    def n_records(self) -> int:
        return int(self.timestamps.shape[0])


@dataclass(frozen=True, eq=False)
class HourlyDeltas:
    """Per-user, per-hour inter-arrival sequences plus message counts.

    ``deltas[u][h]`` is the float array of inter-arrivals assigned to hour
    ``h`` of user ``u``; ``counts[u, h]`` is the number of messages there.
    """

    user_ids: tuple[str, ...]
    window_hours: int
    deltas: tuple[tuple[np.ndarray, ...], ...]
    counts: np.ndarray

    def window_series(self, u: int) -> np.ndarray:
        """All inter-arrivals of one user across the window, in time order."""
        parts = [d for d in self.deltas[u] if d.size]
        if not parts:
            return np.empty(0)
        return np.concatenate(parts)


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """The Users x 10 x Hours tensor plus its labels.

    ``scale_mean``/``scale_sd`` are set by :func:`preprocess` (raw per-feature
    moments, so the transform is invertible; constant features record sd 0
    and are only centered).
    """

    tensor: np.ndarray
    user_ids: tuple[str, ...]
    feature_names: tuple[str, ...] = FEATURE_NAMES
    provenance: np.ndarray | None = None
    scale_mean: np.ndarray | None = None
    scale_sd: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=np.float64)
        if t.ndim != 3:
            raise InvalidInputError(f"feature tensor must be 3-D, got {t.shape}")
        if t.shape[0] != len(self.user_ids):
            raise InvalidInputError("user_ids length must match first extent")
        if t.shape[1] != len(self.feature_names):
            raise InvalidInputError("feature_names length must match second extent")
        object.__setattr__(self, "tensor", t)

    @property
    def n_users(self) -> int:
        return self.tensor.shape[0]

    @property
    def n_hours(self) -> int:
        return self.tensor.shape[2]


@dataclass(frozen=True)
class HmmConfig:
    """Knobs for the per-cell HMM fits."""

    seed: int = 0
    min_obs: int = 6
    tol: float = 1e-6
    max_iter: int = 200


def parse_log(source, window_start: int | None = None, window_hours: int = 720) -> NotificationLog:
    """Parse the CSV wire format into a sorted, deduplicated log.

    ``source`` may be a path or a text/binary stream. When ``window_start``
    is None it defaults to the earliest timestamp rounded down to the hour
    (0 for an empty log). Timestamps outside the window are rejected with
    the offending line numbers.
    """
    if window_hours < 1:
        raise InvalidInputError(f"window_hours must be >= 1, got {window_hours}")
    own = isinstance(source, (str, Path))
    f = open(source, "r", encoding="utf-8", newline="") if own else source
    try:
        raw = f.read()
    finally:
        if own:
            f.close()
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")

    lines = raw.splitlines()
    if not lines or lines[0].strip().lstrip("﻿") != _HEADER:
        raise InvalidInputError(f"line 1: expected header {_HEADER!r}")

    users: list[str] = []
    stamps: list[int] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2 or not parts[0].strip():
            raise InvalidInputError(f"line {lineno}: expected 'user_id,timestamp', got {line!r}")
        try:
            ts = int(parts[1])
        except ValueError:
            raise InvalidInputError(f"line {lineno}: timestamp is not an integer: {parts[1]!r}")
        users.append(parts[0].strip())
        stamps.append(ts)

    ts_arr = np.asarray(stamps, dtype=np.int64)
    if window_start is None:
        window_start = int(ts_arr.min()) // HOUR * HOUR if ts_arr.size else 0
    window_end = window_start + HOUR * window_hours

    bad = np.flatnonzero((ts_arr < window_start) | (ts_arr >= window_end))
    if bad.size:
        offenders = ", ".join(str(int(b) + 2) for b in bad[:5])
        more = "" if bad.size <= 5 else f" (+{bad.size - 5} more)"
        raise InvalidInputError(
            f"{bad.size} timestamp(s) outside [{window_start}, {window_end}): lines {offenders}{more}"
        )

    user_arr = np.asarray(users, dtype=object)
    order = np.lexsort((ts_arr, user_arr))
    user_arr = user_arr[order]
    ts_arr = ts_arr[order]
    if ts_arr.size:
        keep = np.ones(ts_arr.size, dtype=bool)
        keep[1:] = (user_arr[1:] != user_arr[:-1]) | (ts_arr[1:] != ts_arr[:-1])
        user_arr = user_arr[keep]
        ts_arr = ts_arr[keep]
    ts_arr.flags.writeable = False
    return NotificationLog(user_arr, ts_arr, int(window_start), int(window_hours))


def write_log(log: NotificationLog, target) -> None:
    """Write a log back to the CSV wire format."""
    own = isinstance(target, (str, Path))
    f = open(target, "w", encoding="utf-8", newline="\n") if own else target
    try:
        f.write(_HEADER + "\n")
        for u, t in zip(log.users, log.timestamps):
            f.write(f"{u},{int(t)}\n")
    finally:
        if own:
            f.close()


def compute_deltas(log: NotificationLog) -> HourlyDeltas:
    """Split each user's inter-arrival series into hour bins."""
    h = log.window_hours
    empty = np.empty(0)
    user_ids: list[str] = []
    all_deltas: list[tuple[np.ndarray, ...]] = []
    counts_rows: list[np.ndarray] = []

    n = log.n_records
    start = 0
    while start < n:
        uid = log.users[start]
        stop = start
        while stop < n and log.users[stop] == uid:
            stop += 1
        ts = log.timestamps[start:stop].astype(np.int64)
        hours = (ts - log.window_start) // HOUR
        counts_rows.append(np.bincount(hours, minlength=h).astype(np.int64))

        per_hour: list[np.ndarray] = [empty] * h
        if ts.size > 1:
            dt = np.diff(ts).astype(np.float64)
            dh = hours[1:]
            # consecutive messages are time-sorted, so dh is non-decreasing
            bounds = np.searchsorted(dh, np.arange(h + 1))
            per_hour = [
                dt[bounds[i] : bounds[i + 1]] if bounds[i + 1] > bounds[i] else empty
                for i in range(h)
            ]
        user_ids.append(str(uid))
        all_deltas.append(tuple(per_hour))
        start = stop

    counts = np.vstack(counts_rows) if counts_rows else np.zeros((0, h), dtype=np.int64)
    return HourlyDeltas(tuple(user_ids), h, tuple(all_deltas), counts)


def hour_summary_features(deltas, message_count: int) -> np.ndarray:
    """(mean, population variance, entropy, count) of one hour's
    inter-arrivals. Hours with fewer than two values report zeros for the
    first three."""
    d = np.asarray(deltas, dtype=np.float64)
    count = float(message_count)
    if d.size < 2:
        return np.array([0.0, 0.0, 0.0, count])
    mean = float(d.mean())
    var = float(d.var())
    idx = np.searchsorted(_ENTROPY_EDGES, d, side="right")
    occ = np.bincount(idx, minlength=_ENTROPY_EDGES.size + 1)
    p = occ[occ > 0] / d.size
    entropy = float(-(p * np.log(p)).sum())
    return np.array([mean, var, entropy, count])


def user_seed(base_seed: int, user_index: int) -> int:
    """Deterministic per-user HMM seed. Hour fits of a user share its seed:
    seeding per (user, hour) would make features depend on the absolute hour
    index, breaking invariance under whole-hour time shifts of the log."""
    ss = np.random.SeedSequence([int(base_seed), int(user_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def build_feature_tensor(hourly: HourlyDeltas, config: HmmConfig = HmmConfig()) -> FeatureTensor:
    """Assemble the Users x 10 x Hours tensor from hourly inter-arrivals."""
    n_users = len(hourly.user_ids)
    n_hours = hourly.window_hours
    if n_users < 1 or n_hours < 1:
        raise InvalidInputError("need at least one user and one hour")

    x = np.zeros((n_users, 10, n_hours))
    prov = np.full((n_users, n_hours), PROV_ZERO, dtype=np.int8)

    for u in range(n_users):
        seed = user_seed(config.seed, u)
        window_features: np.ndarray | None = None
        window_checked = False
        for h in range(n_hours):
            seq = hourly.deltas[u][h]
            if seq.size >= config.min_obs:
                model = baum_welch(
                    seq, n_states=2, seed=seed, tol=config.tol, max_iter=config.max_iter
                )
                x[u, :6, h] = extract_features(model)
                prov[u, h] = PROV_HOUR
            else:
                if not window_checked:
                    window_checked = True
                    series = hourly.window_series(u)
                    if series.size >= config.min_obs:
                        model = baum_welch(
                            series, n_states=2, seed=seed, tol=config.tol, max_iter=config.max_iter
                        )
                        window_features = extract_features(model)
                if window_features is not None:
                    x[u, :6, h] = window_features
                    prov[u, h] = PROV_FALLBACK
            x[u, 6:, h] = hour_summary_features(seq, int(hourly.counts[u, h]))

    return FeatureTensor(x, tuple(hourly.user_ids), FEATURE_NAMES, provenance=prov)


def preprocess(ft: FeatureTensor) -> FeatureTensor:
    """Center and scale every feature slab to zero mean, unit SD across the
    user x hour plane. Constant features are centered only. The applied
    moments ride on the returned tensor."""
    x = ft.tensor
    mean = x.mean(axis=(0, 2))
    sd = x.std(axis=(0, 2))
    scale = np.where(sd > 0.0, sd, 1.0)
    out = (x - mean[None, :, None]) / scale[None, :, None]
    return replace(ft, tensor=out, scale_mean=mean, scale_sd=sd)
