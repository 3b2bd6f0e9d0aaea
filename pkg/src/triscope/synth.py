"""Deterministic synthetic notification logs with planted ground truth.

Every user emits a homogeneous Poisson message stream at ``base_rate``
messages/hour. Two kinds of anomalies can be planted:

* persistent users run at ``burst_rate`` for the whole window, alternating
  between a short-gap and a long-gap regime in blocks of messages so that a
  two-state model has something to find;
* during each event window, a seeded random fraction of users switches to
  ``burst_rate``.

Per-user streams are drawn from independent ``SeedSequence`` children of the
master seed (generator: numpy PCG64), so identical configs give identical
logs byte for byte and users can be generated in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .ingest import HOUR, NotificationLog

__all__ = ["SynthConfig", "EventSpec", "GroundTruth", "generate", "RNG_NAME"]

RNG_NAME = "numpy.random.PCG64"

# persistent-anomalous users alternate regimes every this many messages;
# gap scales 0.4x / 1.6x keep the long-run rate at burst_rate while making
# the inter-arrival distribution clearly bimodal
_REGIME_BLOCK = 10
_REGIME_SCALES = (0.4, 1.6)


@dataclass(frozen=True)
class EventSpec:
    """A network-level event: hours [start_hour, end_hour] inclusive,
    hitting a random ``affected_fraction`` of users."""

    start_hour: int
    end_hour: int
    affected_fraction: float


@dataclass(frozen=True)
class SynthConfig:
    n_users: int
    window_hours: int = 720
    base_rate: float = 2.0  # mean messages/hour for normal users
    burst_rate: float = 10.0  # elevated rate (persistent users and events)
    persistent_anomalous: tuple[int, ...] = ()
    event_specs: tuple[EventSpec, ...] = ()
    seed: int = 0
    window_start: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.window_hours < 1:
            raise InvalidInputError("n_users and window_hours must be positive")
        if self.base_rate <= 0 or self.burst_rate <= 0:
            raise InvalidInputError("rates must be positive")
        for u in self.persistent_anomalous:
            if not 0 <= u < self.n_users:
                raise InvalidInputError(f"persistent user index {u} out of range")
        for ev in self.event_specs:
            if not 0 <= ev.start_hour <= ev.end_hour < self.window_hours:
                raise InvalidInputError(f"event hours {ev.start_hour}..{ev.end_hour} outside window")
            if not 0.0 < ev.affected_fraction <= 1.0:
                raise InvalidInputError("affected_fraction must be in (0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    """What was planted: anomalous users and per-event affected user sets."""

    anomalous_user_ids: tuple[str, ...]
    events: tuple[dict, ...] = field(default_factory=tuple)


def _user_id(index: int, n_users: int) -> str:
    width = max(4, len(str(n_users - 1)))
    return f"u{index:0{width}d}"


def _affected_users(cfg: SynthConfig, event_index: int, spec: EventSpec) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1, event_index]))
    count = max(1, int(round(spec.affected_fraction * cfg.n_users)))
    return np.sort(rng.choice(cfg.n_users, size=count, replace=False))


def _event_mask(cfg: SynthConfig, affected: list[np.ndarray], user: int) -> np.ndarray:
    """Boolean per hour: is this user running hot because of an event."""
    mask = np.zeros(cfg.window_hours, dtype=bool)
    for spec, users in zip(cfg.event_specs, affected):
        if user in users:
            mask[spec.start_hour : spec.end_hour + 1] = True
    return mask


def _user_stream(cfg: SynthConfig, user: int, hot_hours: np.ndarray) -> np.ndarray:
    """Integer arrival timestamps for one user (strictly increasing)."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0, user]))
    persistent = user in cfg.persistent_anomalous
    end = cfg.window_start + HOUR * cfg.window_hours

    out: list[int] = []
    t = float(cfg.window_start)
    last = cfg.window_start - 1
    msg_index = 0
    while True:
        if persistent:
            scale = _REGIME_SCALES[(msg_index // _REGIME_BLOCK) % 2] * HOUR / cfg.burst_rate
        else:
            hour = min(int((t - cfg.window_start) // HOUR), cfg.window_hours - 1)
            rate = cfg.burst_rate if hot_hours[hour] else cfg.base_rate
            scale = HOUR / rate
        t += rng.exponential(scale)
        if t >= end:
            break
        ts = int(t)
        if ts <= last:  # integer-second collision: push forward one second
            ts = last + 1
            if ts >= end:
                break
        out.append(ts)
        last = ts
        msg_index += 1
    return np.asarray(out, dtype=np.int64)


def generate(cfg: SynthConfig) -> tuple[NotificationLog, GroundTruth]:
    """Produce a sorted notification log plus the planted ground truth."""
    affected = [_affected_users(cfg, i, spec) for i, spec in enumerate(cfg.event_specs)]

    users: list[str] = []
    stamps: list[np.ndarray] = []
    for u in range(cfg.n_users):
        ts = _user_stream(cfg, u, _event_mask(cfg, affected, u))
        uid = _user_id(u, cfg.n_users)
        users.extend([uid] * ts.size)
        stamps.append(ts)

    all_ts = np.concatenate(stamps) if stamps else np.empty(0, dtype=np.int64)
    user_arr = np.asarray(users, dtype=object)
    # streams are generated per user in id order with increasing timestamps,
    # so the log is already sorted by (user, timestamp)
    all_ts.flags.writeable = False
    log = NotificationLog(user_arr, all_ts, cfg.window_start, cfg.window_hours)

    truth = GroundTruth(
        anomalous_user_ids=tuple(
            _user_id(u, cfg.n_users) for u in sorted(cfg.persistent_anomalous)
        ),
        events=tuple(
            {
                "start_hour": spec.start_hour,
                "end_hour": spec.end_hour,
                "affected_user_ids": [_user_id(int(u), cfg.n_users) for u in affected[i]],
            }
            for i, spec in enumerate(cfg.event_specs)
        ),
    )
    return log, truth
