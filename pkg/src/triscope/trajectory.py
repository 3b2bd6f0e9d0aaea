"""Per-user temporal trajectories in the feature-component space.

For each hour, a user's 10-feature vector is projected onto the columns of
the feature-mode factor matrix, giving one Q-dimensional point per hour.
The trajectory of a user is the time-ordered sequence of these points.
Projection uses the same (preprocessed) tensor the Tucker model was fit to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .ingest import FeatureTensor
from .tucker import TuckerModel

__all__ = ["Trajectory", "build_trajectories", "trajectory_distance"]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One point per hour; ``coords[t]`` is the Q-vector at hour ``t``."""

    user_id: str
    coords: np.ndarray  # (K, Q)

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise InvalidInputError(f"coords must be (hours, components), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("trajectory coordinates must be finite")
        object.__setattr__(self, "coords", c)

    @property
    def n_hours(self) -> int:
        return self.coords.shape[0]

    @property
    def n_components(self) -> int:
        return self.coords.shape[1]

    def flattened(self) -> np.ndarray:
        return self.coords.ravel()


def build_trajectories(ft: FeatureTensor, model: TuckerModel) -> list[Trajectory]:
    """Project every user's hourly feature vectors onto the feature factors.

    ``ft`` must be the preprocessed tensor the model was fit to; its feature
    extent has to match the factor's rows.
    """
    b = model.factor_b
    x = ft.tensor
    if x.shape[1] != b.shape[0]:
        raise InvalidInputError(
            f"tensor has {x.shape[1]} features but factor expects {b.shape[0]}"
        )
    # coords[u, t, :] = X[u, :, t] . B
    coords = np.einsum("ujt,jq->utq", x, b)
    return [Trajectory(uid, coords[u]) for u, uid in enumerate(ft.user_ids)]


def trajectory_distance(t1: Trajectory, t2: Trajectory) -> float:
    """Euclidean distance between two trajectories flattened to vectors."""
    if t1.coords.shape != t2.coords.shape:
        raise InvalidInputError(
            f"trajectory shapes differ: {t1.coords.shape} vs {t2.coords.shape}"
        )
    return float(np.linalg.norm(t1.flattened() - t2.flattened()))
