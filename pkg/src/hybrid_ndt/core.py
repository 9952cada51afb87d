"""Shared domain types and the augmented observation vector.

Positions live in a box-shaped workspace; quality vectors default to
``[rsrp (dBm), sinr (dB)]``.  Learning happens in a min-max normalized space
where every component of ``z = [x; q]`` sits roughly in ``[0, 1]``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

QUALITY_KEYS = ("rsrp", "sinr")


class RejectedRecordError(ValueError):
    """An observation that cannot enter the learning pipeline."""


def _as_tuple(v) -> tuple:
    return tuple(float(c) for c in np.atleast_1d(np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class Workspace:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo, hi = _as_tuple(self.lower), _as_tuple(self.upper)
        if len(lo) != len(hi) or len(lo) < 1:
            raise ValueError("workspace bounds must share a dimension >= 1")
        if not all(a < b for a, b in zip(lo, hi)):
            raise ValueError(f"workspace lower {lo} must be < upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return len(self.lower)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def clamp(self, x) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def grid(self, res: int) -> np.ndarray:
        """Cell-centred ``res x res`` grid of positions, shape ``(res*res, 2)``."""
        if res <= 0:
            raise ValueError("grid resolution must be positive")
        if self.d != 2:
            raise ValueError("grid evaluation is defined for 2-D workspaces")
        axes = [lo + (np.arange(res) + 0.5) * (hi - lo) / res
                for lo, hi in zip(self.lower, self.upper)]
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class BaseStation:
    id: int
    position: tuple
    tx_power: float

    def __post_init__(self):
        object.__setattr__(self, "position", _as_tuple(self.position))
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "tx_power", float(self.tx_power))


@dataclass(frozen=True)
class Observation:
    """One timestamped UE measurement ``(t, x, q, cell)``."""

    t: float
    x: tuple
    q: tuple
    cell: int

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "x", _as_tuple(self.x))
        object.__setattr__(self, "q", _as_tuple(self.q))
        object.__setattr__(self, "cell", int(self.cell))

    @property
    def rsrp(self) -> float:
        return self.q[0]

    @property
    def sinr(self) -> float:
        return self.q[1]


@dataclass(frozen=True)
class FeatureBounds:
    """Per-component ranges used for min-max scaling, plus block weights."""

    x_min: tuple
    x_max: tuple
    q_min: tuple
    q_max: tuple
    w_x: float = 1.0
    w_q: float = 1.0

    def __post_init__(self):
        for name in ("x_min", "x_max", "q_min", "q_max"):
            object.__setattr__(self, name, _as_tuple(getattr(self, name)))
        if len(self.x_min) != len(self.x_max) or len(self.q_min) != len(self.q_max):
            raise ValueError("bounds min/max lengths differ")
        for lo, hi in zip(self.x_min + self.q_min, self.x_max + self.q_max):
            if not lo < hi:
                raise ValueError(f"bound min {lo} must be < max {hi}")
        if self.w_x < 0 or self.w_q < 0 or (self.w_x == 0 and self.w_q == 0):
            raise ValueError("block weights must be nonnegative and not all zero")

    @classmethod
    def for_workspace(cls, workspace: Workspace, q_min, q_max, w_x=1.0, w_q=1.0):
        return cls(workspace.lower, workspace.upper, q_min, q_max, w_x, w_q)

    @property
    def d(self) -> int:
        return len(self.x_min)

    @property
    def l(self) -> int:
        return len(self.q_min)

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.x_min + self.q_min)

    @property
    def span(self) -> np.ndarray:
        return np.array(self.x_max + self.q_max) - self.lo

    @property
    def q_span(self) -> np.ndarray:
        return np.array(self.q_max) - np.array(self.q_min)

    @property
    def weights(self) -> np.ndarray:
        """Per-component weights of length ``d + l``."""
        return np.array([self.w_x] * self.d + [self.w_q] * self.l)

    @property
    def spatial_weights(self) -> np.ndarray:
        return np.full(self.d, self.w_x if self.w_x > 0 else 1.0)

    def to_dict(self) -> dict:
        return {"x_min": list(self.x_min), "x_max": list(self.x_max),
                "q_min": list(self.q_min), "q_max": list(self.q_max),
                "w_x": self.w_x, "w_q": self.w_q}


@dataclass(frozen=True)
class ObservationVector:
    z: np.ndarray
    label: int
    in_bounds: bool = True

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "label", int(self.label))


def normalize(obs: Observation, bounds: FeatureBounds) -> ObservationVector:
    raw = np.array(obs.x + obs.q, dtype=float)
    if raw.size != bounds.d + bounds.l:
        raise RejectedRecordError(
            f"observation has {raw.size} components, bounds expect {bounds.d + bounds.l}")
    if not np.all(np.isfinite(raw)):
        raise RejectedRecordError(f"non-finite component in observation at t={obs.t}")
    z = (raw - bounds.lo) / bounds.span
    in_bounds = bool(np.all((z >= -0.1) & (z <= 1.1)))
    return ObservationVector(z, obs.cell, in_bounds)


def normalize_arrays(x, q, bounds: FeatureBounds) -> np.ndarray:
    """Vectorized ``normalize`` for ``(n, d)`` positions and ``(n, l)`` qualities."""
    raw = np.hstack([np.atleast_2d(x), np.atleast_2d(q)])
    return (raw - bounds.lo) / bounds.span


def normalize_position(x, bounds: FeatureBounds) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    lo = np.array(bounds.x_min)
    return (x - lo) / (np.array(bounds.x_max) - lo)


def quality_to_physical(qn, bounds: FeatureBounds) -> np.ndarray:
    return np.asarray(qn) * bounds.q_span + np.array(bounds.q_min)


def quality_delta_to_physical(dqn, bounds: FeatureBounds) -> np.ndarray:
    return np.asarray(dqn) * bounds.q_span


def denormalize(v: ObservationVector, bounds: FeatureBounds, t: float = 0.0) -> Observation:
    raw = v.z * bounds.span + bounds.lo
    return Observation(t, raw[:bounds.d], raw[bounds.d:], v.label)


def spatial_part(v, d: int = 2) -> np.ndarray:
    z = getattr(v, "z", None)
    if z is None:
        z = getattr(v, "mu", v)
    z = np.asarray(z)
    if z.shape[-1] < d:
        raise ValueError(f"vector of length {z.shape[-1]} has no {d}-dim spatial block")
    return z[..., :d]


def quality_part(v, d: int = 2) -> np.ndarray:
    z = getattr(v, "z", None)
    if z is None:
        z = getattr(v, "mu", v)
    return np.asarray(z)[..., d:]


@dataclass
class StreamValidator:
    """Checks time ordering and workspace membership of incoming records.

    Out-of-workspace positions are clamped (and counted) unless ``reject`` is
    set, in which case they raise :class:`RejectedRecordError`.
    """

    workspace: Workspace
    reject: bool = False
    clamped: int = 0
    last_t: float = field(default=-math.inf)

    def __call__(self, obs: Observation) -> Observation:
        if obs.t < self.last_t:
            raise RejectedRecordError(f"time went backwards: {obs.t} < {self.last_t}")
        if not all(math.isfinite(c) for c in obs.x + obs.q):
            raise RejectedRecordError(f"non-finite component at t={obs.t}")
        self.last_t = obs.t
        if self.workspace.contains(obs.x):
            return obs
        if self.reject:
            raise RejectedRecordError(f"position {obs.x} outside workspace at t={obs.t}")
        self.clamped += 1
        if self.clamped == 1:
            warnings.warn("observation outside workspace clamped to bounds", stacklevel=2)
        return Observation(obs.t, self.workspace.clamp(obs.x), obs.q, obs.cell)
