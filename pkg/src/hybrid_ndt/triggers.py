"""Event triggers over the live stream and the adaptation they dispatch.

Three detectors run on each observation:

* regression: the quality residual against the twin's local model is large;
* classification: too many serving-cell mismatches in a rolling window;
* cell-specific: one quality component of the serving cell is off by a lot.

The first two point to a lasting change of the network and reheat the
trainer.  The third points to a temporary fault of one cell and installs a
correction term on that cell's mode instead of retraining.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, asdict

import numpy as np

from .core import Observation


class EventKind(str, enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"
    CELL_SPECIFIC = "cell_specific"


@dataclass
class TriggerConfig:
    eps_q: float = 6.0
    eps_s: int = 5
    eps_tau: float = 10.0
    tau: int = 1
    window_len: int = 50
    cooldown: float = 2.0

    def __post_init__(self):
        if self.eps_q <= 0 or self.eps_s <= 0 or self.eps_tau <= 0:
            raise ValueError("trigger thresholds must be positive")
        if self.window_len < 1:
            raise ValueError("window_len must be >= 1")
        if self.cooldown < 0:
            raise ValueError("cooldown must be nonnegative")
        if self.tau < 0:
            raise ValueError("tau must be a valid component index")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class TriggerEvent:
    kind: EventKind
    t: float
    mode: int | None
    magnitude: float


@dataclass(frozen=True)
class ActionRecord:
    t: float
    kind: str
    mode: int | None
    magnitude: float
    action: str


def regression_residual(obs: Observation, model) -> float:
    """Norm of ``q - (Q_bar + Delta)`` in physical units.

    The correction of the observation's serving cell is included, so a fault
    that is already being corrected does not look like a drift.
    """
    return float(np.linalg.norm(np.asarray(obs.q) - model.local_model(obs.x, mode=obs.cell)))


def cell_residual(obs: Observation, model, tau: int) -> float:
    """Signed residual of component ``tau`` against the uncorrected local model."""
    return float(obs.q[tau] - model.base_model(obs.x)[tau])


def check_regression(obs: Observation, model, cfg: TriggerConfig) -> TriggerEvent | None:
    r = regression_residual(obs, model)
    if r >= cfg.eps_q:
        return TriggerEvent(EventKind.REGRESSION, obs.t, None, r)
    return None


def count_mismatches(window, model) -> int:
    window = list(window)
    if not window:
        return 0
    modes = model.modes_of(np.array([o.x for o in window]))
    return int(sum(int(o.cell) != int(m) for o, m in zip(window, modes)))


def check_classification(window, model, cfg: TriggerConfig) -> TriggerEvent | None:
    window = list(window)
    n = count_mismatches(window, model)
    if window and n >= cfg.eps_s:
        return TriggerEvent(EventKind.CLASSIFICATION, window[-1].t, None, float(n))
    return None


def check_cell(obs: Observation, model, cfg: TriggerConfig) -> TriggerEvent | None:
    if cfg.tau >= len(obs.q):
        raise ValueError(f"tau={cfg.tau} out of range for {len(obs.q)} quality components")
    r = abs(cell_residual(obs, model, cfg.tau))
    if r >= cfg.eps_tau:
        return TriggerEvent(EventKind.CELL_SPECIFIC, obs.t, obs.cell, r)
    return None


class TriggerMonitor:
    """Runs the three detectors with precedence, cooldowns and a mismatch window.

    At most one event is emitted per observation; the cell-specific check
    wins over regression, which wins over classification.  ``regression``
    and ``cell`` arm the respective detectors for this call (the driver
    disarms them while the model is still being learned).
    """

    def __init__(self, cfg: TriggerConfig):
        self.cfg = cfg
        self.window: deque = deque(maxlen=cfg.window_len)
        self._last: dict = {}

    def _cooled(self, key, t: float) -> bool:
        last = self._last.get(key)
        return last is None or t - last >= self.cfg.cooldown

    def observe(self, obs: Observation, model, regression: bool = True,
                classification: bool = True, cell: bool = True) -> TriggerEvent | None:
        cfg = self.cfg
        self.window.append(obs)
        if cell and model.correction_for(obs.cell, obs.t) is None:
            ev = check_cell(obs, model, cfg)
            if ev is not None and self._cooled((ev.kind, ev.mode), obs.t):
                self._last[(ev.kind, ev.mode)] = obs.t
                return ev
            if ev is not None:
                return None  # a cooling-down fault still outranks the global checks
        if regression:
            ev = check_regression(obs, model, cfg)
            if ev is not None and self._cooled(ev.kind, obs.t):
                self._last[ev.kind] = obs.t
                return ev
        if classification and len(self.window) == cfg.window_len:
            ev = check_classification(self.window, model, cfg)
            if ev is not None and self._cooled(ev.kind, obs.t):
                self._last[ev.kind] = obs.t
                self.window.clear()
                return ev
        return None


@dataclass
class DispatchPolicy:
    reheat_factor: float = 1.1

    def __post_init__(self):
        if self.reheat_factor <= 1:
            raise ValueError("reheat_factor must exceed 1")


def dispatch(event: TriggerEvent, trainer, twin, policy: DispatchPolicy,
             obs: Observation | None = None) -> ActionRecord:
    """Apply the adaptation for ``event``.

    ``trainer`` needs a ``reheat(factor)`` method.  Drift events reheat it;
    a cell-specific event starts a correction on ``twin`` from ``obs`` and the
    driver then holds back updates for that mode while the correction lives.
    """
    if event.kind is EventKind.CELL_SPECIFIC:
        if obs is None:
            raise ValueError("a cell-specific event needs the observation that raised it")
        twin.activate_correction(event.mode, event.t, obs)
        action = "correction"
    else:
        trainer.reheat(policy.reheat_factor)
        action = "reheat"
    return ActionRecord(event.t, event.kind.value, event.mode, event.magnitude, action)


def maintain_correction(obs: Observation, twin, cfg: TriggerConfig) -> str | None:
    """Refresh or end the active correction of ``obs.cell``.

    While the fault persists the residual is refreshed from the observation.
    Once the faulty component is back within ``eps_tau`` of the learned model
    the correction is dropped early.
    """
    if twin.correction_for(obs.cell, obs.t) is None:
        return None
    if abs(cell_residual(obs, twin, cfg.tau)) >= cfg.eps_tau:
        twin.refresh_correction(obs)
        return "refresh"
    twin.clear_correction(obs.cell)
    return "clear"
