"""Runtime hybrid twin: Voronoi regions, mode labels and first-order filters.

Every region ``j`` carries a prototype position, a constant local quality
model and a cell label.  The mode at a position is the label of its region.
Filtered versions of the prototype positions and of the regional quality
follow their targets with first-order dynamics ``x' = gamma (target - x)``,
integrated exactly, so the twin's output settles on the learned values and
moves smoothly when they change.  A per-mode correction term temporarily
shifts the quality target of every region in that mode.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np

from .core import (FeatureBounds, Observation, normalize, normalize_position,
                   quality_to_physical, quality_delta_to_physical)


@dataclass
class CorrectionTerm:
    mode: int
    t_k: float
    window: float
    residual: np.ndarray  # normalized quality units

    def __post_init__(self):
        if self.window <= 0:
            raise ValueError("correction window must be positive")
        self.residual = np.asarray(self.residual, dtype=float)

    @property
    def expires(self) -> float:
        return self.t_k + self.window

    def active(self, t: float) -> bool:
        return self.t_k <= t <= self.expires


def exact_filter_step(x, target, gamma: float, dt: float):
    """Exact solution of ``x' = gamma (target - x)`` after ``dt`` seconds."""
    return target + (np.asarray(x) - target) * math.exp(-gamma * dt)


class HybridNdtModel:
    """Live twin; single owner.  :meth:`copy` gives an independent snapshot."""

    def __init__(self, bounds: FeatureBounds, gamma_rho: float = 1.0,
                 gamma_n: float = 1.0, window: float = 3.0, t: float = 0.0):
        if gamma_rho <= 0 or gamma_n <= 0 or window <= 0:
            raise ValueError("filter gains and correction window must be positive")
        self.bounds = bounds
        self.gamma_rho = gamma_rho
        self.gamma_n = gamma_n
        self.window = window
        self.t = float(t)
        d, l = bounds.d, bounds.l
        self.uid = np.zeros(0, dtype=int)
        self.labels = np.zeros(0, dtype=int)
        self.rho_bar = np.zeros((0, d))
        self.q_bar = np.zeros((0, l))
        self.rho = np.zeros((0, d))
        self.qf = np.zeros((0, l))
        self.corrections: dict = {}
        self._sw = bounds.spatial_weights

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_prototypes(cls, mus, labels, bounds: FeatureBounds, uids=None, **kw):
        """Twin at equilibrium on the given normalized prototypes."""
        model = cls(bounds, **kw)
        model.set_prototypes(mus, labels, uids)
        model.rho = model.rho_bar.copy()
        model.qf = model.q_bar.copy()
        return model

    @classmethod
    def from_trainer(cls, state, bounds: FeatureBounds, **kw):
        return cls.from_prototypes(state.mu, state.labels, bounds, state.uid, **kw)

    def set_prototypes(self, mus, labels, uids=None):
        """Replace the learned parameters, carrying filter states over by uid.

        New prototypes start their filters at their own targets.
        """
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        labels = np.asarray(labels, dtype=int)
        uids = np.arange(len(mus)) if uids is None else np.asarray(uids, dtype=int)
        d = self.bounds.d
        rho_bar, q_bar = mus[:, :d].copy(), mus[:, d:].copy()
        rho, qf = rho_bar.copy(), q_bar.copy()
        if len(self.uid):
            pos = {u: i for i, u in enumerate(self.uid)}
            for j, u in enumerate(uids):
                i = pos.get(u)
                if i is not None:
                    rho[j], qf[j] = self.rho[i], self.qf[i]
        self.uid, self.labels = uids.copy(), labels.copy()
        self.rho_bar, self.q_bar, self.rho, self.qf = rho_bar, q_bar, rho, qf

    def sync(self, state):
        """Pull the trainer's current prototypes (an event-triggered parameter change)."""
        self.set_prototypes(state.mu, state.labels, state.uid)

    def copy(self) -> "HybridNdtModel":
        return copy.deepcopy(self)

    @property
    def K(self) -> int:
        return len(self.labels)

    @property
    def modes(self) -> dict:
        """Mode label -> indices of the regions whose union forms that mode."""
        return {int(c): np.flatnonzero(self.labels == c) for c in np.unique(self.labels)}

    # -- partition --------------------------------------------------------------

    def regions_of(self, X) -> np.ndarray:
        """Region index for each physical position in ``X`` (lowest index wins ties)."""
        xn = normalize_position(np.atleast_2d(X), self.bounds)
        diff = xn[:, None, :] - self.rho[None, :, :]
        return np.argmin((diff * diff) @ self._sw, axis=1)

    def region_of(self, x) -> int:
        xn = normalize_position(x, self.bounds)
        diff = self.rho - xn
        return int(np.argmin((diff * diff) @ self._sw))

    def mode_of(self, x) -> int:
        return int(self.labels[self.region_of(x)])

    def modes_of(self, X) -> np.ndarray:
        return self.labels[self.regions_of(X)]

    # -- outputs ----------------------------------------------------------------

    def correction_for(self, mode: int, t: float | None = None):
        t = self.t if t is None else t
        corr = self.corrections.get(int(mode))
        return corr if corr is not None and corr.active(t) else None

    def _delta(self, mode, t=None) -> np.ndarray:
        corr = self.correction_for(mode, t)
        return corr.residual if corr is not None else 0.0

    def local_model(self, x, mode: int | None = None) -> np.ndarray:
        """Unfiltered prediction ``Q_bar(region) + Delta`` in physical units.

        ``mode`` selects whose correction applies (default: the region's label).
        """
        j = self.region_of(x)
        mode = self.labels[j] if mode is None else mode
        return quality_to_physical(self.q_bar[j] + self._delta(mode), self.bounds)

    def base_model(self, x) -> np.ndarray:
        return quality_to_physical(self.q_bar[self.region_of(x)], self.bounds)

    def predict(self, x) -> np.ndarray:
        """Filtered twin output at the current time, physical units."""
        return quality_to_physical(self.qf[self.region_of(x)], self.bounds)

    def predict_many(self, X) -> np.ndarray:
        return quality_to_physical(self.qf[self.regions_of(X)], self.bounds)

    def local_many(self, X) -> np.ndarray:
        return quality_to_physical(self.q_targets()[self.regions_of(X)], self.bounds)

    # -- dynamics ---------------------------------------------------------------

    def q_targets(self, t: float | None = None) -> np.ndarray:
        targets = self.q_bar.copy()
        for mode, corr in self.corrections.items():
            if corr.active(self.t if t is None else t):
                targets[self.labels == mode] += corr.residual
        return targets

    def step_filters(self, dt: float, targets=None):
        """Advance both filters by ``dt`` with fixed targets."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        if targets is None:
            rho_t, q_t = self.rho_bar, self.q_targets()
        else:
            rho_t, q_t = targets
        self.rho = exact_filter_step(self.rho, rho_t, self.gamma_rho, dt)
        self.qf = exact_filter_step(self.qf, q_t, self.gamma_n, dt)
        self.t += dt
        return self

    def advance_to(self, t: float):
        """Step the filters to time ``t``, splitting the interval at correction expiries."""
        while self.t < t:
            nxt = min((c.expires for c in self.corrections.values() if self.t <= c.expires < t),
                      default=t)
            if nxt > self.t:
                self.step_filters(nxt - self.t)
                self.t = nxt
            if nxt < t:
                for mode in [m for m, c in self.corrections.items() if c.expires <= self.t]:
                    del self.corrections[mode]
        return self

    # -- corrections --------------------------------------------------------------

    def residual_of(self, obs: Observation) -> np.ndarray:
        """Normalized ``q - Q_bar(region(x))`` for an observation."""
        qn = normalize(obs, self.bounds).z[self.bounds.d:]
        return qn - self.q_bar[self.region_of(obs.x)]

    def activate_correction(self, mode: int, t_k: float, observed: Observation) -> CorrectionTerm:
        """Start (or restart) the correction of ``mode`` from an observation."""
        corr = CorrectionTerm(int(mode), float(t_k), self.window, self.residual_of(observed))
        self.corrections[int(mode)] = corr
        return corr

    def refresh_correction(self, obs: Observation) -> bool:
        corr = self.correction_for(obs.cell, obs.t)
        if corr is None:
            return False
        corr.residual = self.residual_of(obs)
        return True

    def clear_correction(self, mode: int) -> bool:
        return self.corrections.pop(int(mode), None) is not None

    def residual_physical(self, mode: int) -> np.ndarray | None:
        corr = self.corrections.get(int(mode))
        return None if corr is None else quality_delta_to_physical(corr.residual, self.bounds)

    # -- export -----------------------------------------------------------------

    def grid_rows(self, workspace, res: int):
        """``(x1, x2, mode, region, q_pred...)`` rows on a ``res x res`` grid."""
        X = workspace.grid(res)
        regions = self.regions_of(X)
        preds = quality_to_physical(self.qf[regions], self.bounds)
        return X, self.labels[regions], regions, preds


def region_of(x, model: HybridNdtModel) -> int:
    return model.region_of(x)


def mode_of(x, model: HybridNdtModel) -> int:
    return model.mode_of(x)


def predict_quality(t: float, x, model: HybridNdtModel) -> np.ndarray:
    model.advance_to(t)
    return model.predict(x)


def step_filters(model: HybridNdtModel, dt: float, targets=None) -> HybridNdtModel:
    return model.step_filters(dt, targets)


def activate_correction(model: HybridNdtModel, mode: int, t_k: float,
                        observed: Observation) -> HybridNdtModel:
    model.activate_correction(mode, t_k, observed)
    return model
