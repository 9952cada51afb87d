"""Online deterministic annealing over label-constrained codevectors.

Each codevector is an augmented prototype ``mu = [position; quality]`` tied to
one cell label.  For a fixed temperature ``lam`` the prototypes follow a
Robbins-Monro recursion on two auxiliaries per codevector (``mass`` and
``weighted_sum``) whose ratio is the prototype itself.  Lowering ``lam`` level
by level, with perturbed copies injected at every level, lets the set of
distinct prototypes grow only where the data supports it.

A batch fixed-point iteration (:func:`fixed_point_oracle`) solves the same
per-temperature problem on an empirical sample and is used to check the
online recursion.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, asdict
from typing import Iterable, Iterator

import numpy as np

from .core import ObservationVector
from .divergence import WeightedSquaredEuclidean

log = logging.getLogger(__name__)

EPS_MASS = np.finfo(float).eps


class UnassignableObservation(LookupError):
    """No live codevector carries the observation's label."""


@dataclass
class TrainerConfig:
    lambda_start: float = 0.9
    lambda_decay: float = 0.9
    lambda_min: float = 0.005
    reheat_factor: float = 1.1
    b0: float = 1.0
    b1: float = 10.0
    convergence_tol: float = 1e-3
    probe_window: int = 50
    max_obs_per_level: int = 2000
    perturbation_delta: float = 0.01
    merge_tol: float = 1e-2
    prune_mass: float = 1e-3
    spawn_mass: float = 1e-2
    k_max: int = 256
    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.lambda_min < self.lambda_start < 1:
            raise ValueError("need 0 < lambda_min < lambda_start < 1")
        if not 0 < self.lambda_decay < 1:
            raise ValueError("lambda_decay must lie in (0, 1)")
        if not self.reheat_factor > 1:
            raise ValueError("reheat_factor must exceed 1")
        if self.b0 <= 0 or self.b1 <= 0:
            raise ValueError("step-size constants b0, b1 must be positive")
        if self.probe_window < 1 or self.max_obs_per_level < 1 or self.k_max < 1:
            raise ValueError("probe_window, max_obs_per_level and k_max must be >= 1")

    def beta(self, t: int) -> float:
        return self.b0 / (self.b1 + t)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Codevector:
    """Read-only view of one prototype."""

    mu: np.ndarray
    label: int
    mass: float
    weighted_sum: np.ndarray
    uid: int = -1


class TrainerState:
    """Codevector arrays plus temperature, step counter and known labels.

    Single owner, mutated in place by the functions in this module (they also
    return the state for chaining).  Use :meth:`copy` for snapshots.
    """

    def __init__(self, config: TrainerConfig, divergence, dim: int):
        self.config = config
        self.divergence = divergence
        self.dim = dim
        self.mu = np.zeros((0, dim))
        self.wsum = np.zeros((0, dim))
        self.mass = np.zeros(0)
        self.labels = np.zeros(0, dtype=int)
        self.uid = np.zeros(0, dtype=int)
        self.frozen = np.zeros(0, dtype=bool)
        self.lam = config.lambda_start
        self.step = 0
        self.known_labels: set = set()
        self.next_uid = 0
        self.total_steps = 0
        self.update_counts: dict = {}
        self.rng = np.random.default_rng(config.rng_seed)

    @classmethod
    def from_codevectors(cls, config, divergence, mus, labels, masses=None):
        mus = np.atleast_2d(np.asarray(mus, dtype=float))
        state = cls(config, divergence, mus.shape[1])
        k = len(mus)
        masses = np.full(k, 1.0 / k) if masses is None else np.asarray(masses, float)
        for m, lab, ms in zip(mus, labels, masses):
            state.add_codevector(m, int(lab), float(ms))
        return state

    @classmethod
    def cold_start(cls, config, divergence, samples: Iterable[ObservationVector]):
        """One codevector per label, placed at that label's first sample, mass 1/K."""
        first = {}
        for v in samples:
            first.setdefault(v.label, v.z)
        if not first:
            raise ValueError("cold start needs at least one sample")
        labels = sorted(first)
        return cls.from_codevectors(config, divergence, [first[c] for c in labels], labels)

    @property
    def K(self) -> int:
        return len(self.mass)

    @property
    def codevectors(self) -> list:
        return [Codevector(self.mu[i].copy(), int(self.labels[i]), float(self.mass[i]),
                           self.wsum[i].copy(), int(self.uid[i])) for i in range(self.K)]

    def add_codevector(self, mu, label: int, mass: float) -> int:
        mu = np.asarray(mu, dtype=float)
        self.mu = np.vstack([self.mu, mu])
        self.wsum = np.vstack([self.wsum, mu * mass])
        self.mass = np.append(self.mass, mass)
        self.labels = np.append(self.labels, int(label))
        self.uid = np.append(self.uid, self.next_uid)
        self.frozen = np.append(self.frozen, False)
        self.known_labels.add(int(label))
        self.next_uid += 1
        return self.K - 1

    def keep(self, idx):
        idx = np.asarray(idx, dtype=int)
        for name in ("mu", "wsum", "mass", "labels", "uid", "frozen"):
            setattr(self, name, getattr(self, name)[idx])

    def copy(self) -> "TrainerState":
        return copy.deepcopy(self)

    def total_mass(self) -> float:
        return float(self.mass.sum())

    def effective_count(self, tol: float | None = None) -> int:
        """Number of distinct (label, location) prototypes up to ``tol``."""
        tol = self.config.merge_tol if tol is None else tol
        reps: list = []
        for m, c in zip(self.mu, self.labels):
            if not any(c == rc and self.divergence(m, rm) < tol for rm, rc in reps):
                reps.append((m, c))
        return len(reps)


def _associate(state: TrainerState, z: np.ndarray, label: int):
    ok = (state.labels == label) & ~state.frozen
    ok &= state.mass > 0
    if not ok.any():
        raise UnassignableObservation(f"no live codevector with label {label}")
    d = state.divergence.to_many(z, state.mu[ok])
    logits = np.log(state.mass[ok]) - ((1.0 - state.lam) / state.lam) * d
    w = np.exp(logits - logits.max())
    p = np.zeros(state.K)
    p[ok] = w / w.sum()
    return p, ok, d


def gibbs_association(z, state: TrainerState, label: int | None = None) -> np.ndarray:
    """Mass-weighted Gibbs probabilities of ``z`` over all codevectors.

    Codevectors whose label differs from the observation's get exactly zero.
    """
    if isinstance(z, ObservationVector):
        z, label = z.z, z.label
    return _associate(state, np.asarray(z, dtype=float), label)[0]


def ensure_label(state: TrainerState, v: ObservationVector) -> bool:
    """Spawn a codevector for a never-seen label.  Returns True if one was added."""
    if v.label in state.known_labels and np.any((state.labels == v.label) & ~state.frozen):
        return False
    state.add_codevector(v.z, v.label, state.config.spawn_mass)
    return True


def sa_step(state: TrainerState, v: ObservationVector, frozen_labels=()) -> TrainerState:
    """One stochastic-approximation update of masses, weighted sums and prototypes.

    Codevectors whose label is in ``frozen_labels`` are left untouched.
    """
    _sa_update(state, v, frozen_labels)
    return state


def _sa_update(state: TrainerState, v: ObservationVector, frozen_labels=()) -> float:
    """Body of :func:`sa_step`; returns the expected divergence of ``v`` before the update."""
    cfg = state.config
    beta = cfg.b0 / (cfg.b1 + state.step)
    p, ok, d = _associate(state, v.z, v.label)
    expected_d = float(p[ok] @ d)
    live = ~state.frozen
    if frozen_labels:
        live &= ~np.isin(state.labels, list(frozen_labels))
    if live.all():
        state.mass += beta * (p - state.mass)
        state.wsum += beta * (np.outer(p, v.z) - state.wsum)
        moved = p > 0
    else:
        state.mass[live] += beta * (p[live] - state.mass[live])
        state.wsum[live] += beta * (np.outer(p[live], v.z) - state.wsum[live])
        moved = live & (p > 0)
    state.mu[moved] = state.wsum[moved] / state.mass[moved, None]
    if state.mass.min() < EPS_MASS:
        underflow = live & (state.mass < EPS_MASS)
        state.frozen |= underflow
        log.debug("froze %d codevectors on mass underflow", int(underflow.sum()))
    for lab in state.known_labels:
        if lab not in frozen_labels:
            state.update_counts[lab] = state.update_counts.get(lab, 0) + 1
    state.step += 1
    state.total_steps += 1
    return expected_d


# -- batch oracle -----------------------------------------------------------

@dataclass
class OracleResult:
    mu: np.ndarray
    labels: np.ndarray
    mass: np.ndarray
    iterations: int
    converged: bool
    free_energy: list = field(default_factory=list)


def _constrained_divergences(Z, labels, mu, mu_labels, divergence):
    D = divergence.pairwise(Z, mu)
    return np.where(np.asarray(labels)[:, None] == np.asarray(mu_labels)[None, :], D, np.inf)


def _gibbs_matrix(D, lam, log_mass=None):
    logits = -(1.0 - lam) / lam * D
    if log_mass is not None:
        logits = logits + log_mass[None, :]
    m = logits.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        raise UnassignableObservation("a sample has no codevector with its label")
    w = np.exp(logits - m)
    return w / w.sum(axis=1, keepdims=True)


def free_energy(Z, labels, mu, mu_labels, lam, divergence=None) -> float:
    """Free energy ``(1-lam) D - lam H`` at the optimal associations.

    Evaluated on the empirical measure of ``Z``; the constant ``H(Z)`` term is
    dropped.
    """
    Z = np.atleast_2d(Z)
    divergence = divergence or WeightedSquaredEuclidean(np.ones(Z.shape[1]))
    D = _constrained_divergences(Z, labels, mu, mu_labels, divergence)
    a = -(1.0 - lam) / lam * D
    m = a.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(a - m).sum(axis=1))
    return float(-lam * lse.mean())


def fixed_point_oracle(Z, labels, lam, init_mu, init_labels, divergence=None,
                       mass_weighted=False, tol=1e-10, max_iter=10_000) -> OracleResult:
    """Alternate Gibbs associations and conditional means until prototypes stop moving.

    With ``mass_weighted`` the associations carry the prototype masses, which is
    the fixed point the online recursion targets when prototypes have unequal
    mass.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if len(Z) == 0:
        raise ValueError("fixed_point_oracle needs a nonempty batch")
    labels = np.asarray(labels)
    mu = np.array(init_mu, dtype=float, copy=True)
    mu_labels = np.asarray(init_labels)
    divergence = divergence or WeightedSquaredEuclidean(np.ones(Z.shape[1]))
    mass = np.full(len(mu), 1.0 / len(mu))
    energies = [free_energy(Z, labels, mu, mu_labels, lam, divergence)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        D = _constrained_divergences(Z, labels, mu, mu_labels, divergence)
        log_mass = np.log(np.maximum(mass, 1e-300)) if mass_weighted else None
        P = _gibbs_matrix(D, lam, log_mass)
        tot = P.sum(axis=0)
        new_mu = mu.copy()
        has = tot > 0
        new_mu[has] = (P[:, has].T @ Z) / tot[has, None]
        mass = tot / len(Z)
        shift = np.max(np.abs(new_mu - mu))
        mu = new_mu
        energies.append(free_energy(Z, labels, mu, mu_labels, lam, divergence))
        if shift < tol:
            converged = True
            break
    if not converged:
        log.warning("fixed_point_oracle did not converge in %d iterations", max_iter)
    return OracleResult(mu, mu_labels.copy(), mass, it, converged, energies)


# -- structural moves ---------------------------------------------------------

def perturb(state: TrainerState) -> TrainerState:
    """Add one perturbed copy of every live codevector per known label.

    The original stays in place; it and its copies share its mass equally.
    Copies are offset by a seeded random direction of norm
    ``perturbation_delta``.  When ``k_max`` would be exceeded only the first
    codevectors (index order) are perturbed.
    """
    cfg = state.config
    targets = sorted(state.known_labels)
    n_copies = len(targets)
    if n_copies == 0:
        return state
    parents = [i for i in range(state.K) if not state.frozen[i]]
    budget = (cfg.k_max - state.K) // n_copies
    if budget < len(parents):
        log.warning("k_max=%d reached: perturbing %d of %d codevectors",
                    cfg.k_max, max(budget, 0), len(parents))
        parents = parents[:max(budget, 0)]
    for i in parents:
        share = state.mass[i] / (n_copies + 1)
        state.mass[i] = share
        state.wsum[i] = state.mu[i] * share
        for lab in targets:
            direction = state.rng.standard_normal(state.dim)
            direction /= np.linalg.norm(direction)
            state.add_codevector(state.mu[i] + cfg.perturbation_delta * direction, lab, share)
    return state


def merge_and_prune(state: TrainerState) -> TrainerState:
    """Fuse same-label prototypes closer than ``merge_tol``; drop light ones."""
    cfg = state.config
    alive = np.ones(state.K, dtype=bool)
    for i in range(state.K):
        if not alive[i]:
            continue
        for j in range(i + 1, state.K):
            if not alive[j] or state.labels[j] != state.labels[i]:
                continue
            if state.divergence(state.mu[j], state.mu[i]) < cfg.merge_tol:
                m = state.mass[i] + state.mass[j]
                if m > 0:
                    state.mu[i] = (state.mass[i] * state.mu[i] + state.mass[j] * state.mu[j]) / m
                state.mass[i] = m
                state.wsum[i] = state.mu[i] * m
                state.frozen[i] = state.frozen[i] and state.frozen[j]
                alive[j] = False
    heavy = alive & (state.mass >= cfg.prune_mass) & ~state.frozen
    for lab in np.unique(state.labels[alive]):
        of_label = alive & (state.labels == lab)
        if not np.any(heavy & of_label):
            idx = np.flatnonzero(of_label)
            heavy[idx[np.argmax(state.mass[idx])]] = True
    state.keep(np.flatnonzero(heavy))
    return state


def reheat(state: TrainerState, factor: float | None = None) -> TrainerState:
    """Raise the temperature and restart the step-size schedule."""
    factor = state.config.reheat_factor if factor is None else factor
    if factor <= 1:
        raise ValueError("reheat factor must exceed 1")
    state.lam = min(state.config.lambda_start, state.lam * factor)
    state.step = 0
    return state


# -- levels and the annealing schedule ---------------------------------------

@dataclass
class LevelStats:
    lam: float
    K: int
    n_obs: int
    mean_d: float
    converged: bool
    exhausted: bool = False


class Annealer:
    """Push-style driver of the annealing schedule.

    Feed samples one at a time with :meth:`feed`; the annealer runs a level
    until the largest prototype displacement over a probe window drops below
    ``convergence_tol`` (or the level budget is spent), then merges/prunes,
    lowers the temperature and perturbs for the next level.
    ``on_level_end(state)`` is called right after each merge/prune, before
    the next perturbation.
    """

    def __init__(self, state: TrainerState, perturb_first: bool = True, on_level_end=None):
        self.state = state
        self.levels: list = []
        self.done = False
        self.on_level_end = on_level_end
        self._begin_level(perturb_first)

    def _begin_level(self, do_perturb: bool):
        self.state.step = 0
        if do_perturb:
            perturb(self.state)
        self._n = 0
        self._dsum = 0.0
        self._anchor = self._snapshot()

    def _snapshot(self):
        return self.state.uid.copy(), self.state.mu.copy()

    def _displacement(self) -> float:
        uids, mus = self._anchor
        if not np.array_equal(uids, self.state.uid):
            return np.inf
        if len(mus) == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.state.mu - mus, axis=1)))

    def _consume(self, v: ObservationVector, frozen_labels=()):
        """One SA step; returns None while the level runs, else its convergence flag."""
        st, cfg = self.state, self.state.config
        if ensure_label(st, v):
            self._anchor = self._snapshot()
        self._dsum += _sa_update(st, v, frozen_labels)
        self._n += 1
        if self._n % cfg.probe_window == 0:
            if self._displacement() < cfg.convergence_tol:
                return True
            self._anchor = self._snapshot()
        if self._n >= cfg.max_obs_per_level:
            return False
        return None

    def _close_level(self, converged: bool, exhausted: bool = False) -> LevelStats:
        st = self.state
        merge_and_prune(st)
        stats = LevelStats(st.lam, st.K, self._n, self._dsum / max(self._n, 1),
                           converged, exhausted)
        self.levels.append(stats)
        if self.on_level_end is not None:
            self.on_level_end(st)
        log.debug("level lam=%.4f K=%d n=%d", stats.lam, stats.K, stats.n_obs)
        return stats

    def feed(self, v: ObservationVector, frozen_labels=()) -> LevelStats | None:
        """Consume one sample; returns the finished level's stats, if any."""
        if self.done:
            return None
        converged = self._consume(v, frozen_labels)
        if converged is None:
            return None
        stats = self._close_level(converged)
        st, cfg = self.state, self.state.config
        nxt = st.lam * cfg.lambda_decay
        if nxt < cfg.lambda_min or st.K >= cfg.k_max:
            self.done = True
            st.step = 0
        else:
            st.lam = nxt
            self._begin_level(True)
        return stats

    def reheat(self, factor: float | None = None):
        """Raise the temperature and resume training from the current prototypes."""
        reheat(self.state, factor)
        self.done = False
        self._begin_level(False)

    def extend(self):
        """Run one more perturbed level at the current (final) temperature."""
        self.done = False
        self._begin_level(True)


def run_level(state: TrainerState, stream: Iterable[ObservationVector],
              frozen_labels=()) -> LevelStats:
    """Run SA at the current temperature until convergence, then merge/prune."""
    ann = Annealer(state, perturb_first=False)
    for v in stream:
        converged = ann._consume(v, frozen_labels)
        if converged is not None:
            return ann._close_level(converged)
    return ann._close_level(False, exhausted=True)


@dataclass
class AnnealResult:
    state: TrainerState
    levels: list
    exhausted: bool


def anneal(state: TrainerState, stream: Iterable[ObservationVector]) -> AnnealResult:
    """Perturb, run a level, lower the temperature; repeat until ``lambda_min``."""
    it: Iterator = iter(stream)
    ann = Annealer(state)
    for v in it:
        ann.feed(v)
        if ann.done:
            return AnnealResult(state, ann.levels, False)
    ann._close_level(False, exhausted=True)
    ann.done = True
    return AnnealResult(state, ann.levels, True)
