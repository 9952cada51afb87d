"""Streaming driver: feeds observations to the annealer, twin and triggers.

Trajectory data arrive strongly correlated in time, while the stochastic
approximation assumes samples drawn from a fixed distribution.  Every
observation therefore goes into a :class:`SpatialReplay` buffer, and each
arrival triggers a fixed number of updates on samples drawn from that
buffer, uniformly over visited space.  The MLP baseline takes one SGD step
per arriving observation unless configured to share the replay budget.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .baseline import MlpModel, mlp_forward, mlp_sgd_step
from .config import RunConfig
from .core import Observation, StreamValidator, normalize, normalize_position
from .netsim import RadioEnvironment, Scenario
from .oda import Annealer, TrainerState
from .triggers import (ActionRecord, EventKind, TriggerMonitor, dispatch,
                       maintain_correction)
from .twin import HybridNdtModel

LOG_HEADER = ["step", "t_sim", "lambda", "K", "sq_err", "running_mse", "running_class_err",
              "eval_mse", "sa_steps", "training", "trigger_flags"]
EVENT_HEADER = ["t", "kind", "mode", "magnitude", "action_taken"]


class SpatialReplay:
    """Recent samples kept per spatial bin; draws are uniform over bins.

    After :meth:`mark_stale` the stored samples still serve draws, but the
    first fresh sample landing in a bin evicts that bin's stale ones.
    """

    def __init__(self, bin_size: float, capacity: int, seed=0):
        self.bin_size = bin_size
        self.capacity = capacity
        self.bins: dict = {}
        self.keys: list = []
        self.epoch = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return sum(len(b) for b in self.bins.values())

    def add(self, x, item) -> bool:
        """Store ``item`` at physical position ``x``; True if the bin was new or stale."""
        key = tuple(int(math.floor(c / self.bin_size)) for c in x)
        b = self.bins.get(key)
        novel = False
        if b is None:
            b = self.bins[key] = deque(maxlen=self.capacity)
            self.keys.append(key)
            novel = True
        elif b[-1][0] < self.epoch:
            b.clear()
            novel = True
        b.append((self.epoch, item))
        return novel

    def mark_stale(self):
        self.epoch += 1

    def sample(self, accept=None, tries: int = 20):
        """Uniform bin, then uniform item; ``accept`` filters items (None if none found)."""
        if not self.keys:
            return None
        for _ in range(tries):
            b = self.bins[self.keys[int(self.rng.integers(len(self.keys)))]]
            item = b[int(self.rng.integers(len(b)))][1]
            if accept is None or accept(item):
                return item
        return None


class GridEvaluator:
    """Noiseless ground truth on a fixed grid, cached per network state."""

    def __init__(self, scenario: Scenario, res: int, env: RadioEnvironment | None = None):
        self.scenario = scenario
        self.env = env or RadioEnvironment(scenario)
        self.X = scenario.workspace.grid(res)
        self._cache: dict = {}

    def truth(self, t: float):
        key = tuple(e.t for e in self.scenario.events
                    if e.t <= t and getattr(e, "kind", "") != "sinr_blackout")
        if key not in self._cache:
            self._cache[key] = self.env.ground_truth(self.X, t)
        return self._cache[key]

    def mse(self, predict_many, t: float) -> float:
        _, q = self.truth(t)
        err = predict_many(self.X) - q
        return float(np.mean(err * err))

    def accuracy(self, modes_of, t: float) -> float:
        cells, _ = self.truth(t)
        return float(np.mean(modes_of(self.X) == cells))


@dataclass
class Rolling:
    n: int
    values: deque = field(default_factory=deque)
    total: float = 0.0

    def push(self, v: float) -> float:
        self.values.append(v)
        self.total += v
        if len(self.values) > self.n:
            self.total -= self.values.popleft()
        return self.total / len(self.values)


class TwinTrainer:
    """Online identification of the hybrid twin with event-triggered adaptation.

    Triggers are armed once the schedule has converged for the first time.
    Drift triggers are held back while the learner is adapting after a
    reheat; the cell-specific trigger stays armed.  After convergence the
    prototypes are frozen until a trigger fires.
    """

    def __init__(self, cfg: RunConfig, evaluator: GridEvaluator | None = None,
                 triggers: bool = True):
        self.cfg = cfg
        self.bounds = cfg.bounds
        self.divergence = cfg.make_divergence()
        self.twin = HybridNdtModel(cfg.bounds, cfg.twin.gamma_rho, cfg.twin.gamma_n,
                                   cfg.twin.window)
        d = cfg.driver
        self.replay = SpatialReplay(d.bin_size, d.bin_capacity, [d.seed, 3])
        self.monitor = TriggerMonitor(cfg.triggers)
        self.validator = StreamValidator(cfg.scenario.workspace)
        self.evaluator = evaluator
        self.use_triggers = triggers
        self.state: TrainerState | None = None
        self.annealer: Annealer | None = None
        self.converged = False
        self.armed = False
        self.last_novel_t = -math.inf
        self.n_obs = 0
        self.sa_steps = 0
        self.actions: list = []
        self.rows: list = []
        self.converged_at: int | None = None
        self._mse = Rolling(d.mse_window)
        self._cls = Rolling(d.mse_window)

    # dispatch target
    def reheat(self, factor: float):
        self.annealer.reheat(factor)
        self.replay.mark_stale()
        self.converged = False

    def _start(self, v):
        self.state = TrainerState.from_codevectors(self.cfg.trainer, self.divergence,
                                                   [v.z], [v.label], [1.0])
        self.annealer = Annealer(self.state, on_level_end=self.twin.sync)

    def _train(self, t: float, frozen: set) -> int:
        ann, steps = self.annealer, 0
        accept = (lambda v: v.label not in frozen) if frozen else None
        for _ in range(self.cfg.driver.steps_per_obs):
            v = self.replay.sample(accept)
            if v is None:
                break
            ann.feed(v, frozen)
            steps += 1
            if ann.done:
                if t - self.last_novel_t < self.cfg.driver.novelty_horizon:
                    ann.extend()
                else:
                    self.converged = True
                    self.armed = self.use_triggers
                    if self.converged_at is None:
                        self.converged_at = self.n_obs
                    break
        return steps

    def process(self, obs: Observation) -> dict:
        obs = self.validator(obs)
        twin = self.twin
        has_model = twin.K > 0
        if has_model:
            twin.advance_to(obs.t)
            err = np.asarray(obs.q) - twin.predict(obs.x)
            sq = float(np.mean(err * err))
            mismatch = float(twin.mode_of(obs.x) != obs.cell)
        else:
            sq, mismatch = math.nan, 1.0
            twin.t = obs.t
        flags = []

        if has_model and self.armed:
            kept = maintain_correction(obs, twin, self.cfg.triggers)
            if kept == "clear":
                flags.append("correction_cleared")
            ev = self.monitor.observe(obs, twin, regression=self.converged,
                                      classification=self.converged, cell=True)
            if ev is not None:
                rec = dispatch(ev, self, twin, self.cfg.policy, obs)
                if ev.kind is not EventKind.CELL_SPECIFIC:
                    self.last_novel_t = obs.t
                self.actions.append(rec)
                flags.append(f"{rec.kind}:{rec.action}")
        elif has_model:
            self.monitor.window.append(obs)

        frozen = {m for m in twin.corrections if twin.correction_for(m, obs.t) is not None}
        v = normalize(obs, self.bounds)
        steps = 0
        if obs.cell not in frozen:
            if self.replay.add(obs.x, v):
                self.last_novel_t = obs.t
        if self.state is None:
            self._start(v)
        if not self.converged:
            steps = self._train(obs.t, frozen)
            self.sa_steps += steps

        eval_mse = math.nan
        if self.evaluator is not None and twin.K > 0:
            eval_mse = self.evaluator.mse(twin.predict_many, obs.t)
        row = {"step": self.n_obs, "t_sim": obs.t, "lambda": self.state.lam, "K": self.state.K,
               "sq_err": sq, "running_mse": self._mse.push(sq) if has_model else math.nan,
               "running_class_err": self._cls.push(mismatch), "eval_mse": eval_mse,
               "sa_steps": self.sa_steps, "training": int(steps > 0),
               "trigger_flags": ";".join(flags)}
        self.rows.append(row)
        self.n_obs += 1
        return row

    def run(self, stream) -> "TwinTrainer":
        for obs in stream:
            self.process(obs)
        return self


class BaselineTrainer:
    """The MLP regressor trained by SGD on the stream.

    With ``replay_steps > 0`` it draws from a replay buffer built exactly like
    the twin's, which gives both learners the same update budget.
    """

    def __init__(self, cfg: RunConfig, evaluator: GridEvaluator | None = None):
        self.cfg = cfg
        self.bounds = cfg.bounds
        b = cfg.baseline
        self.model = MlpModel.init(cfg.bounds.d, cfg.bounds.l, b.hidden, b.seed)
        d = cfg.driver
        self.replay = SpatialReplay(d.bin_size, d.bin_capacity, [d.seed, 3])
        self.validator = StreamValidator(cfg.scenario.workspace)
        self.evaluator = evaluator
        self.n_obs = 0
        self.sgd_steps = 0
        self.rows: list = []
        self._mse = Rolling(d.mse_window)

    def predict_many(self, X) -> np.ndarray:
        qn = mlp_forward(self.model, normalize_position(np.atleast_2d(X), self.bounds))
        return qn * self.bounds.q_span + np.array(self.bounds.q_min)

    def process(self, obs: Observation) -> dict:
        obs = self.validator(obs)
        has_model = self.n_obs > 0
        err = np.asarray(obs.q) - self.predict_many(obs.x)[0]
        sq = float(np.mean(err * err))
        v = normalize(obs, self.bounds)
        d = self.bounds.d
        lr = self.cfg.baseline.lr
        if self.cfg.baseline.replay_steps:
            self.replay.add(obs.x, v)
            for _ in range(self.cfg.baseline.replay_steps):
                s = self.replay.sample()
                mlp_sgd_step(self.model, s.z[:d], s.z[d:], lr)
                self.sgd_steps += 1
        else:
            mlp_sgd_step(self.model, v.z[:d], v.z[d:], lr)
            self.sgd_steps += 1
        eval_mse = math.nan
        if self.evaluator is not None:
            eval_mse = self.evaluator.mse(self.predict_many, obs.t)
        row = {"step": self.n_obs, "t_sim": obs.t, "lambda": "", "K": "", "sq_err": sq,
               "running_mse": self._mse.push(sq) if has_model else math.nan,
               "running_class_err": "", "eval_mse": eval_mse, "sa_steps": self.sgd_steps,
               "training": 1, "trigger_flags": ""}
        self.rows.append(row)
        self.n_obs += 1
        return row

    def run(self, stream) -> "BaselineTrainer":
        for obs in stream:
            self.process(obs)
        return self


def action_rows(actions) -> list:
    return [{"t": a.t, "kind": a.kind, "mode": a.mode, "magnitude": a.magnitude,
             "action_taken": a.action} for a in actions]


# -- learning-curve analysis ---------------------------------------------------------

def observations_to_threshold(values, threshold: float, start: int = 0) -> int | None:
    """Observations after ``start`` until ``values`` first drops to ``threshold``."""
    for k in range(start, len(values)):
        v = values[k]
        if v is not None and not math.isnan(v) and v <= threshold:
            return k - start + 1
    return None


def converged_value(values, tail: int = 50) -> float:
    vals = [v for v in values[-tail:] if v is not None and not math.isnan(v)]
    return float(np.mean(vals)) if vals else math.nan
