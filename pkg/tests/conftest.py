"""Shared fixtures.  Full scenario runs are expensive on one CPU, so each is
computed once per session and shared by every test that inspects it."""

from __future__ import annotations

import dataclasses

import pytest

from hybrid_ndt.config import load_config
from hybrid_ndt.core import FeatureBounds, Workspace
from hybrid_ndt.netsim import run_scenario
from hybrid_ndt.pipeline import BaselineTrainer, GridEvaluator, TwinTrainer

ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(scope="session")
def report():
    def _report(n: int, ok: bool, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        return ok
    return _report


@pytest.fixture
def ws():
    return Workspace((0.0, 0.0), (10.0, 10.0))


@pytest.fixture
def bounds(ws):
    return FeatureBounds.for_workspace(ws, (-100.0, -10.0), (-20.0, 30.0))


# -- shipped scenario runs ---------------------------------------------------------

class Run:
    """A scenario, its stream and lazily computed trainer runs."""

    def __init__(self, name):
        self.cfg = load_config(name)
        self.obs = run_scenario(self.cfg.scenario)
        self.evaluator = GridEvaluator(self.cfg.scenario, self.cfg.driver.eval_res)
        self._cache = {}

    def index_at(self, t):
        return next(k for k, o in enumerate(self.obs) if o.t >= t)

    def twin(self):
        if "twin" not in self._cache:
            self._cache["twin"] = TwinTrainer(self.cfg, self.evaluator).run(self.obs)
        return self._cache["twin"]

    def scratch(self, t):
        key = ("scratch", t)
        if key not in self._cache:
            self._cache[key] = TwinTrainer(self.cfg, self.evaluator).run(
                self.obs[self.index_at(t):])
        return self._cache[key]

    def prefix(self, t):
        key = ("prefix", t)
        if key not in self._cache:
            self._cache[key] = TwinTrainer(self.cfg).run(self.obs[:self.index_at(t)])
        return self._cache[key]

    def baseline(self, **over):
        key = ("baseline", tuple(sorted(over.items())))
        if key not in self._cache:
            cfg = self.cfg
            if over:
                cfg = dataclasses.replace(cfg, baseline=dataclasses.replace(cfg.baseline, **over))
            self._cache[key] = BaselineTrainer(cfg, self.evaluator).run(self.obs)
        return self._cache[key]


@pytest.fixture(scope="session")
def drift():
    return Run("drift.cfg")


@pytest.fixture(scope="session")
def malfunction():
    return Run("malfunction.cfg")


@pytest.fixture(scope="session")
def stationary():
    return Run("stationary.cfg")

