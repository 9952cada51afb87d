import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrid_ndt.core import FeatureBounds, Observation, Workspace
from hybrid_ndt.oda import Annealer, TrainerConfig, TrainerState
from hybrid_ndt.divergence import WeightedSquaredEuclidean
from hybrid_ndt.triggers import (DispatchPolicy, EventKind, TriggerConfig, TriggerEvent,
                                 TriggerMonitor, check_cell, check_classification,
                                 check_regression, dispatch, maintain_correction)
from hybrid_ndt.twin import HybridNdtModel

WS = Workspace((0, 0), (10, 10))
B = FeatureBounds.for_workspace(WS, (-100, -10), (-20, 30))
LOCAL = {1: (-60.0, 15.0), 2: (-40.0, 20.0)}


def twin(**kw):
    mus = []
    for x, c in (((2.0, 5.0), 1), ((8.0, 5.0), 2)):
        q = LOCAL[c]
        mus.append(np.concatenate([(np.array(x) - B.lo[:2]) / B.span[:2],
                                   (np.array(q) - B.lo[2:]) / B.span[2:]]))
    return HybridNdtModel.from_prototypes(mus, [1, 2], B, **kw)


def o(t, x, q=None, cell=None):
    cell = cell if cell is not None else (1 if x[0] < 5 else 2)
    return Observation(t, x, LOCAL[cell] if q is None else q, cell)


def cfg(**kw):
    return TriggerConfig(**{"cooldown": 0.0, **kw})


# -- regression ----------------------------------------------------------------

def test_regression_zero_residual():
    assert check_regression(o(0, (1, 1)), twin(), cfg()) is None


def test_regression_fires_at_threshold_exactly():
    # residual (3, 4) has norm exactly 5
    ev = check_regression(o(0, (1, 1), (-57.0, 19.0)), twin(), cfg(eps_q=5.0))
    assert ev is not None and ev.kind is EventKind.REGRESSION and ev.magnitude == 5.0


def test_regression_below_threshold():
    assert check_regression(o(0, (1, 1), (-57.0, 19.0)), twin(), cfg(eps_q=5.0 + 1e-9)) is None


def test_regression_cooldown():
    mon = TriggerMonitor(TriggerConfig(eps_q=1.0, eps_tau=100, cooldown=2.0))
    m = twin()
    bad = (-50.0, 15.0)
    assert mon.observe(o(0.0, (1, 1), bad), m, classification=False) is not None
    assert mon.observe(o(1.0, (1, 1), bad), m, classification=False) is None
    assert mon.observe(o(2.0, (1, 1), bad), m, classification=False) is not None


# -- classification --------------------------------------------------------------

def test_classification_all_correct():
    window = [o(t, (1, 1)) for t in range(10)]
    assert check_classification(window, twin(), cfg(eps_s=1)) is None


def test_classification_boundary_count():
    window = [o(t, (1, 1), cell=2 if t < 5 else 1) for t in range(50)]
    ev = check_classification(window, twin(), cfg(eps_s=5))
    assert ev is not None and ev.magnitude == 5
    assert check_classification(window, twin(), cfg(eps_s=6)) is None


def test_classification_minimal_window():
    mon = TriggerMonitor(cfg(eps_s=1, window_len=1, eps_q=1e9, eps_tau=1e9))
    ev = mon.observe(o(0, (1, 1), LOCAL[1], cell=2), twin(), cell=False)
    assert ev is not None and ev.kind is EventKind.CLASSIFICATION


# -- cell-specific -----------------------------------------------------------------

def test_cell_zero_residual():
    assert check_cell(o(0, (1, 1)), twin(), cfg()) is None


def test_cell_sinr_drop_fires_with_magnitude():
    ev = check_cell(o(0, (1, 1), (-60.0, 0.0)), twin(), cfg(eps_tau=10.0))
    assert ev.kind is EventKind.CELL_SPECIFIC and ev.mode == 1 and ev.magnitude == 15.0


def test_cell_ignores_other_components():
    assert check_cell(o(0, (1, 1), (-90.0, 15.0)), twin(), cfg(eps_tau=10.0)) is None


def test_cell_at_threshold_exactly():
    assert check_cell(o(0, (1, 1), (-60.0, 5.0)), twin(), cfg(eps_tau=10.0)) is not None


def test_cell_component_index_checked():
    with pytest.raises(ValueError):
        check_cell(o(0, (1, 1)), twin(), cfg(tau=2))


# -- precedence and dispatch -----------------------------------------------------

def test_cell_event_outranks_regression():
    mon = TriggerMonitor(cfg(eps_q=1.0, eps_tau=10.0))
    ev = mon.observe(o(0, (1, 1), (-60.0, 0.0)), twin())
    assert ev.kind is EventKind.CELL_SPECIFIC


def test_corrected_fault_does_not_look_like_drift():
    m = twin()
    mon = TriggerMonitor(cfg(eps_q=6.0, eps_tau=10.0))
    fault = o(0.0, (1, 1), (-60.0, 0.0))
    ev = mon.observe(fault, m)
    dispatch(ev, None, m, DispatchPolicy(), fault)
    assert mon.observe(o(0.5, (1, 1), (-60.0, 0.0)), m) is None


class FakeTrainer:
    def __init__(self, lam):
        st = TrainerState.from_codevectors(TrainerConfig(), WeightedSquaredEuclidean([1] * 4),
                                           [[0.5] * 4], [1])
        st.lam = lam
        self.annealer = Annealer(st, perturb_first=False)

    def reheat(self, factor):
        self.annealer.reheat(factor)


@pytest.mark.parametrize("kind", [EventKind.REGRESSION, EventKind.CLASSIFICATION])
def test_drift_events_reheat(kind):
    tr = FakeTrainer(0.5)
    rec = dispatch(TriggerEvent(kind, 1.0, None, 9.0), tr, twin(), DispatchPolicy(1.1))
    assert rec.action == "reheat" and tr.annealer.state.lam == pytest.approx(0.55)


def test_cell_event_installs_correction():
    m = twin()
    ob = o(1.0, (1, 1), (-60.0, 0.0))
    rec = dispatch(TriggerEvent(EventKind.CELL_SPECIFIC, 1.0, 1, 15.0), None, m,
                   DispatchPolicy(), ob)
    assert rec.action == "correction" and m.correction_for(1, 1.0) is not None
    with pytest.raises(ValueError):
        dispatch(TriggerEvent(EventKind.CELL_SPECIFIC, 1.0, 1, 15.0), None, m, DispatchPolicy())


def test_maintain_refreshes_then_clears():
    m = twin()
    c = cfg(eps_tau=10.0)
    m.activate_correction(1, 0.0, o(0.0, (1, 1), (-60.0, 0.0)))
    assert maintain_correction(o(0.5, (1, 1), (-60.0, 1.0)), m, c) == "refresh"
    assert m.residual_physical(1)[1] == pytest.approx(-14.0)
    assert maintain_correction(o(1.0, (1, 1), (-60.0, 14.0)), m, c) == "clear"
    assert m.correction_for(1, 1.0) is None
    assert maintain_correction(o(1.5, (1, 1)), m, c) is None


def test_config_validation():
    for bad in ({"eps_q": 0}, {"eps_s": 0}, {"window_len": 0}, {"cooldown": -1}):
        with pytest.raises(ValueError):
            TriggerConfig(**bad)


# -- properties ---------------------------------------------------------------------

samples = st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10), st.floats(-100, -20),
                             st.floats(-10, 30), st.sampled_from([1, 2])),
                   min_size=1, max_size=40)


def _count(stream, c, **arm):
    mon = TriggerMonitor(c)
    m = twin()
    return sum(mon.observe(Observation(0.25 * k, (x, y), (r, s), cell), m, **arm) is not None
               for k, (x, y, r, s, cell) in enumerate(stream))


@settings(max_examples=40)
@given(samples, st.floats(0.5, 30), st.floats(0, 30))
def test_raising_eps_q_never_adds_events(stream, eps, extra):
    lo = TriggerConfig(eps_q=eps, cooldown=1.0)
    hi = TriggerConfig(eps_q=eps + extra, cooldown=1.0)
    arm = {"cell": False, "classification": False}
    assert _count(stream, hi, **arm) <= _count(stream, lo, **arm)


@settings(max_examples=40)
@given(samples, st.floats(0.5, 30), st.floats(0, 30))
def test_raising_eps_tau_never_adds_events(stream, eps, extra):
    lo = TriggerConfig(eps_tau=eps, cooldown=1.0)
    hi = TriggerConfig(eps_tau=eps + extra, cooldown=1.0)
    arm = {"regression": False, "classification": False}
    assert _count(stream, hi, **arm) <= _count(stream, lo, **arm)


@settings(max_examples=40)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=80))
def test_exact_reproduction_never_fires(points):
    mon = TriggerMonitor(TriggerConfig(eps_s=1, window_len=5))
    m = twin()
    for k, (x, y) in enumerate(points):
        cell = m.mode_of((x, y))
        q = tuple(m.base_model((x, y)))
        assert mon.observe(Observation(0.05 * k, (x, y), q, cell), m) is None


def test_event_log_is_deterministic():
    rng = np.random.default_rng(0)
    stream = [(rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(-100, -20),
               rng.uniform(-10, 30), int(rng.integers(1, 3))) for _ in range(200)]

    def log():
        mon = TriggerMonitor(TriggerConfig())
        m = twin()
        return [mon.observe(Observation(0.05 * k, (x, y), (r, s), c), m)
                for k, (x, y, r, s, c) in enumerate(stream)]

    assert log() == log()
