"""INI run configuration: scenario, learner, twin, trigger and baseline settings.

Every key is validated up front; errors name the offending ``section.key``.
Sections::

    [scenario] seed, duration, sample_rate
    [workspace] lower, upper
    [station.<id>] position, tx_power
    [radio] [handover] [trajectory] [event.<name>]
    [features] [divergence] [trainer] [twin] [triggers] [driver] [baseline] [evaluation]
"""

from __future__ import annotations

import configparser
import dataclasses
import io as _io
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .core import BaseStation, FeatureBounds, Workspace
from .divergence import DivergenceError, from_config
from .netsim import (HandoverParams, Lawnmower, PowerChange, RadioParams, RandomWaypoint,
                     Scenario, SinrBlackout, StationMove)
from .oda import TrainerConfig
from .triggers import DispatchPolicy, TriggerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TwinParams:
    gamma_rho: float = 1.0
    gamma_n: float = 1.0
    window: float = 3.0

    def __post_init__(self):
        if self.gamma_rho <= 0 or self.gamma_n <= 0 or self.window <= 0:
            raise ValueError("filter gains and correction window must be positive")


@dataclass(frozen=True)
class DriverConfig:
    """How the streaming driver feeds the learners.

    Each observation lands in a spatial replay buffer (bins of ``bin_size``
    meters holding at most ``bin_capacity`` samples) and triggers
    ``steps_per_obs`` updates on samples drawn from it.  Training is declared
    converged once the schedule has finished and no new ground has been
    seen for ``novelty_horizon`` seconds.
    """

    steps_per_obs: int = 250
    bin_size: float = 2.0
    bin_capacity: int = 8
    novelty_horizon: float = 2.0
    mse_window: int = 50
    eval_res: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.steps_per_obs < 1 or self.bin_capacity < 1 or self.mse_window < 1:
            raise ValueError("steps_per_obs, bin_capacity and mse_window must be >= 1")
        if self.bin_size <= 0 or self.novelty_horizon < 0:
            raise ValueError("bin_size must be positive and novelty_horizon nonnegative")
        if self.eval_res < 0:
            raise ValueError("eval_res must be >= 0 (0 disables grid evaluation)")


@dataclass(frozen=True)
class BaselineConfig:
    """MLP settings.  ``replay_steps = 0`` takes one SGD step on each arriving
    observation; a positive value instead takes that many steps on samples
    drawn from the twin's spatial replay buffer (equal-budget comparison)."""

    hidden: int = 100
    lr: float = 0.01
    seed: int = 0
    replay_steps: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.lr <= 0 or self.replay_steps < 0:
            raise ValueError("hidden must be >= 1, lr > 0 and replay_steps >= 0")


@dataclass(frozen=True)
class EvaluationConfig:
    grid_res: int = 100

    def __post_init__(self):
        if self.grid_res <= 0:
            raise ValueError("grid_res must be positive")


@dataclass
class RunConfig:
    scenario: Scenario
    bounds: FeatureBounds
    divergence: dict
    trainer: TrainerConfig
    twin: TwinParams
    triggers: TriggerConfig
    policy: DispatchPolicy
    driver: DriverConfig
    baseline: BaselineConfig
    evaluation: EvaluationConfig
    raw: dict = field(default_factory=dict)
    source: str = ""

    def make_divergence(self):
        return from_config(self.divergence, self.bounds.d + self.bounds.l)

    def to_dict(self) -> dict:
        return {s: dict(kv) for s, kv in sorted(self.raw.items())}

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for s, kv in sorted(self.raw.items()):
            cp[s] = dict(sorted(kv.items()))
        buf = _io.StringIO()
        cp.write(buf)
        return buf.getvalue()


# -- value parsing -----------------------------------------------------------------

def _number(path, text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{path}: expected a number, got {text!r}") from None


def _integer(path, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{path}: expected an integer, got {text!r}") from None


def _vector(path, text, n=None):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    vals = tuple(_number(path, p.strip()) for p in parts)
    if n is not None and len(vals) != n:
        raise ConfigError(f"{path}: expected {n} comma-separated numbers, got {len(vals)}")
    return vals


def _dataclass_kwargs(cls, section: str, kv: dict, skip=()):
    """Convert ``kv`` to constructor kwargs using the dataclass field types."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    out = {}
    for key, text in kv.items():
        path = f"{section}.{key}"
        if key in skip:
            continue
        if key not in fields:
            raise ConfigError(f"{path}: unknown key (allowed: {', '.join(sorted(fields))})")
        default = fields[key].default
        out[key] = _integer(path, text) if isinstance(default, int) and not isinstance(
            default, bool) else _number(path, text)
    return out


def _build(cls, section: str, kv: dict, **extra):
    kwargs = _dataclass_kwargs(cls, section, kv, skip=tuple(extra))
    kwargs.update(extra)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _keys(section: str, kv: dict, allowed):
    for key in kv:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}: unknown key (allowed: {', '.join(allowed)})")


def _require(section: str, kv: dict, key: str):
    if key not in kv:
        raise ConfigError(f"{section}.{key}: required key missing")
    return kv[key]


# -- sections ------------------------------------------------------------------------

_KNOWN = {"scenario", "workspace", "radio", "handover", "trajectory", "features",
          "divergence", "trainer", "twin", "triggers", "driver", "baseline", "evaluation"}


def _trajectory(kv: dict):
    kind = kv.get("kind", "lawnmower")
    if kind == "lawnmower":
        _keys("trajectory", kv, ("kind", "row_spacing", "speed", "area"))
        area = None
        if "area" in kv:
            a = _vector("trajectory.area", kv["area"], 4)
            area = ((a[0], a[1]), (a[2], a[3]))
        args = {k: _number(f"trajectory.{k}", kv[k]) for k in ("row_spacing", "speed") if k in kv}
        try:
            return Lawnmower(area=area, **args)
        except ValueError as exc:
            raise ConfigError(f"trajectory: {exc}") from None
    if kind == "random_waypoint":
        _keys("trajectory", kv, ("kind", "speed", "seed"))
        try:
            return RandomWaypoint(_number("trajectory.speed", kv.get("speed", "1")),
                                  _integer("trajectory.seed", kv.get("seed", "0")))
        except ValueError as exc:
            raise ConfigError(f"trajectory: {exc}") from None
    raise ConfigError(f"trajectory.kind: unknown trajectory {kind!r}")


def _event(name: str, kv: dict):
    sec = f"event.{name}"
    kind = _require(sec, kv, "kind")
    station = _integer(f"{sec}.station", _require(sec, kv, "station"))
    if kind == "power_change":
        _keys(sec, kv, ("kind", "station", "tx_power", "t"))
        return PowerChange(station, _number(f"{sec}.tx_power", _require(sec, kv, "tx_power")),
                           _number(f"{sec}.t", _require(sec, kv, "t")))
    if kind == "station_move":
        _keys(sec, kv, ("kind", "station", "position", "t"))
        return StationMove(station, _vector(f"{sec}.position", _require(sec, kv, "position"), 2),
                           _number(f"{sec}.t", _require(sec, kv, "t")))
    if kind == "sinr_blackout":
        _keys(sec, kv, ("kind", "station", "start", "duration"))
        return SinrBlackout(station, _number(f"{sec}.start", _require(sec, kv, "start")),
                            _number(f"{sec}.duration", _require(sec, kv, "duration")))
    raise ConfigError(f"{sec}.kind: unknown event kind {kind!r}")


def parse_config(text: str, source: str = "<string>", seed: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    raw = {s: dict(cp[s]) for s in cp.sections()}
    if seed is not None:
        for sec in ("scenario", "trainer", "driver", "baseline"):
            raw.setdefault(sec, {})
        raw["scenario"]["seed"] = str(seed)
        raw["trainer"]["rng_seed"] = str(seed)
        raw["driver"]["seed"] = str(seed)
        raw["baseline"]["seed"] = str(seed)
    for s in raw:
        if s not in _KNOWN and not s.startswith(("station.", "event.")):
            raise ConfigError(f"{s}: unknown section")
    get = lambda s: raw.get(s, {})  # noqa: E731

    ws_kv = get("workspace")
    _keys("workspace", ws_kv, ("lower", "upper"))
    try:
        workspace = Workspace(_vector("workspace.lower", _require("workspace", ws_kv, "lower")),
                              _vector("workspace.upper", _require("workspace", ws_kv, "upper")))
    except ValueError as exc:
        raise ConfigError(f"workspace: {exc}") from None

    stations = []
    for s in sorted((s for s in raw if s.startswith("station.")), key=lambda s: s.split(".", 1)[1]):
        kv = raw[s]
        _keys(s, kv, ("position", "tx_power"))
        sid = _integer(f"{s} (id)", s.split(".", 1)[1])
        stations.append(BaseStation(sid, _vector(f"{s}.position", _require(s, kv, "position"),
                                                 workspace.d),
                                    _number(f"{s}.tx_power", _require(s, kv, "tx_power"))))
    events = [_event(s.split(".", 1)[1], raw[s]) for s in sorted(raw) if s.startswith("event.")]

    sc_kv = get("scenario")
    _keys("scenario", sc_kv, ("seed", "duration", "sample_rate"))
    try:
        scenario = Scenario(
            workspace, stations,
            radio=_build(RadioParams, "radio", get("radio")),
            handover=_build(HandoverParams, "handover", get("handover")),
            trajectory=_trajectory(get("trajectory")),
            sample_rate=_number("scenario.sample_rate", sc_kv.get("sample_rate", "20")),
            duration=_number("scenario.duration", sc_kv.get("duration", "60")),
            events=events,
            seed=_integer("scenario.seed", sc_kv.get("seed", "0")))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"scenario: {exc}") from None

    f_kv = get("features")
    _keys("features", f_kv, ("q_min", "q_max", "w_x", "w_q"))
    try:
        bounds = FeatureBounds.for_workspace(
            workspace,
            _vector("features.q_min", f_kv.get("q_min", "-100, -10"), 2),
            _vector("features.q_max", f_kv.get("q_max", "-20, 40"), 2),
            _number("features.w_x", f_kv.get("w_x", "1")),
            _number("features.w_q", f_kv.get("w_q", "1")))
    except ValueError as exc:
        raise ConfigError(f"features: {exc}") from None

    d_kv = get("divergence")
    _keys("divergence", d_kv, ("kind", "weights"))
    divergence = {"kind": d_kv.get("kind", "weighted_squared_euclidean")}
    if "weights" in d_kv:
        divergence["weights"] = list(_vector("divergence.weights", d_kv["weights"]))
    else:
        divergence["weights"] = bounds.weights.tolist()
    try:
        from_config(divergence, bounds.d + bounds.l)
    except DivergenceError as exc:
        raise ConfigError(f"divergence: {exc}") from None

    trainer = _build(TrainerConfig, "trainer", get("trainer"))
    trig_kv = dict(get("triggers"))
    reheat_text = trig_kv.pop("reheat_factor", None)
    triggers = _build(TriggerConfig, "triggers", trig_kv)
    reheat_factor = (trainer.reheat_factor if reheat_text is None
                     else _number("triggers.reheat_factor", reheat_text))
    try:
        policy = DispatchPolicy(reheat_factor)
    except ValueError as exc:
        raise ConfigError(f"triggers.reheat_factor: {exc}") from None

    return RunConfig(scenario, bounds, divergence, trainer,
                     _build(TwinParams, "twin", get("twin")), triggers, policy,
                     _build(DriverConfig, "driver", get("driver")),
                     _build(BaselineConfig, "baseline", get("baseline")),
                     _build(EvaluationConfig, "evaluation", get("evaluation")),
                     raw, source)


def load_config(path, seed: int | None = None) -> RunConfig:
    """Load a config file; a bare name like ``drift.cfg`` also finds shipped scenarios."""
    p = Path(path)
    if not p.is_file():
        shipped = resources.files("hybrid_ndt") / "scenarios" / p.name
        if p.parent == Path(".") and shipped.is_file():
            return parse_config(shipped.read_text(encoding="utf-8"), p.name, seed)
        raise ConfigError(f"config file not found: {path}")
    return parse_config(p.read_text(encoding="utf-8"), str(p), seed)


def shipped_scenarios() -> list:
    root = resources.files("hybrid_ndt") / "scenarios"
    return sorted(f.name for f in root.iterdir() if f.name.endswith(".cfg"))
