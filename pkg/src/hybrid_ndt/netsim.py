"""Deterministic synthetic multi-cell radio environment.

Received power follows a log-distance path loss plus a spatially correlated
log-normal shadowing field per station.  SINR is computed from the noiseless
received powers of all stations, and Gaussian measurement noise is added to
both reported components.  A UE moves along a lawnmower or random-waypoint
trajectory and is served according to a hysteresis plus time-to-trigger
handover rule.  Power changes, station moves and SINR blackouts can be
injected at given times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .core import BaseStation, Observation, Workspace

TIME_DECIMALS = 6


@dataclass(frozen=True)
class RadioParams:
    pl0: float = 40.0
    n_pl: float = 2.5
    d0: float = 1.0
    shadow_sigma: float = 4.0
    d_corr: float = 10.0
    noise_floor: float = -100.0
    meas_noise: float = 0.5

    def __post_init__(self):
        if self.n_pl <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.shadow_sigma < 0 or self.meas_noise < 0:
            raise ValueError("standard deviations must be nonnegative")
        if self.d_corr <= 0 or self.d0 <= 0:
            raise ValueError("d_corr and d0 must be positive")


@dataclass(frozen=True)
class HandoverParams:
    hysteresis: float = 3.0
    time_to_trigger: float = 0.5

    def __post_init__(self):
        if self.hysteresis < 0 or self.time_to_trigger < 0:
            raise ValueError("hysteresis and time_to_trigger must be nonnegative")


# -- trajectories ---------------------------------------------------------------

def reflect(p: np.ndarray, lower, upper) -> np.ndarray:
    """Fold positions back into the box by mirror reflection at its faces."""
    lo, hi = np.asarray(lower, float), np.asarray(upper, float)
    span = hi - lo
    u = np.mod(np.asarray(p, float) - lo, 2 * span)
    return lo + np.where(u > span, 2 * span - u, u)


def _polyline_at(vertices: np.ndarray, s: np.ndarray) -> np.ndarray:
    seg = np.diff(vertices, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    s = np.clip(s, 0.0, cum[-1])
    k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    frac = np.divide(s - cum[k], seg_len[k], out=np.zeros_like(s), where=seg_len[k] > 0)
    return vertices[k] + frac[:, None] * seg[k]


@dataclass(frozen=True)
class Lawnmower:
    """Boustrophedon sweep along x, rows ``row_spacing`` apart, ping-pong in time.

    ``area`` restricts the sweep to a sub-box ``(lower, upper)`` of the workspace.
    """

    row_spacing: float = 5.0
    speed: float = 1.0
    area: tuple | None = None

    def __post_init__(self):
        if self.row_spacing <= 0 or self.speed <= 0:
            raise ValueError("row_spacing and speed must be positive")

    def vertices(self, workspace: Workspace) -> np.ndarray:
        lo, hi = (workspace.lower, workspace.upper) if self.area is None else self.area
        (x0, y0), (x1, y1) = lo, hi
        n_rows = max(1, int(math.floor((y1 - y0) / self.row_spacing)))
        pitch = (y1 - y0) / n_rows
        verts = []
        for r in range(n_rows):
            y = y0 + (r + 0.5) * pitch
            row = [(x0, y), (x1, y)] if r % 2 == 0 else [(x1, y), (x0, y)]
            verts.extend(row)
        return np.array(verts)

    def positions(self, times, workspace: Workspace) -> np.ndarray:
        verts = self.vertices(workspace)
        length = float(np.sum(np.linalg.norm(np.diff(verts, axis=0), axis=1)))
        s = self.speed * np.asarray(times, float)
        if length > 0:
            s = np.mod(s, 2 * length)
            s = np.where(s > length, 2 * length - s, s)
        return reflect(_polyline_at(verts, s), workspace.lower, workspace.upper)


@dataclass(frozen=True)
class RandomWaypoint:
    """Straight legs at constant speed between seeded uniform waypoints."""

    speed: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("speed must be positive")

    def positions(self, times, workspace: Workspace) -> np.ndarray:
        times = np.asarray(times, float)
        rng = np.random.default_rng([self.seed, 17])
        lo, hi = np.array(workspace.lower), np.array(workspace.upper)
        need = self.speed * (times.max() if times.size else 0.0)
        verts = [lo + (hi - lo) / 2]
        total = 0.0
        while total <= need:
            nxt = rng.uniform(lo, hi)
            total += float(np.linalg.norm(nxt - verts[-1]))
            verts.append(nxt)
        return reflect(_polyline_at(np.array(verts), self.speed * times), lo, hi)


# -- network events ------------------------------------------------------------

@dataclass(frozen=True)
class PowerChange:
    station: int
    tx_power: float
    t: float
    kind = "power_change"

    def manifest(self) -> dict:
        return {"kind": self.kind, "station": self.station, "t": self.t,
                "tx_power": self.tx_power}


@dataclass(frozen=True)
class StationMove:
    station: int
    position: tuple
    t: float
    kind = "station_move"

    def manifest(self) -> dict:
        return {"kind": self.kind, "station": self.station, "t": self.t,
                "position": list(self.position)}


@dataclass(frozen=True)
class SinrBlackout:
    station: int
    start: float
    duration: float
    kind = "sinr_blackout"

    @property
    def t(self) -> float:
        return self.start

    def active(self, t: float) -> bool:
        return self.start <= t < self.start + self.duration

    def manifest(self) -> dict:
        return {"kind": self.kind, "station": self.station, "start": self.start,
                "duration": self.duration}


@dataclass(frozen=True)
class Scenario:
    workspace: Workspace
    stations: tuple
    radio: RadioParams = field(default_factory=RadioParams)
    handover: HandoverParams = field(default_factory=HandoverParams)
    trajectory: object = field(default_factory=Lawnmower)
    sample_rate: float = 20.0
    duration: float = 60.0
    events: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "events", tuple(self.events))
        if not self.stations:
            raise ValueError("scenario needs at least one station")
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate station ids in {ids}")
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ValueError("duration and sample_rate must be positive")
        for ev in self.events:
            if ev.station not in ids:
                raise ValueError(f"event {ev.kind} names unknown station {ev.station}")
            end = ev.t + getattr(ev, "duration", 0.0)
            if not (0 <= ev.t <= self.duration and end <= self.duration):
                raise ValueError(f"event {ev.kind} at t={ev.t} outside [0, {self.duration}]")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def times(self) -> np.ndarray:
        return np.round(np.arange(self.n_samples) / self.sample_rate, TIME_DECIMALS)

    def stations_at(self, t: float) -> list:
        """Station states with every power change / move at or before ``t`` applied."""
        cur = {s.id: s for s in self.stations}
        for ev in sorted(self.events, key=lambda e: e.t):
            if ev.t > t:
                break
            s = cur[ev.station]
            if isinstance(ev, PowerChange):
                cur[ev.station] = replace(s, tx_power=ev.tx_power)
            elif isinstance(ev, StationMove):
                cur[ev.station] = replace(s, position=ev.position)
        return [cur[s.id] for s in self.stations]

    def blackout_active(self, station: int, t: float) -> bool:
        return any(isinstance(e, SinrBlackout) and e.station == station and e.active(t)
                   for e in self.events)


def manifest(scenario: Scenario) -> dict:
    return {"seed": scenario.seed, "duration": scenario.duration,
            "sample_rate": scenario.sample_rate, "n_samples": scenario.n_samples,
            "stations": [{"id": s.id, "position": list(s.position), "tx_power": s.tx_power}
                         for s in scenario.stations],
            "events": [e.manifest() for e in scenario.events]}


# -- shadowing -------------------------------------------------------------------

class ShadowField:
    """Gaussian field sampled on a regular grid, bilinearly interpolated."""

    def __init__(self, origin, spacing: float, values: np.ndarray):
        self.origin = np.asarray(origin, float)
        self.spacing = float(spacing)
        self.values = values

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        nx, ny = self.values.shape
        u = (X - self.origin) / self.spacing
        u[:, 0] = np.clip(u[:, 0], 0, nx - 1)
        u[:, 1] = np.clip(u[:, 1], 0, ny - 1)
        i = np.minimum(np.floor(u[:, 0]).astype(int), nx - 2) if nx > 1 else np.zeros(len(u), int)
        j = np.minimum(np.floor(u[:, 1]).astype(int), ny - 2) if ny > 1 else np.zeros(len(u), int)
        fx, fy = u[:, 0] - i, u[:, 1] - j
        v = self.values
        i1, j1 = np.minimum(i + 1, nx - 1), np.minimum(j + 1, ny - 1)
        return ((1 - fx) * (1 - fy) * v[i, j] + fx * (1 - fy) * v[i1, j]
                + (1 - fx) * fy * v[i, j1] + fx * fy * v[i1, j1])


def shadow_field(seed, workspace: Workspace, params: RadioParams,
                 station_id: int = 0) -> ShadowField:
    """Zero-mean field with covariance ``sigma^2 exp(-dist / d_corr)``.

    Sampled exactly on a grid of spacing at most ``d_corr / 4`` by circulant
    embedding: the grid sits in a periodic box padded by ten correlation
    lengths, whose covariance is diagonalized by the 2-D FFT.
    """
    lo, hi = np.array(workspace.lower), np.array(workspace.upper)
    extent = hi - lo
    h = params.d_corr / 4.0
    n = np.ceil(extent / h).astype(int) + 1
    h = float(np.max(extent / (n - 1)))
    if params.shadow_sigma == 0:
        return ShadowField(lo, h, np.zeros(tuple(n)))
    pad = int(math.ceil(10 * params.d_corr / h))
    m = [int(2 ** math.ceil(math.log2(k + pad))) for k in n]
    axes = []
    for size in m:
        k = np.arange(size)
        axes.append(np.minimum(k, size - k) * h)
    dist = np.hypot(axes[0][:, None], axes[1][None, :])
    cov = params.shadow_sigma ** 2 * np.exp(-dist / params.d_corr)
    eig = np.fft.fft2(cov).real
    eig = np.maximum(eig, 0.0)
    rng = np.random.default_rng([int(seed), int(station_id), 101])
    noise = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    sample = np.fft.fft2(np.sqrt(eig / (m[0] * m[1])) * noise).real
    return ShadowField(lo, h, sample[:n[0], :n[1]].copy())


# -- radio quantities --------------------------------------------------------------

def path_loss(dist, radio: RadioParams):
    dist = np.maximum(np.asarray(dist, float), radio.d0)
    return radio.pl0 + 10.0 * radio.n_pl * np.log10(dist / radio.d0)


def rsrp_at(x, station: BaseStation, field=None, radio: RadioParams = RadioParams(),
            rng=None):
    """RSRP in dBm; vectorized over rows of ``x``.  ``rng`` adds measurement noise."""
    X = np.asarray(x, float)
    dist = np.linalg.norm(X - np.asarray(station.position), axis=-1)
    val = station.tx_power - path_loss(dist, radio)
    if field is not None:
        val = val - (field(X) if X.ndim > 1 else field(X)[0])
    if rng is not None and radio.meas_noise > 0:
        val = val + rng.normal(0.0, radio.meas_noise, np.shape(val))
    return val


def dbm_to_mw(p):
    return 10.0 ** (np.asarray(p, float) / 10.0)


def sinr_from_rsrp(rsrp: np.ndarray, serving_idx, noise_floor: float) -> np.ndarray:
    """SINR (dB) of the serving column of ``rsrp`` (..., n_stations) in dBm."""
    p = dbm_to_mw(rsrp)
    sig = np.take_along_axis(p, np.asarray(serving_idx)[..., None], axis=-1)[..., 0]
    interf = p.sum(axis=-1) - sig
    return 10.0 * np.log10(sig / (interf + dbm_to_mw(noise_floor)))


def sinr_at(x, serving: int, stations, fields=None, radio: RadioParams = RadioParams(),
            rng=None):
    """SINR in dB of ``serving`` at ``x`` given every station's noiseless RSRP."""
    fields = fields or {}
    rsrp = np.stack([rsrp_at(x, s, fields.get(s.id), radio) for s in stations], axis=-1)
    idx = [s.id for s in stations].index(serving)
    val = sinr_from_rsrp(rsrp, np.full(rsrp.shape[:-1], idx), radio.noise_floor)
    if rng is not None and radio.meas_noise > 0:
        val = val + rng.normal(0.0, radio.meas_noise, np.shape(val))
    return val


# -- handover ---------------------------------------------------------------------

@dataclass
class HandoverState:
    serving: int
    candidate: int | None = None
    timer: float = 0.0

    @classmethod
    def strongest(cls, ids, rsrp) -> "HandoverState":
        return cls(int(ids[int(np.argmax(rsrp))]))


def serving_cell_step(state: HandoverState, rsrp: dict, dt: float,
                      params: HandoverParams) -> int:
    """Advance the handover state by one sample of duration ``dt``.

    The strongest neighbour that beats the serving cell by more than the
    hysteresis margin becomes the candidate; it takes over once it has held
    that margin continuously for ``time_to_trigger`` seconds.
    """
    best, best_val = None, rsrp[state.serving] + params.hysteresis
    for cid in sorted(rsrp):
        if cid != state.serving and rsrp[cid] > best_val:
            best, best_val = cid, rsrp[cid]
    if best is None:
        state.candidate, state.timer = None, 0.0
    elif best == state.candidate:
        state.timer += dt
    else:
        state.candidate, state.timer = best, 0.0
    if state.candidate is not None and state.timer >= params.time_to_trigger - 1e-9:
        state.serving, state.candidate, state.timer = state.candidate, None, 0.0
    return state.serving


# -- scenario execution -----------------------------------------------------------

class RadioEnvironment:
    """Shadow fields of a scenario plus noiseless field queries at any time."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.ids = [s.id for s in scenario.stations]
        self.fields = {s.id: shadow_field(scenario.seed, scenario.workspace, scenario.radio, s.id)
                       for s in scenario.stations}

    def rsrp_matrix(self, X, t: float) -> np.ndarray:
        """Noiseless RSRP (n, n_stations) of every station at time ``t``."""
        X = np.atleast_2d(np.asarray(X, float))
        return np.stack([rsrp_at(X, s, self.fields[s.id], self.scenario.radio)
                         for s in self.scenario.stations_at(t)], axis=1)

    def ground_truth(self, X, t: float, blackout: bool = False):
        """Best-server cell and its noiseless ``[rsrp, sinr]`` at positions ``X``."""
        R = self.rsrp_matrix(X, t)
        idx = np.argmax(R, axis=1)
        q = np.column_stack([R[np.arange(len(R)), idx],
                             sinr_from_rsrp(R, idx, self.scenario.radio.noise_floor)])
        cells = np.array(self.ids)[idx]
        if blackout:
            for k, c in enumerate(cells):
                if self.scenario.blackout_active(int(c), t):
                    q[k, 1] = 0.0
        return cells, q


def iter_scenario(scenario: Scenario, env: RadioEnvironment | None = None) -> Iterator[Observation]:
    env = env or RadioEnvironment(scenario)
    times = scenario.times()
    X = scenario.trajectory.positions(times, scenario.workspace)
    rng = np.random.default_rng([int(scenario.seed), 7919])
    radio, ids = scenario.radio, env.ids
    change_times = sorted({e.t for e in scenario.events if not isinstance(e, SinrBlackout)})
    ho = None
    dt = 1.0 / scenario.sample_rate
    k0 = 0
    while k0 < len(times):
        # stations are piecewise constant between event times
        t0 = times[k0]
        later = [c for c in change_times if c > t0]
        k1 = int(np.searchsorted(times, later[0], side="left")) if later else len(times)
        R = env.rsrp_matrix(X[k0:k1], t0)
        for k in range(k0, k1):
            t, r = float(times[k]), R[k - k0]
            if ho is None:
                ho = HandoverState.strongest(ids, r)
            else:
                serving_cell_step(ho, dict(zip(ids, r)), dt, scenario.handover)
            idx = ids.index(ho.serving)
            noise = rng.normal(0.0, radio.meas_noise, 2) if radio.meas_noise > 0 else np.zeros(2)
            rsrp = float(r[idx] + noise[0])
            sinr = float(sinr_from_rsrp(r, idx, radio.noise_floor) + noise[1])
            if scenario.blackout_active(ho.serving, t):
                sinr = 0.0
            yield Observation(t, tuple(float(c) for c in X[k]), (rsrp, sinr), ho.serving)
        k0 = k1


def run_scenario(scenario: Scenario) -> list:
    return list(iter_scenario(scenario))
