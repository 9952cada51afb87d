"""Persistence: observation streams (JSONL), model snapshots (JSON), CSV logs.

Floats are written in Python's shortest round-trip form, so reading a file
back gives bit-identical values and identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import FeatureBounds, Observation
from .divergence import from_config
from .oda import TrainerConfig, TrainerState
from .twin import CorrectionTerm, HybridNdtModel

SNAPSHOT_VERSION = 1
STREAM_KEYS = ("t", "x", "rsrp", "sinr", "cell")


class StreamFormatError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SnapshotVersionError(ValueError):
    pass


# -- observation streams ---------------------------------------------------------

def record_of(obs: Observation) -> dict:
    if len(obs.q) != 2:
        raise ValueError("stream records carry exactly [rsrp, sinr]")
    return {"t": round(obs.t, 6), "x": list(obs.x), "rsrp": obs.q[0],
            "sinr": obs.q[1], "cell": obs.cell}


def format_record(obs: Observation) -> str:
    return json.dumps(record_of(obs), separators=(",", ":"), allow_nan=False)


def parse_record(line: str, lineno: int = 1) -> Observation:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise StreamFormatError(lineno, f"malformed JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise StreamFormatError(lineno, "record is not a JSON object")
    for key in STREAM_KEYS:
        if key not in rec:
            raise StreamFormatError(lineno, f"missing key {key!r}")
    try:
        return Observation(rec["t"], rec["x"], (rec["rsrp"], rec["sinr"]), rec["cell"])
    except (TypeError, ValueError) as exc:
        raise StreamFormatError(lineno, f"bad field value ({exc})") from None


def write_stream(path, observations: Iterable[Observation]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obs in observations:
            fh.write(format_record(obs))
            fh.write("\n")
            n += 1
    return n


def read_stream(path) -> Iterator[Observation]:
    """Lazily yield observations; blank lines are skipped."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield parse_record(line, lineno)


# -- snapshots -------------------------------------------------------------------

def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def snapshot_dict(state: TrainerState, twin: HybridNdtModel, config: dict | None = None) -> dict:
    config = config or {}
    return {
        "version": SNAPSHOT_VERSION,
        "config_hash": config_hash(config),
        "config": config,
        "bounds": twin.bounds.to_dict(),
        "divergence": state.divergence.to_dict(),
        "trainer": {
            "config": state.config.to_dict(),
            "lambda": state.lam,
            "step": state.step,
            "total_steps": state.total_steps,
            "next_uid": state.next_uid,
            "known_labels": sorted(int(c) for c in state.known_labels),
            "codevectors": [
                {"uid": int(state.uid[i]), "label": int(state.labels[i]),
                 "mu": _floats(state.mu[i]), "mass": float(state.mass[i]),
                 "weighted_sum": _floats(state.wsum[i]), "frozen": bool(state.frozen[i])}
                for i in range(state.K)],
        },
        "twin": {
            "t": twin.t, "gamma_rho": twin.gamma_rho, "gamma_n": twin.gamma_n,
            "window": twin.window,
            "regions": [
                {"uid": int(twin.uid[j]), "label": int(twin.labels[j]),
                 "rho_bar": _floats(twin.rho_bar[j]), "q_bar": _floats(twin.q_bar[j]),
                 "rho": _floats(twin.rho[j]), "q_filter": _floats(twin.qf[j])}
                for j in range(twin.K)],
            "corrections": [
                {"mode": c.mode, "t_k": c.t_k, "window": c.window,
                 "residual": _floats(c.residual)}
                for _, c in sorted(twin.corrections.items())],
        },
    }


def write_snapshot(path, state: TrainerState, twin: HybridNdtModel,
                   config: dict | None = None) -> None:
    data = snapshot_dict(state, twin, config)
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True, allow_nan=False) + "\n",
                          encoding="utf-8")


def read_snapshot(path):
    """Load ``(trainer_state, twin, config)`` from a snapshot file."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    version = data.get("version")
    if version != SNAPSHOT_VERSION:
        raise SnapshotVersionError(
            f"snapshot version {version!r} is not supported (expected {SNAPSHOT_VERSION})")
    config = data.get("config", {})
    if data.get("config_hash") != config_hash(config):
        warnings.warn(f"config hash mismatch in {path}: snapshot may have been edited",
                      stacklevel=2)
    bounds = FeatureBounds(**data["bounds"])
    tr = data["trainer"]
    cfg = TrainerConfig(**tr["config"])
    dim = bounds.d + bounds.l
    state = TrainerState(cfg, from_config(data["divergence"], dim), dim)
    cvs = tr["codevectors"]
    if cvs:
        state.mu = np.array([c["mu"] for c in cvs], dtype=float)
        state.wsum = np.array([c["weighted_sum"] for c in cvs], dtype=float)
        state.mass = np.array([c["mass"] for c in cvs], dtype=float)
        state.labels = np.array([c["label"] for c in cvs], dtype=int)
        state.uid = np.array([c["uid"] for c in cvs], dtype=int)
        state.frozen = np.array([c["frozen"] for c in cvs], dtype=bool)
    state.lam = tr["lambda"]
    state.step = tr["step"]
    state.total_steps = tr["total_steps"]
    state.next_uid = tr["next_uid"]
    state.known_labels = set(tr["known_labels"])

    tw = data["twin"]
    twin = HybridNdtModel(bounds, tw["gamma_rho"], tw["gamma_n"], tw["window"], tw["t"])
    regs = tw["regions"]
    if regs:
        twin.uid = np.array([r["uid"] for r in regs], dtype=int)
        twin.labels = np.array([r["label"] for r in regs], dtype=int)
        twin.rho_bar = np.array([r["rho_bar"] for r in regs], dtype=float)
        twin.q_bar = np.array([r["q_bar"] for r in regs], dtype=float)
        twin.rho = np.array([r["rho"] for r in regs], dtype=float)
        twin.qf = np.array([r["q_filter"] for r in regs], dtype=float)
    for c in tw["corrections"]:
        twin.corrections[int(c["mode"])] = CorrectionTerm(c["mode"], c["t_k"], c["window"],
                                                          c["residual"])
    return state, twin, config


# -- CSV ---------------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    if v is None:
        return ""
    return v


def write_csv(path, header, rows) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(h) for h in header]
            w.writerow([_cell(v) for v in row])
            n += 1
    return n


def read_csv(path) -> tuple:
    """``(header, rows)`` with rows as dicts of strings."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such log file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def write_grid(path, X, modes, regions, preds) -> int:
    l = preds.shape[1]
    header = ["x1", "x2", "mode", "region"] + [f"q_pred_{k + 1}" for k in range(l)]
    rows = ([float(x[0]), float(x[1]), int(m), int(r)] + [float(v) for v in p]
            for x, m, r, p in zip(X, modes, regions, preds))
    return write_csv(path, header, rows)


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n", encoding="utf-8")
