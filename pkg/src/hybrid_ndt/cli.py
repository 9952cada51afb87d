"""Command-line driver.

    hybrid-ndt simulate --config drift.cfg --out run/
    hybrid-ndt train    --config drift.cfg --stream run/stream.jsonl --out run/
    hybrid-ndt evaluate --snapshot run/model.json --out run/ --grid-res 100
    hybrid-ndt baseline --config drift.cfg --stream run/stream.jsonl --out run/mlp/
    hybrid-ndt compare  run/train_log.csv run/mlp/train_log.csv --config drift.cfg --out run/

Exit codes: 0 ok, 1 invalid input, 2 failure while running.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import io
from .config import ConfigError, RunConfig, load_config
from .core import RejectedRecordError, Workspace
from .netsim import manifest, run_scenario
from .pipeline import (EVENT_HEADER, LOG_HEADER, BaselineTrainer, GridEvaluator, TwinTrainer,
                       action_rows, converged_value, observations_to_threshold)

log = logging.getLogger("hybrid_ndt")

STREAM = "stream.jsonl"
MANIFEST = "manifest.json"
CONFIG_ECHO = "config.cfg"
MODEL = "model.json"
TRAIN_LOG = "train_log.csv"
EVENTS = "events.csv"
GRID = "grid.csv"
COMPARE = "compare.csv"

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

# Recovery means getting back within this factor of the pre-drift value.
RECOVER_FACTOR = 1.2
# Convergence threshold as a multiple of the reference converged value.
THRESHOLD_FACTOR = 2.0


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> RunConfig:
    if not args.config:
        raise UsageError("--config is required")
    return load_config(args.config, args.seed)


def _echo_config(out: Path, cfg: RunConfig):
    (out / CONFIG_ECHO).write_text(cfg.to_ini(), encoding="utf-8")


def _observations(args, cfg: RunConfig) -> list:
    if args.stream:
        if not Path(args.stream).is_file():
            raise FileNotFoundError(f"no such stream file: {args.stream}")
        return list(io.read_stream(args.stream))
    return run_scenario(cfg.scenario)


def _say(args, msg):
    if not args.quiet:
        print(msg)


# -- commands ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args.out)
    n = io.write_stream(out / STREAM, run_scenario(cfg.scenario))
    man = manifest(cfg.scenario)
    man["config_hash"] = io.config_hash(cfg.to_dict())
    man["records"] = n
    io.write_json(out / MANIFEST, man)
    _echo_config(out, cfg)
    _say(args, f"wrote {n} records to {out / STREAM}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    obs = _observations(args, cfg)
    out = _out_dir(args.out)
    evaluator = GridEvaluator(cfg.scenario, cfg.driver.eval_res)
    tr = TwinTrainer(cfg, evaluator).run(obs)
    if tr.state is None:
        raise UsageError("stream holds no observations")
    io.write_csv(out / TRAIN_LOG, LOG_HEADER, tr.rows)
    io.write_csv(out / EVENTS, EVENT_HEADER, action_rows(tr.actions))
    io.write_snapshot(out / MODEL, tr.state, tr.twin, cfg.to_dict())
    _echo_config(out, cfg)
    _say(args, f"trained on {tr.n_obs} observations: K={tr.twin.K}, "
               f"{len(tr.actions)} events, {tr.sa_steps} updates")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if not args.snapshot:
        raise UsageError("--snapshot is required")
    if args.grid_res is not None and args.grid_res <= 0:
        raise UsageError(f"--grid-res must be positive, got {args.grid_res}")
    if not Path(args.snapshot).is_file():
        raise FileNotFoundError(f"no such snapshot: {args.snapshot}")
    _, twin, config = io.read_snapshot(args.snapshot)
    if twin.K == 0:
        raise UsageError("snapshot holds an empty model")
    res = args.grid_res
    if res is None:
        res = int(config.get("evaluation", {}).get("grid_res", 100))
    out = _out_dir(args.out)
    ws = Workspace(twin.bounds.x_min, twin.bounds.x_max)
    X, modes, regions, preds = twin.grid_rows(ws, res)
    n = io.write_grid(out / GRID, X, modes, regions, preds)
    _say(args, f"wrote {n} grid rows to {out / GRID}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _config(args)
    obs = _observations(args, cfg)
    out = _out_dir(args.out)
    evaluator = GridEvaluator(cfg.scenario, cfg.driver.eval_res)
    bl = BaselineTrainer(cfg, evaluator).run(obs)
    io.write_csv(out / TRAIN_LOG, LOG_HEADER, bl.rows)
    _echo_config(out, cfg)
    _say(args, f"baseline trained on {bl.n_obs} observations, {bl.sgd_steps} SGD steps")
    return EXIT_OK


def _column(rows, key) -> list:
    vals = []
    for r in rows:
        v = r.get(key, "")
        vals.append(float(v) if v not in ("", None) else math.nan)
    return vals


def _drift_time(cfg: RunConfig | None):
    if cfg is None:
        return None
    times = [e.t for e in cfg.scenario.events if e.kind != "sinr_blackout"]
    return min(times) if times else None


def compare_logs(logs, drift_t=None, window: int = 50) -> tuple:
    """Align learning curves by observation count and summarize them.

    The first log is the reference.  Its converged value (the mean over the
    last ``window`` observations, or over the window before ``drift_t``)
    fixes one threshold shared by every log.
    """
    header0 = logs[0][0]
    for i, (header, _) in enumerate(logs[1:], start=2):
        if header != header0:
            raise UsageError(f"log {i} has columns {header}, expected {header0}")
    metric = "eval_mse"
    if any(all(math.isnan(v) for v in _column(rows, metric)) for _, rows in logs):
        metric = "running_mse"
    curves = [_column(rows, metric) for _, rows in logs]
    running = [_column(rows, "running_mse") for _, rows in logs]
    t_sim = _column(logs[0][1], "t_sim")

    ref = curves[0]
    i_drift = None
    if drift_t is not None:
        i_drift = next((k for k, t in enumerate(t_sim) if t >= drift_t), None)
    if i_drift is not None:
        conv = converged_value(ref[:i_drift], window)
    else:
        conv = converged_value(ref, window)
    threshold = THRESHOLD_FACTOR * conv
    stop = i_drift if i_drift is not None else None

    n = max(len(c) for c in curves)
    cols = ["step"]
    for i in range(1, len(logs) + 1):
        cols += [f"{metric}_{i}", f"running_mse_{i}"]
    rows = []
    for k in range(n):
        row = [k]
        for c, r in zip(curves, running):
            row += [c[k] if k < len(c) else math.nan, r[k] if k < len(r) else math.nan]
        rows.append(row)

    def summary(label, values):
        row = [label]
        for v in values:
            row += [math.nan if v is None else v, math.nan]
        return row

    hits = [observations_to_threshold(c[:stop] if stop else c, threshold) for c in curves]
    summaries = {"threshold": [threshold] * len(curves), "obs_to_threshold": hits}
    rows.append(summary("threshold", summaries["threshold"]))
    rows.append(summary("obs_to_threshold", hits))
    if i_drift is not None:
        recover = RECOVER_FACTOR * conv
        rec = [observations_to_threshold(c, recover, i_drift) for c in curves]
        summaries["recover_threshold"] = recover
        summaries["obs_to_recover"] = rec
        rows.append(summary("recover_threshold", [recover] * len(curves)))
        rows.append(summary("obs_to_recover", rec))
    return cols, rows, summaries


def cmd_compare(args) -> int:
    if len(args.logs) < 1:
        raise UsageError("compare needs at least one log")
    logs = [io.read_csv(p) for p in args.logs]
    cfg = load_config(args.config, args.seed) if args.config else None
    cols, rows, summ = compare_logs(logs, _drift_time(cfg))
    out = _out_dir(args.out)
    io.write_csv(out / COMPARE, cols, rows)
    _say(args, "observations to threshold: " + ", ".join(
        f"{p}={'never' if n is None else n}" for p, n in zip(args.logs, summ["obs_to_threshold"])))
    if "obs_to_recover" in summ:
        _say(args, "observations to recover: " + ", ".join(
            f"{p}={'never' if n is None else n}" for p, n in zip(args.logs, summ["obs_to_recover"])))
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hybrid-ndt", description="Hybrid network digital twin from streaming data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True, stream=False):
        if config:
            sp.add_argument("--config", help="scenario/run config (or a shipped name like drift.cfg)")
            sp.add_argument("--seed", type=int, help="override every seed in the config")
        if stream:
            sp.add_argument("--stream", help="observation stream (JSONL); simulated if omitted")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--quiet", action="store_true", help="print nothing on success")

    common(sub.add_parser("simulate", help="generate an observation stream"))
    common(sub.add_parser("train", help="identify the twin from a stream"), stream=True)
    ev = sub.add_parser("evaluate", help="export mode map and predictions on a grid")
    common(ev, config=False)
    ev.add_argument("--snapshot", help="model snapshot written by train")
    ev.add_argument("--grid-res", type=int, help="grid points per axis")
    common(sub.add_parser("baseline", help="train the MLP baseline on a stream"), stream=True)
    cp = sub.add_parser("compare", help="align learning curves from training logs")
    common(cp)
    cp.add_argument("logs", nargs="+", help="train_log.csv files; the first is the reference")
    return p


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate,
            "baseline": cmd_baseline, "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, io.StreamFormatError, io.SnapshotVersionError,
            RejectedRecordError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
