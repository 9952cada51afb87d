"""Drift scenario: twin with reheat, twin retrained from scratch, online MLP.

    python3 demos/drift_adaptation.py [--plot curves.png]

Prints grid MSE at a few checkpoints and the observation counts to reach
the convergence and recovery thresholds.
"""

import argparse

import numpy as np

from hybrid_ndt.config import load_config
from hybrid_ndt.netsim import run_scenario
from hybrid_ndt.pipeline import (BaselineTrainer, GridEvaluator, TwinTrainer,
                                 observations_to_threshold)


def curve(rows):
    return np.array([r["eval_mse"] for r in rows], dtype=float)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="drift.cfg")
    ap.add_argument("--plot", help="write learning curves to this image file")
    args = ap.parse_args()

    cfg = load_config(args.config)
    obs = run_scenario(cfg.scenario)
    ev = GridEvaluator(cfg.scenario, cfg.driver.eval_res)
    t_drift = min(e.t for e in cfg.scenario.events)
    i = next(k for k, o in enumerate(obs) if o.t >= t_drift)

    twin = TwinTrainer(cfg, ev).run(obs)
    scratch = TwinTrainer(cfg, ev).run(obs[i:])
    mlp = BaselineTrainer(cfg, ev).run(obs)
    E, S, M = curve(twin.rows), curve(scratch.rows), curve(mlp.rows)

    pre = E[i - 20:i].mean()
    print(f"{len(obs)} observations, drift at t={t_drift:g} s (observation {i})")
    print(f"twin: K={twin.twin.K}, {twin.sa_steps} updates, events "
          + ", ".join(f"{a.kind}@{a.t:g}s" for a in twin.actions))
    print(f"\n{'obs':>6} {'twin':>9} {'MLP':>9} {'scratch':>9}")
    for k in (50, 200, 400, i - 1, i + 50, i + 150, len(obs) - 1):
        s = f"{S[k - i]:9.2f}" if k >= i else f"{'':>9}"
        print(f"{k:6d} {E[k]:9.2f} {M[k]:9.2f} {s}")

    def fmt(n):
        return "never" if n is None else str(n)

    thr = 2 * pre
    print(f"\nobservations to MSE <= {thr:.2f}: twin {fmt(observations_to_threshold(E[:i], thr))}, "
          f"MLP {fmt(observations_to_threshold(M, thr))}")
    rec = 1.2 * pre
    print(f"observations after drift to MSE <= {rec:.2f}: reheat "
          f"{fmt(observations_to_threshold(E, rec, i))}, scratch "
          f"{fmt(observations_to_threshold(S, rec))}, MLP {fmt(observations_to_threshold(M, rec, i))}")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.semilogy(E, label="twin (reheat)")
        ax.semilogy(np.arange(i, len(obs)), S, label="twin (scratch)")
        ax.semilogy(M, label="MLP")
        ax.axvline(i, color="k", lw=0.5)
        ax.set_xlabel("observations")
        ax.set_ylabel("grid MSE")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"wrote {args.plot}")


if __name__ == "__main__":
    main()
