"""MLP given the twin's update budget: the same replay buffer, 250 SGD steps per observation.

    python3 demos/equal_budget_baseline.py

With this budget the MLP reaches the twin's convergence threshold slightly
earlier than the twin and settles at a lower grid MSE.  The speed advantage
in the default comparison therefore comes from the update budget, not from
the model class.  The twin still yields the discrete mode map, stops
updating once converged and reheats after drift.
"""

import dataclasses

import numpy as np

from hybrid_ndt.config import load_config
from hybrid_ndt.netsim import run_scenario
from hybrid_ndt.pipeline import (BaselineTrainer, GridEvaluator, TwinTrainer,
                                 observations_to_threshold)


def main():
    cfg = load_config("drift.cfg")
    obs = run_scenario(cfg.scenario)
    ev = GridEvaluator(cfg.scenario, cfg.driver.eval_res)
    i = next(k for k, o in enumerate(obs) if o.t >= 30.0)

    twin = TwinTrainer(cfg, ev).run(obs)
    E = np.array([r["eval_mse"] for r in twin.rows])
    thr = 2 * E[i - 20:i].mean()
    print(f"threshold {thr:.2f}; twin reaches it after "
          f"{observations_to_threshold(E[:i], thr)} observations ({twin.sa_steps} updates total)")

    for steps in (0, 250):
        c = dataclasses.replace(cfg, baseline=dataclasses.replace(cfg.baseline, replay_steps=steps))
        bl = BaselineTrainer(c, ev).run(obs)
        M = np.array([r["eval_mse"] for r in bl.rows])
        n = observations_to_threshold(M, thr)
        label = "online, 1 step/obs" if steps == 0 else f"replay, {steps} steps/obs"
        print(f"MLP {label:>20}: {'never' if n is None else n} observations, "
              f"{bl.sgd_steps} SGD steps, MSE before drift {M[i - 20:i].mean():.2f}, "
              f"final {M[-20:].mean():.2f}")


if __name__ == "__main__":
    main()
