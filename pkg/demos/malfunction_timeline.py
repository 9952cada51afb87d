"""SINR blackout: correction terms fire, hold and clear while the map stays frozen.

    python3 demos/malfunction_timeline.py

Prints the robot's measured SINR, the twin's SINR prediction and the
local model at the robot every half second, with trigger activity.
"""

import numpy as np

from hybrid_ndt.config import load_config
from hybrid_ndt.netsim import run_scenario
from hybrid_ndt.pipeline import TwinTrainer


def main():
    cfg = load_config("malfunction.cfg")
    obs = run_scenario(cfg.scenario)
    tr = TwinTrainer(cfg)
    (blackout,) = cfg.scenario.events
    print(f"blackout of station {blackout.station} from t={blackout.start:g} s "
          f"for {blackout.duration:g} s; window T={cfg.twin.window:g} s\n")
    print(f"{'t':>6} {'cell':>4} {'SINR':>7} {'pred':>7} {'local':>7} {'updates':>8}  flags")
    for k, o in enumerate(obs):
        row = tr.process(o)
        if k % 10 == 0 or row["trigger_flags"]:
            print(f"{o.t:6.2f} {o.cell:4d} {o.q[1]:7.2f} {tr.twin.predict(o.x)[1]:7.2f} "
                  f"{tr.twin.base_model(o.x)[1]:7.2f} {row['sa_steps']:8d}  {row['trigger_flags']}")
    print()
    for a in tr.actions:
        print(f"{a.kind} on mode {a.mode} at t={a.t:g} s, magnitude {a.magnitude:.2f}: {a.action}")
    steps = np.array([r["sa_steps"] for r in tr.rows])
    print(f"\nupdates after convergence: {steps[-1] - steps[tr.converged_at]}")


if __name__ == "__main__":
    main()
