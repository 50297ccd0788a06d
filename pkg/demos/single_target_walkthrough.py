"""Locating one target: from the channel model to the two-stage power design.

Run with ``python demos/single_target_walkthrough.py [seed]``.
"""
import sys

import numpy as np

from irsloc.baselines import baseline_equal_power, baseline_random_phase
from irsloc.channel import build_channels
from irsloc.crb import evaluate
from irsloc.geometry import delay_gradients
from irsloc.scenario import generate_scenario
from irsloc.single import one_stage_solve, two_stage_solve

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 3
sc = generate_scenario(seed, n_irs=6, n_targets=1)
print(f"BS at {sc.bs_position}, target at {sc.target_positions[0]}")
for k, pos in enumerate(sc.irs_positions):
    print(f"  IRS {k}: {np.round(pos, 1)}")

# Each echo travels BS -> IRS k -> target -> IRS l, so the delay gradient of
# path (k, l) is the sum of the two unit vectors from the target.
geo = delay_gradients(sc)
ch = build_channels(sc)
print("\nx-gradients of the summed delays (rows: transmit IRS, cols: sensing IRS)")
print(np.round(geo.a[0], 3))

# Baselines first: equal power with aligned phases, then random phases.
eq = baseline_equal_power(sc)
rp = baseline_random_phase(sc)

# One stage: closed-form phases, then the power split from the ratio solver.
one_beams, one = one_stage_solve(sc)
# Two stage: drop IRSs the first solve left without power and solve again.
two_beams, two = two_stage_solve(sc)

print("\nworst-case CRB (m^2)")
for name, rep in (("equal power", eq), ("random phase", rp), ("one stage", one),
                  ("two stage", two)):
    print(f"  {name:>12}: {rep.worst_crb:.4e}")
print(f"\nactive IRSs after two stages: {two_beams.active_set}")
print("beam powers (W):", np.round(two_beams.p, 2))
print("stages:", [(s["active"], f"{s['crb']:.3e}") for s in two.trace["stages"]])

# CRB scales as 1/P_max: doubling every beam power halves it.
doubled = evaluate(sc, two_beams.scaled(2.0), channels=ch)
print(f"\ndoubling the power: CRB ratio {doubled.worst_crb / two.worst_crb:.6f}")
