"""How the CRB scales with array size and transmit power.

Run with ``python demos/scaling_sweep.py``. Writes nothing; prints a table.
"""
import numpy as np

from irsloc.baselines import run_scheme
from irsloc.scenario import generate_scenario

trials = range(10)


def mean_crb(**params):
    return np.mean([run_scheme("two-stage", generate_scenario(s, **params)).worst_crb
                    for s in trials])


# Reflecting elements add coherent array gain (N^2); sensing elements add
# independent looks (M).
for name, key in (("N", "n_elem_x"), ("M", "m_sens_x")):
    sizes = np.array([5, 10, 20])
    means = np.array([mean_crb(**{key: n}) for n in sizes])
    slope = np.polyfit(np.log(2 * sizes), np.log(means), 1)[0]
    print(f"{name}: " + "  ".join(f"{2 * n}: {m:.3e}" for n, m in zip(sizes, means))
          + f"   log-log slope {slope:+.3f}")

# Transmit power enters every echo linearly.
for dbw in (10, 20, 30):
    print(f"P_max {dbw} dBW: {mean_crb(p_max=10 ** (dbw / 10)):.3e} m^2")
