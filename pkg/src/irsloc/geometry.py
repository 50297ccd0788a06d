"""Network geometry: positions, bistatic delays and delay gradients.

Everything here is stored in linear SI units. Conversions from dB-style
configuration values happen once, in :func:`Scenario.from_db`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8


def db_to_linear(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def dbm_to_watt(x_dbm):
    return db_to_linear(x_dbm) * 1e-3


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration caps for both solvers.

    ``eps_inner``/``eps_outer`` drive the single-target ADMM/Dinkelbach
    loops; ``mt_eps_power``/``mt_eps_match`` drive the alternating loop and
    the bisection of the multi-target solver.
    """

    eps_inner: float = 1e-8
    eps_outer: float = 1e-6
    max_inner: int = 5000
    max_outer: int = 50
    zero_power_tol: float = 1e-8
    mt_eps_power: float = 1e-3
    mt_eps_match: float = 1e-2
    mt_max_rounds: int = 30
    mt_max_bisection: int = 60
    mt_zero_power_tol: float = 1e-6
    sca_tol: float = 1e-6
    sca_max_iter: int = 30
    randomization_trials: int = 200
    # "screened" starts from the best of several candidate phase sets; "ones" or "centroid" force one
    theta_init: str = "screened"
    screen_draws: int = 16
    # "exact" seeds the power SCA at the exact convex optimum, "scaled" at a rescaled feasible point
    power_start: str = "exact"


@dataclass(frozen=True)
class Scenario:
    """Network layout, radio constants and solver settings.

    Arrays are read-only views; build modified copies with
    :meth:`with_updates` rather than mutating in place.
    """

    bs_position: np.ndarray
    irs_positions: np.ndarray
    target_positions: np.ndarray
    n_tx: int = 12
    n_elem_x: int = 5
    n_elem_z: int = 2
    m_sens_x: int = 5
    m_sens_z: int = 2
    wavelength: float = 0.3
    rcs: float = float(db_to_linear(7.0))
    p_max: float = float(db_to_linear(20.0))
    noise_power: float = float(dbm_to_watt(-110.0))
    eta: float = 1.0
    pulse_width: float = 1e-11
    spacing_ratio: float = 0.5
    rng_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        bs = np.array(self.bs_position, dtype=float).reshape(3)
        irs = np.array(self.irs_positions, dtype=float).reshape(-1, 3)
        tgt = np.array(self.target_positions, dtype=float).reshape(-1, 3)
        for arr in (bs, irs, tgt):
            arr.setflags(write=False)
        object.__setattr__(self, "bs_position", bs)
        object.__setattr__(self, "irs_positions", irs)
        object.__setattr__(self, "target_positions", tgt)
        self.validate()

    def validate(self):
        if self.n_irs < 1 or self.n_targets < 1:
            raise ValueError("need at least one IRS and one target")
        if self.n_tx < self.n_irs:
            raise ValueError(
                f"n_tx={self.n_tx} < K={self.n_irs}: zero-forcing needs N_T >= K")
        for name in ("n_elem_x", "n_elem_z", "m_sens_x", "m_sens_z"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("wavelength", "rcs", "p_max", "noise_power", "eta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.pulse_width < 0:
            raise ValueError("pulse_width must be non-negative")
        if np.any(np.abs(self.target_positions[:, 2]) > 0):
            raise ValueError("targets must lie in the z = 0 plane")
        d_bs = np.linalg.norm(self.irs_positions - self.bs_position, axis=1)
        d_it = np.linalg.norm(
            self.irs_positions[:, None, :] - self.target_positions[None, :, :], axis=2)
        if np.any(d_bs <= 0) or np.any(d_it <= 0):
            raise ValueError("BS-IRS and IRS-target distances must be positive")

    @property
    def n_irs(self) -> int:
        return self.irs_positions.shape[0]

    @property
    def n_targets(self) -> int:
        return self.target_positions.shape[0]

    @property
    def n_elem(self) -> int:
        return self.n_elem_x * self.n_elem_z

    @property
    def n_sens(self) -> int:
        return self.m_sens_x * self.m_sens_z

    @property
    def crb_constant(self) -> float:
        """c0 = c^2 sigma^2 / eta, the factor between unit-free CRB and m^2."""
        return SPEED_OF_LIGHT**2 * self.noise_power / self.eta

    def with_updates(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def subset_targets(self, idx) -> "Scenario":
        return replace(self, target_positions=self.target_positions[np.atleast_1d(idx)])

    @classmethod
    def from_db(cls, *, rcs_dbsm=7.0, p_max_dbw=20.0, noise_dbm=-110.0, **kwargs):
        return cls(rcs=float(db_to_linear(rcs_dbsm)),
                   p_max=float(db_to_linear(p_max_dbw)),
                   noise_power=float(dbm_to_watt(noise_dbm)), **kwargs)


@dataclass(frozen=True)
class GeometryCoefficients:
    """Delay-gradient scalars ``a = -c dtau/dx`` and ``b = -c dtau/dy``.

    All three arrays are indexed ``[q, k, l]``: target, reflecting IRS,
    sensing IRS.
    """

    a: np.ndarray
    b: np.ndarray
    delays: np.ndarray


def _target_irs_distances(scenario: Scenario) -> np.ndarray:
    diff = scenario.irs_positions[None, :, :] - scenario.target_positions[:, None, :]
    return np.linalg.norm(diff, axis=2)  # (Q, K)


def bistatic_delay(scenario: Scenario, q: int, k: int, l: int) -> float:
    """Reflect-at-k, sense-at-l propagation delay of target q, in seconds."""
    tgt = scenario.target_positions[q]
    d_k = np.linalg.norm(scenario.irs_positions[k] - tgt)
    d_l = np.linalg.norm(scenario.irs_positions[l] - tgt)
    return float((d_k + d_l) / SPEED_OF_LIGHT)


def all_delays(scenario: Scenario) -> np.ndarray:
    d = _target_irs_distances(scenario)
    return (d[:, :, None] + d[:, None, :]) / SPEED_OF_LIGHT


def delay_gradients(scenario: Scenario) -> GeometryCoefficients:
    """Closed-form delay gradients.

    Each entry is the sum of the horizontal direction cosines from the
    target towards IRS ``k`` and towards IRS ``l``; no angles are formed.
    """
    diff = scenario.irs_positions[None, :, :] - scenario.target_positions[:, None, :]
    dist = np.linalg.norm(diff, axis=2)
    if np.any(dist <= 0):
        raise ValueError("a target coincides with an IRS")
    ux = diff[..., 0] / dist
    uy = diff[..., 1] / dist
    a = ux[:, :, None] + ux[:, None, :]
    b = uy[:, :, None] + uy[:, None, :]
    delays = (dist[:, :, None] + dist[:, None, :]) / SPEED_OF_LIGHT
    return GeometryCoefficients(a=a, b=b, delays=delays)


def check_separability(scenario: Scenario):
    """Return ``(ok, violations)`` for the pulse-width separability test.

    ``violations`` lists target pairs ``(q1, q2)`` with at least one pair
    of paths whose delays differ by no more than ``pulse_width``.
    """
    tau = all_delays(scenario).reshape(scenario.n_targets, -1)
    violations = []
    for q1, q2 in product(range(scenario.n_targets), repeat=2):
        if q2 <= q1:
            continue
        gap = np.abs(tau[q1][:, None] - tau[q2][None, :]).min()
        if gap <= scenario.pulse_width:
            violations.append((q1, q2))
    return len(violations) == 0, violations
