"""Brute-force references for tests.

Nothing in here is imported by the solver modules, and nothing in here
reuses solver arithmetic: objectives, delays, energies and Jacobians are
recomputed from positions and channel matrices with their own formulas.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .beams import BeamSolution
from .channel import ChannelSet, build_channels
from .geometry import SPEED_OF_LIGHT, Scenario

MAX_GRID_POINTS = 10**7


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the simplex ``{sum(u) = 1, u >= 0}`` in ``dims`` coordinates."""

    dims: int
    resolution: int

    def __post_init__(self):
        if self.dims < 1 or self.resolution < 1:
            raise ValueError("dims and resolution must be positive")
        if self.n_points > MAX_GRID_POINTS:
            raise ValueError(f"grid has {self.n_points} points, more than {MAX_GRID_POINTS}")

    @property
    def n_points(self) -> int:
        return comb(self.resolution + self.dims - 1, self.dims - 1)

    def points(self) -> np.ndarray:
        """All grid points as rows of barycentric weights."""
        res, K = self.resolution, self.dims
        if K == 1:
            return np.ones((1, 1))
        axes = np.meshgrid(*[np.arange(res + 1)] * (K - 1), indexing="ij")
        flat = np.stack([ax.ravel() for ax in axes], axis=1)
        flat = flat[flat.sum(axis=1) <= res]
        last = res - flat.sum(axis=1, keepdims=True)
        return np.hstack([flat, last]) / res


def grid_power_search(problem, resolution: int = 200):
    """Exhaustive minimum of the ratio objective over ``{h^T p = P_max, p >= 0}``.

    Grid step is ``P_max / resolution`` in each weighted coordinate
    ``h_k p_k``. Returns ``(p, objective)``.
    """
    h = np.asarray(problem.h, dtype=float)
    if h.size > 4:
        raise ValueError("the grid oracle supports at most 4 IRSs")
    u = GridSpec(h.size, resolution).points()
    P = u * (problem.p_max / h)
    a, b, c = (np.asarray(v, dtype=float) for v in (problem.a, problem.b, problem.c))
    ga, gb, gc = P @ a, P @ b, P @ c
    num = ga + gb
    det = ga * gb - gc * gc
    vals = np.full(num.shape, np.inf)
    ok = det > 0
    vals[ok] = num[ok] / det[ok]
    i = int(np.argmin(vals))
    return P[i], float(vals[i])


def _two_leg_delay(target, irs_k, irs_l) -> float:
    d1 = np.sqrt(np.sum((irs_k - target)**2))
    d2 = np.sqrt(np.sum((irs_l - target)**2))
    return (d1 + d2) / SPEED_OF_LIGHT


@dataclass(frozen=True)
class FiniteDifferenceJacobian:
    a: np.ndarray
    b: np.ndarray
    delays: np.ndarray


def fd_jacobian(scenario: Scenario, step: float = 1e-4) -> FiniteDifferenceJacobian:
    """Central differences of the two-leg delay in x and y, scaled by ``-c``."""
    if not 0 < step <= 1:
        raise ValueError("step must be in (0, 1] meters")
    irs, tgt = scenario.irs_positions, scenario.target_positions
    Q, K = tgt.shape[0], irs.shape[0]
    a = np.empty((Q, K, K))
    b = np.empty((Q, K, K))
    tau = np.empty((Q, K, K))
    ex, ey = np.array([step, 0.0, 0.0]), np.array([0.0, step, 0.0])
    for q in range(Q):
        t = tgt[q]
        for k in range(K):
            for l in range(K):
                tau[q, k, l] = _two_leg_delay(t, irs[k], irs[l])
                dx = _two_leg_delay(t + ex, irs[k], irs[l]) - _two_leg_delay(t - ex, irs[k], irs[l])
                dy = _two_leg_delay(t + ey, irs[k], irs[l]) - _two_leg_delay(t - ey, irs[k], irs[l])
                a[q, k, l] = -SPEED_OF_LIGHT * dx / (2 * step)
                b[q, k, l] = -SPEED_OF_LIGHT * dy / (2 * step)
    return FiniteDifferenceJacobian(a=a, b=b, delays=tau)


def dense_chain_rule_fim(scenario: Scenario, beams: BeamSolution,
                         channels: ChannelSet | None = None):
    """Position FIM as ``J F(tau) J^T`` with explicit dense matrices.

    ``F(tau)`` is the diagonal delay FIM over all ``Q K^2`` paths, built from
    explicit channel-matrix products; ``J`` is the analytic ``2Q x QK^2``
    delay Jacobian. Returns ``(blocks, full)`` where ``blocks`` is (Q, 2, 2)
    and ``full`` the whole ``2Q x 2Q`` matrix.
    """
    if scenario.n_irs > 4 or scenario.n_targets > 3:
        raise ValueError("dense oracle is limited to K <= 4 and Q <= 3")
    ch = build_channels(scenario) if channels is None else channels
    irs, tgt = scenario.irs_positions, scenario.target_positions
    Q, K = tgt.shape[0], irs.shape[0]
    n_paths = Q * K * K
    energy = np.zeros(n_paths)
    jac = np.zeros((2 * Q, n_paths))
    idx = 0
    for q in range(Q):
        for k in range(K):
            Hb = ch.alpha_b2i[k] * np.outer(ch.a_i2b[k], ch.a_b2i_tx[k].conj())
            Theta = np.diag(beams.theta[k])
            for l in range(K):
                Hi = ch.alpha_i2i[q, k, l] * np.outer(ch.a_t2i[q, l], ch.a_i2t[k, q].conj())
                y = Hi @ Theta @ Hb @ beams.w[:, k]
                energy[idx] = np.sum(np.abs(y)**2)
                for axis in (0, 1):
                    dk = (tgt[q, axis] - irs[k, axis]) / np.linalg.norm(tgt[q] - irs[k])
                    dl = (tgt[q, axis] - irs[l, axis]) / np.linalg.norm(tgt[q] - irs[l])
                    jac[2 * q + axis, idx] = (dk + dl) / SPEED_OF_LIGHT
                idx += 1
    delay_fim = np.diag(scenario.eta / scenario.noise_power * energy)
    full = jac @ delay_fim @ jac.T
    blocks = np.stack([full[2 * q:2 * q + 2, 2 * q:2 * q + 2] for q in range(Q)])
    return blocks, full
