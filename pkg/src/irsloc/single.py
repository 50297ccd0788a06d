"""Single-target CRB minimization.

The reflect phases have a closed form, the transmit matrix is
zero-forcing with a free power split, and the remaining ratio problem over
the power split is solved by a Dinkelbach outer loop around an ADMM inner
loop whose three updates are all closed-form.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .beams import BeamSolution, aligned_theta, make_beams, zf_power_weights
from .channel import ChannelSet, build_channels
from .crb import CrbReport, evaluate
from .geometry import (SPEED_OF_LIGHT, GeometryCoefficients, Scenario, SolverConfig,
                       delay_gradients)

log = logging.getLogger(__name__)


class DegenerateGeometryError(RuntimeError):
    pass


@dataclass(frozen=True)
class FractionalProblem:
    """``min (a+b)^T p / (a^T p b^T p - (c^T p)^2)`` s.t. ``h^T p = p_max, p >= 0``."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    h: np.ndarray
    p_max: float

    def __post_init__(self):
        for name in ("a", "b", "c", "h"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.a < 0) or np.any(self.b < 0):
            raise ValueError("a and b must be non-negative")
        if np.any(self.h <= 0):
            raise ValueError("h must be positive")

    @property
    def size(self) -> int:
        return self.a.size

    @property
    def denominator_matrix(self) -> np.ndarray:
        """Symmetrized denominator ``(a b^T + b a^T)/2 - c c^T``."""
        return 0.5 * (np.outer(self.a, self.b) + np.outer(self.b, self.a)) - np.outer(self.c, self.c)

    @property
    def beta(self) -> float:
        return float(np.linalg.eigvalsh(self.denominator_matrix)[-1])

    @property
    def rho(self) -> float:
        beta = max(self.beta, 1e-12 * float(np.max(self.a + self.b))**2)
        return 2.5 * beta * (1 + 1e-9)

    def numerator(self, p) -> float:
        return float((self.a + self.b) @ p)

    def denominator(self, p) -> float:
        return float((self.a @ p) * (self.b @ p) - (self.c @ p)**2)

    def objective(self, p) -> float:
        den = self.denominator(p)
        return self.numerator(p) / den if den > 0 else np.inf

    def equal_power(self) -> np.ndarray:
        return self.p_max / (self.size * self.h)

    def normalized(self):
        """Unit-scale copy and the factor ``s`` with ``objective = obj_n / s``."""
        s_abc = float(np.max(self.a + self.b))
        prob = FractionalProblem(self.a / s_abc, self.b / s_abc, self.c / s_abc,
                                 self.h, 1.0)
        return prob, s_abc * self.p_max


def fractional_problem(scenario: Scenario, channels: ChannelSet, geometry: GeometryCoefficients,
                       active=None, q: int = 0, include_fim_scale: bool = False,
                       reflect_gain=None) -> FractionalProblem:
    """Ratio-problem data for target ``q`` restricted to the active IRSs.

    Sensors of every IRS stay on, so the sums over the sensing index run
    over all K IRSs even when reflectors are deactivated. ``reflect_gain``
    overrides the per-IRS array gain ``|theta_k^T v_k|^2``; the default N^2
    is what the closed-form phases achieve.
    """
    K = scenario.n_irs
    active = np.ones(K, bool) if active is None else np.asarray(active, bool)
    M, N = scenario.n_sens, scenario.n_elem
    refl = np.full(K, float(N**2)) if reflect_gain is None else np.asarray(reflect_gain, float)
    gain = channels.alpha_i2i[q]**2 * (channels.alpha_b2i**2 * refl)[:, None] * M
    if include_fim_scale:
        gain = gain * scenario.eta / (scenario.noise_power * SPEED_OF_LIGHT**2)
    a_q, b_q = geometry.a[q], geometry.b[q]
    a = np.sum(a_q**2 * gain, axis=1)
    b = np.sum(b_q**2 * gain, axis=1)
    c = np.sum(a_q * b_q * gain, axis=1)
    h = zf_power_weights(channels, active)
    return FractionalProblem(a[active], b[active], c[active], h[active], scenario.p_max)


def project_weighted_simplex(target, h, total, curvature):
    """Minimize ``sum(curvature/2 z^2 - target z)`` over ``h^T z = total, z >= 0``.

    Closed-form KKT solution; the multiplier of the equality is recomputed
    after clamping non-positive entries until every entry is feasible.
    """
    free = np.ones(target.size, bool)
    z = np.zeros_like(target)
    while True:
        mu0 = (np.sum(target[free] * h[free]) - curvature * total) / np.sum(h[free]**2)
        z_free = (target[free] - mu0 * h[free]) / curvature
        if np.all(z_free > 0):
            z[:] = 0.0
            z[free] = z_free
            return z, mu0
        idx = np.flatnonzero(free)
        free[idx[z_free <= 0]] = False
        if not free.any():  # cannot happen for total > 0, kept as a guard
            raise RuntimeError("weighted simplex projection emptied the support")


@dataclass
class AdmmResult:
    p: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)


def admm_inner(problem: FractionalProblem, alpha: float, p, z, lam, rho=None, beta=None,
               eps: float = 1e-8, max_iter: int = 5000) -> AdmmResult:
    """ADMM for ``min alpha (a+b)^T p - f_d(p, z)`` with the consensus ``p = z``."""
    D = problem.denominator_matrix
    beta = problem.beta if beta is None else beta
    beta = max(beta, 1e-12)
    rho = problem.rho if rho is None else rho
    if not rho > 2 * beta:
        raise ValueError("rho must exceed 2*beta")
    K = problem.size
    lhs = (2 * beta + rho) * np.eye(K) - 2 * D
    lhs_inv = np.linalg.inv(lhs)
    grad_lin = alpha * (problem.a + problem.b)
    p, z, lam = (np.array(v, dtype=float) for v in (p, z, lam))
    residuals = []
    converged = False
    s = 0
    for s in range(1, max_iter + 1):
        p_new = lhs_inv @ (rho * z - lam - grad_lin)
        z_new, _ = project_weighted_simplex(rho * p_new + lam, problem.h, problem.p_max,
                                            rho - 2 * beta)
        lam = lam + rho * (p_new - z_new)
        r = (float(np.sum((p_new - p)**2)), float(np.sum((z_new - z)**2)),
             float(np.sum((p_new - z_new)**2)))
        residuals.append(r)
        p, z = p_new, z_new
        if max(r) <= eps * max(float(z @ z), 1e-300):
            converged = True
            break
    return AdmmResult(p=p, z=z, lam=lam, iterations=s, converged=converged, residuals=residuals)


def dinkelbach_ratio(problem: FractionalProblem, p, z, beta, rho) -> float:
    """``f_d(p, z) / ((a+b)^T p)``, the Dinkelbach parameter update."""
    D = problem.denominator_matrix
    fd = p @ (D - beta * np.eye(p.size)) @ p + beta * z @ z - 0.5 * rho * np.sum((p - z)**2)
    return float(fd / problem.numerator(p))


@dataclass
class DinkelbachResult:
    p: np.ndarray
    objective: float
    alphas: list
    objectives: list
    inner_iterations: list
    converged: bool
    restarts: int = 0


def default_starts(problem: FractionalProblem, vertex_weight: float = 0.9) -> list:
    """Equal-power point followed by one near-vertex point per IRS."""
    center = problem.equal_power()
    K = problem.size
    starts = [center]
    for k in range(K):
        vertex = np.zeros(K)
        vertex[k] = problem.p_max / problem.h[k]
        starts.append((1 - vertex_weight) * center + vertex_weight * vertex)
    return starts


def _dinkelbach_run(prob: FractionalProblem, start, beta, rho, cfg: SolverConfig,
                    max_escalations: int = 6):
    center = prob.equal_power()
    escalations = 0
    p = np.array(start, dtype=float)
    z = p.copy()
    lam = np.zeros(prob.size)
    restarts = 0

    def _alpha(p, z):
        # at consensus this equals dinkelbach_ratio; z is always feasible, p need not be
        return prob.denominator(z) / prob.numerator(z)

    while prob.denominator(z) <= 0:
        restarts += 1
        if restarts > 3:
            raise DegenerateGeometryError("ratio denominator is non-positive at the start point")
        p = z = 0.99 * z + 0.01 * center
    alpha = _alpha(p, z)
    best_z, best_obj = z.copy(), prob.objective(z)
    alphas, objectives, inner_its = [alpha], [best_obj], []
    converged = False
    for _ in range(cfg.max_outer):
        res = admm_inner(prob, alpha, p, z, lam, rho=rho, beta=beta,
                         eps=cfg.eps_inner, max_iter=cfg.max_inner)
        inner_its.append(res.iterations)
        p, z, lam = res.p, res.z, res.lam
        if not res.converged:
            log.debug("ADMM inner loop hit max_inner=%d", cfg.max_inner)
        if prob.denominator(z) <= 0 or _alpha(p, z) <= 0:
            restarts += 1
            if restarts > 3:
                raise DegenerateGeometryError(
                    "ratio denominator stayed non-positive; geometry is degenerate")
            p = 0.99 * z + 0.01 * center
            z = p.copy()
            lam = np.zeros(prob.size)
            continue
        new_alpha = _alpha(p, z)
        obj = prob.objective(z)
        if obj > best_obj * (1 + 1e-12) and escalations < max_escalations:
            # the inner solve went downhill: retry from the best iterate with a stiffer penalty
            escalations += 1
            rho *= 2.0
            p, z, lam = best_z.copy(), best_z.copy(), np.zeros(prob.size)
            continue
        if obj <= best_obj:
            best_z, best_obj = z.copy(), obj
            objectives.append(obj)
        alphas.append(new_alpha)
        if new_alpha - alpha <= cfg.eps_outer * abs(alpha):
            converged = True
            break
        alpha = new_alpha
    return DinkelbachResult(p=best_z, objective=best_obj, alphas=alphas, objectives=objectives,
                            inner_iterations=inner_its, converged=converged, restarts=restarts)


def dinkelbach_solve(problem: FractionalProblem, config: SolverConfig | None = None,
                     starts=None) -> DinkelbachResult:
    """Minimize the ratio problem by Dinkelbach iterations around the ADMM loop.

    One run per start point (default :func:`default_starts`); the best
    feasible iterate over all runs is returned. Works on a unit-scale copy
    of the problem internally.
    """
    cfg = SolverConfig() if config is None else config
    if problem.size == 1:
        p = np.array([problem.p_max / problem.h[0]])
        obj = problem.objective(p)
        return DinkelbachResult(p=p, objective=obj, alphas=[], objectives=[obj],
                                inner_iterations=[], converged=True)

    prob, scale = problem.normalized()
    beta = max(prob.beta, 1e-12)
    rho = prob.rho
    starts = default_starts(prob) if starts is None else [np.asarray(s) / problem.p_max
                                                          for s in starts]
    best = None
    failures = 0
    for start in starts:
        try:
            run = _dinkelbach_run(prob, start, beta, rho, cfg)
        except DegenerateGeometryError:
            failures += 1
            continue
        if best is None or run.objective < best.objective:
            best = run
    if best is None:
        raise DegenerateGeometryError("no start point produced a positive ratio denominator")
    p_out = best.p * problem.p_max
    best.objectives = [o / scale for o in best.objectives]
    best.p = p_out
    best.objective = problem.objective(p_out)
    best.restarts += failures
    return best


def single_target_beams(scenario: Scenario, channels: ChannelSet, p_active, active,
                        q: int = 0) -> BeamSolution:
    K = scenario.n_irs
    p = np.zeros(K)
    p[active] = p_active
    theta = np.zeros((K, scenario.n_elem), dtype=complex)
    for k in np.flatnonzero(active):
        theta[k] = aligned_theta(channels, k, q)
    return make_beams(channels, p, theta, active)


def one_stage_solve(scenario: Scenario, channels=None, geometry=None, active=None, q: int = 0):
    """Closed-form phases plus the ratio solve on a fixed active set."""
    channels = build_channels(scenario) if channels is None else channels
    geometry = delay_gradients(scenario) if geometry is None else geometry
    K = scenario.n_irs
    active = np.ones(K, bool) if active is None else np.asarray(active, bool)
    prob = fractional_problem(scenario, channels, geometry, active, q)
    res = dinkelbach_solve(prob, scenario.solver)
    beams = single_target_beams(scenario, channels, res.p, active, q)
    target = scenario.subset_targets(q) if scenario.n_targets > 1 else scenario
    report = evaluate(target, beams, channels=_channels_for_target(channels, q),
                      geometry=_geometry_for_target(geometry, q))
    report.trace = {"objectives": res.objectives, "alphas": res.alphas,
                    "inner_iterations": res.inner_iterations,
                    "converged": res.converged, "restarts": res.restarts}
    return beams, report


def _channels_for_target(channels: ChannelSet, q: int) -> ChannelSet:
    if channels.a_t2i.shape[0] == 1:
        return channels
    return replace(channels, a_i2t=channels.a_i2t[:, q:q + 1], a_t2i=channels.a_t2i[q:q + 1],
                   alpha_i2i=channels.alpha_i2i[q:q + 1])


def _geometry_for_target(geometry: GeometryCoefficients, q: int) -> GeometryCoefficients:
    if geometry.a.shape[0] == 1:
        return geometry
    s = slice(q, q + 1)
    return GeometryCoefficients(a=geometry.a[s], b=geometry.b[s], delays=geometry.delays[s])


def two_stage_solve(scenario: Scenario, q: int = 0):
    """Solve, deactivate zero-power IRSs, re-solve until every active IRS carries power.

    Returns the final ``(BeamSolution, CrbReport)``; ``report.trace['stages']``
    keeps the per-stage CRBs and active sets.
    """
    if scenario.n_targets > 1:
        log.debug("two_stage_solve on a multi-target scenario: optimizing target %d only", q)
    channels = build_channels(scenario)
    geometry = delay_gradients(scenario)
    K = scenario.n_irs
    active = np.ones(K, bool)
    stages = []
    best = None
    while True:
        beams, report = one_stage_solve(scenario, channels, geometry, active, q)
        stages.append({"active": beams.active_set, "crb": report.worst_crb,
                       "p": beams.p.tolist(), "transmit_power": beams.transmit_power})
        if best is None or report.worst_crb <= best[1].worst_crb:
            best = (beams, report)
        zero = active & (beams.p < scenario.solver.zero_power_tol * scenario.p_max)
        if not zero.any():
            break
        active = active & ~zero
        if not active.any():
            raise DegenerateGeometryError("every IRS was deactivated")
    beams, report = best
    report.trace["stages"] = stages
    return beams, report
