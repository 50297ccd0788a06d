"""Max-min CRB over several targets.

The worst-case problem is attacked through its power-minimization dual: a
bisection on the QoS level ``phi`` (a common 1/CRB target), and for each
probe an alternation between a power step (SCA on an indefinite quadratic
constraint, solved as a convex QCQP) and a reflect step (SDR of the phase
vectors with SCA on the bilinear trace products).

Internally everything is unit-free: powers are fractions of ``P_max``,
array gains are fractions of ``N^2`` and the geometry weights are divided by
their largest entry. ``QosSubproblemData.crb_unit`` converts back to m^2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .backend import (OPTIMAL, LiftedPowerProblem, QcqpProblem, QuadConstraint, SdpProblem,
                      TraceInverseProblem, psd_factor, solve_lifted_power, solve_qcqp, solve_sdp,
                      solve_trace_inverse)
from .beams import aligned_theta, make_beams, zf_power_weights
from .channel import ChannelSet, build_channels
from .crb import CrbReport, evaluate
from .geometry import (GeometryCoefficients, Scenario, SolverConfig, check_separability,
                       delay_gradients)
from .single import DegenerateGeometryError, FractionalProblem, dinkelbach_solve

log = logging.getLogger(__name__)

# relative slack below which a reflect iterate counts as infeasible
RESIDUAL_FLOOR = 1e-9


class SeparabilityError(ValueError):
    """Targets are not delay-separable; the block-diagonal FIM does not apply."""


class BracketError(RuntimeError):
    """No valid initial QoS bracket exists for the bisection."""


@dataclass
class QosSubproblemData:
    """State shared by the power and reflect steps.

    ``a, b, c`` are (Q, K) geometry-and-path-loss weights, ``v`` the (Q, K, N)
    reflect vectors with ``x[q, k] = |theta_k^T v[q, k]|^2 / N^2`` and
    ``V[q, k] = conj(v) v^T / N^2`` so that ``x = tr(R_k V[q, k])``.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    v: np.ndarray
    h: np.ndarray
    p: np.ndarray
    R: np.ndarray
    phi: float = 0.0
    crb_unit: float = 1.0

    @property
    def n_targets(self) -> int:
        return self.a.shape[0]

    @property
    def n_irs(self) -> int:
        return self.a.shape[1]

    @property
    def n_elem(self) -> int:
        return self.v.shape[2]

    @property
    def V(self) -> np.ndarray:
        N = self.n_elem
        return np.conj(self.v)[..., :, None] * self.v[..., None, :] / N**2

    @property
    def x(self) -> np.ndarray:
        return gains_from_R(self.R, self.v)

    def with_(self, **changes) -> "QosSubproblemData":
        return replace(self, **changes)


def gains_from_R(R, v) -> np.ndarray:
    """``x[q, k] = Re tr(R_k V[q, k]) = v^T R_k conj(v) / N^2``."""
    N = v.shape[2]
    return np.real(np.einsum("qki,kij,qkj->qk", v, R, np.conj(v))) / N**2


def gains_from_theta(theta, v) -> np.ndarray:
    N = v.shape[2]
    return np.abs(np.einsum("kn,qkn->qk", theta, v))**2 / N**2


def unitfree_crb(data: QosSubproblemData, p=None, x=None) -> np.ndarray:
    """Per-target CRB in internal units; ``inf`` where the FIM is singular."""
    p = data.p if p is None else p
    x = data.x if x is None else x
    g11 = (data.a * x) @ p
    g22 = (data.b * x) @ p
    g12 = (data.c * x) @ p
    det = g11 * g22 - g12**2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(det > 1e-300, (g11 + g22) / np.where(det > 1e-300, det, 1.0), np.inf)
    return out


def qos_margins(data: QosSubproblemData, p=None, x=None) -> np.ndarray:
    """``phi (a+b)^T p - a^T p b^T p + (c^T p)^2`` per target; feasible iff <= 0."""
    p = data.p if p is None else p
    x = data.x if x is None else x
    A, B, C = (data.a * x) @ p, (data.b * x) @ p, (data.c * x) @ p
    return data.phi * (A + B) - A * B + C**2


def build_qos_data(scenario: Scenario, channels: ChannelSet, geometry: GeometryCoefficients,
                   active, R=None) -> QosSubproblemData:
    active = np.asarray(active, bool)
    M, N = scenario.n_sens, scenario.n_elem
    alpha = channels.alpha_i2i**2 * (channels.alpha_b2i**2)[None, :, None] * M
    a = np.sum(geometry.a**2 * alpha, axis=2)[:, active]
    b = np.sum(geometry.b**2 * alpha, axis=2)[:, active]
    c = np.sum(geometry.a * geometry.b * alpha, axis=2)[:, active]
    s = float(np.max(a + b))
    v = channels.reflect_vectors[:, active]
    h = zf_power_weights(channels, active)[active]
    Ka = int(active.sum())
    if R is None:
        R = np.ones((Ka, N, N), dtype=complex)
    return QosSubproblemData(a=a / s, b=b / s, c=c / s, v=v, h=h, p=1.0 / (Ka * h), R=R,
                             crb_unit=scenario.crb_constant / (s * N**2 * scenario.p_max))


# -- power step --------------------------------------------------------------

@dataclass
class PowerStepResult:
    p: np.ndarray
    status: str
    powers: list = field(default_factory=list)


def _feasible_start(data: QosSubproblemData, x):
    """Scale a positive power vector onto the QoS boundary (CRB is 1-homogeneous in 1/p)."""
    for p0 in (data.p, 1.0 / (data.n_irs * data.h)):
        if not np.any(p0 > 0):
            continue
        worst = float(np.max(unitfree_crb(data, p0, x)))
        if np.isfinite(worst):
            return p0 * (data.phi * worst)
    return None


def exact_power_start(data: QosSubproblemData, x):
    """Minimum-power point for the exact (convex) CRB constraints at fixed gains.

    Solved once at ``phi = 1`` and rescaled, since CRB is inversely
    proportional to a common power scale. Returns ``None`` on failure.
    """
    A, B, C = data.a * x, data.b * x, data.c * x
    blocks = np.stack([np.stack([A, C], -1), np.stack([C, B], -1)], -2)  # (Q, K, 2, 2)
    res = solve_trace_inverse(TraceInverseProblem(c=data.h, blocks=blocks,
                                                  bounds=np.ones(data.n_targets)))
    if res.status != OPTIMAL or not np.any(res.x > 0):
        return None
    u = res.x
    # land exactly on the feasible side despite solver tolerance
    u = u * max(1.0, float(np.max(unitfree_crb(data, u, x))))
    return data.phi * u


def sca_power_step(data: QosSubproblemData, config: SolverConfig | None = None) -> PowerStepResult:
    """Minimize ``h^T p`` under the convexified CRB constraints at fixed phases.

    Each target's constraint keeps ``p^T (beta I - D) p`` and linearizes the
    concave ``-beta ||p||^2`` at the current point, so every iterate stays
    feasible for the exact constraint and the power never increases. With
    ``power_start="exact"`` the iteration starts from the exact optimum, which
    is a fixed point of the surrogate, so the loop only confirms it.
    """
    cfg = SolverConfig() if config is None else config
    K = data.n_irs
    if data.phi <= 0:
        return PowerStepResult(p=np.zeros(K), status=OPTIMAL, powers=[0.0])
    x = data.x
    p = exact_power_start(data, x) if cfg.power_start == "exact" else None
    if p is None:
        p = _feasible_start(data, x)
    if p is None:
        return PowerStepResult(p=data.p.copy(), status="infeasible")
    A, B, C = data.a * x, data.b * x, data.c * x
    D = 0.5 * (A[:, :, None] * B[:, None, :] + B[:, :, None] * A[:, None, :]) \
        - C[:, :, None] * C[:, None, :]
    beta = np.maximum(np.linalg.eigvalsh(D)[:, -1], 0.0)
    powers = [float(data.h @ p)]
    eye = np.eye(K)
    for _ in range(cfg.sca_max_iter):
        # each constraint is divided by its linear term at p so the solver sees O(1) data
        scale = data.phi * (A + B) @ p
        quad = [QuadConstraint.from_hessian((beta[q] * eye - D[q]) / scale[q],
                                            (data.phi * (A[q] + B[q]) - 2 * beta[q] * p) / scale[q],
                                            beta[q] * p @ p / scale[q])
                for q in range(data.n_targets)]
        res = solve_qcqp(QcqpProblem(c=data.h, quad=quad))
        if res.status != OPTIMAL:
            log.debug("power step stopped: %s", res.status)
            break
        new_power = float(data.h @ res.x)
        if new_power > powers[-1] * (1 + 1e-9):
            break
        p = res.x
        powers.append(new_power)
        if powers[-2] - new_power <= cfg.sca_tol * powers[-2]:
            break
    return PowerStepResult(p=p, status=OPTIMAL, powers=powers)


# -- reflect step ------------------------------------------------------------

def dc_pieces(x0, k, k2):
    """Values of ``f = (x_k + x_k2)^2 / 4`` and ``g = (x_k - x_k2)^2 / 4`` at ``x0``."""
    s, d = x0[k] + x0[k2], x0[k] - x0[k2]
    return s * s / 4, d * d / 4


def reflect_constraint(data: QosSubproblemData, q: int, x0):
    """Convex upper model of target ``q``'s constraint as a function of ``x[q]``.

    Returns ``(H, lin, const)`` with the model ``x^T H x + lin^T x + const``;
    it matches the exact constraint value at ``x0``.
    """
    K = data.n_irs
    p = data.p
    al, be, ga = data.a[q] * p, data.b[q] * p, data.c[q] * p
    x0 = x0[q]
    H = np.zeros((K, K))
    lin = data.phi * (al + be)
    const = 0.0

    def vec(k, k2, sign):
        e = np.zeros(K)
        e[k] += 1.0
        e[k2] += sign
        return e

    def convex(w, e):
        nonlocal H
        H = H + w * np.outer(e, e) / 4

    def minus_linearized(w, e):
        # -w * (e.x0^2/4 + (e.x0/2)(e.x - e.x0))
        nonlocal lin, const
        t0 = e @ x0
        lin = lin - w * (t0 / 2) * e
        const += w * t0 * t0 / 4

    for k in range(K):
        for k2 in range(K):
            plus, minus = vec(k, k2, 1.0), vec(k, k2, -1.0)
            w = be[k] * al[k2]
            if w:
                # -x_k x_k2 <= g - f_lb
                convex(w, minus)
                minus_linearized(w, plus)
            cc = ga[k] * ga[k2]
            if cc > 0:
                # x_k x_k2 <= f - g_lb
                convex(cc, plus)
                minus_linearized(cc, minus)
            elif cc < 0:
                convex(-cc, minus)
                minus_linearized(-cc, plus)
    return H, lin, const


def residual_weights(data: QosSubproblemData, x) -> np.ndarray:
    """Per-target linear term ``phi (a+b)^T (p * x)``; residuals are measured in these units."""
    return data.phi * np.einsum("qk,qk->q", (data.a + data.b) * data.p, x)


def reflect_sdp(data: QosSubproblemData, x0, weights=None) -> SdpProblem:
    """SDR of the reflect subproblem linearized at ``x0``: maximize the sum of
    residuals in ``[0, 1]``, each in units of ``weights[q]``."""
    Q, K = data.n_targets, data.n_irs
    V = data.V
    feats = [(k, V[q, k]) for q in range(Q) for k in range(K)]
    width = Q * K + Q
    weights = residual_weights(data, x0) if weights is None else weights
    quad = []
    for q in range(Q):
        H, lin, const = reflect_constraint(data, q, x0)
        F = np.zeros((K, width))
        F[:, q * K:(q + 1) * K] = psd_factor(H / weights[q])
        g = np.zeros(width)
        g[q * K:(q + 1) * K] = lin / weights[q]
        g[Q * K + q] = 1.0
        quad.append(QuadConstraint(F=F, g=g, d=const / weights[q]))
    obj = np.concatenate([np.zeros(Q * K), np.ones(Q)])
    # 0 <= r keeps every target feasible, so no target pays for another's gain;
    # r <= 1 (the target's CRB at half the QoS limit) stops slack targets from
    # absorbing the whole objective
    eye = np.eye(Q)
    A_ineq = np.hstack([np.zeros((2 * Q, Q * K)), np.vstack([-eye, eye])])
    b_ineq = np.concatenate([np.zeros(Q), np.ones(Q)])
    return SdpProblem(dims=(data.n_elem,) * K, features=tuple(feats), objective=obj,
                      sense="max", n_aux=Q, A_ineq=A_ineq, b_ineq=b_ineq, quad=tuple(quad))


@dataclass
class ReflectStepResult:
    R: np.ndarray
    r: np.ndarray
    status: str
    residual_sums: list = field(default_factory=list)


def sdr_reflect_step(data: QosSubproblemData, config: SolverConfig | None = None
                     ) -> ReflectStepResult:
    """SCA over the relaxed phase matrices at fixed power.

    Residuals are the exact constraint slacks ``-margin[q]`` divided by each
    target's linear term at the entry point, so every target counts equally
    whatever its CRB scale. ``residual_sums`` logs their total, each capped at
    1 as in the SDP, for each accepted iterate; a step that would lower it is
    rejected, so the log is non-decreasing. Steps that leave any target
    infeasible are rejected too.
    """
    cfg = SolverConfig() if config is None else config
    R = np.array(data.R)
    x0 = gains_from_R(R, data.v)
    weights = residual_weights(data, x0)
    r = -qos_margins(data, x=x0) / weights
    # the SDP caps every residual at 1, so progress is measured on the same scale
    sums = [float(np.minimum(r, 1.0).sum())]
    status = OPTIMAL
    for _ in range(cfg.sca_max_iter):
        res = solve_sdp(reflect_sdp(data, x0, weights))
        if res.status != OPTIMAL:
            status = res.status
            break
        R_new = np.array(res.R)
        x_new = gains_from_R(R_new, data.v)
        r_new = -qos_margins(data, x=x_new) / weights
        total = float(np.minimum(r_new, 1.0).sum())
        if total < sums[-1] or r_new.min() < -RESIDUAL_FLOOR:
            break
        gain = total - sums[-1]
        R, x0, r = R_new, x_new, r_new
        sums.append(total)
        if gain <= cfg.sca_tol * max(abs(sums[-2]), abs(total), 1e-300):
            break
    return ReflectStepResult(R=R, r=r, status=status, residual_sums=sums)


# -- randomization -----------------------------------------------------------

def principal_phases(R_k) -> np.ndarray:
    u = np.linalg.eigh(R_k)[1][:, -1]
    mag = np.abs(u)
    return np.where(mag > 0, u / np.where(mag > 0, mag, 1.0), 1.0)


def is_rank_one(R_k, rtol: float = 1e-6) -> bool:
    w = np.linalg.eigvalsh(R_k)
    return bool(w.size < 2 or w[-2] < rtol * w[-1])


def gaussian_randomize(R, trials: int, data: QosSubproblemData, rng=None):
    """Unit-modulus phases from the relaxed ``R``.

    Candidate ``0`` is the entrywise-normalized principal eigenvectors; each
    further trial draws ``xi_k ~ CN(0, R_k)`` for every IRS and keeps
    ``exp(j arg xi)``. Rank-one blocks always use their eigenvector. The
    candidate with the smallest worst-case CRB at ``data.p`` wins.
    Returns ``(theta, worst_crb)`` in internal units.
    """
    rng = np.random.default_rng() if rng is None else rng
    R = np.asarray(R)
    K, N = R.shape[0], R.shape[1]
    base = np.stack([principal_phases(R[k]) for k in range(K)])
    roots = []
    for k in range(K):
        if is_rank_one(R[k]):
            roots.append(None)
        else:
            w, U = np.linalg.eigh(R[k])
            roots.append(U * np.sqrt(np.clip(w, 0.0, None)))

    def score(theta):
        return float(np.max(unitfree_crb(data, x=gains_from_theta(theta, data.v))))

    best, best_score = base, score(base)
    if all(r is None for r in roots):
        return best, best_score
    for _ in range(trials):
        theta = base.copy()
        for k, root in enumerate(roots):
            if root is not None:
                z = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / np.sqrt(2)
                theta[k] = np.exp(1j * np.angle(root @ z))
        s = score(theta)
        if s < best_score:
            best, best_score = theta, s
    return best, best_score


# -- bisection -----------------------------------------------------------------

def geometric_midpoint(phi_min: float, phi_max: float) -> float:
    return float(np.sqrt(phi_min * phi_max))


def _centroid_phases(scenario: Scenario, active) -> np.ndarray:
    centroid = scenario.target_positions.mean(axis=0)
    ch = build_channels(scenario.subset_targets(0).with_updates(target_positions=centroid[None]))
    return np.stack([aligned_theta(ch, k, 0) for k in np.flatnonzero(active)])


def min_power_level(data: QosSubproblemData, theta) -> float:
    """Worst-case internal CRB reachable at unit power with phases ``theta``."""
    x = gains_from_theta(theta, data.v)
    p = exact_power_start(data.with_(phi=1.0), x)
    return np.inf if p is None else float(data.h @ p)


def lifted_relaxation(data: QosSubproblemData):
    """Joint relaxation of power and phases at unit QoS level.

    With ``S_k = p_k R_k`` every FIM is linear in ``S``, so the minimum power
    over PSD ``S_k`` with equal diagonals is a convex SDP and a lower bound on
    the worst-case internal CRB at unit power. Returns ``(p, R, bound)`` or
    ``None`` if the solver fails.
    """
    M = np.stack([np.stack([data.a, data.c], -1), np.stack([data.c, data.b], -1)], -2)
    res = solve_lifted_power(LiftedPowerProblem(c=data.h, F=data.V, blocks=M,
                                                bounds=np.ones(data.n_targets)))
    if res.status != OPTIMAL:
        return None
    N = data.n_elem
    R = np.stack([S / p if p > 0 else np.eye(N, dtype=complex) for S, p in zip(res.S, res.p)])
    return res.p, R, res.objective


def screen_phases(scenario: Scenario, active, draws: int = 16, rng=None,
                  trials: int = 200) -> np.ndarray:
    """Best starting phases among all-ones, centroid-aligned, aligned to each
    target, ``draws`` uniform random sets and a randomized draw from the joint
    relaxation, scored by the exact minimum power."""
    rng = np.random.default_rng() if rng is None else rng
    active = np.asarray(active, bool)
    channels = build_channels(scenario)
    data = build_qos_data(scenario, channels, delay_gradients(scenario), active)
    idx = np.flatnonzero(active)
    Ka, N = idx.size, scenario.n_elem
    candidates = [np.ones((Ka, N), dtype=complex), _centroid_phases(scenario, active)]
    candidates += [np.stack([aligned_theta(channels, k, q) for k in idx])
                   for q in range(scenario.n_targets)]
    candidates += list(np.exp(2j * np.pi * rng.random((draws, Ka, N))))
    lifted = lifted_relaxation(data)
    if lifted is not None:
        p, R, _ = lifted
        candidates.append(gaussian_randomize(R, trials, data.with_(p=p), rng)[0])
    scores = [min_power_level(data, theta) for theta in candidates]
    return candidates[int(np.argmin(scores))]


def initial_phases(scenario: Scenario, active, mode: str, draws: int = 16, rng=None,
                   trials: int = 200) -> np.ndarray:
    Ka, N = int(np.sum(active)), scenario.n_elem
    if mode == "ones":
        return np.ones((Ka, N), dtype=complex)
    if mode == "centroid":
        return _centroid_phases(scenario, active)
    if mode == "screened":
        return screen_phases(scenario, active, draws, rng, trials)
    raise ValueError(f"unknown theta_init {mode!r}")


def _outer(theta) -> np.ndarray:
    return theta[:, :, None] * np.conj(theta)[:, None, :]


def qos_upper_bound(data: QosSubproblemData, config: SolverConfig) -> float:
    """Largest QoS level any target could reach alone with full array gain."""
    best = np.inf
    for q in range(data.n_targets):
        prob = FractionalProblem(data.a[q], data.b[q], data.c[q], data.h, 1.0)
        try:
            res = dinkelbach_solve(prob, config)
        except DegenerateGeometryError:
            continue
        best = min(best, 1.0 / res.objective)
    return best


def _alternate(data: QosSubproblemData, cfg: SolverConfig):
    """Alternate power and reflect steps at fixed ``phi`` until the power settles."""
    powers, sums = [], []
    prev = None
    for _ in range(cfg.mt_max_rounds):
        pw = sca_power_step(data, cfg)
        if pw.status != OPTIMAL:
            return data, np.inf, powers, sums
        data = data.with_(p=pw.p)
        power = float(data.h @ data.p)
        powers.append(power)
        rf = sdr_reflect_step(data, cfg)
        sums.append(rf.residual_sums)
        data = data.with_(R=rf.R)
        if prev is not None and abs(prev - power) <= cfg.mt_eps_power * power:
            break
        prev = power
    # one closing power step so the reported power belongs to the final phases
    pw = sca_power_step(data, cfg)
    if pw.status != OPTIMAL:
        return data, np.inf, powers, sums
    data = data.with_(p=pw.p)
    power = float(data.h @ data.p)
    powers.append(power)
    return data, power, powers, sums


def bisection_solve(scenario: Scenario, config: SolverConfig | None = None, active=None,
                    theta0=None, rng=None):
    """Max-min CRB over all targets by bisection on the QoS level.

    Returns ``(BeamSolution, CrbReport)``; the report's CRBs are recomputed
    from the final beams. ``theta0`` optionally seeds the phases of the
    active IRSs (shape (K_active, N)).
    """
    cfg = scenario.solver if config is None else config
    if scenario.n_targets > 1:
        ok, bad = check_separability(scenario)
        if not ok:
            raise SeparabilityError(f"targets are not delay-separable: {bad}")
    rng = np.random.default_rng(scenario.rng_seed) if rng is None else rng
    K = scenario.n_irs
    active = np.ones(K, bool) if active is None else np.asarray(active, bool)
    if not active.any():
        raise DegenerateGeometryError("no active IRS")
    channels = build_channels(scenario)
    geometry = delay_gradients(scenario)
    if theta0 is None:
        theta = initial_phases(scenario, active, cfg.theta_init, cfg.screen_draws, rng,
                               cfg.randomization_trials)
    else:
        theta = np.asarray(theta0)
    data = build_qos_data(scenario, channels, geometry, active, R=_outer(theta))

    worst0 = float(np.max(unitfree_crb(data)))
    phi_min = 1.0 / worst0 if np.isfinite(worst0) else 0.0
    phi_max = qos_upper_bound(data, cfg)
    if not (phi_min > 0 and np.isfinite(phi_max)):
        raise BracketError("cannot bracket the QoS level at full power; the targets may be "
                           "observable from a single direction only, review the geometry or power")
    phi_max = max(phi_max, phi_min * (1 + 1e-9))

    # the starting point meets every target at phi_min with unit power by construction
    best = data.with_(phi=phi_min, p=data.p / float(data.h @ data.p))
    phis, powers, brackets, rounds, sdr_traces, power_traces = [], [], [], [], [], []
    status = "max-bisection"
    for _ in range(cfg.mt_max_bisection):
        phi = geometric_midpoint(phi_min, phi_max)
        # warm start from the last feasible state, rescaled onto the new level
        data = best.with_(phi=phi, p=best.p * (phi / best.phi))
        data, power, ptrace, strace = _alternate(data, cfg)
        phis.append(phi)
        powers.append(power)
        rounds.append(len(strace))
        sdr_traces.extend(strace)
        power_traces.append(ptrace)
        if np.isfinite(power) and power > 0 and phi / power > best.phi:
            # scaling p by 1/power reaches phi/power at exactly unit power
            best = data.with_(phi=phi / power, p=data.p / power)
        if power <= 1.0:
            # a feasible level above phi_max closes the bracket rather than widening it
            phi_min = min(max(phi, best.phi), phi_max)
        else:
            phi_min = best.phi
            phi_max = phi
        brackets.append((phi_min, phi_max))
        if abs(power - 1.0) <= cfg.mt_eps_match or phi_max <= phi_min * (1 + cfg.mt_eps_match):
            status = "ok"
            break

    theta, _ = gaussian_randomize(best.R, cfg.randomization_trials, best, rng)
    final = best.with_(R=_outer(theta))
    pw = sca_power_step(final, cfg)
    p_hat = pw.p if pw.status == OPTIMAL and np.any(pw.p > 0) else final.p
    p_hat = p_hat / float(final.h @ p_hat)

    p_full = np.zeros(K)
    p_full[active] = p_hat * scenario.p_max
    theta_full = np.zeros((K, scenario.n_elem), dtype=complex)
    theta_full[active] = theta
    beams = make_beams(channels, p_full, theta_full, active)
    report = evaluate(scenario, beams, channels=channels, geometry=geometry)
    promised = best.crb_unit / best.phi
    trace = {"phis": phis, "powers": powers, "brackets": brackets, "rounds": rounds,
             "sdr_residual_sums": sdr_traces, "power_traces": power_traces,
             "final_phi": best.phi, "bound_ratio": report.worst_crb / promised,
             "status": status}
    report.trace = trace
    if report.status == "ok":
        report.status = status
    return beams, report


def two_stage_multi(scenario: Scenario, config: SolverConfig | None = None, rng=None):
    """Bisection, deactivate IRSs left without power, repeat; keep the better stage."""
    cfg = scenario.solver if config is None else config
    rng = np.random.default_rng(scenario.rng_seed) if rng is None else rng
    K = scenario.n_irs
    active = np.ones(K, bool)
    theta0 = None
    stages, best = [], None
    while True:
        beams, report = bisection_solve(scenario, cfg, active, theta0, rng)
        stages.append({"active": beams.active_set, "worst_crb": report.worst_crb,
                       "p": beams.p.tolist(), "transmit_power": beams.transmit_power,
                       "status": report.status})
        if best is None or report.worst_crb <= best[1].worst_crb:
            best = (beams, report)
        zero = active & (beams.p < cfg.mt_zero_power_tol * scenario.p_max)
        if not zero.any():
            break
        active = active & ~zero
        if not active.any():
            raise DegenerateGeometryError("every IRS was deactivated")
        theta0 = beams.theta[active]
    beams, report = best
    report.trace["stages"] = stages
    return beams, report
