"""Convex subproblem contracts backed by cvxpy.

Three problem classes are exposed: a convex QCQP with constraints written as
``||F x||^2 + g^T x + d <= 0``, a linear program under trace-of-inverse
bounds on 2x2 matrices linear in ``x``, and a small SDP over Hermitian blocks
whose constraints act on trace features ``y_i = Re tr(R_k V_i)``. Hermitian blocks
are lowered to real symmetric matrices of twice the size before they reach
the conic solver.

Compiled cvxpy problems are cached per structure (shapes only) and re-solved
with new parameter values, so repeated calls inside the SCA loops skip the
canonicalization step. The cache lives in thread-local storage.
"""
from __future__ import annotations

import logging
import threading
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical-failure"

DEFAULT_SOLVER = "CLARABEL"
PSD_TOL = 1e-9

_cache = threading.local()


def _compiled(key, build):
    store = getattr(_cache, "problems", None)
    if store is None:
        store = _cache.problems = {}
    if key not in store:
        store[key] = build()
    return store[key]


def _status(problem: cp.Problem) -> str:
    if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return OPTIMAL
    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return INFEASIBLE
    return NUMERICAL_FAILURE


def _solve(problem: cp.Problem, solver: str) -> str:
    try:
        with warnings.catch_warnings():
            # inaccurate optima are reported through the status below
            warnings.simplefilter("ignore", UserWarning)
            # a reused Clarabel instance keeps state from the previous solve and can stall
            problem.solve(solver=solver, warm_start=False)
    except cp.error.SolverError as exc:
        log.debug("conic solver failed: %s", exc)
        return NUMERICAL_FAILURE
    status = _status(problem)
    if problem.status == cp.OPTIMAL_INACCURATE:
        log.debug("solver reported an inaccurate optimum")
    return status


# -- real embedding ----------------------------------------------------------

def hermitian_to_real(H) -> np.ndarray:
    """``[[Re H, -Im H], [Im H, Re H]]``; preserves eigenvalues (each doubled)."""
    H = np.asarray(H)
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def real_to_hermitian(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0] // 2
    return Z[:n, :n] + 1j * Z[n:, :n]


def is_hermitian(H, rtol: float = 1e-10) -> bool:
    H = np.asarray(H)
    return bool(np.abs(H - H.conj().T).max() <= rtol * max(1.0, np.abs(H).max()))


def psd_factor(H, tol: float = PSD_TOL) -> np.ndarray:
    """Return ``F`` with ``F.T @ F == H`` for a symmetric PSD matrix ``H``.

    Raises if ``H`` has an eigenvalue below ``-tol * max(1, ||H||)``.
    """
    H = np.asarray(H, dtype=float)
    H = 0.5 * (H + H.T)
    w, U = np.linalg.eigh(H)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < -tol * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)).T


def polish_psd(R, unit_diagonal: bool = False) -> np.ndarray:
    """Clip negative eigenvalues and optionally rescale to an exact unit diagonal."""
    R = 0.5 * (R + R.conj().T)
    w, U = np.linalg.eigh(R)
    R = (U * np.clip(w, 0.0, None)) @ U.conj().T
    if unit_diagonal:
        d = np.sqrt(np.clip(np.real(np.diag(R)), 1e-300, None))
        R = R / np.outer(d, d)
    return 0.5 * (R + R.conj().T)


# -- QCQP ----------------------------------------------------------------------

@dataclass(frozen=True)
class QuadConstraint:
    """``||F x||^2 + g^T x + d <= 0``; the Hessian ``2 F^T F`` is PSD by construction."""

    F: np.ndarray
    g: np.ndarray
    d: float = 0.0

    @classmethod
    def from_hessian(cls, H, g, d=0.0):
        """Build from ``x^T H x + g^T x + d``, checking that ``H`` is PSD."""
        return cls(F=psd_factor(H), g=np.asarray(g, dtype=float), d=float(d))

    def value(self, x) -> float:
        Fx = self.F @ x
        return float(Fx @ Fx + self.g @ x + self.d)

    def gradient(self, x) -> np.ndarray:
        return 2.0 * self.F.T @ (self.F @ x) + self.g


@dataclass(frozen=True)
class QcqpProblem:
    """``min c^T x`` under convex quadratic, bound and linear equality constraints."""

    c: np.ndarray
    quad: tuple = ()
    nonneg: bool = True
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "quad", tuple(self.quad))
        for con in self.quad:
            if con.F.shape[1] != c.size or con.g.shape != c.shape:
                raise ValueError("quadratic constraint dimensions do not match c")
        if (self.A_eq is None) != (self.b_eq is None):
            raise ValueError("A_eq and b_eq go together")
        if self.A_eq is not None:
            A = np.atleast_2d(np.asarray(self.A_eq, dtype=float))
            b = np.atleast_1d(np.asarray(self.b_eq, dtype=float))
            if A.shape != (b.size, c.size):
                raise ValueError("A_eq must be (m, n) with b_eq of length m")
            object.__setattr__(self, "A_eq", A)
            object.__setattr__(self, "b_eq", b)

    @property
    def size(self) -> int:
        return self.c.size


@dataclass
class QcqpResult:
    x: np.ndarray | None
    status: str
    objective: float = np.nan
    kkt_residual: float = np.nan
    duals: dict = field(default_factory=dict)


def _build_qcqp(n, ranks, n_eq, nonneg):
    x = cp.Variable(n)
    c = cp.Parameter(n)
    params = {"c": c, "F": [], "g": [], "d": []}
    cons = []
    for r in ranks:
        F, g, d = cp.Parameter((r, n)), cp.Parameter(n), cp.Parameter()
        params["F"].append(F)
        params["g"].append(g)
        params["d"].append(d)
        cons.append(cp.sum_squares(F @ x) + g @ x + d <= 0)
    n_quad = len(cons)
    if nonneg:
        cons.append(x >= 0)
    if n_eq:
        A, b = cp.Parameter((n_eq, n)), cp.Parameter(n_eq)
        params["A"], params["b"] = A, b
        cons.append(A @ x == b)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    return prob, x, params, n_quad


def qcqp_kkt_residual(problem: QcqpProblem, x, mu, nu, lam) -> float:
    """Worst of stationarity, primal feasibility and complementarity residuals."""
    grad = problem.c.copy()
    res = []
    for con, m in zip(problem.quad, mu):
        grad += m * con.gradient(x)
        v = con.value(x)
        res += [max(v, 0.0), abs(m * v)]
    if problem.nonneg:
        grad -= nu
        res += [max(-x.min(initial=0.0), 0.0), float(np.abs(nu * x).max(initial=0.0))]
    if problem.A_eq is not None:
        grad += problem.A_eq.T @ lam
        res.append(float(np.abs(problem.A_eq @ x - problem.b_eq).max()))
    res.append(float(np.abs(grad).max()) / max(1.0, float(np.abs(problem.c).max())))
    return max(res)


def polish_kkt(problem: QcqpProblem, x, mu, nu, lam, iters: int = 8):
    """Newton refinement of the KKT system on the solver's active set.

    Conic solvers stop at about 1e-8 relative accuracy, and the cone form of
    a quadratic constraint can lose several more digits. A few Newton steps on
    the active constraints restore full accuracy; the refined point is only
    kept if its KKT residual is smaller and it stays feasible.
    """
    n = problem.size
    x = np.asarray(x, float)
    quad = problem.quad
    vals = np.array([con.value(x) for con in quad])
    act_q = [j for j, con in enumerate(quad)
             if mu[j] > 1e-9 * max(1.0, float(np.abs(mu).max(initial=0.0)))
             or abs(vals[j]) <= 1e-9 * (1.0 + abs(con.d))]
    fixed = np.zeros(n, bool)
    if problem.nonneg:
        fixed = x <= 1e-9 * max(1.0, float(np.abs(x).max()))
    free = ~fixed
    A = problem.A_eq if problem.A_eq is not None else np.zeros((0, n))
    b = problem.b_eq if problem.b_eq is not None else np.zeros(0)
    xs = np.where(fixed, 0.0, x)
    m = np.array([mu[j] for j in act_q], float)
    la = np.asarray(lam, float).copy() if A.shape[0] else np.zeros(0)
    nf, nq, ne = int(free.sum()), len(act_q), A.shape[0]
    for _ in range(iters):
        grads = np.array([quad[j].gradient(xs) for j in act_q]).reshape(nq, n)
        hess = sum((2.0 * mj * quad[j].F.T @ quad[j].F for mj, j in zip(m, act_q)),
                   np.zeros((n, n)))
        stat = problem.c + grads.T @ m + A.T @ la
        rhs = -np.concatenate([stat[free], [quad[j].value(xs) for j in act_q], A @ xs - b])
        J = np.zeros((nf + nq + ne, nf + nq + ne))
        J[:nf, :nf] = hess[np.ix_(free, free)]
        J[:nf, nf:nf + nq] = grads[:, free].T
        J[nf:nf + nq, :nf] = grads[:, free]
        J[:nf, nf + nq:] = A[:, free].T
        J[nf + nq:, :nf] = A[:, free]
        step = np.linalg.lstsq(J, rhs, rcond=None)[0]
        xs = xs.copy()
        xs[free] += step[:nf]
        m = m + step[nf:nf + nq]
        la = la + step[nf + nq:]
        if np.abs(step).max(initial=0.0) <= 1e-15 * max(1.0, float(np.abs(xs).max())):
            break
    mu_new = np.zeros(len(quad))
    mu_new[act_q] = m
    grads_all = np.array([con.gradient(xs) for con in quad]).reshape(len(quad), n)
    nu_new = np.where(fixed, problem.c + grads_all.T @ mu_new + A.T @ la, 0.0)
    feasible = (np.all(mu_new >= 0) and np.all(nu_new >= -1e-12)
                and np.all(xs >= 0 if problem.nonneg else True)
                and all(con.value(xs) <= 1e-12 * (1.0 + abs(con.d)) for con in quad))
    return xs, mu_new, nu_new, la, feasible


def solve_qcqp(problem: QcqpProblem, solver: str = DEFAULT_SOLVER) -> QcqpResult:
    n = problem.size
    ranks = tuple(con.F.shape[0] for con in problem.quad)
    n_eq = 0 if problem.A_eq is None else problem.A_eq.shape[0]
    key = ("qcqp", n, ranks, n_eq, problem.nonneg)
    prob, x, params, n_quad = _compiled(key, lambda: _build_qcqp(n, ranks, n_eq, problem.nonneg))
    params["c"].value = problem.c
    for con, F, g, d in zip(problem.quad, params["F"], params["g"], params["d"]):
        F.value, g.value, d.value = con.F, con.g, con.d
    if n_eq:
        params["A"].value, params["b"].value = problem.A_eq, problem.b_eq
    status = _solve(prob, solver)
    if status != OPTIMAL:
        return QcqpResult(x=None, status=status)
    xv = np.array(x.value, dtype=float)
    cons = prob.constraints
    mu = np.array([float(np.squeeze(cons[i].dual_value)) for i in range(n_quad)])
    nu = np.asarray(cons[n_quad].dual_value, dtype=float) if problem.nonneg else np.zeros(n)
    lam = np.asarray(cons[-1].dual_value, dtype=float) if n_eq else np.zeros(0)
    if problem.nonneg:
        # the conic solver may land a hair outside the orthant
        xv = np.maximum(xv, 0.0)
    kkt = qcqp_kkt_residual(problem, xv, mu, nu, lam)
    try:
        xp, mup, nup, lamp, ok = polish_kkt(problem, xv, mu, nu, lam)
    except np.linalg.LinAlgError:
        ok = False
    if ok:
        kkt_p = qcqp_kkt_residual(problem, xp, mup, nup, lamp)
        if kkt_p < kkt:
            xv, mu, nu, lam, kkt = xp, mup, nup, lamp, kkt_p
    return QcqpResult(x=xv, status=status, objective=float(problem.c @ xv),
                      kkt_residual=kkt, duals={"quad": mu, "nonneg": nu, "eq": lam})


@dataclass(frozen=True)
class TraceInverseProblem:
    """``min c^T x`` over ``x >= 0`` with ``tr(G_q(x)^{-1}) <= bounds[q]`` for every ``q``.

    ``G_q(x) = sum_k x_k blocks[q, k]`` with symmetric PSD 2x2 blocks. Each
    constraint is the Schur-complement LMI ``[[Y, I], [I, G_q]] >= 0`` with
    ``tr(Y) <= bound``, which is exact because ``tr(G^{-1})`` is convex.
    """

    c: np.ndarray
    blocks: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        blocks = np.asarray(self.blocks, dtype=float)
        bounds = np.atleast_1d(np.asarray(self.bounds, dtype=float))
        if blocks.ndim != 4 or blocks.shape[1] != c.size or blocks.shape[2:] != (2, 2):
            raise ValueError("blocks must be (Q, n, 2, 2) with n = len(c)")
        if bounds.shape != (blocks.shape[0],) or np.any(bounds <= 0):
            raise ValueError("need one positive bound per block group")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "blocks", 0.5 * (blocks + blocks.transpose(0, 1, 3, 2)))
        object.__setattr__(self, "bounds", bounds)


def _build_trace_inverse(n, Q):
    x = cp.Variable(n, nonneg=True)
    c = cp.Parameter(n)
    g11, g22, g12 = (cp.Parameter((Q, n)) for _ in range(3))
    t = cp.Parameter(Q, pos=True)
    cons = []
    for q in range(Q):
        Y = cp.Variable((2, 2), symmetric=True)
        u, v, w = g11[q] @ x, g22[q] @ x, g12[q] @ x
        lmi = cp.bmat([[Y[0, 0], Y[0, 1], 1, 0],
                       [Y[1, 0], Y[1, 1], 0, 1],
                       [1, 0, u, w],
                       [0, 1, w, v]])
        cons += [lmi >> 0, cp.trace(Y) <= t[q]]
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    return prob, x, (c, g11, g22, g12, t)


def solve_trace_inverse(problem: TraceInverseProblem, solver: str = DEFAULT_SOLVER) -> QcqpResult:
    Q, n = problem.blocks.shape[:2]
    prob, x, (c, g11, g22, g12, t) = _compiled(("trinv", n, Q),
                                               lambda: _build_trace_inverse(n, Q))
    # unit-scale objective and blocks; the bounds absorb the block scale
    c_scale = float(np.abs(problem.c).max()) or 1.0
    b_scale = float(np.abs(problem.blocks).max()) or 1.0
    B = problem.blocks / b_scale
    c.value = problem.c / c_scale
    g11.value, g22.value, g12.value = B[:, :, 0, 0], B[:, :, 1, 1], B[:, :, 0, 1]
    t.value = problem.bounds * b_scale
    status = _solve(prob, solver)
    if status != OPTIMAL:
        return QcqpResult(x=None, status=status)
    xv = np.maximum(np.array(x.value, dtype=float), 0.0)
    return QcqpResult(x=xv, status=status, objective=float(problem.c @ xv))


@dataclass(frozen=True)
class LiftedPowerProblem:
    """Trace-inverse power minimization over lifted beams ``S_k = p_k R_k``.

    ``S_k`` is Hermitian PSD with every diagonal entry equal to ``p_k``; the
    cost is ``c^T p`` and target ``q`` needs ``tr(G_q^{-1}) <= bounds[q]``
    with ``G_q = sum_k Re tr(S_k F[q, k]) blocks[q, k]``. Everything is
    linear in ``S``, so this is a convex SDP.
    """

    c: np.ndarray
    F: np.ndarray
    blocks: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        F = np.asarray(self.F, dtype=complex)
        blocks = np.asarray(self.blocks, dtype=float)
        bounds = np.atleast_1d(np.asarray(self.bounds, dtype=float))
        Q, K = blocks.shape[:2]
        if F.ndim != 4 or F.shape[:2] != (Q, K) or K != c.size or blocks.shape[2:] != (2, 2):
            raise ValueError("need F (Q, K, N, N), blocks (Q, K, 2, 2) and K costs")
        if bounds.shape != (Q,) or np.any(bounds <= 0):
            raise ValueError("need one positive bound per target")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "F", 0.5 * (F + np.conj(F.transpose(0, 1, 3, 2))))
        object.__setattr__(self, "blocks", 0.5 * (blocks + blocks.transpose(0, 1, 3, 2)))
        object.__setattr__(self, "bounds", bounds)


@dataclass
class LiftedPowerResult:
    S: list | None
    p: np.ndarray | None
    status: str
    objective: float = np.nan


def solve_lifted_power(problem: LiftedPowerProblem, solver: str = DEFAULT_SOLVER
                       ) -> LiftedPowerResult:
    """Solve a :class:`LiftedPowerProblem`; the returned ``S_k`` are PSD-polished."""
    Q, K, N = problem.F.shape[:3]
    c_scale = float(np.abs(problem.c).max()) or 1.0
    b_scale = float(np.abs(problem.blocks).max()) or 1.0
    f_scale = float(np.abs(problem.F).max()) or 1.0
    B = problem.blocks / b_scale
    p = cp.Variable(K, nonneg=True)
    blocks, cons = [], []
    for k in range(K):
        Z = cp.Variable((2 * N, 2 * N), PSD=True)
        cons += [Z[:N, :N] == Z[N:, N:], Z[:N, N:] == -Z[N:, :N], cp.diag(Z)[:N] == p[k]]
        blocks.append(Z)
    y = [[0.5 * cp.sum(cp.multiply(blocks[k], hermitian_to_real(problem.F[q, k] / f_scale)))
          for k in range(K)] for q in range(Q)]
    for q in range(Q):
        u = sum(y[q][k] * B[q, k, 0, 0] for k in range(K))
        v = sum(y[q][k] * B[q, k, 1, 1] for k in range(K))
        w = sum(y[q][k] * B[q, k, 0, 1] for k in range(K))
        Y = cp.Variable((2, 2), symmetric=True)
        lmi = cp.bmat([[Y[0, 0], Y[0, 1], 1, 0],
                       [Y[1, 0], Y[1, 1], 0, 1],
                       [1, 0, u, w],
                       [0, 1, w, v]])
        # the bound absorbs the block and feature scales
        cons += [lmi >> 0, cp.trace(Y) <= problem.bounds[q] * b_scale * f_scale]
    prob = cp.Problem(cp.Minimize((problem.c / c_scale) @ p), cons)
    status = _solve(prob, solver)
    if status != OPTIMAL:
        return LiftedPowerResult(S=None, p=None, status=status)
    S = [polish_psd(real_to_hermitian(Z.value)) for Z in blocks]
    pv = np.array([float(np.real(np.trace(Sk))) / N for Sk in S])
    return LiftedPowerResult(S=S, p=pv, status=status, objective=float(problem.c @ pv))


# -- SDP ---------------------------------------------------------------------

@dataclass(frozen=True)
class SdpProblem:
    """Optimization over Hermitian blocks ``R_k`` through trace features.

    ``features`` is a sequence of ``(block, V)`` pairs with Hermitian ``V``;
    feature ``i`` is ``y_i = Re tr(R_block V)``. All linear and quadratic
    data act on ``z = [y, aux]`` where ``aux`` holds ``n_aux`` free scalars.
    Quadratic constraints read ``||F z||^2 + g^T z + d <= 0``.
    """

    dims: tuple
    features: tuple
    objective: np.ndarray
    sense: str = "max"
    n_aux: int = 0
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    quad: tuple = ()
    unit_diagonal: tuple | bool = True
    psd: tuple | bool = True

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        object.__setattr__(self, "dims", dims)
        feats = []
        for blk, V in self.features:
            V = np.asarray(V, dtype=complex)
            if not 0 <= blk < len(dims) or V.shape != (dims[blk], dims[blk]):
                raise ValueError("feature matrix does not match its block")
            if not is_hermitian(V):
                raise ValueError("feature matrices must be Hermitian")
            feats.append((int(blk), V))
        object.__setattr__(self, "features", tuple(feats))
        for name in ("unit_diagonal", "psd"):
            val = getattr(self, name)
            if isinstance(val, (bool, np.bool_)):
                object.__setattr__(self, name, (bool(val),) * len(dims))
            elif len(val) != len(dims):
                raise ValueError(f"{name} needs one flag per block")
        if self.sense not in ("min", "max"):
            raise ValueError("sense is 'min' or 'max'")
        width = self.width
        obj = np.asarray(self.objective, dtype=float).ravel()
        if obj.size != width:
            raise ValueError("objective must cover features and aux variables")
        object.__setattr__(self, "objective", obj)
        for A_name, b_name in (("A_ineq", "b_ineq"), ("A_eq", "b_eq")):
            A, b = getattr(self, A_name), getattr(self, b_name)
            if (A is None) != (b is None):
                raise ValueError(f"{A_name} and {b_name} go together")
            if A is not None:
                A = np.atleast_2d(np.asarray(A, dtype=float))
                b = np.atleast_1d(np.asarray(b, dtype=float))
                if A.shape != (b.size, width):
                    raise ValueError(f"{A_name} has the wrong shape")
                object.__setattr__(self, A_name, A)
                object.__setattr__(self, b_name, b)
        object.__setattr__(self, "quad", tuple(self.quad))
        for con in self.quad:
            if con.F.shape[1] != width or con.g.size != width:
                raise ValueError("quadratic constraint dimensions do not match")

    @property
    def width(self) -> int:
        return len(self.features) + self.n_aux

    def structure_key(self):
        return ("sdp", self.dims, tuple(b for b, _ in self.features), self.n_aux, self.sense,
                None if self.A_ineq is None else self.A_ineq.shape,
                None if self.A_eq is None else self.A_eq.shape,
                tuple(con.F.shape[0] for con in self.quad), self.unit_diagonal, self.psd)


@dataclass
class SdpResult:
    R: list | None
    status: str
    aux: np.ndarray | None = None
    features: np.ndarray | None = None
    objective: float = np.nan


def _build_sdp(p: SdpProblem):
    blocks, cons = [], []
    for n, unit, psd in zip(p.dims, p.unit_diagonal, p.psd):
        Z = cp.Variable((2 * n, 2 * n), PSD=True) if psd else cp.Variable((2 * n, 2 * n),
                                                                          symmetric=True)
        cons += [Z[:n, :n] == Z[n:, n:], Z[:n, n:] == -Z[n:, :n]]
        if unit:
            cons.append(cp.diag(Z)[:n] == 1)
        blocks.append(Z)
    params = {"V": [], "obj": cp.Parameter(p.width)}
    # features get their own variable so every product below is parameter x variable
    z = cp.Variable(p.width)
    for i, (blk, _) in enumerate(p.features):
        n = p.dims[blk]
        V = cp.Parameter((2 * n, 2 * n), symmetric=True)
        params["V"].append(V)
        cons.append(z[i] == 0.5 * cp.sum(cp.multiply(blocks[blk], V)))
    aux = z[len(p.features):] if p.n_aux else None
    if p.A_ineq is not None:
        params["A_ineq"], params["b_ineq"] = (cp.Parameter(p.A_ineq.shape),
                                              cp.Parameter(p.b_ineq.size))
        cons.append(params["A_ineq"] @ z <= params["b_ineq"])
    if p.A_eq is not None:
        params["A_eq"], params["b_eq"] = cp.Parameter(p.A_eq.shape), cp.Parameter(p.b_eq.size)
        cons.append(params["A_eq"] @ z == params["b_eq"])
    params["F"], params["g"], params["d"] = [], [], []
    for con in p.quad:
        F, g, d = cp.Parameter(con.F.shape), cp.Parameter(p.width), cp.Parameter()
        params["F"].append(F)
        params["g"].append(g)
        params["d"].append(d)
        cons.append(cp.sum_squares(F @ z) + g @ z + d <= 0)
    obj = params["obj"] @ z
    goal = cp.Maximize(obj) if p.sense == "max" else cp.Minimize(obj)
    return cp.Problem(goal, cons), blocks, aux, params


def solve_sdp(problem: SdpProblem, solver: str = DEFAULT_SOLVER) -> SdpResult:
    """Solve an :class:`SdpProblem`; returned blocks are polished to be PSD
    (and unit-diagonal where requested) and features are recomputed from them."""
    p = problem
    prob, blocks, aux, params = _compiled(p.structure_key(), lambda: _build_sdp(p))
    params["obj"].value = p.objective
    for (_, V), par in zip(p.features, params["V"]):
        par.value = hermitian_to_real(V)
    for name in ("A_ineq", "b_ineq", "A_eq", "b_eq"):
        if getattr(p, name) is not None:
            params[name].value = getattr(p, name)
    for con, F, g, d in zip(p.quad, params["F"], params["g"], params["d"]):
        F.value, g.value, d.value = con.F, con.g, con.d
    status = _solve(prob, solver)
    if status != OPTIMAL:
        return SdpResult(R=None, status=status)
    R = []
    for Z, unit, psd in zip(blocks, p.unit_diagonal, p.psd):
        H = real_to_hermitian(Z.value)
        R.append(polish_psd(H, unit) if psd else 0.5 * (H + H.conj().T))
    feats = np.array([np.real(np.trace(R[blk] @ V)) for blk, V in p.features])
    aux_val = np.array(aux.value, dtype=float) if aux is not None else np.zeros(0)
    z = np.concatenate([feats, aux_val])
    return SdpResult(R=R, status=status, aux=aux_val, features=feats,
                     objective=float(p.objective @ z))
