"""Delay-domain FIM, position FIM via the chain rule, and per-target CRB."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .beams import BeamSolution, orthogonality_residual
from .channel import ChannelSet, build_channels
from .geometry import SPEED_OF_LIGHT, GeometryCoefficients, Scenario, delay_gradients

log = logging.getLogger(__name__)

SINGULAR_RTOL = 1e-12


class SingularFimError(ArithmeticError):
    def __init__(self, targets):
        self.targets = list(targets)
        super().__init__(f"position FIM is singular for target(s) {self.targets}")


@dataclass(frozen=True)
class FimBlocks:
    """Per-target 2x2 position FIMs plus the diagonal delay FIM.

    ``delay_fim[q, k, l]`` is the (only non-zero) diagonal entry for path
    (q, k, l); off-diagonal delay-FIM entries vanish by the ZF design.
    """

    G: np.ndarray
    delay_fim: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c0: float
    singular: tuple

    @property
    def n_targets(self) -> int:
        return self.G.shape[0]


@dataclass
class CrbReport:
    crb: np.ndarray
    beams: BeamSolution | None = None
    status: str = "ok"
    singular: tuple = ()
    trace: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)
    orthogonality: float = 0.0

    @property
    def worst_crb(self) -> float:
        return float(np.max(self.crb))


def echo_energy(channels: ChannelSet, beams: BeamSolution, q: int, k: int, l: int) -> float:
    """``||H_I2I,q,k,l Theta_k H_B2I,k w_k||^2`` by explicit matrix products."""
    if not beams.active[k]:
        return 0.0
    y = channels.h_i2i(q, k, l) @ (beams.theta[k] * (channels.h_b2i[k] @ beams.w[:, k]))
    return float(np.vdot(y, y).real)


def echo_energies(channels: ChannelSet, beams: BeamSolution) -> np.ndarray:
    """All echo energies, shape (Q, K, K), using the rank-one factorization."""
    M = channels.a_t2i.shape[2]
    gain = np.abs(np.einsum("kn,qkn->qk", beams.theta, channels.reflect_vectors))**2
    tx = np.abs(np.einsum("kt,tk->k", channels.a_b2i_tx.conj(), beams.w))**2
    per_k = gain * (channels.alpha_b2i**2 * tx)[None, :]
    return channels.alpha_i2i**2 * M * per_k[:, :, None]


def _is_singular(G) -> bool:
    det = G[0, 0] * G[1, 1] - G[0, 1] * G[1, 0]
    return not det > SINGULAR_RTOL * max(np.trace(G), 0.0)**2


def position_fim(scenario: Scenario, channels: ChannelSet, geometry: GeometryCoefficients,
                 beams: BeamSolution) -> FimBlocks:
    """Block-diagonal position FIM, one 2x2 block per target."""
    scale = scenario.eta / scenario.noise_power
    delay_fim = scale * echo_energies(channels, beams)
    a, b = geometry.a, geometry.b
    # a, b are -c times the delay derivatives, hence the 1/c^2
    wts = delay_fim / SPEED_OF_LIGHT**2
    G = np.empty((scenario.n_targets, 2, 2))
    G[:, 0, 0] = np.einsum("qkl,qkl->q", wts, a * a)
    G[:, 1, 1] = np.einsum("qkl,qkl->q", wts, b * b)
    G[:, 0, 1] = G[:, 1, 0] = np.einsum("qkl,qkl->q", wts, a * b)
    singular = tuple(q for q in range(G.shape[0]) if _is_singular(G[q]))
    if singular:
        log.debug("singular position FIM for targets %s", singular)
    return FimBlocks(G=G, delay_fim=delay_fim, a=a, b=b,
                     c0=scenario.crb_constant, singular=singular)


def trace_inverse(G) -> float:
    return float(np.trace(np.linalg.inv(G)))


def crb_fraction(G) -> float:
    """The explicit scalar form (G11 + G22) / (G11 G22 - G12^2)."""
    return float((G[0, 0] + G[1, 1]) / (G[0, 0] * G[1, 1] - G[0, 1]**2))


def crb_trace(fim: FimBlocks, check_rtol: float = 1e-9) -> np.ndarray:
    """Per-target CRB in m^2; raises :class:`SingularFimError` on singular blocks."""
    if fim.singular:
        raise SingularFimError(fim.singular)
    out = np.empty(fim.n_targets)
    for q, G in enumerate(fim.G):
        out[q] = trace_inverse(G)
        alt = crb_fraction(G)
        if abs(alt - out[q]) > check_rtol * abs(out[q]):
            log.warning("target %d: trace-inverse %.6e vs fraction %.6e", q, out[q], alt)
    return out


def weyl_monotonicity_check(fim: FimBlocks, q: int, k: int, l: int, delta: float) -> bool:
    """True iff adding ``delta`` along path (q, k, l) does not raise the CRB."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    G = fim.G[q]
    d = np.array([fim.a[q, k, l], fim.b[q, k, l]])
    before = trace_inverse(G)
    after = trace_inverse(G + delta * np.outer(d, d))
    return bool(after <= before + 1e-12 * max(1.0, abs(before)))


def evaluate(scenario: Scenario, beams: BeamSolution, channels: ChannelSet | None = None,
             geometry: GeometryCoefficients | None = None, **report_kw) -> CrbReport:
    """Recompute every target's CRB from scratch; singular targets get ``inf``."""
    channels = build_channels(scenario) if channels is None else channels
    geometry = delay_gradients(scenario) if geometry is None else geometry
    fim = position_fim(scenario, channels, geometry, beams)
    crb = np.full(fim.n_targets, np.inf)
    for q, G in enumerate(fim.G):
        if q not in fim.singular:
            crb[q] = trace_inverse(G)
    report_kw.setdefault("status", "singular" if fim.singular else "ok")
    return CrbReport(crb=crb, beams=beams, singular=fim.singular,
                     orthogonality=orthogonality_residual(channels, beams), **report_kw)
