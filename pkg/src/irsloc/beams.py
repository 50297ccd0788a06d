"""Beam solutions: zero-forcing transmit structure and closed-form IRS phases."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet


# smallest-to-largest Gram eigenvalue ratio below which zero-forcing is refused
ZF_RCOND = 1e-10


class RankDeficientError(ValueError):
    """Two active IRSs are (nearly) indistinguishable from the BS array."""


@dataclass(frozen=True)
class BeamSolution:
    """Power allocation, IRS phases and the materialized transmit matrix.

    ``p[k] = e_k**2`` is the power scale of beam ``k``; ``theta[k]`` is
    all-zero for a deactivated IRS and ``w`` has a zero column there.
    """

    p: np.ndarray
    theta: np.ndarray
    active: np.ndarray
    w: np.ndarray

    @property
    def active_set(self) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.active)]

    @property
    def transmit_power(self) -> float:
        return float(np.real(np.trace(self.w @ self.w.conj().T)))

    def scaled(self, factor: float) -> "BeamSolution":
        """Scale all beam powers by ``factor`` (amplitudes by its square root)."""
        return BeamSolution(p=self.p * factor, theta=self.theta, active=self.active,
                            w=self.w * np.sqrt(factor))


def _active_rows(channels: ChannelSet, active) -> np.ndarray:
    K = channels.a_b2i_tx.shape[0]
    active = np.ones(K, bool) if active is None else np.asarray(active, bool)
    return active


def zf_gram_inverse(channels: ChannelSet, active=None) -> np.ndarray:
    active = _active_rows(channels, active)
    A = channels.a_b2i_tx[active].conj()  # rows a_B2I,k^H
    gram = A @ A.conj().T
    # the Gram diagonal is N_T; a tiny eigenvalue means collinear directions
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= ZF_RCOND * eig[-1]:
        raise RankDeficientError(
            "BS steering vectors of the active IRSs are linearly dependent; "
            "deactivate one of the IRSs sharing a BS direction")
    return np.linalg.inv(gram)


def zf_power_weights(channels: ChannelSet, active=None) -> np.ndarray:
    """``h_k = [(A A^H)^-1]_kk`` for the active IRSs, zeros elsewhere."""
    active = _active_rows(channels, active)
    h = np.zeros(active.size)
    h[active] = np.real(np.diag(zf_gram_inverse(channels, active)))
    return h


def zf_transmit(channels: ChannelSet, e, active=None) -> np.ndarray:
    """Zero-forcing transmit matrix ``A^H (A A^H)^-1 diag(e)``.

    Columns of deactivated IRSs are zero; active beams are nulled towards
    every other active IRS.
    """
    active = _active_rows(channels, active)
    e = np.asarray(e, dtype=float)
    A = channels.a_b2i_tx[active].conj()
    W = np.zeros((channels.n_tx, active.size), dtype=complex)
    W[:, active] = A.conj().T @ zf_gram_inverse(channels, active) @ np.diag(e[active])
    return W


def orthogonality_residual(channels: ChannelSet, beams: BeamSolution) -> float:
    """Worst ``|a_B2I,k1^H w_k2|`` over distinct active IRSs."""
    idx = beams.active_set
    if len(idx) < 2:
        return 0.0
    cross = channels.a_b2i_tx[idx].conj() @ beams.w[:, idx]
    np.fill_diagonal(cross, 0.0)
    return float(np.abs(cross).max())


def optimal_theta(channels: ChannelSet, k: int, q: int, w_k) -> np.ndarray:
    """Unit-modulus phases maximizing ``|a_I2T^H diag(H_B2I,k w_k) theta|``."""
    eff = channels.h_b2i[k] @ np.asarray(w_k)
    row = channels.a_i2t[k, q].conj() * eff
    mag = np.abs(row)
    if np.any(mag <= 1e-300) or not np.all(np.isfinite(mag)):
        raise ValueError(f"effective channel of IRS {k} vanishes; no phase is optimal")
    return np.conj(row) / mag


def aligned_theta(channels: ChannelSet, k: int, q: int) -> np.ndarray:
    """Optimal phases when ``a_B2I,k^H w_k`` is real positive, as under ZF."""
    v = channels.reflect_vectors[q, k]
    return np.conj(v) / np.abs(v)


def make_beams(channels: ChannelSet, p, theta, active=None) -> BeamSolution:
    active = _active_rows(channels, active)
    p = np.where(active, np.asarray(p, dtype=float), 0.0)
    p = np.maximum(p, 0.0)
    theta = np.array(theta, dtype=complex)
    theta[~active] = 0.0
    w = zf_transmit(channels, np.sqrt(p), active)
    return BeamSolution(p=p, theta=theta, active=active.copy(), w=w)
