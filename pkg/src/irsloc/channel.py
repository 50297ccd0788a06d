"""Steering vectors, path-loss gains and cascaded channels."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Scenario


def steering(dir_cos, count: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Uniform linear array response ``exp(j 2 pi n spacing_ratio dir_cos)``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    n = np.arange(count)
    return np.exp(2j * np.pi * n * spacing_ratio * float(dir_cos))


def planar_steering(dir_cos_x, dir_cos_z, count_x, count_z, spacing_ratio=0.5):
    """Kronecker product of the horizontal and vertical array factors."""
    return np.kron(steering(dir_cos_x, count_x, spacing_ratio),
                   steering(dir_cos_z, count_z, spacing_ratio))


def pathloss_b2i(wavelength, distance):
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    return np.sqrt(wavelength**2 / (16 * np.pi**2 * distance**2))


def pathloss_i2i(wavelength, rcs, d1, d2):
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if np.any(d1 <= 0) or np.any(d2 <= 0):
        raise ValueError("distances must be positive")
    # the product first keeps the gain exactly symmetric in the two legs
    return np.sqrt(wavelength**2 * rcs / (64 * np.pi**3 * (d1 * d2)**2))


@dataclass(frozen=True)
class ChannelSet:
    """All channel quantities of a scenario.

    Shapes: ``a_b2i_tx`` (K, N_T), ``a_i2b`` (K, N), ``a_i2t`` (K, Q, N),
    ``a_t2i`` (Q, K, M), ``alpha_b2i`` (K,), ``alpha_i2i`` (Q, K, K).
    """

    a_b2i_tx: np.ndarray
    a_i2b: np.ndarray
    a_i2t: np.ndarray
    a_t2i: np.ndarray
    alpha_b2i: np.ndarray
    alpha_i2i: np.ndarray

    @property
    def h_b2i(self) -> np.ndarray:
        """BS-to-IRS channels, shape (K, N, N_T)."""
        return (self.alpha_b2i[:, None, None] * self.a_i2b[:, :, None]
                * self.a_b2i_tx.conj()[:, None, :])

    def h_i2i(self, q: int, k: int, l: int) -> np.ndarray:
        """Cascaded IRS k -> target q -> IRS l sensor channel, shape (M, N)."""
        return self.alpha_i2i[q, k, l] * np.outer(self.a_t2i[q, l], self.a_i2t[k, q].conj())

    @property
    def reflect_vectors(self) -> np.ndarray:
        """``v[q, k]`` with ``a_i2t^H diag(theta) a_i2b = theta^T v``, shape (Q, K, N)."""
        return self.a_i2t.conj().transpose(1, 0, 2) * self.a_i2b[None, :, :]

    @property
    def n_tx(self) -> int:
        return self.a_b2i_tx.shape[1]


def _unit(vec):
    return vec / np.linalg.norm(vec, axis=-1, keepdims=True)


def build_channels(scenario: Scenario) -> ChannelSet:
    s = scenario
    sr = s.spacing_ratio
    irs, bs, tgt = s.irs_positions, s.bs_position, s.target_positions
    K, Q = s.n_irs, s.n_targets

    d_bs = np.linalg.norm(irs - bs, axis=1)
    u_bs2irs = _unit(irs - bs)  # seen from the BS
    u_irs2bs = -u_bs2irs  # seen from each IRS
    diff = tgt[None, :, :] - irs[:, None, :]  # (K, Q, 3) IRS -> target
    d_it = np.linalg.norm(diff, axis=2)
    u_irs2t = diff / d_it[..., None]

    # the BS is a ULA along x, so only the x direction cosine enters its response
    a_b2i_tx = np.stack([steering(u[0], s.n_tx, sr) for u in u_bs2irs])
    a_i2b = np.stack([planar_steering(u[0], u[2], s.n_elem_x, s.n_elem_z, sr)
                      for u in u_irs2bs])
    a_i2t = np.empty((K, Q, s.n_elem), dtype=complex)
    a_t2i = np.empty((Q, K, s.n_sens), dtype=complex)
    for k in range(K):
        for q in range(Q):
            u = u_irs2t[k, q]
            a_i2t[k, q] = planar_steering(u[0], u[2], s.n_elem_x, s.n_elem_z, sr)
            a_t2i[q, k] = planar_steering(u[0], u[2], s.m_sens_x, s.m_sens_z, sr)

    alpha_b2i = pathloss_b2i(s.wavelength, d_bs)
    d_tq = d_it.T  # (Q, K)
    alpha_i2i = pathloss_i2i(s.wavelength, s.rcs, d_tq[:, :, None], d_tq[:, None, :])
    return ChannelSet(a_b2i_tx=a_b2i_tx, a_i2b=a_i2b, a_i2t=a_i2t, a_t2i=a_t2i,
                      alpha_b2i=alpha_b2i, alpha_i2i=alpha_i2i)
