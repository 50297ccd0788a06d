"""Reference schemes the proposed solvers are compared against."""
from __future__ import annotations

import numpy as np

from .beams import aligned_theta, make_beams, zf_power_weights
from .channel import build_channels
from .crb import CrbReport, evaluate
from .geometry import Scenario, delay_gradients
from .multi import (bisection_solve, build_qos_data, initial_phases, sca_power_step,
                    two_stage_multi)
from .single import dinkelbach_solve, fractional_problem, one_stage_solve, two_stage_solve

SCHEMES = ("two-stage", "one-stage", "equal-power", "random-phase")


def baseline_equal_power(scenario: Scenario) -> CrbReport:
    """Equal beam powers with phases steered at the target (the target centroid if Q > 1)."""
    ch = build_channels(scenario)
    K = scenario.n_irs
    active = np.ones(K, bool)
    h = zf_power_weights(ch, active)
    p = scenario.p_max / (K * h)
    p *= scenario.p_max / float(h @ p)
    if scenario.n_targets == 1:
        theta = np.stack([aligned_theta(ch, k, 0) for k in range(K)])
    else:
        theta = initial_phases(scenario, active, "centroid")
    beams = make_beams(ch, p, theta, active)
    return evaluate(scenario, beams, channels=ch)


def baseline_random_phase(scenario: Scenario, rng=None) -> CrbReport:
    """Uniformly random phases with the power allocation optimized for them."""
    rng = np.random.default_rng(scenario.rng_seed) if rng is None else rng
    ch = build_channels(scenario)
    geo = delay_gradients(scenario)
    K, N = scenario.n_irs, scenario.n_elem
    active = np.ones(K, bool)
    theta = np.exp(2j * np.pi * rng.random((K, N)))
    if scenario.n_targets == 1:
        gain = np.abs(np.einsum("kn,kn->k", theta, ch.reflect_vectors[0]))**2
        prob = fractional_problem(scenario, ch, geo, active, reflect_gain=gain)
        p = dinkelbach_solve(prob, scenario.solver).p
    else:
        R = theta[:, :, None] * np.conj(theta)[:, None, :]
        data = build_qos_data(scenario, ch, geo, active, R=R)
        # any positive QoS level works: the optimal allocation only scales with it
        step = sca_power_step(data.with_(phi=1.0), scenario.solver)
        p_hat = step.p if np.any(step.p > 0) else data.p
        p = scenario.p_max * p_hat / float(data.h @ p_hat)
    beams = make_beams(ch, p, theta, active)
    return evaluate(scenario, beams, channels=ch, geometry=geo)


def baseline_one_stage(scenario: Scenario) -> CrbReport:
    """The proposed solver run once with every IRS active."""
    if scenario.n_targets == 1:
        return one_stage_solve(scenario)[1]
    return bisection_solve(scenario)[1]


def proposed_two_stage(scenario: Scenario) -> CrbReport:
    if scenario.n_targets == 1:
        return two_stage_solve(scenario)[1]
    return two_stage_multi(scenario)[1]


def run_scheme(scheme: str, scenario: Scenario) -> CrbReport:
    if scheme == "two-stage":
        return proposed_two_stage(scenario)
    if scheme == "one-stage":
        return baseline_one_stage(scenario)
    if scheme == "equal-power":
        return baseline_equal_power(scenario)
    if scheme == "random-phase":
        return baseline_random_phase(scenario)
    raise ValueError(f"unknown scheme {scheme!r}; choose from {', '.join(SCHEMES)}")
