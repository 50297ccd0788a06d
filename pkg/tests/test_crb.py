from dataclasses import replace

import numpy as np
import pytest

from irsloc.beams import aligned_theta, make_beams
from irsloc.channel import build_channels
from irsloc.crb import (FimBlocks, SingularFimError, crb_fraction, crb_trace, echo_energies,
                        echo_energy, evaluate, position_fim, trace_inverse,
                        weyl_monotonicity_check)
from irsloc.geometry import SPEED_OF_LIGHT, delay_gradients
from irsloc.oracles import dense_chain_rule_fim
from irsloc.scenario import generate_scenario


def blocks(G, a=None, b=None):
    G = np.asarray(G, float)[None]
    a = np.zeros((1, 1, 1)) if a is None else a
    b = np.zeros((1, 1, 1)) if b is None else b
    return FimBlocks(G=G, delay_fim=np.zeros((1, 1, 1)), a=a, b=b, c0=1.0, singular=())


def aligned_beams(scenario, p=None):
    ch = build_channels(scenario)
    K = scenario.n_irs
    p = np.full(K, scenario.p_max / K) if p is None else p
    theta = np.stack([aligned_theta(ch, k, 0) for k in range(K)])
    return ch, make_beams(ch, p, theta)


@pytest.fixture(scope="module")
def setup():
    sc = generate_scenario(8, n_irs=3, n_targets=2)
    ch, beams = aligned_beams(sc)
    return sc, ch, delay_gradients(sc), beams


def test_crb_of_scaled_identity():
    assert crb_trace(blocks(3.0 * np.eye(2)))[0] == pytest.approx(2 / 3)


def test_crb_of_diagonal():
    assert crb_trace(blocks(np.diag([2.0, 5.0])))[0] == pytest.approx(0.5 + 0.2)


def test_fraction_matches_trace_inverse(rng):
    for _ in range(50):
        X = rng.standard_normal((2, 2))
        G = X @ X.T + 1e-3 * np.eye(2)
        assert crb_fraction(G) == pytest.approx(trace_inverse(G), rel=1e-9)


def test_singular_block_names_target():
    fim = FimBlocks(G=np.array([np.eye(2), np.zeros((2, 2))]), delay_fim=np.zeros((2, 1, 1)),
                    a=np.zeros((2, 1, 1)), b=np.zeros((2, 1, 1)), c0=1.0, singular=(1,))
    with pytest.raises(SingularFimError) as err:
        crb_trace(fim)
    assert err.value.targets == [1]


def test_echo_energy_zero_when_deactivated(setup):
    sc, ch, _, beams = setup
    off = make_beams(ch, beams.p, beams.theta, active=[True, False, True])
    assert echo_energy(ch, off, 0, 1, 2) == 0.0


def test_echo_energy_zero_for_orthogonal_beam(setup):
    sc, ch, _, beams = setup
    w = beams.w.copy()
    a = ch.a_b2i_tx[0]
    x = np.random.default_rng(0).standard_normal(sc.n_tx) + 0j
    w[:, 0] = x - a * (a.conj() @ x) / sc.n_tx
    orth = type(beams)(p=beams.p, theta=beams.theta, active=beams.active, w=w)
    assert echo_energy(ch, orth, 0, 0, 1) < 1e-30


def test_echo_energy_closed_form(setup):
    # zero-forcing gives |a_B2I,k^H w_k|^2 = p_k, aligned phases give array gain N^2
    sc, ch, _, beams = setup
    for q, k, l in [(0, 0, 0), (0, 1, 2), (1, 2, 0)]:
        want = (ch.alpha_i2i[q, k, l]**2 * ch.alpha_b2i[k]**2 * sc.n_sens
                * sc.n_elem**2 * beams.p[k])
        assert echo_energy(ch, beams, q, k, l) == pytest.approx(want, rel=1e-10)


def test_factored_energies_match_matrix_chain(setup):
    sc, ch, _, beams = setup
    E = echo_energies(ch, beams)
    for idx in np.ndindex(E.shape):
        assert E[idx] == pytest.approx(echo_energy(ch, beams, *idx), rel=1e-10)


def test_orthogonal_paths_give_scaled_identity(setup):
    sc, ch, geo, beams = setup
    # equal gains everywhere, and only paths (0,0) and (1,1) with directions (1,0) and (0,1)
    ch = replace(ch, alpha_i2i=np.full_like(ch.alpha_i2i, 1e-6),
                 alpha_b2i=np.full_like(ch.alpha_b2i, 1e-3))
    beams = make_beams(ch, np.full(sc.n_irs, 1.0), beams.theta)
    a, b = np.zeros_like(geo.a), np.zeros_like(geo.b)
    a[0, 0, 0], b[0, 1, 1] = 1.0, 1.0
    fim = position_fim(sc, ch, replace(geo, a=a, b=b), beams)
    g = echo_energy(ch, beams, 0, 0, 0) * sc.eta / (SPEED_OF_LIGHT**2 * sc.noise_power)
    np.testing.assert_allclose(fim.G[0], g * np.eye(2), rtol=1e-10)


def test_single_path_is_singular():
    sc = generate_scenario(1, n_irs=1, n_targets=1)
    _, beams = aligned_beams(sc)
    report = evaluate(sc, beams)
    assert report.singular == (0,) and np.isinf(report.crb[0])


def test_position_fim_matches_dense_product(setup):
    sc, ch, geo, beams = setup
    fim = position_fim(sc, ch, geo, beams)
    dense, full = dense_chain_rule_fim(sc, beams, ch)
    np.testing.assert_allclose(fim.G, dense, rtol=1e-9)
    # nothing couples the two targets
    assert np.all(full[0:2, 2:4] == 0) and np.all(full[2:4, 0:2] == 0)


def test_fim_blocks_symmetric_psd(setup):
    sc, ch, geo, beams = setup
    fim = position_fim(sc, ch, geo, beams)
    for G in fim.G:
        assert G[0, 1] == G[1, 0]
        assert np.linalg.eigvalsh(G).min() >= 0
    assert np.all(fim.delay_fim >= 0)


def test_crb_inverse_in_power_scale(setup):
    sc, ch, geo, beams = setup
    base = evaluate(sc, beams, ch, geo).crb
    for t in (0.5, 3.0, 17.0):
        np.testing.assert_allclose(evaluate(sc, beams.scaled(t), ch, geo).crb, base / t,
                                   rtol=1e-12)


def test_weyl_zero_delta_is_equality(setup):
    sc, ch, geo, beams = setup
    fim = position_fim(sc, ch, geo, beams)
    assert weyl_monotonicity_check(fim, 0, 1, 2, 0.0)


def test_weyl_unit_delta(setup):
    sc, ch, geo, beams = setup
    fim = position_fim(sc, ch, geo, beams)
    assert weyl_monotonicity_check(fim, 1, 0, 2, float(np.abs(fim.G[1]).max()))


def test_weyl_rejects_negative_delta(setup):
    sc, ch, geo, beams = setup
    with pytest.raises(ValueError):
        weyl_monotonicity_check(position_fim(sc, ch, geo, beams), 0, 0, 0, -1.0)


def test_report_worst_and_orthogonality(setup):
    sc, ch, geo, beams = setup
    report = evaluate(sc, beams, ch, geo)
    assert report.worst_crb == report.crb.max() > 0
    assert report.orthogonality < 1e-9
