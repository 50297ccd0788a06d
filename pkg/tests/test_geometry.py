import numpy as np
import pytest

from irsloc.geometry import (SPEED_OF_LIGHT, Scenario, bistatic_delay, check_separability,
                             delay_gradients)
from irsloc.scenario import generate_scenario

from .conftest import small_scenario


def test_bistatic_delay_two_leg_sum(line_scenario):
    # 30 m up to IRS 0 plus 50 m to IRS 1
    assert bistatic_delay(line_scenario, 0, 0, 1) == pytest.approx(2.6685e-7, rel=1e-4)
    assert bistatic_delay(line_scenario, 0, 0, 1) == pytest.approx(80 / SPEED_OF_LIGHT, rel=1e-15)


def test_monostatic_delay_doubles(line_scenario):
    assert bistatic_delay(line_scenario, 0, 0, 0) == pytest.approx(60 / SPEED_OF_LIGHT, rel=1e-15)


def test_delay_symmetric_in_irs_order(line_scenario):
    assert bistatic_delay(line_scenario, 0, 0, 1) == bistatic_delay(line_scenario, 0, 1, 0)


def test_gradient_values_on_line(line_scenario):
    geo = delay_gradients(line_scenario)
    assert geo.a[0, 0, 1] == pytest.approx(0.8, abs=1e-12)
    assert geo.b[0, 0, 1] == pytest.approx(0.0, abs=1e-12)


def test_gradient_zero_directly_below():
    sc = small_scenario([(5, -3, 30)], [(5, -3, 0)])
    geo = delay_gradients(sc)
    assert geo.a[0, 0, 0] == 0.0 and geo.b[0, 0, 0] == 0.0


def test_mirror_flips_b_keeps_a():
    sc = generate_scenario(11, n_irs=4, n_targets=2)
    flip = np.diag([1.0, -1.0, 1.0])
    mirrored = sc.with_updates(irs_positions=sc.irs_positions @ flip,
                               target_positions=sc.target_positions @ flip)
    g, m = delay_gradients(sc), delay_gradients(mirrored)
    np.testing.assert_allclose(m.a, g.a, atol=1e-15)
    np.testing.assert_allclose(m.b, -g.b, atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_symmetry_and_bounds(seed):
    geo = delay_gradients(generate_scenario(seed, n_irs=5, n_targets=3))
    assert np.array_equal(geo.a, geo.a.transpose(0, 2, 1))
    assert np.array_equal(geo.b, geo.b.transpose(0, 2, 1))
    assert np.abs(geo.a).max() <= 2 and np.abs(geo.b).max() <= 2


def test_delays_are_path_lengths():
    sc = generate_scenario(2, n_irs=3, n_targets=2)
    geo = delay_gradients(sc)
    for q in range(2):
        for k in range(3):
            for l in range(3):
                assert geo.delays[q, k, l] == pytest.approx(bistatic_delay(sc, q, k, l), rel=1e-14)


def test_separability_single_target(line_scenario):
    assert check_separability(line_scenario) == (True, [])


def test_separability_identical_targets():
    sc = small_scenario([(0, 0, 30), (40, 0, 30)], [(10, 10, 0), (10, 10, 0)])
    ok, bad = check_separability(sc)
    assert not ok and (0, 1) in bad


def test_separability_far_targets():
    # path lengths 84.9, 93.4, 102.0 m against 241.6, 254.2, 266.8 m
    sc = small_scenario([(-80, 0, 30), (-60, 40, 30)], [(-50, 0, 0), (50, 0, 0)],
                        pulse_width=1e-9)
    assert check_separability(sc) == (True, [])


def test_coinciding_target_rejected():
    with pytest.raises(ValueError):
        Scenario(bs_position=(0, 0, 50), irs_positions=[(1, 1, 0)], target_positions=[(1, 1, 0)])


@pytest.mark.parametrize("field,value", [("n_tx", 1), ("wavelength", 0.0), ("eta", -1.0)])
def test_invalid_scenarios(field, value):
    kw = {field: value}
    with pytest.raises(ValueError):
        small_scenario([(0, 0, 30), (40, 0, 30)], [(0, 10, 0)], **kw)


def test_target_off_ground_rejected():
    with pytest.raises(ValueError):
        small_scenario([(0, 0, 30)], [(0, 10, 1.0)])


def test_crb_constant(line_scenario):
    s = line_scenario
    assert s.crb_constant == pytest.approx(SPEED_OF_LIGHT**2 * s.noise_power / s.eta)


def test_table_defaults(line_scenario):
    s = line_scenario
    assert (s.n_tx, s.n_elem, s.n_sens) == (12, 10, 10)
    assert s.rcs == pytest.approx(10**0.7)
    assert s.p_max == pytest.approx(100.0)
    assert s.noise_power == pytest.approx(1e-14)
    assert s.wavelength == 0.3
