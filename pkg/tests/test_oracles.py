import numpy as np
import pytest

from irsloc.beams import aligned_theta, make_beams
from irsloc.channel import build_channels
from irsloc.crb import position_fim
from irsloc.geometry import delay_gradients
from irsloc.oracles import GridSpec, dense_chain_rule_fim, fd_jacobian, grid_power_search
from irsloc.scenario import generate_scenario
from irsloc.single import FractionalProblem

from .conftest import small_scenario


def test_grid_counts_points():
    spec = GridSpec(3, 10)
    pts = spec.points()
    assert len(pts) == spec.n_points == 66
    np.testing.assert_allclose(pts.sum(axis=1), 1.0)
    assert np.all(pts >= 0)


def test_grid_too_large():
    with pytest.raises(ValueError, match="more than"):
        GridSpec(4, 1000)


def test_grid_single_irs():
    prob = FractionalProblem(a=[2.0], b=[1.0], c=[0.1], h=[4.0], p_max=8.0)
    p, _ = grid_power_search(prob, 50)
    np.testing.assert_allclose(p, [2.0])


def test_grid_symmetric_instance():
    prob = FractionalProblem(a=[1.0, 2.0], b=[2.0, 1.0], c=[0.0, 0.0], h=[1.0, 1.0], p_max=1.0)
    p, obj = grid_power_search(prob, 200)
    np.testing.assert_allclose(p, [0.5, 0.5])
    # (a+b)^T p / (a^T p b^T p) at the midpoint: 3 / 2.25
    assert obj == pytest.approx(3 / 2.25)


def test_grid_refuses_five_irs():
    prob = FractionalProblem(a=np.ones(5), b=np.ones(5), c=np.zeros(5), h=np.ones(5), p_max=1.0)
    with pytest.raises(ValueError):
        grid_power_search(prob)


def test_fd_matches_closed_form():
    sc = generate_scenario(21, n_irs=4, n_targets=2)
    fd, geo = fd_jacobian(sc, 1e-4), delay_gradients(sc)
    assert np.abs(fd.a - geo.a).max() < 1e-6
    assert np.abs(fd.b - geo.b).max() < 1e-6


def test_fd_second_order():
    sc = generate_scenario(21, n_irs=3)
    geo = delay_gradients(sc)
    errs = [np.abs(fd_jacobian(sc, h).a - geo.a).max() for h in (0.4, 0.2)]
    assert errs[1] == pytest.approx(errs[0] / 4, rel=0.05)


def test_fd_overhead_is_zero():
    sc = small_scenario([(3, 4, 30)], [(3, 4, 0)])
    fd = fd_jacobian(sc, 1e-3)
    assert abs(fd.a[0, 0, 0]) < 1e-9 and abs(fd.b[0, 0, 0]) < 1e-9


@pytest.mark.parametrize("step", [0.0, 2.0])
def test_fd_step_bounds(step):
    with pytest.raises(ValueError):
        fd_jacobian(generate_scenario(0, n_irs=2), step)


def test_dense_fim_structure():
    sc = generate_scenario(14, n_irs=3, n_targets=3)
    ch = build_channels(sc)
    theta = np.stack([aligned_theta(ch, k, 1) for k in range(3)])
    beams = make_beams(ch, [10.0, 30.0, 60.0], theta)
    blocks, full = dense_chain_rule_fim(sc, beams, ch)
    np.testing.assert_allclose(blocks, position_fim(sc, ch, delay_gradients(sc), beams).G,
                               rtol=1e-9)
    mask = np.kron(np.eye(3), np.ones((2, 2))) == 0
    assert np.all(full[mask] == 0)


def test_dense_fim_single_path_singular():
    sc = generate_scenario(3, n_irs=1)
    ch = build_channels(sc)
    beams = make_beams(ch, [1.0], [aligned_theta(ch, 0, 0)])
    G = dense_chain_rule_fim(sc, beams, ch)[0][0]
    assert abs(np.linalg.det(G)) <= 1e-12 * np.trace(G)**2


def test_dense_fim_size_limit():
    sc = generate_scenario(3, n_irs=5)
    ch = build_channels(sc)
    beams = make_beams(ch, np.ones(5), np.ones((5, sc.n_elem)))
    with pytest.raises(ValueError):
        dense_chain_rule_fim(sc, beams, ch)
