import cvxpy as cp
import numpy as np
import pytest

from irsloc.channel import build_channels
from irsloc.geometry import delay_gradients
from irsloc.oracles import grid_power_search
from irsloc.scenario import generate_scenario
from irsloc.single import (FractionalProblem, admm_inner, dinkelbach_ratio, dinkelbach_solve,
                           fractional_problem, one_stage_solve, project_weighted_simplex,
                           two_stage_solve)

from .conftest import small_scenario


def problem_for(seed, K=3, **kw):
    sc = generate_scenario(seed, n_irs=K, **kw)
    return sc, fractional_problem(sc, build_channels(sc), delay_gradients(sc))


@pytest.mark.parametrize("seed", range(4))
def test_problem_invariants(seed):
    _, prob = problem_for(seed, K=5)
    assert np.all(prob.a >= 0) and np.all(prob.b >= 0) and np.all(prob.h > 0)
    assert np.all(prob.c**2 <= prob.a * prob.b * (1 + 1e-12))
    assert prob.rho > 2 * prob.beta


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        FractionalProblem(a=[-1.0], b=[1.0], c=[0.0], h=[1.0], p_max=1.0)


def test_simplex_update_hand_example():
    # rho = 4, beta = 1, p = 0.5, lambda = 0: target rho p + lambda = 2, curvature rho - 2 beta = 2
    z, mu0 = project_weighted_simplex(np.array([2.0]), np.array([1.0]), 1.0, 2.0)
    assert mu0 == pytest.approx(0.0, abs=1e-15)
    assert z[0] == pytest.approx(1.0)


def simplex_qp_oracle(target, h, total, curvature):
    z = cp.Variable(target.size, nonneg=True)
    cp.Problem(cp.Minimize(curvature / 2 * cp.sum_squares(z) - target @ z),
               [h @ z == total]).solve(solver="CLARABEL")
    return z.value


@pytest.mark.parametrize("seed", range(5))
def test_simplex_update_matches_generic_qp(seed):
    rng = np.random.default_rng(seed)
    target, h = rng.standard_normal(6), rng.random(6) + 0.1
    z, _ = project_weighted_simplex(target, h, 2.0, 1.5)
    np.testing.assert_allclose(z, simplex_qp_oracle(target, h, 2.0, 1.5), atol=1e-6)
    assert h @ z == pytest.approx(2.0)


def test_admm_single_irs_pins_z():
    prob = FractionalProblem(a=[2.0], b=[3.0], c=[0.5], h=[4.0], p_max=10.0)
    res = admm_inner(prob, 0.1, p=[7.0], z=[0.3], lam=[1.0], rho=12.0, beta=prob.beta)
    assert res.z[0] == pytest.approx(2.5)


def test_admm_consensus_and_z_subproblem():
    _, prob = problem_for(12)
    prob, _ = prob.normalized()
    p0 = prob.equal_power()
    res = admm_inner(prob, 0.5 * prob.denominator(p0) / prob.numerator(p0),
                     p0, p0, np.zeros(3), eps=1e-14, max_iter=20000)
    assert res.converged
    np.testing.assert_allclose(res.p, res.z, atol=1e-5 * np.abs(res.z).max())
    # z is the minimizer of its own subproblem at the final multiplier
    rho, beta = prob.rho, prob.beta
    oracle = simplex_qp_oracle(rho * res.p + res.lam, prob.h, prob.p_max, rho - 2 * beta)
    np.testing.assert_allclose(res.z, oracle, atol=1e-4 * np.abs(oracle).max())


def test_admm_rejects_small_penalty():
    _, prob = problem_for(0)
    with pytest.raises(ValueError):
        admm_inner(prob, 1.0, prob.equal_power(), prob.equal_power(), np.zeros(3),
                   rho=prob.beta)


def test_dinkelbach_ratio_at_consensus():
    _, prob = problem_for(3)
    p = prob.equal_power()
    want = prob.denominator(p) / prob.numerator(p)
    assert dinkelbach_ratio(prob, p, p, prob.beta, prob.rho) == pytest.approx(want, rel=1e-12)


def test_symmetric_instance_gives_symmetric_powers():
    prob = FractionalProblem(a=[1.0, 3.0], b=[3.0, 1.0], c=[0.2, 0.2], h=[1.0, 1.0], p_max=5.0)
    res = dinkelbach_solve(prob)
    assert res.p[0] == pytest.approx(res.p[1], rel=1e-5)
    assert prob.h @ res.p == pytest.approx(5.0)


@pytest.mark.parametrize("seed", range(5))
def test_dinkelbach_matches_grid(seed):
    _, prob = problem_for(100 + seed)
    res = dinkelbach_solve(prob)
    _, grid_obj = grid_power_search(prob, 200)
    assert res.objective <= grid_obj * 1.01
    assert prob.h @ res.p == pytest.approx(prob.p_max, rel=1e-9)
    assert np.all(res.p >= 0)


def test_dinkelbach_alphas_increase():
    _, prob = problem_for(7, K=5)
    res = dinkelbach_solve(prob)
    assert res.converged
    assert np.all(np.diff(res.objectives) <= 1e-12 * np.abs(res.objectives[:-1]))


def test_two_stage_single_irs():
    sc = generate_scenario(5, n_irs=1)
    beams, report = two_stage_solve(sc)
    ch = build_channels(sc)
    assert len(report.trace["stages"]) == 1
    # with one reflector the FIM is singular; power still goes to it
    assert beams.p[0] == pytest.approx(sc.p_max * sc.n_tx, rel=1e-12)
    assert ch.a_b2i_tx.shape[0] == 1


def test_far_irs_is_dropped():
    near = [(20, 0, 30), (-15, 18, 30), (5, -25, 30), (-20, -10, 30)]
    sc = small_scenario(near + [(200, 300, 30)], [(0, 0, 0)])
    _, one = one_stage_solve(sc)
    beams, two = two_stage_solve(sc)
    assert 4 not in beams.active_set
    assert two.worst_crb <= one.worst_crb


def test_many_antennas_make_stages_agree():
    sc = generate_scenario(2, n_irs=6, n_tx=64)
    _, one = one_stage_solve(sc)
    _, two = two_stage_solve(sc)
    assert two.worst_crb <= one.worst_crb
    assert two.worst_crb == pytest.approx(one.worst_crb, rel=0.01)


@pytest.mark.parametrize("seed", range(3))
def test_two_stage_never_worse(seed):
    sc = generate_scenario(seed, n_irs=6)
    _, one = one_stage_solve(sc)
    beams, two = two_stage_solve(sc)
    assert two.worst_crb <= one.worst_crb * (1 + 1e-12)
    assert abs(beams.transmit_power - sc.p_max) <= 1e-6 * sc.p_max
    assert two.orthogonality < 1e-9
