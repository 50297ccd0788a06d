import numpy as np
import pytest

from irsloc.backend import (INFEASIBLE, OPTIMAL, LiftedPowerProblem, QcqpProblem,
                            QuadConstraint, SdpProblem, TraceInverseProblem, hermitian_to_real,
                            psd_factor, real_to_hermitian, solve_lifted_power, solve_qcqp,
                            solve_sdp, solve_trace_inverse)


def linear(g, d):
    g = np.atleast_1d(np.asarray(g, float))
    return QuadConstraint(F=np.zeros((1, g.size)), g=g, d=d)


def test_qcqp_lower_bound():
    res = solve_qcqp(QcqpProblem(c=[1.0], quad=[linear([-1.0], 3.0)]))
    assert res.status == OPTIMAL
    assert res.x[0] == pytest.approx(3.0, abs=1e-7)
    assert res.kkt_residual < 1e-7


def test_qcqp_origin_feasible():
    disc = QuadConstraint.from_hessian(np.eye(2), np.zeros(2), -2.0)
    res = solve_qcqp(QcqpProblem(c=[1.0, 1.0], quad=[disc]))
    np.testing.assert_allclose(res.x, 0.0, atol=1e-8)
    assert res.kkt_residual < 1e-7


def test_qcqp_infeasible_is_distinct_status():
    res = solve_qcqp(QcqpProblem(c=[1.0], quad=[linear([-1.0], 3.0), linear([1.0], -1.0)]))
    assert res.status == INFEASIBLE and res.x is None


def dual_projected_gradient(H, g, d, c, iters=100000):
    """Projected gradient ascent on the multiplier of one ellipsoid constraint.

    The dual derivative is the constraint value at the inner minimizer; the
    step is halved whenever it changes sign.
    """
    Hinv = np.linalg.inv(H)

    def x_of(mu):
        return -0.5 * Hinv @ (c / mu + g)

    mu, step, prev = 1.0, 1.0, None
    for _ in range(iters):
        x = x_of(mu)
        slack = x @ H @ x + g @ x + d
        if prev is not None and np.sign(slack) != np.sign(prev):
            step *= 0.5
        prev = slack
        mu = max(mu + step * slack, 1e-12)
        if abs(slack) < 1e-13:
            break
    return x_of(mu)


@pytest.mark.parametrize("seed", range(3))
def test_qcqp_matches_first_order_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 4
    X = rng.standard_normal((n, n))
    H = X @ X.T + np.eye(n)
    center = rng.random(n) + 2.0
    # ellipsoid (x - center)^T H (x - center) <= 1 stays inside the orthant
    g = -2 * H @ center
    d = center @ H @ center - 1.0
    c = rng.standard_normal(n)
    res = solve_qcqp(QcqpProblem(c=c, quad=[QuadConstraint.from_hessian(H, g, d)],
                                 nonneg=False))
    oracle = dual_projected_gradient(H, g, d, c)
    np.testing.assert_allclose(res.x, oracle, atol=1e-5)
    assert res.kkt_residual < 1e-7


def test_qcqp_equality_constraint():
    res = solve_qcqp(QcqpProblem(c=[1.0, 2.0], A_eq=[[1.0, 1.0]], b_eq=[1.0]))
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-8)


def test_from_hessian_rejects_indefinite():
    with pytest.raises(ValueError):
        QuadConstraint.from_hessian(np.diag([1.0, -1.0]), np.zeros(2))


def test_psd_factor_reconstructs(rng):
    X = rng.standard_normal((3, 2))
    H = X @ X.T
    F = psd_factor(H)
    np.testing.assert_allclose(F.T @ F, H, atol=1e-12)


def test_hermitian_embedding_round_trip(rng):
    X = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    H = X @ X.conj().T
    Z = hermitian_to_real(H)
    np.testing.assert_allclose(Z, Z.T, atol=1e-14)
    np.testing.assert_allclose(real_to_hermitian(Z), H, atol=1e-14)
    eig = np.sort(np.linalg.eigvalsh(H))
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(Z)), np.repeat(eig, 2), atol=1e-10)


def test_sdp_max_trace_unit_diagonal():
    res = solve_sdp(SdpProblem(dims=(3,), features=((0, np.eye(3)),), objective=[1.0]))
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(3.0, abs=1e-8)


def test_sdp_psd_cost_nonnegative(rng):
    X = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    C = X @ X.conj().T
    res = solve_sdp(SdpProblem(dims=(4,), features=((0, C),), objective=[1.0], sense="min"))
    assert res.objective >= -1e-8
    R = res.R[0]
    assert np.linalg.eigvalsh(R).min() >= -1e-8
    np.testing.assert_allclose(np.diag(R).real, 1.0, atol=1e-8)


def disc_grid_oracle(C, D, bound, n=801):
    """Minimize Re tr(C R) over R = [[1, r], [conj r, 1]], |r| <= 1, Re tr(D R) <= bound."""
    xs = np.linspace(-1, 1, n)
    re, im = np.meshgrid(xs, xs)
    r = re + 1j * im
    inside = np.abs(r) <= 1

    def lin(A):
        return (A[0, 0] + A[1, 1]).real + 2 * np.real(A[0, 1] * np.conj(r))

    ok = inside & (lin(D) <= bound)
    return lin(C)[ok].min()


def test_sdp_dim2_matches_disc_grid():
    C = np.array([[1.0, 0.3 - 0.8j], [0.3 + 0.8j, -0.5]])
    D = np.array([[0.0, 1.0 + 0.0j], [1.0, 0.0]])
    bound = 0.4
    prob = SdpProblem(dims=(2,), features=((0, C), (0, D)), objective=[1.0, 0.0], sense="min",
                      A_ineq=[[0.0, 1.0]], b_ineq=[bound])
    res = solve_sdp(prob)
    # grid optimum of this instance, frozen from disc_grid_oracle at resolution 801
    assert res.objective == pytest.approx(-1.2085, abs=5e-3)
    assert res.objective == pytest.approx(disc_grid_oracle(C, D, bound), abs=5e-3)


def test_sdp_rejects_non_hermitian_feature():
    with pytest.raises(ValueError):
        SdpProblem(dims=(2,), features=((0, np.array([[0, 1], [0, 0]])),), objective=[1.0])


def test_trace_inverse_scalar_block():
    g, t = 3.0, 0.5
    res = solve_trace_inverse(TraceInverseProblem(c=[1.0], blocks=g * np.eye(2)[None, None],
                                                  bounds=[t]))
    assert res.x[0] == pytest.approx(2 / (g * t), rel=1e-6)


def test_trace_inverse_matches_grid(rng):
    blocks = []
    for _ in range(2):
        v = rng.standard_normal((2, 2))
        blocks.append([np.outer(v[0], v[0]), np.outer(v[1], v[1])])
    blocks = np.array(blocks)  # (Q=2, n=2, 2, 2)
    c = np.array([1.0, 1.7])
    res = solve_trace_inverse(TraceInverseProblem(c=c, blocks=blocks, bounds=[1.0, 2.0]))
    xs = np.linspace(1e-3, 3 * res.x.max() + 1, 1500)
    best = np.inf
    X1, X2 = np.meshgrid(xs, xs)
    ok = np.ones_like(X1, bool)
    for q, bound in enumerate((1.0, 2.0)):
        G = X1[..., None, None] * blocks[q, 0] + X2[..., None, None] * blocks[q, 1]
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1]**2
        tr = np.where(det > 0, (G[..., 0, 0] + G[..., 1, 1]) / np.where(det > 0, det, 1), np.inf)
        ok &= tr <= bound
    best = (c[0] * X1 + c[1] * X2)[ok].min()
    assert res.objective == pytest.approx(best, rel=1e-2)
    assert res.objective <= best * (1 + 1e-6)


def test_trace_inverse_validates_shapes():
    with pytest.raises(ValueError):
        TraceInverseProblem(c=[1.0, 1.0], blocks=np.zeros((1, 3, 2, 2)), bounds=[1.0])


def random_blocks(rng, Q, K):
    v = rng.standard_normal((Q, K, 2))
    return v[..., :, None] * v[..., None, :]


def test_lifted_scalar_reduces_to_trace_inverse(rng):
    blocks = random_blocks(rng, 2, 3)
    c = np.array([1.0, 0.6, 2.0])
    direct = solve_trace_inverse(TraceInverseProblem(c=c, blocks=blocks, bounds=[1.0, 0.5]))
    lifted = solve_lifted_power(LiftedPowerProblem(c=c, F=np.ones((2, 3, 1, 1)), blocks=blocks,
                                                   bounds=[1.0, 0.5]))
    assert lifted.status == OPTIMAL
    assert lifted.objective == pytest.approx(direct.objective, rel=1e-6)


def test_lifted_bounds_every_rank_one_choice(rng):
    Q, K, N = 2, 2, 3
    blocks = random_blocks(rng, Q, K)
    f = rng.standard_normal((Q, K, N)) + 1j * rng.standard_normal((Q, K, N))
    F = np.conj(f)[..., :, None] * f[..., None, :]
    c = np.array([1.0, 1.5])
    lifted = solve_lifted_power(LiftedPowerProblem(c=c, F=F, blocks=blocks, bounds=[1.0, 1.0]))
    for Sk, pk in zip(lifted.S, lifted.p):
        np.testing.assert_allclose(np.real(np.diag(Sk)), pk, atol=1e-7 * max(pk, 1.0))
        assert np.linalg.eigvalsh(Sk).min() >= -1e-10
    for _ in range(20):
        theta = np.exp(2j * np.pi * rng.random((K, N)))
        gains = np.abs(np.einsum("kn,qkn->qk", theta, f))**2
        fixed = solve_trace_inverse(TraceInverseProblem(c=c, blocks=gains[..., None, None] * blocks,
                                                        bounds=[1.0, 1.0]))
        assert lifted.objective <= fixed.objective * (1 + 1e-6)


def test_lifted_validates_shapes():
    with pytest.raises(ValueError):
        LiftedPowerProblem(c=[1.0], F=np.ones((1, 2, 1, 1)), blocks=np.zeros((1, 2, 2, 2)),
                           bounds=[1.0])
