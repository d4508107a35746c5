import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubicvr.cubic import CubicModel, model_eval, solve_exact, solve_krylov, verify_kkt
from cubicvr.lanczos import lanczos, min_eigenvalue
from cubicvr.verify import best_line_candidate, random_cubic_instance

# 1-D model h + |h|^3 : minimizer -1/sqrt(3), value -2/(3 sqrt(3)); both
# confirmed by a 10^6-point grid below before being frozen here
H_STAR_1D = -0.5773502691896258
M_STAR_1D = -0.3849001794597505


def test_1d_grid_oracle():
    t = np.linspace(-2, 2, 1_000_001)
    vals = t + np.abs(t) ** 3
    assert t[np.argmin(vals)] == pytest.approx(H_STAR_1D, abs=1e-5)
    assert vals.min() == pytest.approx(M_STAR_1D, abs=1e-10)
    sol = solve_exact(CubicModel([1.0], [[0.0]], 6.0))
    assert sol.h[0] == pytest.approx(H_STAR_1D, rel=1e-12)
    assert sol.model_value == pytest.approx(M_STAR_1D, rel=1e-12)
    assert sol.lam == pytest.approx(3 * abs(H_STAR_1D), rel=1e-12)


def test_hard_case_grid_oracle():
    m = CubicModel([0.0, 1.0], np.diag([-1.0, 1.0]), 1.0)
    sol = solve_exact(m)
    assert sol.hard_case
    assert sol.lam == pytest.approx(1.0, rel=1e-12)
    assert np.linalg.norm(sol.h) == pytest.approx(2.0, rel=1e-12)
    assert sol.h[1] == pytest.approx(-0.5, rel=1e-12)
    assert abs(sol.h[0]) == pytest.approx(np.sqrt(3.75), rel=1e-12)
    # dense grid: two symmetric global minimizers
    u = np.linspace(-3, 3, 1201)
    A, B = np.meshgrid(u, u, indexing="ij")
    vals = B - 0.5 * A**2 + 0.5 * B**2 + (np.hypot(A, B) ** 3) / 6
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    assert abs(u[i]) == pytest.approx(np.sqrt(3.75), abs=0.01)
    assert u[j] == pytest.approx(-0.5, abs=0.01)
    assert sol.model_value <= vals.min() + 1e-12
    mirrored = vals[::-1, :]
    np.testing.assert_allclose(vals, mirrored, atol=1e-12)


def test_zero_gradient_psd():
    sol = solve_exact(CubicModel(np.zeros(3), np.diag([1.0, 2.0, 0.0]), 2.0))
    assert np.all(sol.h == 0) and sol.model_value == 0


def test_zero_gradient_indefinite():
    sol = solve_exact(CubicModel(np.zeros(2), np.diag([2.0, -3.0]), 3.0))
    assert np.linalg.norm(sol.h) == pytest.approx(2.0, rel=1e-12)
    assert verify_kkt(CubicModel(np.zeros(2), np.diag([2.0, -3.0]), 3.0), sol.h).ok


def test_model_eval_examples():
    m = CubicModel([1.0], [[0.0]], 6.0)
    v, g = model_eval(m, np.array([0.0]))
    assert v == 0 and g.tolist() == [1.0]
    v, _ = model_eval(m, np.array([-1.0]))
    assert v == 0.0
    with pytest.raises(ValueError):
        model_eval(m, np.zeros(2))


def test_model_eval_gradient_fd():
    rng = np.random.default_rng(0)
    m = random_cubic_instance(rng, 6)
    h = rng.normal(size=6)
    _, g = model_eval(m, h)
    e = np.eye(6)
    fd = np.array([(model_eval(m, h + 1e-6 * e[j])[0] - model_eval(m, h - 1e-6 * e[j])[0]) / 2e-6 for j in range(6)])
    assert np.linalg.norm(fd - g) / np.linalg.norm(g) < 1e-6


def test_validation():
    with pytest.raises(ValueError, match="symmetric"):
        CubicModel([0.0, 0.0], [[1.0, 2.0], [0.0, 1.0]], 1.0)
    with pytest.raises(ValueError):
        CubicModel([0.0], [[1.0]], 0.0)
    with pytest.raises(ValueError):
        CubicModel([0.0, 1.0], [[1.0]], 1.0)
    with pytest.raises(ValueError):
        solve_exact(CubicModel([1.0], lambda v: v, 1.0))


def test_near_hard_case_is_accurate():
    # g almost orthogonal to the bottom eigenvector, just above the threshold
    rng = np.random.default_rng(1)
    for eps in [1e-3, 1e-6, 1e-9, 1e-10, 1e-12]:
        Q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
        lam = np.array([-2.0, -0.5, 0.1, 0.3, 1, 2, 3, 4])
        H = (Q * lam) @ Q.T
        H = (H + H.T) / 2
        g = Q @ np.concatenate([[eps], rng.normal(size=7) * 0.1])
        m = CubicModel(g, H, 1.5)
        sol = solve_exact(m)
        rep = verify_kkt(m, sol.h, tol=1e-8)
        assert rep.ok, (eps, rep)


@pytest.mark.parametrize("seed", range(20))
def test_kkt_and_global_spot_check(seed):
    rng = np.random.default_rng(seed)
    m = random_cubic_instance(rng, int(rng.integers(1, 30)))
    sol = solve_exact(m)
    rep = verify_kkt(m, sol.h, tol=1e-8)
    assert rep.ok
    assert sol.model_value <= best_line_candidate(m, rng.normal(size=(20000, m.d))) + 1e-10
    assert sol.lam == pytest.approx(0.5 * m.M * np.linalg.norm(sol.h), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100.0))
def test_scaling_covariance(seed, c):
    rng = np.random.default_rng(seed)
    m = random_cubic_instance(rng, int(rng.integers(1, 12)))
    a = solve_exact(m)
    b = solve_exact(CubicModel(c * m.g, c * m.H, c * m.M))
    if a.hard_case or b.hard_case:
        assert b.model_value == pytest.approx(c * a.model_value, rel=1e-10)
    else:
        np.testing.assert_allclose(b.h, a.h, rtol=1e-10, atol=1e-10 * max(1.0, np.linalg.norm(a.h)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    m = random_cubic_instance(rng, int(rng.integers(1, 12)))
    Q, _ = np.linalg.qr(rng.normal(size=(m.d, m.d)))
    R = Q @ m.H @ Q.T
    rot = CubicModel(Q @ m.g, (R + R.T) / 2, m.M)
    a, b = solve_exact(m), solve_exact(rot)
    assert b.model_value == pytest.approx(a.model_value, rel=1e-9, abs=1e-12)
    if not (a.hard_case or b.hard_case):
        np.testing.assert_allclose(b.h, Q @ a.h, atol=1e-8 * max(1.0, np.linalg.norm(a.h)))


def test_verify_kkt_zero_step_fails():
    m = CubicModel([3.0, 4.0], np.eye(2), 1.0)
    rep = verify_kkt(m, np.zeros(2))
    assert rep.stationarity_residual == pytest.approx(5.0)
    assert not rep.stationarity_ok and not rep.ok


def test_verify_kkt_perturbation_scale():
    rng = np.random.default_rng(2)
    m = random_cubic_instance(rng, 10)
    sol = solve_exact(m)
    noise = rng.normal(size=10)
    rep = verify_kkt(m, sol.h + 1e-3 * noise)
    scale = np.linalg.norm((m.H + sol.lam * np.eye(10)) @ noise) * 1e-3
    assert 0.1 * scale < rep.stationarity_residual < 10 * scale + 1e-3 * m.M * np.linalg.norm(noise) ** 2


def test_krylov_identity_one_step():
    g = np.array([1.0, -2.0, 0.5, 3.0])
    sol = solve_krylov(CubicModel(g, lambda v: 2.5 * v, 1.0), max_dim=4, tol=1e-12)
    assert sol.krylov_dim == 1
    cosine = sol.h @ g / (np.linalg.norm(sol.h) * np.linalg.norm(g))
    assert cosine == pytest.approx(-1.0, abs=1e-14)


def test_krylov_monotone_in_dim():
    rng = np.random.default_rng(3)
    m = random_cubic_instance(rng, 30)
    op = CubicModel(m.g, m.matvec, m.M)
    vals = [solve_krylov(op, max_dim=k, tol=0.0).model_value for k in range(1, 31)]
    assert all(b <= a + 1e-12 * max(1, abs(a)) for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(solve_exact(m).model_value, rel=1e-8)


def test_krylov_zero_gradient_branch():
    H = np.diag([1.0, -2.0, 3.0])
    sol = solve_krylov(CubicModel(np.zeros(3), lambda v: H @ v, 2.0), max_dim=3, tol=1e-10, seed=4)
    assert sol.model_value == pytest.approx(solve_exact(CubicModel(np.zeros(3), H, 2.0)).model_value, rel=1e-8)
    sol = solve_krylov(CubicModel(np.zeros(3), lambda v: np.abs(np.diag(H)) * v, 2.0))
    assert np.all(sol.h == 0)


def test_krylov_non_finite_operator():
    with pytest.raises(FloatingPointError):
        solve_krylov(CubicModel(np.ones(3), lambda v: v * np.nan, 1.0))


def test_lanczos_relation():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(12, 12))
    A = A + A.T
    st_ = lanczos(lambda v: A @ v, rng.normal(size=12), 7)
    V, T = st_.basis(), st_.T()
    np.testing.assert_allclose(V.T @ V, np.eye(7), atol=1e-12)
    resid = A @ V - V @ T
    np.testing.assert_allclose(resid[:, :-1], 0, atol=1e-11)
    assert np.linalg.norm(resid[:, -1]) == pytest.approx(st_.beta[-1], rel=1e-10)


def test_min_eigenvalue_matches_dense():
    rng = np.random.default_rng(6)
    A = rng.normal(size=(40, 40))
    A = A + A.T
    assert min_eigenvalue(lambda v: A @ v, 40) == pytest.approx(np.linalg.eigvalsh(A)[0], rel=1e-9)
