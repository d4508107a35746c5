import numpy as np
import pytest

from cubicvr.data import make_onehot_surrogate, parse_libsvm
from cubicvr.objectives import (
    Batch,
    RegularizerParams,
    draw_batch,
    estimate_lipschitz,
    make_logistic_nc,
    make_nls_nc,
    make_preset,
    make_synthetic,
    nc_reg,
)


def fd_grad(f, x, h=1e-5):
    e = np.eye(x.size)
    return np.array([(f(x + h * e[j]) - f(x - h * e[j])) / (2 * h) for j in range(x.size)])


def fd_jac(g, x, h=1e-5):
    e = np.eye(x.size)
    return np.column_stack([(g(x + h * e[j]) - g(x - h * e[j])) / (2 * h) for j in range(x.size)])


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-8)


def small_ds(n=10, d=8, seed=0):
    rng = np.random.default_rng(seed)
    lines = []
    for i in range(n):
        feats = sorted(rng.choice(d, size=rng.integers(1, d + 1), replace=False))
        lines.append(" ".join([str(int(rng.random() < 0.5))] + [f"{j + 1}:{rng.normal():.6f}" for j in feats]))
    return parse_libsvm("\n".join(lines), n_features=d)


def test_nc_reg_origin():
    p = RegularizerParams(0.3, 2.0)
    v, g, hd = nc_reg(p, np.zeros(4))
    assert v == 0 and np.all(g == 0)
    np.testing.assert_allclose(hd, 2 * 0.3 * 4.0)


def test_nc_reg_value_one():
    assert nc_reg(RegularizerParams(1.0, 1.0), np.array([1.0]))[0] == pytest.approx(0.5)


def test_nc_reg_derivatives():
    p = RegularizerParams(0.7, 3.0)
    x = np.random.default_rng(1).normal(size=5) * 0.5
    _, g, hd = nc_reg(p, x)
    assert rel(g, fd_grad(lambda z: nc_reg(p, z)[0], x)) < 1e-6
    assert rel(hd, np.diag(fd_jac(lambda z: nc_reg(p, z)[1], x))) < 1e-6


@pytest.mark.parametrize("bad", [(-1.0, 1.0), (1.0, 0.0)])
def test_regularizer_params_validated(bad):
    with pytest.raises(ValueError):
        RegularizerParams(*bad)


def test_logistic_at_zero_is_log2():
    obj = make_logistic_nc(small_ds(), RegularizerParams(1e-3, 10.0))
    x = np.zeros(obj.d)
    for i in range(obj.n):
        assert obj.value_i(x, i) == pytest.approx(np.log(2), abs=1e-15)


def test_logistic_stable_for_large_margins():
    obj = make_logistic_nc(small_ds(), RegularizerParams(0.0, 1.0))
    x = np.full(obj.d, 500.0)
    assert np.isfinite(obj.value(x)) and np.all(np.isfinite(obj.grad(x)))


@pytest.mark.parametrize("maker", [make_logistic_nc, make_nls_nc])
def test_glm_oracles_match_finite_differences(maker):
    obj = maker(small_ds(d=6), RegularizerParams(1e-2, 3.0))
    rng = np.random.default_rng(2)
    x = rng.normal(size=obj.d) * 0.5
    for i in range(obj.n):
        assert rel(obj.grad_i(x, i), fd_grad(lambda z: obj.value_i(z, i), x)) < 1e-5
        assert rel(obj.hess_i(x, i), fd_jac(lambda z: obj.grad_i(z, i), x)) < 1e-4


@pytest.mark.parametrize("maker", [make_logistic_nc, make_nls_nc])
def test_aggregate_equals_component_mean(maker):
    obj = maker(small_ds(n=10), RegularizerParams(1e-2, 3.0))
    x = np.random.default_rng(3).normal(size=obj.d)
    comps = range(obj.n)
    assert obj.value(x) == pytest.approx(np.mean([obj.value_i(x, i) for i in comps]), rel=1e-13)
    np.testing.assert_allclose(obj.grad(x), np.mean([obj.grad_i(x, i) for i in comps], axis=0), rtol=1e-12, atol=1e-14)
    H = obj.hess(x)
    np.testing.assert_allclose(H, H.T, atol=0)
    np.testing.assert_allclose(H, np.mean([obj.hess_i(x, i) for i in comps], axis=0), rtol=1e-12, atol=1e-14)


def test_nls_perfect_fit_zero():
    rng = np.random.default_rng(4)
    ds = small_ds(n=5, d=8)
    s = rng.normal(size=8)
    z = ds.X @ s
    phi = 1 / (1 + np.exp(-z))
    obj = make_nls_nc(type(ds)(ds.X, phi), RegularizerParams(0.0, 1.0))
    assert obj.value(s) == pytest.approx(0.0, abs=1e-28)


def test_nls_hess_vec_consistent():
    obj = make_nls_nc(small_ds(n=5, d=8), RegularizerParams(5e-3, 10.0))
    rng = np.random.default_rng(5)
    x, v = rng.normal(size=8), rng.normal(size=8)
    for i in range(5):
        assert rel(obj.hess_vec_i(x, v, i), obj.hess_i(x, i) @ v) < 1e-10


def test_batch_oracle_is_multiset_mean():
    obj = make_logistic_nc(small_ds(), RegularizerParams(1e-3, 10.0))
    x = np.random.default_rng(6).normal(size=obj.d)
    idx = [3, 3, 1, 7]
    want = (2 * obj.grad_i(x, 3) + obj.grad_i(x, 1) + obj.grad_i(x, 7)) / 4
    np.testing.assert_allclose(obj.grad(x, idx), want, rtol=1e-13)
    np.testing.assert_allclose(obj.grad(x, Batch.from_indices(idx, obj.n)), want, rtol=1e-13)


def test_batch_validation():
    with pytest.raises(ValueError):
        Batch.from_indices([], 5)
    with pytest.raises(ValueError):
        Batch.from_indices([5], 5)
    b = draw_batch(np.random.default_rng(0), 7, 10**15)
    assert b.size == 10**15


def test_dense_cap_disables_hessian():
    obj, _ = make_synthetic("separable-cosine", 3, 20)
    obj.dense_cap = 10
    with pytest.raises(ValueError, match="dense Hessian"):
        obj.hess(np.zeros(20))
    assert obj.hess_vec(np.zeros(20), np.ones(20)).shape == (20,)


def test_presets():
    ds = make_onehot_surrogate(40)
    obj = make_preset("nls_nc:covtype", ds)
    assert obj.params == RegularizerParams(5e-3, 50.0)
    assert make_preset("logistic_nc:ijcnn1", ds).params == RegularizerParams(1e-3, 50.0)
    with pytest.raises(KeyError):
        make_preset("hinge:a9a", ds)


KINDS = ["separable-cubic", "separable-cosine", "random-quadratic-mixture"]


@pytest.mark.parametrize("kind", KINDS)
def test_synthetic_fd(kind):
    obj, _ = make_synthetic(kind, 20, 10, seed=0)
    x = np.random.default_rng(7).uniform(-1, 1, size=10)
    assert rel(obj.grad(x), fd_grad(obj.value, x)) < 1e-6
    assert rel(obj.hess(x), fd_jac(obj.grad, x)) < 1e-5


def test_quadratic_mixture_constant_hessian():
    obj, lip = make_synthetic("random-quadratic-mixture", 8, 4, seed=1)
    rng = np.random.default_rng(0)
    assert lip.L2 == 0
    for i in range(8):
        np.testing.assert_array_equal(obj.hess_i(rng.normal(size=4), i), obj.hess_i(rng.normal(size=4), i))
    assert np.all(np.linalg.eigvalsh(obj.hess(np.zeros(4))) > 0)
    np.testing.assert_allclose(obj.grad(obj.x_star), 0, atol=1e-12)
    assert obj.value(obj.x_star) == pytest.approx(obj.f_star, abs=1e-12)


def test_separable_cubic_exact_l2():
    obj, lip = make_synthetic("separable-cubic", 5, 1, seed=2, l2=3.0, lower_order=False)
    assert np.abs(obj.a).max() == pytest.approx(3.0)
    assert lip.L2 == pytest.approx(3.0)
    i = int(np.argmax(np.abs(obj.a[:, 0])))
    x, y = np.array([0.3]), np.array([-0.4])
    assert np.abs(obj.hess_i(x, i) - obj.hess_i(y, i)).max() / 0.7 == pytest.approx(3.0)


def test_separable_cosine_infimum():
    obj, _ = make_synthetic("separable-cosine", 6, 3, seed=3, amplitude=2.0)
    # brute force on a grid per coordinate (the objective separates)
    t = np.linspace(-15, 15, 300001)
    total = 0.0
    for j in range(3):
        vals = np.mean(obj.c[:, j, None] * t**2 / 2 + obj.a[:, j, None] * np.cos(t - obj.p[:, j, None]), axis=0)
        total += vals.min()
    assert obj.f_star <= total + 1e-12
    assert obj.f_star == pytest.approx(total, abs=1e-8)
    assert obj.value(obj.x_star) == pytest.approx(obj.f_star, abs=1e-12)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_synthetic("rosenbrock", 3, 3)


@pytest.mark.parametrize("kind", ["separable-cubic", "separable-cosine"])
def test_taylor_remainder_bound(kind):
    obj, lip = make_synthetic(kind, 15, 6, seed=4)
    rng = np.random.default_rng(8)
    for _ in range(100):
        x = rng.uniform(-1, 1, 6)
        h = rng.normal(size=6) * rng.uniform(0.01, 2)
        r = obj.grad(x + h) - obj.grad(x) - obj.hess(x) @ h
        assert np.linalg.norm(r) <= lip.L2 / 2 * np.linalg.norm(h) ** 2 * (1 + 1e-10) + 1e-13


def test_estimate_lipschitz_quadratic():
    obj, _ = make_synthetic("random-quadratic-mixture", 10, 4)
    est = estimate_lipschitz(obj, probes=5, radius=1.0, seed=0)
    assert est.L2 <= 1e-12 and est.L1 > 0 and not est.exact


def test_estimate_lipschitz_cubic_lower_bound():
    obj, lip = make_synthetic("separable-cubic", 10, 3, seed=5, l2=3.0)
    few = estimate_lipschitz(obj, probes=3, radius=1.0, seed=0)
    many = estimate_lipschitz(obj, probes=300, radius=1.0, seed=0)
    assert 0 < few.L2 <= many.L2 <= 3.0 + 1e-12
    assert many.L2 > 0.8 * 3.0


def test_estimate_lipschitz_deterministic_and_validated():
    obj, _ = make_synthetic("separable-cosine", 10, 3)
    assert estimate_lipschitz(obj, 2, 1.0, 3) == estimate_lipschitz(obj, 2, 1.0, 3)
    with pytest.raises(ValueError):
        estimate_lipschitz(obj, 1, 1.0, 0)
    with pytest.raises(ValueError):
        estimate_lipschitz(obj, 2, 0.0, 0)
