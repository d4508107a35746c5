"""Seeded property suites behind ``cubicvr verify``.

Each suite returns a list of :class:`Check` results; a check records the
inequality tested, how many cases were tried and the worst slack seen.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .cubic import CubicModel, model_eval, solve_exact, solve_krylov
from .estimators import (
    BatchPlan,
    EpochReference,
    corollary_parameters,
    gradient_batch_size,
    semi_stochastic_gradient,
    semi_stochastic_hessian,
)
from .objectives import LipschitzEstimates, draw_batch, make_synthetic
from .optimizers import LiteSvrcConfig, SubsolverConfig, run_lite_svrc
from .theory import (
    C1,
    C_MU,
    compute_mu,
    corollary_schedule,
    descent_bound,
    gradient_moment_bound,
    hessian_moment_bound,
    mu_step_bound,
    schedule_constants,
    snapshot_distance_bound,
)


@dataclass
class Check:
    name: str
    inequality: str
    cases: int
    failures: int
    worst: float  # largest (lhs - rhs), normalized where noted

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> dict:
        return dict(asdict(self), passed=self.passed)


def _tally(name, inequality, slacks) -> Check:
    slacks = np.asarray(slacks, dtype=float)
    return Check(name, inequality, int(slacks.size), int(np.sum(~(slacks <= 0))), float(np.max(slacks)) if slacks.size else 0.0)


def random_cubic_instance(rng, d: int, eig_range=(-5.0, 5.0), M_range=(0.1, 10.0)) -> CubicModel:
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    H = (Q * rng.uniform(*eig_range, size=d)) @ Q.T
    H = 0.5 * (H + H.T)
    g = rng.normal(size=d) * 10.0 ** rng.uniform(-3, 1)
    return CubicModel(g, H, rng.uniform(*M_range))


def best_line_candidate(model: CubicModel, directions: np.ndarray) -> float:
    """Smallest model value over exact minimizers along each direction."""
    U = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    a = U @ model.g
    c = np.einsum("ij,jk,ik->i", U, model.H, U)
    M = model.M
    best = 0.0
    for sign in (1.0, -1.0):
        # phi(t) = s a t + c t^2/2 + M t^3/6 on t >= 0; root of phi'
        disc = c**2 - 2 * M * sign * a
        t = np.where(disc >= 0, (-c + np.sqrt(np.maximum(disc, 0))) / M, 0.0)
        t = np.maximum(t, 0.0)
        val = sign * a * t + c * t**2 / 2 + M * t**3 / 6
        best = min(best, float(val.min()))
    return best


def suite_solver(instances: int = 500, candidates: int = 2000, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    stat, psd, dec, glob, kry = [], [], [], [], []
    for k in range(instances):
        d = int(rng.integers(1, 51))
        m = random_cubic_instance(rng, d)
        sol = solve_exact(m)
        h = sol.h
        value, grad = model_eval(m, h)
        nh = np.linalg.norm(h)
        stat.append(np.linalg.norm(grad) / max(1.0, np.linalg.norm(m.g)) - 1e-8)
        psd.append(-(np.linalg.eigvalsh(m.H)[0] + 0.5 * m.M * nh) - 1e-8)
        dec.append(value + m.M / 12 * nh**3 - 1e-10)
        cand = best_line_candidate(m, rng.normal(size=(candidates, d)))
        glob.append(value - cand - 1e-10 * max(1.0, abs(cand)))
        if k < 100:
            sk = solve_krylov(CubicModel(m.g, m.matvec, m.M), max_dim=d, tol=1e-12)
            kry.append(abs(sk.model_value - value) / max(abs(value), 1e-300) - 1e-8)
    return [
        _tally("stationarity", "||g + H h + (M/2)||h|| h|| / max(1, ||g||) <= 1e-8", stat),
        _tally("curvature", "lambda_min(H + (M/2)||h|| I) >= -1e-8", psd),
        _tally("model decrease", "m(h) <= -(M/12)||h||^3 + 1e-10", dec),
        _tally("global optimality", "m(h) <= best line-searched random candidate", glob),
        _tally("krylov agreement", "|m(h_krylov) - m(h_exact)| <= 1e-8 |m(h_exact)| at max_dim = d", kry),
    ]


def moment_check(n=10, d=5, pairs=20, batches=10_000, B_values=(26, 64, 256), seed=0, radius=1.0):
    """Monte-Carlo third/three-halves moments of the estimator errors."""
    rng = np.random.default_rng(seed)
    obj, lip = make_synthetic("separable-cubic", n, d, seed=seed, l2=1.0, radius=radius)
    L1, L2 = lip.L1, lip.L2
    log_d = math.log(d)
    grad_slack, hess_slack = [], []
    for _ in range(pairs):
        x_hat = rng.uniform(-radius, radius, size=d)
        x = rng.uniform(-radius, radius, size=d)
        dist = np.linalg.norm(x - x_hat)
        ref = EpochReference.from_objective(obj, x_hat)
        gF, HF = obj.grad(x), obj.hess(x)
        # gradient batches: b = ceil(D_g / dist^2) with D_g = 4 L1^2 b_const / L2^2
        b_const = float(rng.choice([1.0, 4.0, 16.0]))
        plan = BatchPlan(4 * L1**2 * b_const / L2**2, 1, 1, 10**12)
        b_size = gradient_batch_size(plan, dist**2)
        G_x = obj.component_grads(x, np.arange(n))
        G_h = obj.component_grads(x_hat, np.arange(n))
        diff = G_x - G_h
        counts = rng.multinomial(b_size, np.full(n, 1 / n), size=batches)
        V = counts @ diff / b_size + ref.g_ref
        ev = np.linalg.norm(V - gF, axis=1)
        grad_slack.append(np.mean(ev**1.5) / gradient_moment_bound(L2, b_const, dist) - 1.0)
        # Hessians are diagonal here, so the spectral norm is a max-abs
        Dx = obj._phi(x, np.arange(n), 2) - obj._phi(x_hat, np.arange(n), 2)
        for B in B_values:
            D_h = math.ceil(B * log_d)
            cnt = rng.multinomial(D_h, np.full(n, 1 / n), size=batches)
            Udiag = cnt @ Dx / D_h + np.diag(ref.H_ref)
            eU = np.abs(Udiag - np.diag(HF)).max(axis=1)
            hess_slack.append(np.mean(eU**3) / hessian_moment_bound(L2, D_h / log_d, dist) - 1.0)
    return grad_slack, hess_slack


def suite_estimators(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    obj, _ = make_synthetic("separable-cosine", 10, 3, seed=seed)
    x_hat, x = rng.normal(size=3), rng.normal(size=3)
    ref = EpochReference.from_objective(obj, x_hat)
    m = 10_000
    vs = np.array([semi_stochastic_gradient(obj, ref, x, draw_batch(rng, 10, 4)) for _ in range(m)])
    Us = np.array([semi_stochastic_hessian(obj, ref, x, draw_batch(rng, 10, 4)) for _ in range(m)])
    z_v = np.abs(vs.mean(0) - obj.grad(x)) / (vs.std(0, ddof=1) / math.sqrt(m) + 1e-300)
    Us = Us.reshape(m, -1)
    HF = obj.hess(x).ravel()
    sd = Us.std(0, ddof=1) / math.sqrt(m)
    mask = sd > 0
    z_U = np.abs(Us.mean(0) - HF)[mask] / sd[mask]
    grad_slack, hess_slack = moment_check(seed=seed)
    return [
        _tally("gradient unbiasedness", "|mean(v) - grad F| <= 4 standard errors", z_v - 4),
        _tally("Hessian unbiasedness", "|mean(U) - hess F| <= 4 standard errors", z_U - 4),
        _tally("gradient moment bound", "E||e_v||^(3/2) <= L2^(3/2)/b^(3/4) ||x - x_hat||^3 (ratio - 1)", grad_slack),
        _tally("Hessian moment bound", "E||e_U||^3 <= 15000 L2^3/B^(3/2) ||x - x_hat||^3 (ratio - 1)", hess_slack),
    ]


def descent_run(
    iterations: int = 200,
    n: int = 20,
    d: int = 5,
    seed: int = 0,
    M_multiple: float = 2.0,
    D_g: float = 0.05,
    D_h: int = 2,
):
    """Lite-SVRC with exact sub-solves; per-step slacks of the step inequalities.

    The step inequalities hold for any estimator values, so small batches
    (``D_g``, ``D_h``) are used on purpose: the noise keeps the iterates
    moving instead of settling after a few steps.

    Returns a dict of arrays (lhs - rhs for each inequality, <= 0 holds)
    and the trace.  Rounding in F is allowed for through a 1e-12 relative
    tolerance.
    """
    obj, lip = make_synthetic("separable-cosine", n, d, seed=seed)
    M = M_multiple * lip.L2
    cp = corollary_parameters(n, d, lip, mode="practical", M=M)
    T = cp.T
    S = math.ceil(iterations / T)
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-3, 3, size=d)
    out = {"descent": [], "mu": [], "distance": []}

    def observe(info):
        gF = obj.grad(info.x)
        HF = obj.hess(info.x)
        ev = float(np.linalg.norm(gF - info.v))
        eU = float(np.linalg.norm(HF - info.U, 2))
        hn = float(np.linalg.norm(info.h))
        f0, f1 = obj.value(info.x), obj.value(info.x_next)
        tol = 1e-12 * max(1.0, abs(f0))
        out["descent"].append(f1 - descent_bound(f0, info.M, hn, ev, eU) - tol)
        mu = compute_mu(obj, info.x_next, info.M).mu
        out["mu"].append(mu / C_MU - mu_step_bound(info.M, hn, ev, eU) - 1e-12 * max(1.0, mu))
        dist = float(np.linalg.norm(info.x - info.x_hat))
        lhs = float(np.linalg.norm(info.x_next - info.x_hat)) ** 3
        rhs = snapshot_distance_bound(hn, dist, cp.alpha, cp.beta)
        out["distance"].append(lhs - rhs - 1e-12 * max(1.0, rhs))

    plan = BatchPlan(D_g, D_h, 1, 100 * n)
    cfg = LiteSvrcConfig(S, T, M, plan, x0, SubsolverConfig("exact", 1e-10), seed)
    trace = run_lite_svrc(obj, cfg, observer=observe)
    return {k: np.asarray(v)[:iterations] for k, v in out.items()}, trace


def suite_descent(seed: int = 0) -> list[Check]:
    sl, _ = descent_run(seed=seed)
    return [
        _tally("one-step descent", f"F(x+h) <= F(x) - (M/12)||h||^3 + {C1:g}(||e_v||^(3/2)/sqrt(M) + ||e_U||^3/M^2)", sl["descent"]),
        _tally("mu after a step", f"mu(x+h)/{C_MU:g} <= M^(3/2)||h||^3 + ||e_v||^(3/2) + M^(-3/2)||e_U||^3", sl["mu"]),
        _tally("snapshot distance", "||x+h-x_hat||^3 <= (1+2a+b)||h||^3 + (1+1/a^2+2/sqrt(b))||x-x_hat||^3", sl["distance"]),
    ]


def suite_schedule(ns=(20, 100, 1000, 10_000)) -> list[Check]:
    lip = LipschitzEstimates(1.0, 1.0)
    pos, c0, band_lo, band_hi, forms, resid = [], [], [], [], [], []
    for n in ns:
        tab = corollary_schedule(n, lip)
        k = schedule_constants(tab.C_m)
        pos.append(-tab.gamma.min())
        c0.append(tab.c[0] / (30 * k["C_d"] * n ** (-2 / 3)) - 1.0)
        band_lo.append(k["C_l"] - tab.gamma.min())
        # the last coefficient equals the upper constant exactly
        band_hi.append(tab.gamma.max() / k["C_u"] - 1.0 - 1e-12)
        forms.append(tab.max_form_gap - 1e-12)
        resid.append(tab.forward_residual() - 1e-12)
    return [
        _tally("Gamma positivity", "min_t Gamma_t > 0", pos),
        _tally("c_0 bound", "c_0 < 30 C_d n^(-2/3) L2 (ratio - 1)", c0),
        _tally("Gamma lower band", "min_t Gamma_t > C_l / sqrt(L2)", band_lo),
        _tally("Gamma upper band", "max_t Gamma_t <= C_u / sqrt(L2)", band_hi),
        _tally("recursion forms agree", "compact and expanded c_t agree to 1e-12", forms),
        _tally("recursion residual", "forward re-substitution residual <= 1e-12", resid),
    ]


SUITES = {
    "solver": suite_solver,
    "estimators": suite_estimators,
    "descent": suite_descent,
    "schedule": suite_schedule,
}


def run_suite(key: str) -> dict:
    if key not in SUITES:
        raise ValueError(f"unknown suite {key!r}; choose from {sorted(SUITES)}")
    checks = SUITES[key]()
    return {"suite": key, "passed": all(c.passed for c in checks), "checks": [c.to_dict() for c in checks]}
