"""Cubic-regularized sub-problem

    min_h  m(h) = <g, h> + <H h, h>/2 + (M/6) ||h||^3

solved exactly through an eigendecomposition of H (small d), or in a
Lanczos-built Krylov subspace (operator H, large d).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .lanczos import lanczos_start, lanczos_step, min_eigenpair, min_eigenvalue

HARD_CASE_TOL = 1e-11
_EPS = np.finfo(float).eps


class SolverError(RuntimeError):
    """Root finding failed; ``residual`` holds the best KKT residual reached."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (best residual {residual:.3e})")
        self.residual = residual


@dataclass
class CubicModel:
    g: np.ndarray
    H: np.ndarray | Callable
    M: float

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float).ravel()
        if not self.M > 0:
            raise ValueError("cubic penalty M must be positive")
        if not callable(self.H):
            self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
            d = self.g.size
            if self.H.shape != (d, d):
                raise ValueError(f"H has shape {self.H.shape}, expected ({d}, {d})")
            scale = np.linalg.norm(self.H)
            if np.linalg.norm(self.H - self.H.T) > 1e-12 * max(scale, 1e-300):
                raise ValueError("H is not symmetric")

    @property
    def d(self) -> int:
        return self.g.size

    @property
    def dense(self) -> bool:
        return not callable(self.H)

    def matvec(self, v) -> np.ndarray:
        return self.H @ v if self.dense else np.asarray(self.H(v), dtype=float)


@dataclass
class CubicSolution:
    h: np.ndarray
    lam: float
    model_value: float
    kkt_residual: float
    hard_case: bool = False
    krylov_dim: int = 0


@dataclass
class KKTReport:
    stationarity_residual: float
    relative_stationarity: float
    psd_margin: float
    model_value: float
    decrease_margin: float
    stationarity_ok: bool
    psd_ok: bool
    decrease_ok: bool

    @property
    def ok(self) -> bool:
        return self.stationarity_ok and self.psd_ok and self.decrease_ok


def model_eval(model: CubicModel, h) -> tuple[float, np.ndarray]:
    """Model value and gradient g + H h + (M/2)||h|| h."""
    h = np.asarray(h, dtype=float)
    if h.shape != model.g.shape:
        raise ValueError(f"h has shape {h.shape}, expected {model.g.shape}")
    Hh = model.matvec(h)
    nh = np.linalg.norm(h)
    value = float(model.g @ h + 0.5 * h @ Hh + model.M / 6.0 * nh**3)
    return value, model.g + Hh + 0.5 * model.M * nh * h


def _finish(model: CubicModel, h, hard_case=False, krylov_dim=0) -> CubicSolution:
    value, grad = model_eval(model, h)
    lam = 0.5 * model.M * np.linalg.norm(h)
    res = float(np.linalg.norm(grad)) / max(1.0, float(np.linalg.norm(model.g)))
    return CubicSolution(h, lam, value, res, hard_case, krylov_dim)


def _secular_root(gh, dshift, lo, M, max_iter=500):
    """Root sigma > 0 of ||gh/(dshift+sigma)|| - 2(lo+sigma)/M (decreasing)."""

    def psi(s):
        q = gh / (dshift + s)
        nq = np.linalg.norm(q)
        dpsi = -float(np.sum(q * q / (dshift + s))) / nq - 2.0 / M if nq > 0 else -2.0 / M
        return nq - 2.0 * (lo + s) / M, dpsi

    gnorm = np.linalg.norm(gh)
    a, b = 0.0, max(np.sqrt(0.5 * M * gnorm), 1e-300)
    while psi(b)[0] > 0:
        b *= 2.0
    s = b
    fs, ds = psi(s)
    for _ in range(max_iter):
        if fs == 0:
            return s
        if fs > 0:
            a = s
        else:
            b = s
        if b - a <= 2 * _EPS * b:
            return b if abs(psi(b)[0]) <= abs(psi(a)[0]) or a == 0 else a
        step = s - fs / ds
        s = step if a < step < b else (0.5 * (a + b) if a > 0 else 0.5 * b)
        fs, ds = psi(s)
    raise SolverError("secular equation did not converge", abs(fs))


def solve_exact(model: CubicModel, tol: float = 1e-10) -> CubicSolution:
    """Global minimizer of the cubic model with a dense symmetric H.

    The multiplier lam = (M/2)||h|| solves ||(H + lam I)^{-1} g|| = 2 lam/M
    on lam >= max(0, -lambda_min(H)); the root is found by safeguarded
    Newton.  When g is (numerically) orthogonal to the bottom eigenspace
    and no interior root exists, a bottom eigenvector of the right length
    is added (hard case).
    """
    if not model.dense:
        raise ValueError("solve_exact needs a dense H")
    g, M = model.g, model.M
    gnorm = float(np.linalg.norm(g))
    evals, Q = np.linalg.eigh(model.H)
    lam1 = evals[0]
    lo = max(0.0, -lam1)
    # shifted eigenvalues, exactly zero on the bottom eigenspace when lam1 < 0
    dshift = evals - lam1 if lam1 < 0 else evals.copy()
    gh = Q.T @ g
    bottom = (evals - lam1) <= 10 * _EPS * max(1.0, float(np.abs(evals).max()))
    if gnorm == 0 and lam1 >= 0:
        return _finish(model, np.zeros_like(g))
    if np.linalg.norm(gh[bottom]) <= HARD_CASE_TOL * gnorm:
        gh = np.where(bottom, 0.0, gh)
        if lam1 < 0:
            safe = np.where(bottom, 1.0, dshift)
            h_perp = np.where(bottom, 0.0, gh / safe)
            target = 2.0 * lo / M
            if np.linalg.norm(h_perp) <= target:
                tau = np.sqrt(max(target**2 - h_perp @ h_perp, 0.0))
                y = -h_perp
                y[np.flatnonzero(bottom)[0]] += tau
                return _finish(model, Q @ y, hard_case=True)
        if not np.any(gh):
            return _finish(model, np.zeros_like(g))
    sigma = _secular_root(gh, dshift, lo, M)
    h = -Q @ (gh / (dshift + sigma))
    sol = _finish(model, h)
    if sol.kkt_residual > tol:
        # polish with one Newton step on the stationarity system
        lam = 0.5 * M * np.linalg.norm(h)
        nh = np.linalg.norm(h)
        J = model.H + lam * np.eye(g.size) + 0.5 * M * np.outer(h, h) / max(nh, 1e-300)
        try:
            h2 = h - np.linalg.solve(J, g + model.H @ h + lam * h)
            sol2 = _finish(model, h2)
            if sol2.kkt_residual < sol.kkt_residual and sol2.model_value <= sol.model_value + 1e-14 * max(1.0, abs(sol.model_value)):
                sol = sol2
        except np.linalg.LinAlgError:
            pass
    return sol


def solve_krylov(
    model: CubicModel,
    max_dim: int | None = None,
    tol: float = 1e-6,
    seed: int = 0,
) -> CubicSolution:
    """Solve the model restricted to a Lanczos subspace started at g.

    Each step solves the reduced tridiagonal problem exactly and stops once
    the lifted KKT residual (relative to max(1, ||g||)) drops to ``tol``, on
    breakdown, or at ``max_dim``.  When g = 0 a seeded random Lanczos start
    finds the bottom eigenpair instead.

    The stopping test certifies stationarity only.  In the hard case (g
    orthogonal to the bottom eigenvector) the bottom direction enters the
    Krylov space with a rounding-level weight, so the run can stop at a
    stationary point that is not the global minimizer; use
    :func:`solve_exact` when that matters.
    """
    g, M, d = model.g, model.M, model.d
    max_dim = d if max_dim is None else min(int(max_dim), d)
    if max_dim < 1:
        raise ValueError("max_dim must be >= 1")
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0:
        # the minimizer is 0 unless H has negative curvature, then it is a
        # bottom eigenvector of length -2 lambda_min / M
        lmin, q = min_eigenpair(model.matvec, d, seed=seed, max_dim=max_dim)
        if lmin >= 0:
            return _finish(model, np.zeros(d))
        return _finish(model, (-2.0 * lmin / M) * q, hard_case=True)
    v0 = g / gnorm
    st = lanczos_start(model.matvec, v0)
    scale = max(1.0, gnorm)
    while True:
        lanczos_step(st)
        k = st.k
        gk = np.zeros(k)
        gk[0] = gnorm
        red = solve_exact(CubicModel(gk, st.T(), M))
        y = red.h
        lifted = np.hypot(red.kkt_residual * max(1.0, gnorm), st.beta[-1] * y[-1]) / scale
        if lifted <= tol or st.breakdown or k >= max_dim:
            break
    h = st.basis() @ y
    return _finish(model, h, hard_case=red.hard_case, krylov_dim=k)


def verify_kkt(model: CubicModel, h, tol: float = 1e-8) -> KKTReport:
    """Check the three optimality conditions of a global model minimizer.

    stationarity   g + H h + (M/2)||h|| h = 0
    curvature      H + (M/2)||h|| I  is positive semidefinite
    decrease       m(h) <= -(M/12) ||h||^3
    """
    h = np.asarray(h, dtype=float)
    value, grad = model_eval(model, h)
    nh = float(np.linalg.norm(h))
    lam = 0.5 * model.M * nh
    res = float(np.linalg.norm(grad))
    rel = res / max(1.0, float(np.linalg.norm(model.g)))
    if model.dense:
        psd = float(np.linalg.eigvalsh(model.H)[0]) + lam
    else:
        psd = min_eigenvalue(model.matvec, model.d) + lam
    dec = value + model.M / 12.0 * nh**3
    return KKTReport(res, rel, psd, value, dec, rel <= tol, psd >= -tol, dec <= tol)
