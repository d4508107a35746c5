"""Convergence-theory quantities: the local-minimality measure mu, the
backward recursion certifying per-step descent, and sample-complexity
formulas.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .estimators import DEFAULT_C_H, THEORY_C_M, CorollaryParams, PreconditionError, corollary_parameters
from .lanczos import min_eigenvalue
from .objectives import FiniteSumObjective, LipschitzEstimates

# constant in the one-step descent inequality
C1 = 200.0
# constant relating mu at the new iterate to the step and estimator errors
C_MU = 18.0
# constant of the Hessian-estimator third-moment bound
C_H = DEFAULT_C_H


@dataclass
class MuReport:
    grad_norm: float
    lambda_min: float
    M: float
    mu: float


def mu_value(grad_norm: float, lambda_min: float, M: float) -> float:
    """max{||g||^(3/2), -lambda_min^3 / M^(3/2)}."""
    if not M > 0:
        raise ValueError("M must be positive")
    return max(grad_norm**1.5, -(lambda_min**3) / M**1.5)


def is_approx_local_min(grad_norm: float, lambda_min: float, eps: float, M: float) -> bool:
    """||grad|| <= eps and lambda_min >= -sqrt(M eps)."""
    return grad_norm <= eps and lambda_min >= -math.sqrt(M * eps)


def compute_mu(obj: FiniteSumObjective, x, M: float, tol: float = 1e-10) -> MuReport:
    if not M > 0:
        raise ValueError("M must be positive")
    x = np.asarray(x, dtype=float)
    gn = float(np.linalg.norm(obj.grad(x)))
    if obj.dense_ok:
        lmin = float(np.linalg.eigvalsh(obj.hess(x))[0])
    else:
        lmin = min_eigenvalue(lambda v: obj.hess_vec(x, v), obj.d, tol=tol)
    return MuReport(gn, lmin, M, mu_value(gn, lmin, M))


@dataclass
class OptimalGap:
    f_initial: float
    f_ref: float

    @property
    def delta_F(self) -> float:
        return self.f_initial - self.f_ref


def optimal_gap(obj: FiniteSumObjective, x0, f_ref: float | None = None) -> OptimalGap:
    """Gap between F(x0) and a reference value (default: the known infimum)."""
    if f_ref is None:
        if obj.f_star is None:
            raise ValueError("objective has no known optimum; pass f_ref")
        f_ref = obj.f_star
    return OptimalGap(obj.value(x0), float(f_ref))


@dataclass
class ScheduleTable:
    n: int
    M: float
    L1: float
    L2: float
    D_g: float
    D_h: float
    log_d: float
    T: int
    alpha: float
    beta: float
    gamma: np.ndarray  # t = 0..T-1
    c: np.ndarray  # t = 0..T, c[T] = 0
    gamma_n: float
    valid: bool
    forms_agree: bool
    max_form_gap: float
    C1: float = C1
    C_h: float = C_H
    C_mu: float = C_MU

    @property
    def C_m(self) -> float:
        return self.M / self.L2

    def to_dict(self) -> dict:
        out = asdict(self)
        out["gamma"] = self.gamma.tolist()
        out["c"] = self.c.tolist()
        out["C_m"] = self.C_m
        return out

    def forward_residual(self) -> float:
        """Largest relative residual of the recursion re-substituted forward."""
        worst = 0.0
        for t in range(self.T):
            g, c_next = self.gamma[t], self.c[t + 1]
            g_want = (self.M - 12 * c_next * (1 + 2 * self.alpha + self.beta)) / (12 * self.M**1.5)
            c_want = _c_main(self, g, c_next)
            worst = max(
                worst,
                abs(g - g_want) / max(abs(g_want), 1e-300),
                abs(self.c[t] - c_want) / max(abs(c_want), 1e-300),
            )
        return worst


def _growth(alpha: float, beta: float) -> float:
    return 1 + 1 / alpha**2 + 2 / math.sqrt(beta)


def _c_main(p, gamma: float, c_next: float) -> float:
    M, L1, L2 = p.M, p.L1, p.L2
    bracket = (4 * L1**2 / (p.D_g * L2**2)) ** 0.75 + p.C_h * L2**1.5 * p.log_d**1.5 / (M**1.5 * p.D_h**1.5)
    return (p.C1 + gamma * math.sqrt(M)) * L2**1.5 / math.sqrt(M) * bracket + c_next * _growth(p.alpha, p.beta)


def _c_expanded(p, gamma: float, c_next: float) -> float:
    M, L2 = p.M, p.L2
    b = p.D_g * L2**2 / (4 * p.L1**2)
    B = p.D_h / p.log_d
    return (
        c_next * _growth(p.alpha, p.beta)
        + (p.C1 / math.sqrt(M) + gamma) * L2**1.5 / b**0.75
        + p.C_h * (p.C1 / M**2 + gamma / M**1.5) * L2**3 / B**1.5
    )


def build_schedule(
    n: int,
    M: float,
    L1: float,
    L2: float,
    D_g: float,
    D_h: float,
    T: int,
    alpha: float,
    beta: float,
    d: float = math.e,
    C_h: float = C_H,
) -> ScheduleTable:
    """Backward recursion for the descent coefficients Gamma_t and c_t.

    Starting from c_T = 0,

        Gamma_t = (M - 12 c_{t+1} (1 + 2 alpha + beta)) / (12 M^(3/2))
        c_t     = c_{t+1} (1 + 1/alpha^2 + 2/sqrt(beta))
                  + (C1/sqrt(M) + Gamma_t) L2^(3/2) / b^(3/4)
                  + C_h (C1/M^2 + Gamma_t/M^(3/2)) L2^3 / B^(3/2)

    with b = D_g L2^2/(4 L1^2) and B = D_h/log d.  The compact grouping
    (C1 + Gamma sqrt(M)) L2^(3/2)/sqrt(M) [...] is evaluated as well and
    must agree; the expanded form above is the one stored.  A table with
    some Gamma_t <= 0 is returned with ``valid = False``.
    """
    log_d = math.log(d)
    if not n > 10:
        raise PreconditionError(f"violated n > 10 (n = {n})")
    if not L2 > 0 or not L1 > 0:
        raise PreconditionError("violated L1 > 0 and L2 > 0")
    if not M > 2 * L2:
        raise PreconditionError(f"violated M > 2 L2 (M = {M}, L2 = {L2})")
    if not D_h > 25 * log_d:
        raise PreconditionError(f"violated D_h > 25 log d (D_h = {D_h}, 25 log d = {25 * log_d})")
    if T < 1:
        raise PreconditionError("violated T >= 1")
    p = ScheduleTable(
        n, float(M), float(L1), float(L2), float(D_g), float(D_h), log_d, int(T), float(alpha), float(beta),
        np.zeros(T), np.zeros(T + 1), 0.0, False, True, 0.0, C_h=C_h,
    )
    growth_step = 12 * (1 + 2 * alpha + beta)
    gap = 0.0
    for t in range(T - 1, -1, -1):
        c_next = p.c[t + 1]
        p.gamma[t] = (M - growth_step * c_next) / (12 * M**1.5)
        p.c[t] = _c_expanded(p, p.gamma[t], c_next)
        main = _c_main(p, p.gamma[t], c_next)
        gap = max(gap, abs(main - p.c[t]) / max(abs(p.c[t]), 1e-300))
    p.max_form_gap = gap
    p.forms_agree = gap <= 1e-12
    p.gamma_n = float(p.gamma.min()) / C_MU
    p.valid = bool(np.all(p.gamma > 0))
    return p


def corollary_schedule(
    n: int,
    lip: LipschitzEstimates,
    d: float = math.e,
    C_m: float = THEORY_C_M,
    C_h: float = C_H,
    params: CorollaryParams | None = None,
) -> ScheduleTable:
    """Schedule for the theory-mode parameters of :func:`corollary_parameters`."""
    if params is None:
        params = corollary_parameters(n, d, lip, mode="theory", C_m=C_m, C_h=C_h)
    return build_schedule(
        n, params.M, lip.L1, lip.L2, params.D_g, params.D_h, params.T, params.alpha, params.beta, d=d, C_h=C_h
    )


def schedule_constants(C_m: float) -> dict:
    """Reference constants bounding Gamma_t and c_0 for M = C_m L2.

    Gamma_t lies in (C_l, C_u] / sqrt(L2) and c_0 < 30 C_d n^(-2/3) L2.
    C_l is positive only for C_m above roughly 2748.
    """
    C_d = (C1 + 1 / 12) * (C_m**-2 + C_m**-0.5)
    C_l = (C_m / 12 - 60 * C_d) / C_m**1.5
    C_u = C_m**-0.5 / 12
    return {"C_d": C_d, "C_l": C_l, "C_u": C_u}


def hessian_complexity(n: int, S: int, T: int, D_h: int, convention: str = "theory") -> int:
    """Total component-Hessian evaluations of S epochs.

    ``theory`` charges every inner step: S n + S T D_h.
    ``empirical`` matches the optimizer counters, where the first step of an
    epoch reuses the snapshot Hessian: S n + S (T - 1) D_h.
    """
    if min(n, S, T) < 1 or D_h < 0:
        raise ValueError("need n, S, T >= 1 and D_h >= 0")
    if convention == "theory":
        return S * n + S * T * D_h
    if convention == "empirical":
        return S * n + S * (T - 1) * D_h
    raise ValueError(f"unknown convention {convention!r}")


def theorem_bound(delta_F: float, S: int, T: int, gamma_n: float) -> float:
    """Bound delta_F / (S T gamma_n) on the expected mu of the output."""
    if not gamma_n > 0:
        raise ValueError("gamma_n must be positive")
    return delta_F / (S * T * gamma_n)


def gradient_moment_bound(L2: float, b: float, dist: float) -> float:
    """Bound on E||grad F(x) - v||^(3/2) for batch constant b and ||x - x_hat|| = dist."""
    return L2**1.5 / b**0.75 * dist**3


def hessian_moment_bound(L2: float, B: float, dist: float, C_h: float = C_H) -> float:
    """Bound on E||hess F(x) - U||^3 for B = D_h / log d."""
    return C_h * L2**3 / B**1.5 * dist**3


def descent_bound(f_x: float, M: float, step_norm: float, err_v: float, err_U: float) -> float:
    """Upper bound on F(x + h) after an exact cubic step with estimator errors."""
    return f_x - M / 12 * step_norm**3 + C1 * (err_v**1.5 / math.sqrt(M) + err_U**3 / M**2)


def mu_step_bound(M: float, step_norm: float, err_v: float, err_U: float) -> float:
    """Upper bound on mu(x + h) / C_mu after an exact cubic step."""
    return M**1.5 * step_norm**3 + err_v**1.5 + err_U**3 / M**1.5


def snapshot_distance_bound(step_norm: float, dist: float, alpha: float, beta: float) -> float:
    """Bound on ||x + h - x_hat||^3 given ||h|| and ||x - x_hat|| = dist."""
    return (1 + 2 * alpha + beta) * step_norm**3 + _growth(alpha, beta) * dist**3
