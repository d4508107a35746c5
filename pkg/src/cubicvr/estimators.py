"""Variance-reduced gradient and Hessian estimators and batch-size rules.

All estimators are anchored at an epoch snapshot x_hat where the exact
gradient and Hessian are known, and correct them with a mini-batch of
component differences drawn with replacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .objectives import Batch, FiniteSumObjective, LipschitzEstimates, draw_batch

# RNG stream ids: independent generators per (seed, epoch, step, stream)
GRAD_STREAM = 0
HESS_STREAM = 1
OUTPUT_STREAM = 2

DEFAULT_C_H = 15000.0
# smallest multiple of L2 for which the theory-mode schedule is feasible is
# about 2748; a round value above it is used by default
THEORY_C_M = 3000.0
PRACTICAL_C_M = 10.0


class PreconditionError(ValueError):
    """A parameter violates an inequality required by the theory."""


def step_rng(seed: int, s: int, t: int, stream: int) -> np.random.Generator:
    """Generator keyed by (seed, epoch, step, stream); order independent."""
    return np.random.default_rng([int(seed), int(s), int(t), int(stream)])


def ceil_root_power(n: int, p: int, q: int) -> int:
    """Smallest integer m with m**q >= n**p, i.e. ceil(n^(p/q)) exactly."""
    target = n**p
    m = max(1, math.ceil(n ** (p / q)))
    while m**q < target:
        m += 1
    while m > 1 and (m - 1) ** q >= target:
        m -= 1
    return m


@dataclass
class EpochReference:
    """Snapshot point with its exact full gradient and (dense) Hessian."""

    x_hat: np.ndarray
    g_ref: np.ndarray
    H_ref: np.ndarray | None

    @classmethod
    def from_objective(cls, obj: FiniteSumObjective, x_hat, dense: bool | None = None) -> "EpochReference":
        x_hat = np.array(x_hat, dtype=float)
        dense = obj.dense_ok if dense is None else dense
        return cls(x_hat, obj.grad(x_hat), obj.hess(x_hat) if dense else None)


@dataclass
class BatchPlan:
    """Gradient batch constant D_g, fixed Hessian batch D_h and clamps."""

    D_g: float
    D_h: int
    b_min: int = 1
    b_max: int = 10**9

    def __post_init__(self):
        if not self.D_g > 0:
            raise ValueError("D_g must be positive")
        if int(self.D_h) != self.D_h or self.D_h < 1:
            raise ValueError("D_h must be a positive integer")
        self.D_h = int(self.D_h)
        if self.b_min < 1 or self.b_max < self.b_min:
            raise ValueError("need 1 <= b_min <= b_max")

    @classmethod
    def for_n(cls, D_g: float, D_h: int, n: int, b_min: int = 1) -> "BatchPlan":
        """Plan with the default cap b_max = 100 n."""
        return cls(D_g, D_h, b_min, 100 * n)


def gradient_batch_size(plan: BatchPlan, dist_sq: float) -> int:
    """ceil(D_g / dist_sq) clamped to [b_min, b_max]; dist_sq = 0 gives b_max."""
    if dist_sq < 0:
        raise ValueError("dist_sq must be nonnegative")
    if dist_sq == 0:
        return plan.b_max
    q = plan.D_g / dist_sq
    if q >= plan.b_max:
        return plan.b_max
    return int(min(max(math.ceil(q), plan.b_min), plan.b_max))


def _as_batch(batch, n: int) -> Batch:
    return batch if isinstance(batch, Batch) else Batch.from_indices(batch, n)


def semi_stochastic_gradient(obj: FiniteSumObjective, ref: EpochReference, x, batch) -> np.ndarray:
    """Mean over the batch of grad_i(x) - grad_i(x_hat), plus the exact g_ref."""
    b = _as_batch(batch, obj.n)
    return obj.grad(x, b) - obj.grad(ref.x_hat, b) + ref.g_ref


def semi_stochastic_hessian(obj: FiniteSumObjective, ref: EpochReference, x, batch) -> np.ndarray:
    """Mean over the batch of hess_i(x) - hess_i(x_hat), plus the exact H_ref."""
    if ref.H_ref is None:
        raise ValueError("reference has no dense Hessian; use semi_stochastic_hessian_operator")
    b = _as_batch(batch, obj.n)
    U = obj.hess(x, b) - obj.hess(ref.x_hat, b) + ref.H_ref
    return 0.5 * (U + U.T)


def semi_stochastic_hessian_operator(obj: FiniteSumObjective, ref: EpochReference, x, batch):
    """Matrix-free version of :func:`semi_stochastic_hessian`."""
    b = _as_batch(batch, obj.n)
    x = np.array(x, dtype=float)
    x_hat = ref.x_hat

    def matvec(v):
        Hv = ref.H_ref @ v if ref.H_ref is not None else obj.hess_vec(x_hat, v)
        return obj.hess_vec(x, v, b) - obj.hess_vec(x_hat, v, b) + Hv

    return matvec


def corrected_gradient(obj: FiniteSumObjective, ref: EpochReference, x, batch) -> np.ndarray:
    """Semi-stochastic gradient with a second-order control variate.

    v = mean_b[grad_i(x) - grad_i(x_hat) - hess_i(x_hat)(x - x_hat)]
        + g_ref + H_ref (x - x_hat)

    Exact for quadratic components.  Costs one component Hessian-vector
    product per batch element.
    """
    b = _as_batch(batch, obj.n)
    x = np.asarray(x, dtype=float)
    delta = x - ref.x_hat
    H_delta = ref.H_ref @ delta if ref.H_ref is not None else obj.hess_vec(ref.x_hat, delta)
    return (
        obj.grad(x, b) - obj.grad(ref.x_hat, b) - obj.hess_vec(ref.x_hat, delta, b)
    ) + ref.g_ref + H_delta


@dataclass
class CorollaryParams:
    D_g: float
    D_h: int
    T: int
    M: float
    C_h: float
    C_m: float
    alpha: float
    beta: float
    mode: str
    meta: dict = field(default_factory=dict)

    def plan(self, n: int) -> BatchPlan:
        """Batch plan for these constants; theory mode leaves b uncapped."""
        b_max = 2**62 if self.mode == "theory" else 100 * n
        return BatchPlan(self.D_g, self.D_h, 1, b_max)


def corollary_parameters(
    n: int,
    d: float,
    lip: LipschitzEstimates,
    mode: str = "practical",
    C_m: float | None = None,
    C_h: float = DEFAULT_C_H,
    M: float | None = None,
) -> CorollaryParams:
    """Parameter choices that give the n^(2/3) Hessian-sample rate.

    theory:    D_g = 4 L1^2/L2^2 n^(4/3), D_h = ceil(log d (C_h n)^(2/3)),
               T = ceil(n^(1/3)), M = C_m L2 with C_m = 3000 by default.
    practical: D_h = ceil(n^(2/3)), same D_g and T, M = 10 L2 unless given.

    ``d`` may be a real number (``np.e`` makes log d = 1).
    """
    if mode not in ("theory", "practical"):
        raise ValueError(f"mode must be 'theory' or 'practical', got {mode!r}")
    n = int(n)
    T = ceil_root_power(n, 1, 3)
    n13 = float(np.cbrt(n))
    alpha, beta = n ** (1 / 6), n13**2
    L1, L2 = lip.L1, lip.L2
    D_g = 4.0 * L1**2 / L2**2 * n13**4 if L2 > 0 else math.inf
    logd = math.log(d) if d > 1 else 0.0
    meta = {"mode": mode}
    if mode == "theory":
        if n <= 10:
            raise PreconditionError(f"theory mode needs n > 10, got n = {n}")
        if d < 2:
            raise PreconditionError(f"theory mode needs d >= 2, got d = {d}")
        if not L2 > 0:
            raise PreconditionError("theory mode needs L2 > 0")
        C_m = THEORY_C_M if C_m is None else C_m
        M = C_m * L2 if M is None else M
        D_h = math.ceil(logd * (C_h * n) ** (2 / 3))
        if not M > 2 * L2:
            raise PreconditionError(f"need M > 2 L2, got M = {M}, L2 = {L2}")
        if not D_h > 25 * logd:
            raise PreconditionError(f"need D_h > 25 log d, got D_h = {D_h}")
    else:
        D_h = ceil_root_power(n, 2, 3)
        if M is None:
            C_m = PRACTICAL_C_M if C_m is None else C_m
            M = C_m * L2
        meta["note"] = "D_h = ceil(n^(2/3)) and M tuned; not the theoretical constants"
        if C_m is None:
            C_m = M / L2 if L2 > 0 else math.nan
        if not M > 0:
            raise ValueError("penalty M must be positive; pass M explicitly when L2 = 0")
    if math.isinf(D_g):
        D_g = float(np.finfo(float).max)
    return CorollaryParams(D_g, int(D_h), T, float(M), C_h, float(C_m), alpha, beta, mode, meta)
