"""Cubic-regularized Newton drivers with exact sample accounting.

``run_cr``         full gradient and Hessian every step.
``run_scr``        plain subsampling with sizes driven by the previous step.
``run_svrc_zhou``  epoch snapshots, second-order corrected gradient.
``run_lite_svrc``  epoch snapshots, first-order control variates and a
                   fixed Hessian batch.

Every driver returns a :class:`RunTrace` with one record per cubic step.
Counters count sampled component indices: a gradient batch of size b costs
b gradient samples (the paired evaluation at the snapshot is not counted
separately), a Hessian batch of size B costs B Hessian samples, and so
does each component Hessian-vector product.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .cubic import CubicModel, SolverError, solve_exact, solve_krylov
from .estimators import (
    GRAD_STREAM,
    HESS_STREAM,
    OUTPUT_STREAM,
    BatchPlan,
    EpochReference,
    corrected_gradient,
    gradient_batch_size,
    semi_stochastic_gradient,
    semi_stochastic_hessian,
    semi_stochastic_hessian_operator,
    step_rng,
)
from .objectives import Batch, FiniteSumObjective, draw_batch
from .theory import compute_mu

_REUSE_DIST_SQ = 1e-24


@dataclass
class SubsolverConfig:
    """``kind`` is exact, krylov, or auto (exact when a dense Hessian is allowed)."""

    kind: str = "auto"
    tol: float = 1e-6
    max_dim: int | None = 100

    def __post_init__(self):
        if self.kind not in ("auto", "exact", "krylov"):
            raise ValueError(f"unknown sub-solver {self.kind!r}")


@dataclass
class LiteSvrcConfig:
    S: int
    T: int
    M: float
    plan: BatchPlan
    x0: np.ndarray
    subsolver: SubsolverConfig = field(default_factory=SubsolverConfig)
    seed: int = 0
    eval_mu_every: int = 0
    # stop before a step that would push the Hessian counter past this
    hess_budget: int | None = None

    def __post_init__(self):
        if self.S < 1 or self.T < 1:
            raise ValueError("S and T must be >= 1")
        if not self.M > 0:
            raise ValueError("M must be positive")
        self.x0 = np.array(self.x0, dtype=float)

    def snapshot(self) -> dict:
        out = asdict(self)
        out["x0"] = self.x0.tolist()
        return out


@dataclass
class IterationRecord:
    iter: int
    s: int
    t: int
    f_value: float
    step_norm: float
    dist_to_snapshot: float
    grad_batch: int
    hess_batch: int
    cum_grad_samples: int
    cum_hess_samples: int
    model_value: float
    mu: float | None = None
    wall_ns: int = 0
    flagged: bool = False


@dataclass
class StepInfo:
    """Everything used to take one step; passed to the optional observer."""

    s: int
    t: int
    x: np.ndarray
    x_next: np.ndarray
    x_hat: np.ndarray
    v: np.ndarray
    U: np.ndarray | None
    h: np.ndarray
    M: float


@dataclass
class RunTrace:
    algorithm: str
    records: list
    iterates: list  # x after each recorded step
    x_final: np.ndarray
    x_out: np.ndarray | None
    config: dict
    objective_meta: dict
    f_initial: float
    error: str | None = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


class NumericError(FloatingPointError):
    def __init__(self, s: int, t: int, message: str = "non-finite function value"):
        super().__init__(f"{message} at s={s}, t={t}")
        self.s, self.t = s, t


def select_output(trace: RunTrace, seed: int) -> np.ndarray:
    """Uniformly random recorded iterate (deterministic given ``seed``)."""
    if not trace.iterates:
        raise ValueError("empty trace")
    k = int(step_rng(seed, 0, 0, OUTPUT_STREAM).integers(len(trace.iterates)))
    return trace.iterates[k]


def _solve(model: CubicModel, cfg: SubsolverConfig, seed: int):
    kind = cfg.kind
    if kind == "auto":
        kind = "exact" if model.dense else "krylov"
    if kind == "exact":
        return solve_exact(model, tol=min(cfg.tol, 1e-10))
    max_dim = model.d if cfg.max_dim is None else min(cfg.max_dim, model.d)
    return solve_krylov(model, max_dim=max_dim, tol=cfg.tol, seed=seed)


def _dense(obj: FiniteSumObjective, cfg: SubsolverConfig) -> bool:
    return obj.dense_ok and cfg.kind != "krylov"


class _Driver:
    """Shared bookkeeping: counters, records, timing, mu evaluation."""

    def __init__(self, name, obj, M, sub, x0, seed, eval_mu_every, observer, config):
        self.name, self.obj, self.M, self.sub = name, obj, M, sub
        self.seed, self.eval_mu_every, self.observer = seed, eval_mu_every, observer
        self.cum_g = self.cum_h = 0
        x0 = np.array(x0, dtype=float)
        self.trace = RunTrace(name, [], [], x0.copy(), None, config, dict(obj.meta), float(obj.value(x0)))

    def step(self, s, t, x, x_hat, v, H, grad_samples, hess_samples, grad_batch, hess_batch, t0):
        model = CubicModel(v, H, self.M)
        sol = _solve(model, self.sub, seed=(self.seed * 1_000_003 + s * 7919 + t) % 2**31)
        h, flagged = sol.h, False
        if not sol.model_value <= 0 or not np.all(np.isfinite(h)):
            h, flagged = np.zeros_like(x), True
        x_next = x + h
        f = float(self.obj.value(x_next))
        if not math.isfinite(f):
            raise NumericError(s, t)
        self.cum_g += grad_samples
        self.cum_h += hess_samples
        k = len(self.trace.records) + 1
        mu = None
        if self.eval_mu_every and k % self.eval_mu_every == 0:
            mu = compute_mu(self.obj, x_next, self.M).mu
        wall = time.perf_counter_ns() - t0
        self.trace.records.append(
            IterationRecord(
                k, s, t, f, float(np.linalg.norm(h)),
                float(np.linalg.norm(x - x_hat)) if x_hat is not None else 0.0,
                int(grad_batch), int(hess_batch), self.cum_g, self.cum_h,
                0.0 if flagged else float(sol.model_value), mu, int(wall), flagged,
            )
        )
        self.trace.iterates.append(x_next)
        if self.observer is not None:
            self.observer(StepInfo(s, t, x, x_next, x_hat, v, H if not callable(H) else None, h, self.M))
        return x_next

    def finish(self, x_final, error=None):
        self.trace.x_final = np.array(x_final)
        self.trace.error = error
        if self.trace.iterates:
            self.trace.x_out = select_output(self.trace, self.seed)
        return self.trace


def _hess_operator(obj, x, batch=None):
    return lambda v: obj.hess_vec(x, v, batch)


def _epoch_loop(name: str, obj: FiniteSumObjective, cfg: LiteSvrcConfig, observer, corrected: bool) -> RunTrace:
    n = obj.n
    dense = _dense(obj, cfg.subsolver)
    drv = _Driver(name, obj, cfg.M, cfg.subsolver, cfg.x0, cfg.seed, cfg.eval_mu_every, observer, cfg.snapshot())
    budget = cfg.hess_budget
    x_hat = cfg.x0.copy()
    x = x_hat
    try:
        for s in range(1, cfg.S + 1):
            if budget is not None and drv.cum_h + n > budget:
                break
            t0 = time.perf_counter_ns()
            x = x_hat.copy()
            ref = EpochReference.from_objective(obj, x_hat, dense=dense)
            H = ref.H_ref if dense else _hess_operator(obj, x_hat)
            x = drv.step(s, 0, x, x_hat, ref.g_ref, H, n, n, n, n, t0)
            for t in range(1, cfg.T):
                t0 = time.perf_counter_ns()
                dist_sq = float(np.sum((x - x_hat) ** 2))
                b = gradient_batch_size(cfg.plan, dist_sq)
                reuse = dist_sq < _REUSE_DIST_SQ
                hess_cost = cfg.plan.D_h + (b if corrected and not reuse else 0)
                if budget is not None and drv.cum_h + hess_cost > budget:
                    break
                I_h = draw_batch(step_rng(cfg.seed, s, t, HESS_STREAM), n, cfg.plan.D_h)
                if reuse:
                    # the estimator collapses to the snapshot gradient
                    v, g_cost = ref.g_ref, 0
                else:
                    I_g = draw_batch(step_rng(cfg.seed, s, t, GRAD_STREAM), n, b)
                    estimate = corrected_gradient if corrected else semi_stochastic_gradient
                    v, g_cost = estimate(obj, ref, x, I_g), b
                if dense:
                    U = semi_stochastic_hessian(obj, ref, x, I_h)
                else:
                    U = semi_stochastic_hessian_operator(obj, ref, x, I_h)
                x = drv.step(s, t, x, x_hat, v, U, g_cost, hess_cost, b, hess_cost, t0)
            x_hat = x
    except SolverError as exc:
        return drv.finish(x, error=f"solver: {exc}")
    return drv.finish(x)


def run_lite_svrc(obj: FiniteSumObjective, cfg: LiteSvrcConfig, observer: Callable | None = None) -> RunTrace:
    """Lite-SVRC: snapshots every T steps, fixed Hessian batch D_h.

    Epoch s starts at x_hat with exact g, H (n gradient and n Hessian
    samples) and takes its first step on that exact model.  Steps
    t = 1..T-1 use b = ceil(D_g/||x - x_hat||^2) gradient differences and
    D_h Hessian differences, both sampled with replacement.  Total Hessian
    samples: S n + S (T - 1) D_h.
    """
    return _epoch_loop("lite_svrc", obj, cfg, observer, corrected=False)


def run_svrc_zhou(obj: FiniteSumObjective, cfg: LiteSvrcConfig, observer: Callable | None = None) -> RunTrace:
    """Variance-reduced CR whose gradient estimator uses snapshot curvature.

    Same loop as :func:`run_lite_svrc`; the gradient estimator subtracts
    hess_i(x_hat)(x - x_hat) per sample, and those b Hessian-vector
    products are charged to the Hessian counter.
    """
    return _epoch_loop("svrc", obj, cfg, observer, corrected=True)


def run_cr(
    obj: FiniteSumObjective,
    M: float,
    iters: int,
    subsolver: SubsolverConfig | None = None,
    x0=None,
    eval_mu_every: int = 0,
    observer: Callable | None = None,
    hess_budget: int | None = None,
) -> RunTrace:
    """Exact cubic regularization; n gradient and n Hessian samples per step.

    With ``hess_budget`` the run stops early once another step would exceed it.
    """
    sub = subsolver or SubsolverConfig()
    x = np.zeros(obj.d) if x0 is None else np.array(x0, dtype=float)
    dense = _dense(obj, sub)
    config = {"M": M, "iters": iters, "subsolver": asdict(sub), "x0": x.tolist()}
    drv = _Driver("cr", obj, M, sub, x, 0, eval_mu_every, observer, config)
    n = obj.n
    try:
        for k in range(iters):
            if hess_budget is not None and drv.cum_h + n > hess_budget:
                break
            t0 = time.perf_counter_ns()
            H = obj.hess(x) if dense else _hess_operator(obj, np.array(x))
            x = drv.step(1, k, x, None, obj.grad(x), H, n, n, n, n, t0)
    except SolverError as exc:
        return drv.finish(x, error=f"solver: {exc}")
    return drv.finish(x)


@dataclass
class ScrSchedule:
    """Sample sizes from the previous step length r = ||h_{k-1}||.

    gradient: ceil(grad_scale / r^4), Hessian: ceil(hess_scale / r^2), both
    clamped to [floor_frac n, n].  With the floor at 1 every step is full.
    """

    grad_scale: float = 1.0
    hess_scale: float = 1.0
    floor_frac: float = 0.01
    max_hess_samples: int | None = None

    def sizes(self, n: int, prev_step: float | None) -> tuple[int, int]:
        lo = max(1, math.ceil(self.floor_frac * n))
        if prev_step is None or prev_step == 0:
            bg, bh = n, n
        else:
            bg = min(n, math.ceil(min(self.grad_scale / prev_step**4, 1e18)))
            bh = min(n, math.ceil(min(self.hess_scale / prev_step**2, 1e18)))
        bg, bh = min(max(bg, lo), n), min(max(bh, lo), n)
        if self.max_hess_samples is not None:
            bh = max(1, min(bh, self.max_hess_samples))
        return bg, bh


def run_scr(
    obj: FiniteSumObjective,
    M: float,
    iters: int,
    schedule: ScrSchedule | None = None,
    x0=None,
    seed: int = 0,
    subsolver: SubsolverConfig | None = None,
    eval_mu_every: int = 0,
    observer: Callable | None = None,
    hess_budget: int | None = None,
) -> RunTrace:
    """Subsampled cubic regularization without control variates.

    Index sets are drawn without replacement; a set of size n is the full
    sum.  The first step is always full.
    """
    sub = subsolver or SubsolverConfig()
    sched = schedule or ScrSchedule()
    x = np.zeros(obj.d) if x0 is None else np.array(x0, dtype=float)
    dense = _dense(obj, sub)
    n = obj.n
    config = {"M": M, "iters": iters, "schedule": asdict(sched), "seed": seed, "subsolver": asdict(sub), "x0": x.tolist()}
    drv = _Driver("scr", obj, M, sub, x, seed, eval_mu_every, observer, config)
    prev = None
    try:
        for k in range(iters):
            t0 = time.perf_counter_ns()
            bg, bh = sched.sizes(n, prev)
            if hess_budget is not None and drv.cum_h + bh > hess_budget:
                break
            Ig = None if bg == n else Batch.from_indices(step_rng(seed, 1, k, GRAD_STREAM).permutation(n)[:bg], n)
            Ih = None if bh == n else Batch.from_indices(step_rng(seed, 1, k, HESS_STREAM).permutation(n)[:bh], n)
            g = obj.grad(x, Ig)
            H = obj.hess(x, Ih) if dense else _hess_operator(obj, np.array(x), Ih)
            x = drv.step(1, k, x, None, g, H, bg, bh, bg, bh, t0)
            prev = drv.trace.records[-1].step_norm
    except SolverError as exc:
        return drv.finish(x, error=f"solver: {exc}")
    return drv.finish(x)
