"""Finite-sum objectives F(x) = (1/n) sum_i f_i(x) with analytic oracles.

Every oracle accepts an optional ``batch``: ``None`` means the full sum,
otherwise a multiset of component indices (or a :class:`Batch`), and the
oracle returns the mean over that multiset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .data import Dataset

DENSE_CAP = 512


@dataclass(frozen=True)
class RegularizerParams:
    lam: float
    alpha: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class LipschitzEstimates:
    """Gradient (L1) and Hessian (L2) Lipschitz constants of the components.

    ``radius`` is the half-width of the box ``|x_j| <= radius`` on which the
    constants are valid (``inf`` for global constants).  ``exact`` is False
    for empirical estimates, which are lower bounds.
    """

    L1: float
    L2: float
    radius: float = float("inf")
    exact: bool = True

    def __post_init__(self):
        if not (self.L1 >= 0 and self.L2 >= 0):
            raise ValueError("Lipschitz constants must be nonnegative")


@dataclass(frozen=True)
class Batch:
    """Multiset of component indices stored as unique rows + counts."""

    rows: np.ndarray
    counts: np.ndarray

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    @property
    def weights(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @classmethod
    def from_indices(cls, idx, n: int) -> "Batch":
        idx = np.asarray(idx, dtype=np.int64).ravel()
        if idx.size == 0:
            raise ValueError("empty batch")
        if idx.min() < 0 or idx.max() >= n:
            raise ValueError(f"batch index out of range [0, {n})")
        rows, counts = np.unique(idx, return_counts=True)
        return cls(rows, counts)

    @classmethod
    def from_counts(cls, counts) -> "Batch":
        counts = np.asarray(counts, dtype=np.int64)
        rows = np.flatnonzero(counts)
        if rows.size == 0:
            raise ValueError("empty batch")
        return cls(rows, counts[rows])


def draw_batch(rng: np.random.Generator, n: int, size: int) -> Batch:
    """Uniform sample of ``size`` indices from [0, n) with replacement.

    Drawn as multinomial counts, so the cost is O(n) for any ``size``.
    """
    if size < 1:
        raise ValueError("batch size must be >= 1")
    return Batch.from_counts(rng.multinomial(size, np.full(n, 1.0 / n)))


class FiniteSumObjective:
    """Base class.  Subclasses implement the weighted oracles.

    ``_value(x, rows, w)`` etc. receive ``rows=None`` for the full sum (then
    ``w`` is None and the implementation uses the uniform 1/n weights).
    """

    name = "objective"

    def __init__(self, n: int, d: int, dense_cap: int = DENSE_CAP):
        self.n = int(n)
        self.d = int(d)
        self.dense_cap = dense_cap
        self.lipschitz: LipschitzEstimates | None = None
        self.f_star: float | None = None
        self.meta: dict = {}

    # -- batch plumbing --------------------------------------------------
    def _resolve(self, batch):
        if batch is None:
            return None, None
        if not isinstance(batch, Batch):
            batch = Batch.from_indices(batch, self.n)
        return batch.rows, batch.weights

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"expected point of shape ({self.d},), got {x.shape}")
        return x

    @property
    def dense_ok(self) -> bool:
        return self.d <= self.dense_cap

    # -- aggregate / batch oracles ---------------------------------------
    def value(self, x, batch=None) -> float:
        return float(self._value(self._check_x(x), *self._resolve(batch)))

    def grad(self, x, batch=None) -> np.ndarray:
        return self._grad(self._check_x(x), *self._resolve(batch))

    def hess(self, x, batch=None) -> np.ndarray:
        if not self.dense_ok:
            raise ValueError(f"dense Hessian disabled for d={self.d} > {self.dense_cap}; use hess_vec")
        return self._hess(self._check_x(x), *self._resolve(batch))

    def hess_vec(self, x, v, batch=None) -> np.ndarray:
        return self._hess_vec(self._check_x(x), np.asarray(v, dtype=float), *self._resolve(batch))

    # -- single components -------------------------------------------------
    def value_i(self, x, i: int) -> float:
        return self.value(x, [i])

    def grad_i(self, x, i: int) -> np.ndarray:
        return self.grad(x, [i])

    def hess_i(self, x, i: int) -> np.ndarray:
        return self.hess(x, [i])

    def hess_vec_i(self, x, v, i: int) -> np.ndarray:
        return self.hess_vec(x, v, [i])

    def component_grads(self, x, rows) -> np.ndarray:
        """Stacked per-component gradients, shape (len(rows), d)."""
        return np.stack([self.grad_i(x, int(i)) for i in rows])

    def component_hessians(self, x, rows) -> np.ndarray:
        """Stacked per-component Hessians, shape (len(rows), d, d)."""
        return np.stack([self.hess_i(x, int(i)) for i in rows])

    def _value(self, x, rows, w):
        raise NotImplementedError

    def _grad(self, x, rows, w):
        raise NotImplementedError

    def _hess(self, x, rows, w):
        raise NotImplementedError

    def _hess_vec(self, x, v, rows, w):
        return self._hess(x, rows, w) @ v


# ---------------------------------------------------------------------------
# nonconvex regularizer


def nc_reg(params: RegularizerParams, x) -> tuple[float, np.ndarray, np.ndarray]:
    """lam * sum_j u_j^2/(1+u_j^2) with u = alpha*x; returns (value, grad, hess diagonal)."""
    x = np.asarray(x, dtype=float)
    lam, a = params.lam, params.alpha
    u = a * x
    q = 1.0 + u * u
    value = lam * float(np.sum(u * u / q))
    grad = 2.0 * lam * a * u / (q * q)
    hdiag = 2.0 * lam * a * a * (1.0 - 3.0 * u * u) / q**3
    return value, grad, hdiag


# ---------------------------------------------------------------------------
# generalized linear models on a dataset


class _GLMObjective(FiniteSumObjective):
    """Components f_i(s) = loss(s.x_i, y_i) + g(lam, alpha, s)."""

    def __init__(self, ds: Dataset, params: RegularizerParams, dense_cap: int = DENSE_CAP):
        super().__init__(ds.n_samples, ds.n_features, dense_cap)
        self.ds = ds
        self.X = sp.csr_matrix(ds.X)
        self.y = np.asarray(ds.y, dtype=float)
        self.params = params
        self.meta = {"kind": self.name, "lam": params.lam, "alpha": params.alpha, **ds.meta}

    def _parts(self, rows, w):
        if rows is None:
            return self.X, self.y, np.full(self.n, 1.0 / self.n)
        return self.X[rows], self.y[rows], w

    def _value(self, x, rows, w):
        Xr, yr, wr = self._parts(rows, w)
        return wr @ self._loss(Xr @ x, yr) + nc_reg(self.params, x)[0]

    def _grad(self, x, rows, w):
        Xr, yr, wr = self._parts(rows, w)
        return Xr.T @ (wr * self._dloss(Xr @ x, yr)) + nc_reg(self.params, x)[1]

    def _hess(self, x, rows, w):
        Xr, yr, wr = self._parts(rows, w)
        c = wr * self._d2loss(Xr @ x, yr)
        H = (Xr.T @ sp.diags(c) @ Xr).toarray()
        H[np.diag_indices_from(H)] += nc_reg(self.params, x)[2]
        return H

    def _hess_vec(self, x, v, rows, w):
        Xr, yr, wr = self._parts(rows, w)
        c = wr * self._d2loss(Xr @ x, yr)
        return Xr.T @ (c * (Xr @ v)) + nc_reg(self.params, x)[2] * v


class LogisticNC(_GLMObjective):
    """Logistic negative log-likelihood plus the nonconvex regularizer."""

    name = "logistic_nc"

    @staticmethod
    def _loss(z, y):
        # log(1 + e^z) - y z, overflow-free
        return np.logaddexp(0.0, z) - y * z

    @staticmethod
    def _dloss(z, y):
        return expit(z) - y

    @staticmethod
    def _d2loss(z, y):
        p = expit(z)
        return p * (1.0 - p)


class NlsNC(_GLMObjective):
    """Squared error of a sigmoid model plus the nonconvex regularizer."""

    name = "nls_nc"

    @staticmethod
    def _loss(z, y):
        r = y - expit(z)
        return r * r

    @staticmethod
    def _dloss(z, y):
        p = expit(z)
        return -2.0 * (y - p) * p * (1.0 - p)

    @staticmethod
    def _d2loss(z, y):
        p = expit(z)
        dp = p * (1.0 - p)
        return 2.0 * dp * dp - 2.0 * (y - p) * dp * (1.0 - 2.0 * p)


def make_logistic_nc(ds: Dataset, params: RegularizerParams, **kw) -> LogisticNC:
    return LogisticNC(ds, params, **kw)


def make_nls_nc(ds: Dataset, params: RegularizerParams, **kw) -> NlsNC:
    return NlsNC(ds, params, **kw)


# objective key -> (family, dataset name, regularizer)
PRESETS = {
    "logistic_nc:a9a": ("logistic_nc", "a9a", RegularizerParams(1e-3, 10.0)),
    "logistic_nc:ijcnn1": ("logistic_nc", "ijcnn1", RegularizerParams(1e-3, 50.0)),
    "logistic_nc:covtype": ("logistic_nc", "covtype", RegularizerParams(1e-3, 100.0)),
    "nls_nc:a9a": ("nls_nc", "a9a", RegularizerParams(5e-3, 10.0)),
    "nls_nc:ijcnn1": ("nls_nc", "ijcnn1", RegularizerParams(5e-3, 20.0)),
    "nls_nc:covtype": ("nls_nc", "covtype", RegularizerParams(5e-3, 50.0)),
}

_FAMILIES = {"logistic_nc": make_logistic_nc, "nls_nc": make_nls_nc}


def make_preset(key: str, ds: Dataset) -> _GLMObjective:
    """Build a preset objective (e.g. ``"logistic_nc:a9a"``) on ``ds``."""
    if key not in PRESETS:
        raise KeyError(f"unknown preset {key!r}; known: {sorted(PRESETS)}")
    family, _, params = PRESETS[key]
    obj = _FAMILIES[family](ds, params)
    obj.meta["preset"] = key
    return obj


# ---------------------------------------------------------------------------
# synthetic families


class QuadraticMixture(FiniteSumObjective):
    """f_i(x) = x'A_i x/2 + b_i'x.  Hessians are constant, so L2 = 0."""

    name = "random-quadratic-mixture"

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        super().__init__(A.shape[0], A.shape[1])
        self.A, self.b = A, b
        Abar, bbar = A.mean(axis=0), b.mean(axis=0)
        if np.linalg.eigvalsh(Abar)[0] > 0:
            self.x_star = -np.linalg.solve(Abar, bbar)
            self.f_star = float(0.5 * bbar @ self.x_star)

    def _w(self, rows, w):
        if rows is None:
            return self.A, self.b, np.full(self.n, 1.0 / self.n)
        return self.A[rows], self.b[rows], w

    def _value(self, x, rows, w):
        A, b, w = self._w(rows, w)
        return w @ (0.5 * np.einsum("j,kjl,l->k", x, A, x) + b @ x)

    def _grad(self, x, rows, w):
        A, b, w = self._w(rows, w)
        return np.einsum("k,kjl,l->j", w, A, x) + w @ b

    def _hess(self, x, rows, w):
        A, _, w = self._w(rows, w)
        return np.einsum("k,kjl->jl", w, A)

    def component_grads(self, x, rows):
        return self.A[rows] @ x + self.b[rows]

    def component_hessians(self, x, rows):
        return self.A[rows].copy()


class _Separable(FiniteSumObjective):
    """f_i(x) = sum_j phi(x_j; params_ij); Hessians are diagonal."""

    def _phi(self, x, rows):  # pragma: no cover - abstract
        raise NotImplementedError

    def _w(self, rows, w):
        if rows is None:
            return slice(None), np.full(self.n, 1.0 / self.n)
        return rows, w

    def _value(self, x, rows, w):
        r, w = self._w(rows, w)
        return w @ self._phi(x, r, 0).sum(axis=1)

    def _grad(self, x, rows, w):
        r, w = self._w(rows, w)
        return w @ self._phi(x, r, 1)

    def hess_diag(self, x, batch=None):
        r, w = self._w(*self._resolve(batch))
        return w @ self._phi(self._check_x(x), r, 2)

    def _hess(self, x, rows, w):
        r, w = self._w(rows, w)
        return np.diag(w @ self._phi(x, r, 2))

    def _hess_vec(self, x, v, rows, w):
        r, w = self._w(rows, w)
        return (w @ self._phi(x, r, 2)) * v

    def component_grads(self, x, rows):
        return self._phi(x, np.asarray(rows), 1)

    def component_hessians(self, x, rows):
        D = self._phi(x, np.asarray(rows), 2)
        out = np.zeros(D.shape + (self.d,))
        idx = np.arange(self.d)
        out[:, idx, idx] = D
        return out


class SeparableCubic(_Separable):
    """f_i(x) = sum_j a_ij x_j^3/6 + c_ij x_j^2/2 + b_ij x_j.

    The component Hessian diag(a_i x + c_i) is Lipschitz with constant
    max_j |a_ij| (attained along coordinate directions).  Gradients are
    only locally Lipschitz; see ``lipschitz.radius``.
    """

    name = "separable-cubic"

    def __init__(self, a, c, b):
        a, c, b = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (a, c, b))
        super().__init__(a.shape[0], a.shape[1])
        self.a, self.c, self.b = a, c, b

    def _phi(self, x, r, order):
        a, c, b = self.a[r], self.c[r], self.b[r]
        if order == 0:
            return a * x**3 / 6 + c * x**2 / 2 + b * x
        if order == 1:
            return a * x**2 / 2 + c * x + b
        return a * x + c


class SeparableCosine(_Separable):
    """f_i(x) = sum_j c_ij x_j^2/2 + a_ij cos(x_j - p_ij), with c_ij > 0.

    Bounded below with a computable infimum; globally Lipschitz gradient
    (max |c|+|a|) and Hessian (max |a|).  Nonconvex when the cosine
    amplitude exceeds the quadratic curvature.
    """

    name = "separable-cosine"

    def __init__(self, a, c, p):
        a, c, p = (np.atleast_2d(np.asarray(v, dtype=float)) for v in (a, c, p))
        if np.any(c <= 0):
            raise ValueError("quadratic coefficients must be positive")
        super().__init__(a.shape[0], a.shape[1])
        self.a, self.c, self.p = a, c, p
        self.x_star, self.f_star = self._infimum()

    def _phi(self, x, r, order):
        a, c, p = self.a[r], self.c[r], self.p[r]
        if order == 0:
            return c * x**2 / 2 + a * np.cos(x - p)
        if order == 1:
            return c * x - a * np.sin(x - p)
        return c - a * np.cos(x - p)

    def _infimum(self):
        # F separates into 1-D functions cbar t^2/2 + A cos t + B sin t
        cbar = self.c.mean(axis=0)
        A = (self.a * np.cos(self.p)).mean(axis=0)
        B = (self.a * np.sin(self.p)).mean(axis=0)
        xs = np.empty(self.d)
        total = 0.0
        for j in range(self.d):
            amp = np.hypot(A[j], B[j])
            # outside this radius the quadratic alone exceeds the value at 0
            R = 2.0 * np.sqrt(amp / cbar[j]) + 1.0
            t = np.linspace(-R, R, 20001)
            h = lambda t: cbar[j] * t**2 / 2 + A[j] * np.cos(t) + B[j] * np.sin(t)
            t0 = t[np.argmin(h(t))]
            for _ in range(50):
                g1 = cbar[j] * t0 - A[j] * np.sin(t0) + B[j] * np.cos(t0)
                g2 = cbar[j] - A[j] * np.cos(t0) - B[j] * np.sin(t0)
                if g2 <= 0:
                    break
                step = g1 / g2
                t0 -= step
                if abs(step) < 1e-15 * max(1.0, abs(t0)):
                    break
            xs[j] = t0
            total += h(t0)
        return xs, float(total)


def make_synthetic(kind: str, n: int, d: int, seed: int = 0, **kw):
    """Build a synthetic finite-sum objective with exact Lipschitz constants.

    Kinds
    -----
    ``"random-quadratic-mixture"``
        Indefinite quadratic components whose mean is positive definite.
        L2 = 0, unique minimizer ``obj.x_star``.
    ``"separable-cubic"``
        ``a_ij x^3/6 (+ c_ij x^2/2 + b_ij x)``; ``l2`` sets max|a| exactly.
        ``lower_order=False`` drops the quadratic and linear terms.  L1 is
        valid on the box of half-width ``radius`` (default 1).
    ``"separable-cosine"``
        Bounded-below nonconvex components with global constants and known
        infimum ``obj.f_star``.

    Returns ``(objective, LipschitzEstimates)``.
    """
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "random-quadratic-mixture":
        G = rng.normal(size=(n, d, d)) / np.sqrt(d)
        S = (G + G.transpose(0, 2, 1)) / 2
        S -= S.mean(axis=0)
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        C = (Q * rng.uniform(0.5, 2.0, size=d)) @ Q.T
        A = S + C
        b = rng.normal(size=(n, d))
        obj = QuadraticMixture(A, b)
        L1 = float(max(np.abs(np.linalg.eigvalsh(A)).max(axis=1)))
        lip = LipschitzEstimates(L1, 0.0)
    elif kind == "separable-cubic":
        l2 = kw.get("l2", 1.0)
        radius = kw.get("radius", 1.0)
        a = rng.uniform(-1.0, 1.0, size=(n, d))
        a *= l2 / np.abs(a).max()
        if kw.get("lower_order", True):
            c = rng.normal(scale=0.5, size=(n, d))
            b = rng.normal(scale=0.1, size=(n, d))
        else:
            c = np.zeros((n, d))
            b = np.zeros((n, d))
        obj = SeparableCubic(a, c, b)
        lip = LipschitzEstimates(float(np.max(np.abs(a) * radius + np.abs(c))), float(l2), radius=radius)
    elif kind == "separable-cosine":
        amp = kw.get("amplitude", 1.0)
        a = amp * rng.uniform(0.5, 1.5, size=(n, d))
        c = rng.uniform(0.1, 0.5, size=(n, d))
        p = rng.uniform(-np.pi, np.pi, size=d) + rng.normal(scale=0.3, size=(n, d))
        obj = SeparableCosine(a, c, p)
        lip = LipschitzEstimates(float(np.max(np.abs(c) + np.abs(a))), float(np.abs(a).max()))
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    obj.lipschitz = lip
    obj.meta = {"kind": kind, "n": n, "d": d, "seed": seed, **kw}
    return obj, lip


def _spectral(M):
    return float(np.abs(np.linalg.eigvalsh(M)).max()) if M.shape[0] else 0.0


def estimate_lipschitz(obj: FiniteSumObjective, probes: int, radius: float, seed: int, components: int | None = None):
    """Empirical component Lipschitz constants from random point pairs.

    Points are drawn uniformly from the ball of the given radius.  For each
    pair, ``components`` random components (all when n <= 64) are checked.
    The result is a lower bound on the true constants.
    """
    if probes < 2:
        raise ValueError("need at least 2 probes")
    if not radius > 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    d = obj.d
    if components is None:
        components = obj.n if obj.n <= 64 else 32
    L1 = L2 = 0.0
    for _ in range(probes):
        pts = []
        for _ in range(2):
            u = rng.normal(size=d)
            u *= radius * rng.random() ** (1.0 / d) / np.linalg.norm(u)
            pts.append(u)
        x, y = pts
        dist = np.linalg.norm(x - y)
        if dist == 0:
            continue
        rows = np.arange(obj.n) if components >= obj.n else rng.choice(obj.n, size=components, replace=False)
        dg = obj.component_grads(x, rows) - obj.component_grads(y, rows)
        L1 = max(L1, float(np.linalg.norm(dg, axis=1).max()) / dist)
        if obj.dense_ok:
            dH = obj.component_hessians(x, rows) - obj.component_hessians(y, rows)
            L2 = max(L2, max(_spectral(D) for D in dH) / dist)
    return LipschitzEstimates(L1, L2, radius=radius, exact=False)
