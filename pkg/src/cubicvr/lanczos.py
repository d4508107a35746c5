"""Lanczos tridiagonalization with full reorthogonalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal


@dataclass
class LanczosState:
    """Incremental Lanczos decomposition  A V_k = V_k T_k + beta_k v_{k+1} e_k'."""

    matvec: object
    V: list
    alpha: list
    beta: list  # beta[k-1] couples v_k and v_{k+1}
    breakdown: bool = False

    @property
    def k(self) -> int:
        return len(self.alpha)

    def T(self) -> np.ndarray:
        k = self.k
        T = np.diag(np.asarray(self.alpha))
        if k > 1:
            off = np.asarray(self.beta[: k - 1])
            T[np.arange(k - 1), np.arange(1, k)] = off
            T[np.arange(1, k), np.arange(k - 1)] = off
        return T

    def basis(self) -> np.ndarray:
        return np.column_stack(self.V[: self.k])


def _finite(w):
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("operator returned non-finite values")
    return w


def lanczos_start(matvec, v0) -> LanczosState:
    v = np.asarray(v0, dtype=float)
    v = v / np.linalg.norm(v)
    return LanczosState(matvec, [v], [], [])


def lanczos_step(st: LanczosState, breakdown_tol: float = 1e-12) -> LanczosState:
    """Extend the decomposition by one vector (in place)."""
    k = st.k
    v = st.V[k]
    w = _finite(np.asarray(st.matvec(v), dtype=float))
    a = float(v @ w)
    st.alpha.append(a)
    w = w - a * v
    if k > 0:
        w -= st.beta[k - 1] * st.V[k - 1]
    Vk = np.column_stack(st.V[: k + 1])
    # two passes of classical Gram-Schmidt
    for _ in range(2):
        w -= Vk @ (Vk.T @ w)
    b = float(np.linalg.norm(w))
    st.beta.append(b)
    scale = max(abs(a), *(abs(x) for x in st.beta), 1.0)
    if b <= breakdown_tol * scale or k + 1 >= v.size:
        st.breakdown = b <= breakdown_tol * scale
        st.V.append(np.zeros_like(v))
    else:
        st.V.append(w / b)
    return st


def lanczos(matvec, v0, max_dim: int) -> LanczosState:
    st = lanczos_start(matvec, v0)
    while st.k < max_dim:
        lanczos_step(st)
        if st.breakdown or st.k >= v0.size:
            break
    return st


def min_eigenpair(matvec, d: int, tol: float = 1e-10, seed: int = 0, max_dim: int | None = None):
    """Smallest eigenvalue and a unit Ritz vector of a symmetric operator.

    Stops when the Ritz residual beta_k |y_k| drops below tol * max(1, |theta|).
    """
    rng = np.random.default_rng(seed)
    max_dim = d if max_dim is None else min(max_dim, d)
    st = lanczos_start(matvec, rng.normal(size=d))
    while True:
        lanczos_step(st)
        w, Y = eigh_tridiagonal(np.asarray(st.alpha), np.asarray(st.beta[: st.k - 1]), select="i", select_range=(0, 0))
        theta, y = float(w[0]), Y[:, 0]
        if st.breakdown or st.k >= max_dim or st.beta[-1] * abs(y[-1]) <= tol * max(1.0, abs(theta)):
            break
    v = st.basis() @ y
    return theta, v / np.linalg.norm(v)


def min_eigenvalue(matvec, d: int, tol: float = 1e-10, seed: int = 0, max_dim: int | None = None) -> float:
    """Smallest eigenvalue of a symmetric operator via Lanczos."""
    return min_eigenpair(matvec, d, tol, seed, max_dim)[0]
