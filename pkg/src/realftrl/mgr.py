"""Matrix Geometric Resampling and the linear loss-parameter estimator.

MGR approximates the inverse of ``Sigma_{t,a} = E[1[A = a] X X^T]`` by the
truncated Neumann series ``delta * sum_{k=0}^{M} prod_{j<=k} (I - delta W_j)``
built from simulated contexts and simulated actions of the current policy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .contexts import ContextModel

_MAX_CHUNK = 1 << 15


@dataclass(frozen=True)
class MgrConfig:
    """Step size ``delta`` and iteration count ``M``.

    ``tail_tol`` enables early termination once the rigorous bound on the
    remaining terms, ``(M - k) * ||V_k||_F``, drops below it; ``0`` runs all
    ``M`` iterations (stopping only when the product is exactly zero, which
    leaves the result unchanged).
    """

    delta: float
    M: int
    tail_tol: float = 0.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.M < 0:
            raise ValueError("M must be non-negative")
        if self.tail_tol < 0:
            raise ValueError("tail_tol must be non-negative")

    @classmethod
    def from_bounds(cls, c_loss: float, c_x: float, M: int, tail_tol: float = 0.0) -> "MgrConfig":
        return cls(1.0 / (2.0 * c_loss * c_x), int(M), tail_tol)


@numba.njit(cache=True)
def _advance(V, S, xs, hits, delta, k, M, tail_tol):
    """Consume one chunk of simulated (context, hit) pairs.

    Updates the running product ``V`` and the running sum ``S`` in place and
    returns ``(k, stopped)``.
    """
    d = V.shape[0]
    vx = np.empty(d)
    for i in range(xs.shape[0]):
        if hits[i]:
            # V <- V (I - delta x x^T)
            for r in range(d):
                acc = 0.0
                for c in range(d):
                    acc += V[r, c] * xs[i, c]
                vx[r] = acc * delta
            for r in range(d):
                for c in range(d):
                    V[r, c] -= vx[r] * xs[i, c]
        nrm = 0.0
        for r in range(d):
            for c in range(d):
                S[r, c] += V[r, c]
                nrm += V[r, c] * V[r, c]
        k += 1
        if nrm == 0.0 or math.sqrt(nrm) * (M - k) <= tail_tol:
            return k, True
    return k, False


@numba.njit(cache=True)
def _advance_discrete(V, S, support, cdf, table, u, delta, k, M, tail_tol):
    """Discrete-support variant of :func:`_advance`.

    ``u`` holds two uniforms per step: one picks the support point, the other
    decides the indicator ``1[V(k) = arm]``.
    """
    n, d = support.shape
    vx = np.empty(d)
    for i in range(u.shape[0] // 2):
        j = 0
        while j < n - 1 and cdf[j] <= u[2 * i]:
            j += 1
        if u[2 * i + 1] < table[j]:
            for r in range(d):
                acc = 0.0
                for c in range(d):
                    acc += V[r, c] * support[j, c]
                vx[r] = acc * delta
            for r in range(d):
                for c in range(d):
                    V[r, c] -= vx[r] * support[j, c]
        nrm = 0.0
        for r in range(d):
            for c in range(d):
                S[r, c] += V[r, c]
                nrm += V[r, c] * V[r, c]
        k += 1
        if nrm == 0.0 or math.sqrt(nrm) * (M - k) <= tail_tol:
            return k, True
    return k, False


@dataclass
class MgrResult:
    sigma_dagger: np.ndarray
    iterations: int


def mgr(
    model: ContextModel,
    policy,
    arm: int,
    cfg: MgrConfig,
    rng: np.random.Generator,
    chunk: int = 64,
    table: np.ndarray | None = None,
) -> MgrResult:
    """Estimate ``Sigma_{t,arm}^{-1}`` by resampling.

    ``policy`` must provide ``probs(X) -> (n, K)`` evaluating the round's
    action distribution at a batch of contexts. Only the indicator
    ``1[V(k) = arm]`` enters the estimate, so each simulated action is drawn
    as a Bernoulli with success probability ``policy(arm | X(k))``.

    For finite supports ``table`` may hold ``policy(arm | x)`` per support
    point; each step then consumes one uniform for the context and one for
    the indicator. Draws are taken in doubling chunks.
    """
    d = model.d
    support = model.support
    V = np.eye(d)
    S = np.zeros((d, d))
    k = 0
    M = cfg.M
    if support is not None:
        if table is None:
            table = policy.probs(support)[:, arm]
        table = np.ascontiguousarray(table, dtype=np.float64)
        while k < M:
            n = min(chunk, M - k)
            k, stopped = _advance_discrete(V, S, support, model.cdf, table, rng.random(2 * n),
                                           cfg.delta, k, M, cfg.tail_tol)
            if stopped:
                break
            chunk = min(chunk * 2, _MAX_CHUNK)
        return MgrResult(cfg.delta * (np.eye(d) + S), k)
    while k < M:
        n = min(chunk, M - k)
        xs = model.sample_many(rng, n)
        p = policy.probs(xs)[:, arm]
        hits = rng.random(n) < p
        k, stopped = _advance(V, S, np.ascontiguousarray(xs), hits, cfg.delta, k, M, cfg.tail_tol)
        if stopped:
            break
        chunk = min(chunk * 2, _MAX_CHUNK)
    sigma = cfg.delta * (np.eye(d) + S)
    return MgrResult(sigma, k)


def estimate_theta(sigma_dagger: np.ndarray, played: int, a: int, x, loss: float) -> np.ndarray:
    """``Sigma_dagger @ x * loss`` for the played arm, zero otherwise."""
    x = np.asarray(x, dtype=np.float64)
    if a != played:
        return np.zeros_like(x)
    return sigma_dagger @ x * loss


def estimate_all(sigma_dagger: np.ndarray, played: int, K: int, x, loss: float) -> np.ndarray:
    """Estimates for every arm as a ``(K, d)`` matrix (one non-zero row)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros((K, x.shape[0]))
    out[played] = sigma_dagger @ x * loss
    return out


def estimate_loss(theta_hat, x) -> float:
    return float(np.dot(x, theta_hat))
