"""Brute-force reference computations for tests and diagnostics.

Everything here is deterministic and deliberately avoids the code paths the
agent uses: products are plain Python loops, the FTRL minimiser is found by
Newton iterations on the simplex rather than by the Gibbs formula, and
expectations over discrete supports are exhaustive sums.
"""
from __future__ import annotations

import math

import numpy as np

COND_LIMIT = 1e12


def _mm(A, B):
    n, m, p = len(A), len(B), len(B[0])
    if len(A[0]) != m:
        raise ValueError("inner dimensions differ")
    return [[sum(A[i][k] * B[k][j] for k in range(m)) for j in range(p)] for i in range(n)]


def _eye(d):
    return [[1.0 if i == j else 0.0 for j in range(d)] for i in range(d)]


def _as_lists(S):
    return [[float(v) for v in row] for row in np.asarray(S, dtype=np.float64)]


def _norm1(A):
    d = len(A)
    return max(sum(abs(A[i][j]) for i in range(d)) for j in range(len(A[0])))


def _support_probs(policy_dist, points, arm):
    if callable(policy_dist):
        P = np.asarray(policy_dist(points))
    elif hasattr(policy_dist, "probs"):
        P = np.asarray(policy_dist.probs(points))
    else:
        P = np.asarray(policy_dist, dtype=np.float64)
    if P.ndim == 1:
        return [float(v) for v in P]
    return [float(v) for v in P[:, arm]]


def exact_sigma_ta(model, policy_dist, arm: int) -> np.ndarray:
    """``sum_x w(x) pi(arm|x) x x^T`` over a finite support.

    ``policy_dist`` is an ``(n_support, K)`` table, a per-support vector of
    ``pi(arm|x)``, a callable on the support or an object with ``probs``.
    """
    if model.support is None:
        raise ValueError("exact design matrix needs a finite support")
    pts = _as_lists(model.support)
    w = [float(v) for v in model.weights]
    p = _support_probs(policy_dist, np.asarray(model.support), arm)
    d = len(pts[0])
    out = [[0.0] * d for _ in range(d)]
    for x, wx, px in zip(pts, w, p):
        c = wx * px
        for i in range(d):
            for j in range(d):
                out[i][j] += c * x[i] * x[j]
    return np.array(out)


def exact_inverse(S) -> np.ndarray:
    """Gauss-Jordan inverse with partial pivoting and a condition guard."""
    A = _as_lists(S)
    d = len(A)
    if any(len(r) != d for r in A):
        raise ValueError("matrix must be square")
    aug = [A[i] + _eye(d)[i] for i in range(d)]
    scale = max(1.0, max(abs(v) for r in A for v in r))
    for col in range(d):
        piv = max(range(col, d), key=lambda r: abs(aug[r][col]))
        if abs(aug[piv][col]) <= 1e-300 or abs(aug[piv][col]) < 1e-14 * scale:
            raise ValueError("matrix is singular")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(d):
            if r != col and aug[r][col] != 0.0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    inv = [row[d:] for row in aug]
    cond = _norm1(A) * _norm1(inv)
    if not cond < COND_LIMIT:
        raise ValueError(f"condition number {cond:.3g} exceeds {COND_LIMIT:g}")
    return np.array(inv)


def mgr_expectation_closed_form(sigma_ta, delta: float, M: int) -> np.ndarray:
    """``delta * sum_{k=0}^{M} (I - delta Sigma)^k`` by repeated multiplication."""
    S = _as_lists(sigma_ta)
    d = len(S)
    step = [[(1.0 if i == j else 0.0) - delta * S[i][j] for j in range(d)] for i in range(d)]
    power = _eye(d)
    acc = _eye(d)
    for _ in range(int(M)):
        power = _mm(power, step)
        for i in range(d):
            for j in range(d):
                acc[i][j] += power[i][j]
    return delta * np.array(acc)


def mgr_tail_bound(lambda_min_sigma: float, delta: float, M: int) -> float:
    """Distance of the truncated series from the exact inverse (spectral norm bound)."""
    return (1.0 - delta * lambda_min_sigma) ** (M + 1) / lambda_min_sigma


def _ftrl_objective(L, q, beta):
    return sum(l * p for l, p in zip(L, q)) + beta * sum(p * math.log(p) for p in q if p > 0)


def ftrl_argmin_numeric(L, beta: float, tol: float = 1e-12, max_iter: int = 100_000, step_tol: float = 1e-10) -> np.ndarray:
    """Minimise ``<L, q> - beta H(q)`` over the simplex by damped Newton steps.

    Iterates stay strictly inside the simplex; each step solves the Newton
    system restricted to ``sum(q) = 1`` and backtracks to keep positivity and
    descent. Stops once the Newton decrement (which bounds the objective gap)
    is below ``tol`` and the step is below ``step_tol`` in every coordinate;
    the second test matters for small ``beta``, where a 1e-12 objective gap
    still allows errors near 1e-6 in ``q``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    L = [float(v) for v in L]
    K = len(L)
    q = [1.0 / K] * K
    f = _ftrl_objective(L, q, beta)
    for _ in range(max_iter):
        g = [l + beta * (math.log(p) + 1.0) for l, p in zip(L, q)]
        nu = sum(p * gi for p, gi in zip(q, g))  # sum(q) = 1
        step = [-(p / beta) * (gi - nu) for p, gi in zip(q, g)]
        dec = sum(s * s * beta / p for s, p in zip(step, q))
        if dec / 2.0 <= tol and max(abs(v) for v in step) <= step_tol:
            return np.array(q)
        t = 1.0
        while True:
            cand = [p + t * s for p, s in zip(q, step)]
            if min(cand) > 0:
                fc = _ftrl_objective(L, cand, beta)
                if fc <= f - 0.25 * t * dec or dec < 1e-10:
                    break
            t *= 0.5
            if t < 1e-20:
                raise RuntimeError("line search failed")
        tot = sum(cand)
        q = [c / tot for c in cand]
        f = _ftrl_objective(L, q, beta)
    raise RuntimeError(f"no convergence in {max_iter} iterations")


def bias_bound_eval(gamma, delta, lambda_min, M, K, c_x, c_theta, T):
    """``C_X C_Theta exp(-gamma delta lambda_min M / K)`` against ``C_X C_Theta / T``."""
    bound = c_x * c_theta * math.exp(-gamma * delta * lambda_min * M / K)
    target = c_x * c_theta / T
    return bound, target, bound <= target


def entropy_bound_rhs(Q: float, K: int, T: int) -> float:
    """``Q log(eKT/Q)``, or ``e log(KT)`` when ``Q <= e``."""
    if Q <= math.e:
        return math.e * math.log(K * T)
    return Q * math.log(math.e * K * T / Q)


def entropy_bound_eval(q_trace, a_star: int, K: int, T: int | None = None):
    """Both sides of the entropy bound for the per-round distributions at one context.

    ``q_trace`` has one row per round. Returns ``(lhs, rhs, passed)``.
    """
    rows = [[float(v) for v in r] for r in np.atleast_2d(np.asarray(q_trace, dtype=np.float64))]
    T = len(rows) if T is None else T
    lhs = 0.0
    Q = 0.0
    for r in rows:
        lhs += -sum(p * math.log(p) for p in r if p > 0)
        Q += 1.0 - r[a_star]
    rhs = entropy_bound_rhs(Q, K, T)
    return lhs, rhs, lhs <= rhs


def entropy_bound_from_sums(entropy_sum: float, Q: float, K: int, T: int, slack: float = 1e-9):
    """Same check from accumulated sums; ``slack`` absorbs summation rounding."""
    rhs = entropy_bound_rhs(Q, K, T)
    return entropy_sum, rhs, entropy_sum <= rhs + slack * max(1.0, rhs)


def _context_losses(x, theta):
    return [sum(xi * ti for xi, ti in zip(x, row)) for row in theta]


def expected_regret_per_round(points, weights, theta, probs) -> float:
    """``sum_x w(x) [sum_a p(a|x) <x, theta(a)> - min_a <x, theta(a)>]`` by enumeration.

    ``probs[i]`` is the action distribution at ``points[i]``.
    """
    pts = _as_lists(np.atleast_2d(points))
    th = _as_lists(theta)
    total = 0.0
    for x, w, p in zip(pts, weights, probs):
        losses = _context_losses(x, th)
        total += float(w) * (sum(float(pa) * la for pa, la in zip(p, losses)) - min(losses))
    return total


def uniform_regret_moments(points, weights, theta) -> tuple[float, float]:
    """Mean and variance over contexts of the uniform policy's per-round regret."""
    pts = _as_lists(np.atleast_2d(points))
    th = _as_lists(theta)
    K = len(th)
    mean = 0.0
    second = 0.0
    for x, w in zip(pts, weights):
        losses = _context_losses(x, th)
        r = sum(losses) / K - min(losses)
        mean += float(w) * r
        second += float(w) * r * r
    return mean, second - mean * mean


def certified_gap(points, theta) -> float:
    """Smallest gap between the best and second-best arm over a finite support."""
    gap = math.inf
    for x in _as_lists(np.atleast_2d(points)):
        losses = sorted(_context_losses(x, _as_lists(theta)))
        gap = min(gap, losses[1] - losses[0])
    return gap
