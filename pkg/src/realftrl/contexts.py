"""Known context distributions with exact second moments."""
from __future__ import annotations

from bisect import bisect_right

import numpy as np

_RANK_TOL = 1e-10


def min_eigenvalue(S) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {S.shape}")
    scale = max(1.0, float(np.abs(S).max(initial=0.0)))
    if not np.allclose(S, S.T, rtol=0.0, atol=1e-12 * scale):
        raise ValueError("matrix is not symmetric")
    return float(np.linalg.eigvalsh(S)[0])


class ContextModel:
    """Base class: a sampleable distribution with cached covariance.

    Subclasses set ``d``, ``c_x`` and ``covariance``; the constructor of this
    class then checks positive definiteness and caches ``lambda_min``.
    """

    kind: str
    d: int
    c_x: float
    covariance: np.ndarray
    lambda_min: float

    def _finish(self) -> None:
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        self.covariance.setflags(write=False)
        lam = min_eigenvalue(self.covariance)
        if lam <= _RANK_TOL:
            raise ValueError(
                f"context covariance is not positive definite (smallest eigenvalue {lam:.3g})"
            )
        self.lambda_min = lam

    @property
    def support(self) -> np.ndarray | None:
        """Finite support points, or ``None`` for continuous models."""
        return None

    @property
    def weights(self) -> np.ndarray | None:
        return None

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def exact_covariance(self) -> np.ndarray:
        return self.covariance.copy()

    def to_dict(self) -> dict:
        raise NotImplementedError


class DiscreteContextModel(ContextModel):
    """Finitely supported contexts ``points[i]`` with probabilities ``weights[i]``."""

    kind = "discrete"

    def __init__(self, points, weights=None):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("support must be a non-empty list of vectors")
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.array(weights, dtype=np.float64)
            if w.shape != (pts.shape[0],) or np.any(w < 0) or not np.isfinite(w).all():
                raise ValueError("weights must be non-negative, one per support point")
            if abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"weights sum to {w.sum()!r}, not 1")
            w = w / w.sum()
        self._points = pts
        self._weights = w
        self._cdf = np.cumsum(w)
        self._cdf[-1] = 1.0
        self._cdf_list = self._cdf.tolist()
        self.d = pts.shape[1]
        self.c_x = float(np.linalg.norm(pts, axis=1).max())
        self.covariance = np.einsum("i,ij,ik->jk", w, pts, pts)
        self._finish()
        self._points.setflags(write=False)
        self._weights.setflags(write=False)

    @property
    def support(self) -> np.ndarray:
        return self._points

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def sample_index(self, rng: np.random.Generator) -> int:
        # same convention as sample_indices (searchsorted, side='right')
        return bisect_right(self._cdf_list, rng.random())

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.searchsorted(self._cdf, rng.random(n), side="right")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self._points[self.sample_index(rng)]

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self._points[self.sample_indices(rng, n)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "points": self._points.tolist(),
            "weights": self._weights.tolist(),
        }


class SphereContextModel(ContextModel):
    """Normalised Gaussian directions scaled to a radius of at most ``radius``.

    With ``radial="sphere"`` every context has norm ``radius`` and
    ``E[X X^T] = radius^2 / d * I``; with ``radial="ball"`` the context is
    uniform in the ball and ``E[X X^T] = radius^2 / (d + 2) * I``.
    """

    kind = "sphere"

    def __init__(self, d: int, radius: float = 1.0, radial: str = "sphere"):
        if d < 1:
            raise ValueError("dimension must be at least 1")
        if radius <= 0:
            raise ValueError("radius must be positive")
        if radial not in ("sphere", "ball"):
            raise ValueError(f"radial must be 'sphere' or 'ball', got {radial!r}")
        self.d = int(d)
        self.radius = float(radius)
        self.radial = radial
        self.c_x = self.radius
        denom = self.d if radial == "sphere" else self.d + 2
        self.covariance = np.eye(self.d) * (self.radius**2 / denom)
        self._finish()

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        g = rng.standard_normal((n, self.d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        x = g / norms * self.radius
        if self.radial == "ball":
            x *= rng.random((n, 1)) ** (1.0 / self.d)
        return x

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample_many(rng, 1)[0]

    def grid(self, n: int = 512) -> np.ndarray:
        """Deterministic probe set on the outer sphere, used for approximate checks."""
        if self.d == 1:
            return np.array([[-self.radius], [self.radius]])
        if self.d == 2:
            ang = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
            return self.radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        rng = np.random.Generator(np.random.Philox(key=[0x5EED, self.d]))
        g = rng.standard_normal((n, self.d))
        return self.radius * g / np.linalg.norm(g, axis=1, keepdims=True)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "d": self.d, "radius": self.radius, "radial": self.radial}


def sample_context(model: ContextModel, rng: np.random.Generator) -> np.ndarray:
    return model.sample(rng)


def exact_covariance(model: ContextModel) -> np.ndarray:
    return model.exact_covariance()


def context_model_from_dict(desc: dict) -> ContextModel:
    kind = desc.get("kind")
    if kind == "discrete":
        return DiscreteContextModel(desc["points"], desc.get("weights"))
    if kind == "sphere":
        return SphereContextModel(int(desc["d"]), float(desc.get("radius", 1.0)), desc.get("radial", "sphere"))
    raise ValueError(f"unknown context model kind {kind!r}")
