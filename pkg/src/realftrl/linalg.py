"""Small dense linear algebra, simplex helpers and the seeded RNG contract.

Vectors and matrices are plain ``float64`` numpy arrays; the helpers here only
add the dimension checks the rest of the package relies on.
"""
from __future__ import annotations

import zlib

import numpy as np

SIMPLEX_TOL = 1e-12
SIMPLEX_RENORM_TOL = 1e-9


def _vec(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise ValueError(f"expected a non-empty vector, got shape {a.shape}")
    return a


def dot(a, b) -> float:
    a, b = _vec(a), _vec(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def outer(a, b) -> np.ndarray:
    a, b = _vec(a), _vec(b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return np.outer(a, b)


def mat_mul(A, B) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[0]:
        raise ValueError(f"cannot multiply shapes {A.shape} and {B.shape}")
    return A @ B


def as_simplex(p) -> np.ndarray:
    """Validate a probability vector.

    Sums within ``1e-12`` of one pass unchanged, sums within ``1e-9`` are
    renormalised, anything further off raises ``ValueError``.
    """
    p = np.array(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("a distribution must be a non-empty vector")
    if not np.all(np.isfinite(p)) or np.any(p < -SIMPLEX_TOL) or np.any(p > 1 + SIMPLEX_TOL):
        raise ValueError(f"probabilities outside [0, 1]: {p}")
    p = np.clip(p, 0.0, 1.0)
    drift = abs(p.sum() - 1.0)
    if drift <= SIMPLEX_TOL:
        return p
    if drift < SIMPLEX_RENORM_TOL:
        return p / p.sum()
    raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")


def entropy(q) -> float:
    """Shannon entropy in nats, with 0 log(1/0) = 0."""
    q = np.asarray(q, dtype=np.float64)
    nz = q[q > 0]
    return float(-(nz * np.log(nz)).sum())


def sample_categorical(q, rng: np.random.Generator) -> int:
    """Draw an index with probability ``q[i]`` using exactly one uniform draw."""
    u = rng.random()
    acc = 0.0
    last = 0
    for i, p in enumerate(q):
        if p <= 0.0:
            continue
        acc += p
        last = i
        if u < acc:
            return i
    # u landed in the rounding gap above the cumulative sum
    return last


# Purposes get distinct stream keys so that, e.g., extra MGR draws never shift
# the context or noise sequences.
PURPOSES = ("environment", "context", "policy", "noise", "mgr", "probe")


class RngStreams:
    """Counter-based (Philox) random streams split by purpose and round.

    ``stream(purpose)`` returns one persistent generator per purpose;
    ``substream(purpose, t)`` returns a fresh generator for a single round,
    positioned in its own block of the counter space. The same seed always
    reproduces the same draws.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}
        self._keys: dict[str, np.ndarray] = {}

    def _key(self, purpose: str) -> np.ndarray:
        key = self._keys.get(purpose)
        if key is None:
            if purpose not in PURPOSES:
                raise KeyError(f"unknown RNG purpose {purpose!r}")
            tag = zlib.crc32(purpose.encode())
            ss = np.random.SeedSequence(self.seed, spawn_key=(tag,))
            key = ss.generate_state(2, np.uint64)
            self._keys[purpose] = key
        return key

    def stream(self, purpose: str) -> np.random.Generator:
        gen = self._streams.get(purpose)
        if gen is None:
            gen = np.random.Generator(np.random.Philox(key=self._key(purpose)))
            self._streams[purpose] = gen
        return gen

    def substream(self, purpose: str, t: int) -> np.random.Generator:
        # word 3 is never reached by the persistent streams' counters
        counter = np.array([0, 0, int(t), 1], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key(purpose), counter=counter))
