"""Loss-parameter generators for the stochastic, adversarial and corrupted regimes.

An :class:`Environment` owns a base parameter matrix ``theta0`` of shape
``(K, d)`` and, for the non-stochastic regimes, an adversary strategy that
turns the observation history of rounds ``1..t-1`` into the round-``t``
parameters. Every emitted parameter matrix is recorded so the comparator
policy can be resolved after the run.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .contexts import ContextModel

REGIMES = ("stochastic", "adversarial", "corrupted")


@dataclass
class History:
    """Observations ``(X_s, A_s, loss_s)`` of completed rounds, append-only."""

    K: int
    contexts: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    pulls: np.ndarray = None

    def __post_init__(self):
        if self.pulls is None:
            self.pulls = np.zeros(self.K, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.actions)

    def append(self, x, a: int, loss: float) -> None:
        self.contexts.append(x)
        self.actions.append(int(a))
        self.losses.append(float(loss))
        self.pulls[a] += 1


def _max_abs_inner(model: ContextModel, theta: np.ndarray) -> np.ndarray:
    """Per-arm ``max_x |<x, theta(a)>|`` over the context support (or the ball)."""
    pts = model.support
    if pts is None:
        return model.c_x * np.linalg.norm(theta, axis=1)
    return np.abs(pts @ theta.T).max(axis=0)


class Adversary:
    """Strategy mapping (t, history) to a ``(K, d)`` parameter matrix."""

    id = "base"
    regime = "adversarial"

    def bind(self, theta0: np.ndarray, horizon: int) -> None:
        self.theta0 = theta0
        self.horizon = horizon

    def params(self, t: int, history: History) -> np.ndarray:
        raise NotImplementedError

    def corruption_cost(self, model: ContextModel) -> float:
        """Total ``sum_t max_{a,x} |<x, theta_t(a) - theta0(a)>|`` over the horizon."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"id": self.id}


class SignFlip(Adversary):
    """Negate every arm's parameters for the first ``rounds`` rounds."""

    id = "sign_flip"
    regime = "corrupted"

    def __init__(self, rounds: int):
        if rounds < 0:
            raise ValueError("sign_flip rounds must be non-negative")
        self.rounds = int(rounds)

    def params(self, t, history):
        return -self.theta0 if t <= self.rounds else self.theta0

    def corruption_cost(self, model):
        per_round = 2.0 * float(_max_abs_inner(model, self.theta0).max())
        return min(self.rounds, self.horizon) * per_round

    def to_dict(self):
        return {"id": self.id, "rounds": self.rounds}


def _rotate(theta0: np.ndarray, shift: int) -> np.ndarray:
    # arm a receives the base parameters of arm (a - shift) mod K
    return np.roll(theta0, shift, axis=0)


class BestArmSwitcher(Adversary):
    """Cycle the base parameters across arms every ``horizon / phases`` rounds.

    In phase ``j`` arm ``a`` gets ``theta0[(a - j) mod K]``, so the arm that
    is best under ``theta0`` moves to a new index at each phase boundary.
    """

    id = "best_arm_switcher"

    def __init__(self, phases: int = 4):
        if phases < 1:
            raise ValueError("phases must be positive")
        self.phases = int(phases)

    def bind(self, theta0, horizon):
        super().bind(theta0, horizon)
        self._rotations = [_rotate(theta0, j) for j in range(theta0.shape[0])]

    def params(self, t, history):
        phase = min(self.phases - 1, (t - 1) * self.phases // max(self.horizon, 1))
        return self._rotations[phase % self.theta0.shape[0]]

    def corruption_cost(self, model):
        # unbounded in the sense of the self-bounding budget: treated as C = T
        return float(self.horizon)

    def to_dict(self):
        return {"id": self.id, "phases": self.phases}


class LeastPulledFavoured(Adversary):
    """Give the best base parameters to the arm pulled least often so far."""

    id = "history_reactive"

    def bind(self, theta0, horizon):
        super().bind(theta0, horizon)
        self._rotations = [_rotate(theta0, j) for j in range(theta0.shape[0])]

    def params(self, t, history):
        target = int(np.argmin(history.pulls))
        return self._rotations[target]

    def corruption_cost(self, model):
        return float(self.horizon)


ADVERSARIES = {
    SignFlip.id: SignFlip,
    BestArmSwitcher.id: BestArmSwitcher,
    LeastPulledFavoured.id: LeastPulledFavoured,
}


def adversary_from_dict(desc: dict) -> Adversary:
    desc = dict(desc)
    cls = ADVERSARIES.get(desc.pop("id", None))
    if cls is None:
        raise ValueError(f"unknown adversary strategy; expected one of {sorted(ADVERSARIES)}")
    return cls(**desc)


class GapViolation(ValueError):
    """Raised by :func:`verify_gap` with the first context that breaks the gap."""

    def __init__(self, x, gap: float, claimed: float):
        self.x = np.asarray(x)
        self.gap = gap
        self.claimed = claimed
        super().__init__(f"gap {gap:.6g} < claimed {claimed:.6g} at x={self.x.tolist()}")


@dataclass(frozen=True)
class GapCertificate:
    delta: float
    measured_gap: float
    optimal_arms: tuple
    approximate: bool = False


class Environment:
    """Per-round loss parameters plus bounded uniform noise.

    ``c_theta`` is the declared parameter bound (defaults to the largest base
    norm) and ``noise`` the half-width of the uniform noise; the loss bound is
    ``c_loss = c_x * c_theta + noise``.
    """

    def __init__(
        self,
        theta0,
        model: ContextModel,
        horizon: int,
        regime: str = "stochastic",
        adversary: Adversary | None = None,
        noise: float = 0.0,
        c_theta: float | None = None,
        budget: float | None = None,
    ):
        theta0 = np.array(theta0, dtype=np.float64)
        if theta0.ndim == 1:
            theta0 = theta0[:, None]
        if theta0.ndim != 2 or theta0.shape[0] < 1:
            raise ValueError("theta0 must be a (K, d) matrix")
        if theta0.shape[1] != model.d:
            raise ValueError(f"theta0 has dimension {theta0.shape[1]}, contexts have {model.d}")
        if regime not in REGIMES:
            raise ValueError(f"unknown regime {regime!r}")
        if noise < 0:
            raise ValueError("noise bound must be non-negative")
        theta0.setflags(write=False)
        self.theta0 = theta0
        self.K, self.d = theta0.shape
        self.model = model
        self.horizon = int(horizon)
        self.regime = regime
        self.noise = float(noise)
        max_norm = float(np.linalg.norm(theta0, axis=1).max())
        self.c_theta = max_norm if c_theta is None else float(c_theta)
        if self.c_theta < max_norm - 1e-12:
            raise ValueError(f"declared c_theta {self.c_theta} below max parameter norm {max_norm}")
        self.c_x = model.c_x
        self.c_loss = self.c_x * self.c_theta + self.noise

        if regime == "stochastic":
            if adversary is not None:
                raise ValueError("the stochastic regime takes no adversary")
            self.budget = 0.0
        else:
            if adversary is None:
                raise ValueError(f"the {regime} regime needs an adversary strategy")
            if adversary.regime != regime:
                raise ValueError(f"strategy {adversary.id!r} belongs to the {adversary.regime} regime")
            adversary.bind(theta0, self.horizon)
            cost = adversary.corruption_cost(model)
            if regime == "corrupted":
                if budget is None:
                    budget = cost
                if cost > budget + 1e-12:
                    raise ValueError(f"strategy consumes corruption {cost:.6g} > budget {budget:.6g}")
                self.budget = float(budget)
            else:
                self.budget = float(self.horizon) if budget is None else float(budget)
        self.adversary = adversary
        self.reset()

    def reset(self) -> None:
        self.theta_history = np.empty((self.horizon, self.K, self.d))
        self.emitted = 0
        self.consumed = 0.0

    def emit_round_params(self, t: int, history: History) -> np.ndarray:
        """Commit ``theta_t`` using only rounds ``1..t-1`` of the history."""
        if t != self.emitted + 1:
            raise RuntimeError(f"round {t} emitted out of order (last was {self.emitted})")
        if len(history) != t - 1:
            raise RuntimeError("the adversary may only see completed rounds")
        if t > self.horizon:
            raise RuntimeError(f"round {t} beyond horizon {self.horizon}")
        if self.adversary is None:
            theta = self.theta0
        else:
            theta = self.adversary.params(t, history)
        if self.regime == "corrupted":
            dev = _max_abs_inner(self.model, theta - self.theta0).max()
            self.consumed += float(dev)
            if self.consumed > self.budget + 1e-9:
                raise RuntimeError("corruption budget exceeded")
        self.theta_history[t - 1] = theta
        self.emitted = t
        return theta

    def theta(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.emitted:
            raise IndexError(f"round {t} has not been emitted")
        return self.theta_history[t - 1]

    def draw_noise(self, rng: np.random.Generator) -> np.ndarray:
        """Fresh noise for every arm; noiseless environments draw nothing."""
        if self.noise == 0.0:
            return np.zeros(self.K)
        u = rng.random(self.K)
        return (2.0 * u - 1.0) * self.noise

    def realize_loss(self, t: int, a: int, x, rng: np.random.Generator) -> float:
        eps = (2.0 * rng.random() - 1.0) * self.noise
        return float(np.dot(x, self.theta(t)[a]) + eps)

    def cumulative_params(self, T: int | None = None) -> np.ndarray:
        T = self.emitted if T is None else T
        return self.theta_history[:T].sum(axis=0)

    def optimal_policy(self, T: int | None = None) -> "ComparatorPolicy":
        return ComparatorPolicy(self.cumulative_params(T), self.c_x * self.c_theta)

    def export_history(self) -> str:
        return json.dumps(
            {
                "regime": self.regime,
                "strategy": None if self.adversary is None else self.adversary.to_dict(),
                "theta0": self.theta0.tolist(),
                "theta": self.theta_history[: self.emitted].tolist(),
            }
        )

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "theta0": self.theta0.tolist(),
            "noise": self.noise,
            "c_theta": self.c_theta,
            "budget": self.budget,
            "strategy": None if self.adversary is None else self.adversary.to_dict(),
        }


class ComparatorPolicy:
    """``a*(x) = argmin_a <x, sum_t theta_t(a)>`` with lowest-index tie breaking.

    Values within ``1e-12 * scale * T`` of the minimum count as ties, so that
    cumulative sums of equal parameters accumulated in different orders
    still resolve to the lower index.
    """

    def __init__(self, cumulative: np.ndarray, scale: float = 1.0):
        self.cumulative = np.asarray(cumulative, dtype=np.float64)
        mag = float(np.abs(self.cumulative).max(initial=0.0))
        self._tol = 1e-12 * max(mag, scale, 1e-300)

    def values(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ self.cumulative.T

    def __call__(self, X) -> np.ndarray:
        v = self.values(X)
        best = v.min(axis=1, keepdims=True)
        return np.argmax(v <= best + self._tol, axis=1)

    def arm(self, x) -> int:
        return int(self(np.asarray(x)[None, :])[0])


def optimal_policy(env: Environment, model: ContextModel | None = None, T: int | None = None):
    return env.optimal_policy(T)


def _gap_at(theta0: np.ndarray, X: np.ndarray):
    vals = X @ theta0.T
    best = np.argmin(vals, axis=1)
    sorted_vals = np.sort(vals, axis=1)
    if vals.shape[1] == 1:
        gaps = np.full(len(X), np.inf)
    else:
        gaps = sorted_vals[:, 1] - sorted_vals[:, 0]
    return best, gaps


def verify_gap(env: Environment, model: ContextModel, claimed: float) -> GapCertificate:
    """Check ``min_{b != a*} <x, theta0(b)> - <x, theta0(a*)> >= claimed`` on the support.

    Continuous models are checked on their deterministic probe grid and the
    certificate is flagged approximate.
    """
    if env.regime == "adversarial":
        raise ValueError("the gap condition applies to stochastic or corrupted instances")
    X = model.support
    approximate = X is None
    if approximate:
        X = model.grid()
    arms, gaps = _gap_at(env.theta0, X)
    i = int(np.argmin(gaps))
    if gaps[i] < claimed:
        raise GapViolation(X[i], float(gaps[i]), claimed)
    return GapCertificate(float(claimed), float(gaps[i]), tuple(int(a) for a in arms), approximate)


def self_bounding_gap(regret: float, q_bar: float, delta: float, budget: float) -> float:
    """``R_T - (delta * Qbar - C)``; non-negative values satisfy the constraint."""
    return regret - (delta * q_bar - budget)
