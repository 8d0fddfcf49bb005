"""Property checks that pit the implementation against the brute-force oracles.

Each ``check_*`` function returns a :class:`CheckResult` with the measured
margin. :func:`run_suite` runs them at ``quick`` or ``full`` size; the full
size matches the thresholds the test-suite asserts.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import oracle
from .config import ExperimentConfig, load_config
from .contexts import DiscreteContextModel
from .io import trial_stem, write_trial_csv
from .mgr import MgrConfig, mgr
from .policy import PolicySnapshot, softmax_rows
from .runner import run_cell
from .simulator import aggregate, fit_loglog, q_bar_estimate

CONFIG_DIR = Path(__file__).resolve().parent / "configs"


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def config_path(name: str) -> Path:
    return CONFIG_DIR / f"{name}.yaml"


def load_named(name: str) -> ExperimentConfig:
    return load_config(config_path(name))


# ---------------------------------------------------------------- oracles


@_timed
def check_ftrl_agreement(n: int = 200, tol: float = 1e-6, seed: int = 7) -> CheckResult:
    """Closed-form Gibbs weights against the numeric simplex minimiser."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        K = int(rng.integers(2, 9))
        beta = float(10 ** rng.uniform(-1, 2))
        L = rng.uniform(-5.0, 5.0, K)
        closed = softmax_rows(L, beta)
        numeric = oracle.ftrl_argmin_numeric(L, beta)
        worst = max(worst, float(np.abs(closed - numeric).max()))
    return CheckResult("ftrl-closed-form", worst <= tol, f"max sup-norm gap {worst:.2e} over {n} instances (tol {tol:g})")


@_timed
def check_mgr_scalar() -> CheckResult:
    model = DiscreteContextModel([[1.0]])
    snap = PolicySnapshot(np.zeros((1, 1)), 1.0, 1.0)
    res = mgr(model, snap, 0, MgrConfig(0.5, 3), np.random.default_rng(0))
    got = float(res.sigma_dagger[0, 0])
    want = 1.0 - 0.5**4
    return CheckResult("mgr-scalar-exact", got == want, f"got {got!r}, expected {want!r}")


def mgr_test_instance():
    """Non-orthogonal d = 2 support with a fixed, non-uniform policy snapshot."""
    model = DiscreteContextModel([[1.0, 0.0], [0.6, 0.8], [-0.5, 0.5]], [0.4, 0.35, 0.25])
    L = np.array([[0.3, -0.2], [-0.4, 0.5], [0.1, 0.1]])
    snap = PolicySnapshot(L, 0.7, 0.2)
    return model, snap, 0, MgrConfig(0.5, 12)


@_timed
def check_mgr_expectation(draws: int = 100_000, tol: float = 0.02, seed: int = 11) -> CheckResult:
    """Mean of independent resampling draws against the truncated series."""
    model, snap, arm, cfg = mgr_test_instance()
    rng = np.random.default_rng(seed)
    acc = np.zeros((model.d, model.d))
    acc2 = np.zeros_like(acc)
    table = snap.probs(model.support)[:, arm]
    for _ in range(draws):
        s = mgr(model, snap, arm, cfg, rng, table=table).sigma_dagger
        acc += s
        acc2 += s * s
    mean = acc / draws
    sd = np.sqrt(np.maximum(acc2 / draws - mean**2, 0.0))
    sigma_ta = oracle.exact_sigma_ta(model, snap.probs(model.support), arm)
    want = oracle.mgr_expectation_closed_form(sigma_ta, cfg.delta, cfg.M)
    err = float(np.abs(mean - want).max())
    band = float(4 * sd.max() / math.sqrt(draws))
    return CheckResult(
        "mgr-expectation", err <= tol,
        f"max entrywise error {err:.4f} over {draws} draws (tol {tol:g}, 4-sigma band {band:.4f})",
        data={"error": err, "band": band},
    )


# ------------------------------------------------------- run-based checks


class RunCache:
    """Memoised trials keyed by (config name, T, seed)."""

    def __init__(self):
        self._trials = {}
        self._results = {}
        self._configs = {}

    def config(self, name: str) -> ExperimentConfig:
        if name not in self._configs:
            self._configs[name] = load_named(name)
        return self._configs[name]

    def trial(self, name: str, T: int, seed: int):
        key = (name, T, seed)
        if key not in self._trials:
            self._trials[key] = run_cell(self.config(name), T, seed)
        return self._trials[key]

    def result(self, name: str, T: int, seed: int):
        """Like :meth:`trial` but keeps only the summary, to bound memory."""
        key = (name, T, seed)
        if key in self._trials:
            return self._trials[key].result
        if key not in self._results:
            self._results[key] = run_cell(self.config(name), T, seed).result
        return self._results[key]

    def trials(self):
        return list(self._trials.items())


def _bias_rows(trial, cfg: ExperimentConfig, T: int):
    model, env, agent = cfg.build(T)
    c = agent.consts
    log = trial.log
    fails = 0
    literal_fails = 0
    worst = -math.inf
    for i in range(T):
        if log.mgr_m[i] == 0 and T > 1:
            fails += 1
            continue
        b, target, ok = oracle.bias_bound_eval(
            log.gamma[i], c.delta, c.lambda_min, int(log.mgr_m[i]), c.K, c.c_x, env.c_theta, T)
        fails += not ok
        worst = max(worst, b / target)
        m_lit = math.ceil(2 * log.beta[i] - 1)
        literal_fails += not oracle.bias_bound_eval(
            log.gamma[i], c.delta, c.lambda_min, m_lit, c.K, c.c_x, env.c_theta, T)[2]
    return fails, literal_fails, worst


@_timed
def check_bias_bound(cache: RunCache, name: str = "gap_stochastic", T: int = 10_000, seeds=(0,)) -> CheckResult:
    cfg = cache.config(name)
    fails = lit = 0
    worst = -math.inf
    for s in seeds:
        f, lf, w = _bias_rows(cache.trial(name, T, s), cfg, T)
        fails += f
        lit += lf
        worst = max(worst, w)
    rounds = T * len(seeds)
    return CheckResult(
        "bias-bound", fails == 0,
        f"{fails} violations in {rounds} rounds (max bound/target {worst:.4f}); "
        f"ceil(2*beta-1) iteration counts would violate it in {lit} rounds",
        data={"violations": fails, "literal_violations": lit},
    )


@_timed
def check_estimate_floor(cache: RunCache, tol: float = 1e-9) -> CheckResult:
    worst = math.inf
    rounds = 0
    bad = 0
    for _, trial in cache.trials():
        f = trial.log.hat_floor
        f = f[np.isfinite(f)]
        rounds += len(f)
        if len(f):
            worst = min(worst, float(f.min()))
            bad += int((f < -1.0 - tol).sum())
    return CheckResult("estimate-floor", bad == 0 and rounds > 0,
                       f"min loss-estimate/beta {worst:.4f} over {rounds} rounds; {bad} below -1")


@_timed
def check_entropy_bound(cache: RunCache) -> CheckResult:
    low = high = bad = 0
    tightest = math.inf
    for (name, T, _), trial in cache.trials():
        K = trial.log.q.shape[1] if T else 0
        if T == 0:
            continue
        p = trial.probes
        Q = p.miss_mass(T, use_q=True)
        for h, q in zip(p.entropy_sum, Q):
            lhs, rhs, ok = oracle.entropy_bound_from_sums(float(h), float(q), K, T)
            bad += not ok
            tightest = min(tightest, rhs - lhs)
            if q <= math.e:
                low += 1
            else:
                high += 1
    passed = bad == 0 and low > 0 and high > 0
    return CheckResult("entropy-bound", passed,
                       f"{bad} violations; {low} probes with Q <= e, {high} with Q > e; min slack {tightest:.3f}")


def _self_bounding(results, gap: float, budget: float):
    diag = np.array([r.final_regret - (gap * r.q_bar - budget) for r in results])
    se = diag.std(ddof=1) / math.sqrt(len(diag)) if len(diag) > 1 else 0.0
    R = np.mean([r.final_regret for r in results])
    Qm, _ = q_bar_estimate(results)
    return float(R), float(Qm), float(diag.mean()), float(se)


@_timed
def check_self_bounding(cache: RunCache, name: str, T: int, seeds) -> CheckResult:
    cfg = cache.config(name)
    results = [cache.trial(name, T, s).result for s in seeds]
    gap = cfg.data["environment"]["gap"]
    budget = results[0].diagnostics["budget"]
    R, Qm, dmean, se = _self_bounding(results, gap, budget)
    passed = dmean >= -3 * se
    return CheckResult(
        f"self-bounding[{name}]", passed,
        f"R_T {R:.2f} vs gap*Qbar - C = {gap * Qm - budget:.2f} (C = {budget:g}); "
        f"diagnostic {dmean:.2f} >= -3*stderr = {-3 * se:.2f}",
        data={"R": R, "Q": Qm, "diag": dmean, "se": se},
    )


@_timed
def check_uniform_calibration(cache: RunCache, name: str = "gap_uniform", T: int = 10_000, seeds=range(20)) -> CheckResult:
    cfg = cache.config(name)
    model = cfg.build_context()
    mean_r, var_r = oracle.uniform_regret_moments(model.support, model.weights, cfg.data["environment"]["theta0"])
    results = [cache.trial(name, T, s).result for s in seeds]
    finals = np.array([r.final_regret for r in results])
    se = finals.std(ddof=1) / math.sqrt(len(finals))
    want = mean_r * T
    diff = abs(finals.mean() - want)
    return CheckResult(
        "uniform-calibration", diff <= 3 * se,
        f"mean R_T {finals.mean():.3f} vs exhaustive {want:.3f}; |diff| {diff:.3f} <= 3*stderr {3 * se:.3f} "
        f"(context-only stderr {math.sqrt(var_r * T / len(finals)):.3f})",
    )


@_timed
def check_reproducible(workdir, name: str = "gap_stochastic", T: int = 2000, seed: int = 3) -> CheckResult:
    cfg = load_named(name)
    workdir = Path(workdir)
    paths = []
    for rep in range(2):
        trial = run_cell(cfg, T, seed)
        p = workdir / f"rep{rep}_{trial_stem(cfg.config_hash(), T, seed)}.csv"
        write_trial_csv(p, trial.log, trial.result)
        paths.append(p)
    same = paths[0].read_bytes() == paths[1].read_bytes()
    return CheckResult("reproducibility", same, f"two runs of seed {seed}, T={T}: CSV bytes {'identical' if same else 'differ'}")


def _scaling(cache: RunCache, name: str, horizons, seeds):
    means = []
    for T in horizons:
        results = [cache.result(name, T, s) for s in seeds]
        means.append(aggregate(results)["final_mean"])
    return means


@_timed
def check_stochastic_scaling(cache: RunCache, horizons=(1000, 10_000, 100_000), seeds=range(20),
                             name: str = "gap_scaling", baseline: str = "gap_reallinexp3") -> CheckResult:
    means = _scaling(cache, name, horizons, seeds)
    slope, _ = fit_loglog(horizons, means)
    base = _scaling(cache, baseline, horizons[-1:], seeds)[0]
    passed = slope < 0.5 and means[-1] < base
    return CheckResult(
        "bobw-stochastic-scaling", passed,
        f"mean R_T {', '.join(f'{m:.1f}' for m in means)} at T={list(horizons)}; slope {slope:.3f} (< 0.5); "
        f"R_T({horizons[-1]}) {means[-1]:.1f} vs RealLinExp3 {base:.1f}",
        data={"means": means, "slope": slope, "baseline": base},
    )


@_timed
def check_adversarial_scaling(cache: RunCache, horizons=(1000, 10_000, 100_000), seeds=range(20),
                              name: str = "switcher") -> CheckResult:
    means = _scaling(cache, name, horizons, seeds)
    slope, _ = fit_loglog(horizons, means) if min(means) > 0 else (math.nan, math.nan)
    per_round = [m / T for m, T in zip(means, horizons)]
    decreasing = all(b < a for a, b in zip(per_round, per_round[1:]))
    passed = 0.4 <= slope <= 0.75 and decreasing
    return CheckResult(
        "bobw-adversarial-scaling", passed,
        f"mean R_T {', '.join(f'{m:.1f}' for m in means)}; slope {slope:.3f} (in [0.4, 0.75]); "
        f"R_T/T {', '.join(f'{r:.4f}' for r in per_round)}",
        data={"means": means, "slope": slope, "per_round": per_round},
    )


# ---------------------------------------------------------------- suites

LEVELS = {
    "quick": dict(ftrl=200, mgr_draws=10_000, mgr_tol=0.06, T=2000, seeds=range(5), scaling=False),
    "full": dict(ftrl=200, mgr_draws=100_000, mgr_tol=0.02, T=10_000, seeds=range(20), scaling=True),
}


def warm_verification_runs(cache: RunCache, T: int, seeds) -> None:
    """Runs the run-based checks share: gap instance (clean and corrupted),
    short runs that reach the small-``Q`` branch of the entropy bound and a
    continuous-context run."""
    for s in seeds:
        cache.trial("gap_stochastic", T, s)
        cache.trial("gap_corrupted", T, s)
    for short in (2, 3, 5):
        cache.trial("gap_stochastic", short, 0)
    cache.trial("sphere_noisy", 1000, 100)


def run_suite(level: str = "quick", workdir=None, log=print) -> list[CheckResult]:
    import tempfile

    p = LEVELS[level]
    cache = RunCache()
    out = []

    def emit(res):
        out.append(res)
        log(res.line())

    emit(check_ftrl_agreement(p["ftrl"]))
    emit(check_mgr_scalar())
    emit(check_mgr_expectation(p["mgr_draws"], p["mgr_tol"]))
    warm_verification_runs(cache, p["T"], p["seeds"])
    emit(check_bias_bound(cache, T=p["T"], seeds=tuple(p["seeds"])))
    emit(check_estimate_floor(cache))
    emit(check_entropy_bound(cache))
    emit(check_self_bounding(cache, "gap_stochastic", p["T"], p["seeds"]))
    emit(check_self_bounding(cache, "gap_corrupted", p["T"], p["seeds"]))
    emit(check_uniform_calibration(cache, T=p["T"], seeds=p["seeds"]))
    with tempfile.TemporaryDirectory() as tmp:
        emit(check_reproducible(workdir or tmp))
    if p["scaling"]:
        emit(check_stochastic_scaling(cache))
        emit(check_adversarial_scaling(cache))
    return out
