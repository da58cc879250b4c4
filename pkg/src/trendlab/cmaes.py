"""Covariance Matrix Adaptation Evolution Strategy, maximization form.

The optimizer is comparison based: only the ranking of fitness values enters
the updates, so any strictly increasing transform of the objective leaves the
sequence of search distributions unchanged. Non-finite fitness values are
allowed and ranked below every finite one.

Default strategy parameters (see :func:`default_config`)::

    lambda   = 4 + floor(3 ln n)
    mu       = floor(lambda / 2)
    w_i      ~ ln(mu + 1/2) - ln(i + 1),   i = 0..mu-1, normalized to sum 1
    mu_eff   = 1 / sum(w_i^2)
    c_sigma  = (mu_eff + 2) / (n + mu_eff + 5)
    d_sigma  = 1 + 2 max(0, sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
    c_c      = (4 + mu_eff / n) / (n + 4 + 2 mu_eff / n)
    c_1      = 2 / ((n + 1.3)^2 + mu_eff)
    c_mu     = min(1 - c_1, 2 (mu_eff - 2 + 1/mu_eff) / ((n + 2)^2 + mu_eff))
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence, TextIO

import numpy as np

from .errors import DecompositionFailure, InvalidDimension

Objective = Callable[[np.ndarray], float]

MAX_CONDITION = 1e14
SIGMA_MIN = 1e-300
SIGMA_MAX = 1e300


def expected_norm(n: int) -> float:
    """Approximation of E||N(0, I_n)||."""
    return math.sqrt(n) * (1.0 - 1.0 / (4 * n) + 1.0 / (21 * n * n))


def log_weights(mu: int) -> np.ndarray:
    raw = np.array([math.log(mu + 0.5) - math.log(i + 1) for i in range(mu)])
    return raw / raw.sum()


@dataclass(frozen=True)
class CmaConfig:
    n: int
    lam: int
    mu: int
    weights: np.ndarray
    sigma0: float
    mean0: np.ndarray
    c_sigma: float
    d_sigma: float
    c_c: float
    c_1: float
    c_mu: float
    max_evals: int = 20000
    target_tol: float = 1e-12
    stagnation_generations: Optional[int] = 50
    stagnation_tol: float = 1e-10
    max_generations: Optional[int] = None
    seed: int = 0
    l1_weight: float = 0.0
    l1_mask: Optional[Sequence[int]] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None  # initial per-coordinate std multipliers

    def __post_init__(self):
        if self.n < 1:
            raise InvalidDimension(f"dimension must be >= 1, got {self.n}")
        if self.lam < 2 or not 1 <= self.mu <= self.lam:
            raise ValueError(f"invalid population sizes lambda={self.lam} mu={self.mu}")
        w = np.asarray(self.weights, dtype=float)
        if len(w) != self.mu or np.any(w <= 0) or np.any(np.diff(w) > 0):
            raise ValueError("weights must be mu positive non-increasing values")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        if self.c_1 + self.c_mu > 1 + 1e-15:
            raise ValueError("c_1 + c_mu must not exceed 1")
        if len(self.mean0) != self.n:
            raise InvalidDimension("mean0 length does not match n")

    @property
    def mu_eff(self) -> float:
        return 1.0 / float(np.sum(np.asarray(self.weights) ** 2))


def default_config(
    n: int, mean0: Sequence[float], sigma0: float, seed: int = 0, **overrides
) -> CmaConfig:
    """Standard strategy parameters for dimension ``n``.

    Keyword overrides are applied last; if ``lam`` is overridden the
    dependent parameters are recomputed from it unless also given.
    """
    if n < 1:
        raise InvalidDimension(f"dimension must be >= 1, got {n}")
    lam = overrides.pop("lam", 4 + int(math.floor(3 * math.log(n))))
    mu = overrides.pop("mu", lam // 2)
    weights = overrides.pop("weights", log_weights(mu))
    mu_eff = 1.0 / float(np.sum(np.asarray(weights) ** 2))
    c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
    d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
    c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    base = dict(
        n=n,
        lam=lam,
        mu=mu,
        weights=np.asarray(weights, dtype=float),
        sigma0=float(sigma0),
        mean0=np.asarray(mean0, dtype=float).copy(),
        c_sigma=c_sigma,
        d_sigma=d_sigma,
        c_c=c_c,
        c_1=c_1,
        c_mu=c_mu,
        seed=int(seed),
    )
    base.update(overrides)
    return CmaConfig(**base)


@dataclass
class Candidate:
    x: np.ndarray
    fitness: float = float("nan")
    rank: int = -1
    index: int = 0


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    C: np.ndarray
    p_sigma: np.ndarray
    p_c: np.ndarray
    generation: int = 0
    eval_count: int = 0
    best_x: Optional[np.ndarray] = None
    best_f: float = -math.inf
    # eigendecomposition cache, C = B diag(D^2) B^T
    B: Optional[np.ndarray] = field(default=None, repr=False)
    D: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def initial(cls, config: CmaConfig) -> "CmaState":
        n = config.n
        if config.scales is None:
            C = np.eye(n)
        else:
            C = np.diag(np.asarray(config.scales, dtype=float) ** 2)
        return cls(
            mean=np.asarray(config.mean0, dtype=float).copy(),
            sigma=config.sigma0,
            C=C,
            p_sigma=np.zeros(n),
            p_c=np.zeros(n),
        )


def _decompose(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        eigvals, B = np.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        raise DecompositionFailure(str(exc)) from exc
    if not np.all(np.isfinite(eigvals)):
        raise DecompositionFailure("non-finite eigenvalues")
    return np.sqrt(np.maximum(eigvals, 0.0)), B


def recondition(C: np.ndarray) -> np.ndarray:
    """Symmetrize ``C`` and floor its spectrum at ``max_eig / MAX_CONDITION``."""
    C = 0.5 * (C + C.T)
    try:
        eigvals, B = np.linalg.eigh(C)
    except np.linalg.LinAlgError:
        d = np.abs(np.diag(C))
        d = np.where(np.isfinite(d) & (d > 0), d, 1.0)
        return np.diag(d)
    top = eigvals.max()
    if top <= 0 or not np.isfinite(top):
        return np.eye(len(C))
    if eigvals.min() > top / MAX_CONDITION:
        return C
    eigvals = np.maximum(eigvals, top / MAX_CONDITION)
    C = (B * eigvals) @ B.T
    return 0.5 * (C + C.T)


def generation_rng(seed: int, generation: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), generation]))


def sample_population(
    state: CmaState, config: CmaConfig, rng: Optional[np.random.Generator] = None
) -> list[Candidate]:
    """Draw ``lam`` candidates ``mean + sigma * C^(1/2) u``. Without ``rng`` the
    draws depend only on ``(config.seed, state.generation)``."""
    if rng is None:
        rng = generation_rng(config.seed, state.generation)
    if state.B is None or state.D is None:
        state.D, state.B = _decompose(state.C)
    u = rng.standard_normal((config.lam, config.n))
    # symmetric root B D B^T: same law as B D u, but continuous in C, so
    # eigenvector sign or order flips cannot change the draws
    root = (state.B * state.D) @ state.B.T
    steps = u @ root
    X = state.mean + state.sigma * steps
    return [Candidate(x=X[i], index=i) for i in range(config.lam)]


def rank_candidates(evaluated: Sequence[Candidate]) -> list[Candidate]:
    """Sort best first; non-finite fitness last; ties by sample index."""

    def key(c: Candidate):
        finite = math.isfinite(c.fitness)
        return (0 if finite else 1, -c.fitness if finite else 0.0, c.index)

    ordered = sorted(evaluated, key=key)
    for r, c in enumerate(ordered):
        c.rank = r
    return ordered


def weighted_mean(xs: Sequence[np.ndarray], weights: Sequence[float]) -> np.ndarray:
    acc = np.zeros_like(np.asarray(xs[0], dtype=float))
    for w, x in zip(weights, xs):
        acc = acc + w * x
    return acc


def rank_and_recombine(
    state: CmaState, config: CmaConfig, evaluated: Sequence[Candidate]
) -> np.ndarray:
    """New mean: weighted sum of the ``mu`` best candidates."""
    ranked = rank_candidates(evaluated)
    return weighted_mean([c.x for c in ranked[: config.mu]], config.weights)


def _inv_sqrt_times(state: CmaState, v: np.ndarray) -> np.ndarray:
    if state.B is None or state.D is None:
        state.D, state.B = _decompose(state.C)
    D = np.where(state.D > 0, state.D, np.inf)
    return state.B @ ((state.B.T @ v) / D)


def update_paths_and_covariance(
    state: CmaState,
    config: CmaConfig,
    old_mean: np.ndarray,
    selected: Sequence[Candidate],
) -> CmaState:
    """Cumulate both evolution paths and adapt ``C``. ``state.mean`` must
    already hold the recombined mean; ``selected`` are the ``mu`` best,
    best first."""
    n = config.n
    mu_eff = config.mu_eff
    cs, cc, c1, cmu = config.c_sigma, config.c_c, config.c_1, config.c_mu
    step = (state.mean - old_mean) / state.sigma

    p_sigma = (1 - cs) * state.p_sigma + math.sqrt(cs * (2 - cs) * mu_eff) * _inv_sqrt_times(
        state, step
    )
    g = state.generation + 1
    norm_ps = float(np.linalg.norm(p_sigma))
    h_sigma = norm_ps / math.sqrt(1 - (1 - cs) ** (2 * g)) < (1.4 + 2 / (n + 1)) * expected_norm(n)
    hs = 1.0 if h_sigma else 0.0
    p_c = (1 - cc) * state.p_c + hs * math.sqrt(cc * (2 - cc) * mu_eff) * step

    if c1 == 0.0 and cmu == 0.0:
        C = state.C
    else:
        Y = np.array([(c.x - old_mean) / state.sigma for c in selected])
        rank_mu = (Y.T * np.asarray(config.weights)) @ Y
        C = (
            (1 - c1 - cmu) * state.C
            + c1 * (np.outer(p_c, p_c) + (1 - hs) * cc * (2 - cc) * state.C)
            + cmu * rank_mu
        )
        C = 0.5 * (C + C.T)
        C = recondition(C)
    return replace(state, p_sigma=p_sigma, p_c=p_c, C=C, B=None, D=None)


def update_step_size(state: CmaState, config: CmaConfig) -> CmaState:
    ratio = float(np.linalg.norm(state.p_sigma)) / expected_norm(config.n)
    sigma = state.sigma * math.exp((config.c_sigma / config.d_sigma) * (ratio - 1))
    sigma = min(max(sigma, SIGMA_MIN), SIGMA_MAX)
    return replace(state, sigma=sigma)


def clamp(x: np.ndarray, lower: Optional[np.ndarray], upper: Optional[np.ndarray]) -> np.ndarray:
    if lower is None and upper is None:
        return x
    lo = -np.inf if lower is None else lower
    hi = np.inf if upper is None else upper
    return np.minimum(np.maximum(x, lo), hi)


def penalized_objective(
    raw: Objective,
    l1_weight: float = 0.0,
    l1_mask: Optional[Iterable[int]] = None,
    lower: Optional[Sequence[float]] = None,
    upper: Optional[Sequence[float]] = None,
) -> Objective:
    """Wrap ``raw`` with an L1 penalty on the masked coordinates and a
    quadratic penalty on the distance to the box. ``raw`` only ever sees
    clamped points."""
    if l1_weight < 0:
        raise ValueError("l1_weight must be >= 0")
    mask = None if l1_mask is None else np.array(sorted(l1_mask), dtype=int)
    lo = None if lower is None else np.asarray(lower, dtype=float)
    hi = None if upper is None else np.asarray(upper, dtype=float)

    def wrapped(x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        xc = clamp(x, lo, hi)
        value = raw(xc)
        if l1_weight:
            sel = x if mask is None else x[mask]
            value -= l1_weight * float(np.sum(np.abs(sel)))
        out = x - xc
        if np.any(out):
            value -= float(out @ out)
        return value

    return wrapped


@dataclass
class GenerationRecord:
    generation: int
    evals: int
    best: float
    median: float
    sigma: float


@dataclass
class History:
    records: list[GenerationRecord] = field(default_factory=list)
    termination: str = ""
    # (mean, sigma, C) after each generation, only when requested
    trajectory: list[tuple[np.ndarray, float, np.ndarray]] = field(default_factory=list)

    def to_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "evals", "best", "median", "sigma"])
        for r in self.records:
            w.writerow([r.generation, r.evals, repr(r.best), repr(r.median), repr(r.sigma)])


@dataclass
class OptimizeResult:
    x: np.ndarray
    fitness: float
    history: History
    state: CmaState


def _median(values: list[float]) -> float:
    finite = [v for v in values if math.isfinite(v)]
    return float(np.median(finite)) if finite else float("nan")


def optimize(
    objective: Objective,
    config: CmaConfig,
    executor: Optional[Executor] = None,
    record_trajectory: bool = False,
    callback: Optional[Callable[[CmaState, GenerationRecord], None]] = None,
) -> OptimizeResult:
    """Maximize ``objective``.

    If the config carries bounds or an L1 weight the objective is wrapped
    with :func:`penalized_objective` first. Candidate evaluations go through
    ``executor.map`` when an executor is given.

    Termination: evaluation budget, fitness spread below ``target_tol``
    within a generation, or ``stagnation_generations`` generations without
    the best-so-far improving by more than ``stagnation_tol``. A generation
    where every fitness is identical carries no ranking information and
    does not count as converged; only the stagnation rule ends such runs.
    """
    if config.l1_weight or config.lower is not None or config.upper is not None:
        objective = penalized_objective(
            objective, config.l1_weight, config.l1_mask, config.lower, config.upper
        )
    state = CmaState.initial(config)
    history = History()
    reference_best = -math.inf
    since_improvement = 0

    while True:
        if state.eval_count + config.lam > config.max_evals:
            history.termination = "max_evals"
            break
        if config.max_generations is not None and state.generation >= config.max_generations:
            history.termination = "max_generations"
            break

        try:
            candidates = sample_population(state, config)
        except DecompositionFailure:
            state.C = recondition(state.C)
            state.B = state.D = None
            candidates = sample_population(state, config)

        xs = [c.x for c in candidates]
        if executor is None:
            fits = [float(objective(x)) for x in xs]
        else:
            fits = [float(f) for f in executor.map(objective, xs)]
        for c, f in zip(candidates, fits):
            c.fitness = f
        state.eval_count += config.lam

        ranked = rank_candidates(candidates)
        top = ranked[0]
        if math.isfinite(top.fitness) and top.fitness > state.best_f:
            state.best_f = top.fitness
            state.best_x = top.x.copy()
        elif state.best_x is None:
            state.best_x = top.x.copy()

        old_mean = state.mean
        selected = ranked[: config.mu]
        state.mean = weighted_mean([c.x for c in selected], config.weights)
        state = update_paths_and_covariance(state, config, old_mean, selected)
        state = update_step_size(state, config)
        state.generation += 1

        record = GenerationRecord(
            generation=state.generation,
            evals=state.eval_count,
            best=state.best_f,
            median=_median(fits),
            sigma=state.sigma,
        )
        history.records.append(record)
        if record_trajectory:
            history.trajectory.append((state.mean.copy(), state.sigma, state.C.copy()))
        if callback is not None:
            callback(state, record)

        finite = [f for f in fits if math.isfinite(f)]
        if len(finite) == len(fits):
            spread = max(finite) - min(finite)
            if 0 < spread < config.target_tol:
                history.termination = "tolfun"
                break
        if state.best_f > reference_best + config.stagnation_tol:
            reference_best = state.best_f
            since_improvement = 0
        else:
            since_improvement += 1
            if (
                config.stagnation_generations is not None
                and since_improvement >= config.stagnation_generations
            ):
                history.termination = "stagnation"
                break

    best_x = state.best_x if state.best_x is not None else state.mean.copy()
    return OptimizeResult(x=best_x, fitness=state.best_f, history=history, state=state)
