"""Covariance matrix adaptation evolution strategy, (mu/mu_w, lambda).

Standard rank-mu weighted recombination with cumulative step-size adaptation
and rank-one plus rank-mu covariance updates. Deterministic given the seed;
non-finite fitness values are treated as rejected samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

EIGEN_FLOOR = 1e-20


@dataclass(frozen=True)
class CmaesConfig:
    """Population setup, stopping, and penalty weights for planner fitness."""

    population: int | None = None  # default 4 + floor(3 ln n)
    sigma0: float | None = None  # default 0.3 * workspace diagonal at call site
    max_iters: int = 1000
    seed: int = 0
    w_budget: float | None = None  # default 1e3 * signal variance
    w_obstacle: float | None = None  # default 1e4 * signal variance
    w_workspace: float | None = None

    def __post_init__(self):
        if self.population is not None and self.population < 4:
            raise ValidationError("population must be >= 4")
        if self.sigma0 is not None and self.sigma0 <= 0:
            raise ValidationError("sigma0 must be > 0")
        for name in ("w_budget", "w_obstacle", "w_workspace"):
            w = getattr(self, name)
            if w is not None and w < 0:
                raise ValidationError(f"{name} must be >= 0")


@dataclass
class CmaesResult:
    x: np.ndarray
    f: float
    history: list = field(default_factory=list)  # best fitness per generation
    evaluations: int = 0
    generations: int = 0


def cmaes_minimize(objective, x0, sigma0: float, population: int | None = None,
                   max_iters: int = 1000, seed: int = 0,
                   f_target: float | None = None) -> CmaesResult:
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if n < 1:
        raise ValidationError("dimension must be >= 1")
    if sigma0 <= 0:
        raise ValidationError("sigma0 must be > 0")
    lam = population if population is not None else 4 + int(3 * math.log(n))
    if lam < 4:
        raise ValidationError("population must be >= 4")
    mu = lam // 2
    w = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1.0 / float(np.sum(w**2))

    c_sigma = (mueff + 2.0) / (n + mueff + 5.0)
    d_sigma = 1.0 + 2.0 * max(0.0, math.sqrt((mueff - 1.0) / (n + 1.0)) - 1.0) + c_sigma
    cc = (4.0 + mueff / n) / (n + 4.0 + 2.0 * mueff / n)
    c1 = 2.0 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((n + 2.0) ** 2 + mueff))
    chiN = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

    rng = np.random.default_rng(seed)
    mean = x0.copy()
    sigma = float(sigma0)
    C = np.eye(n)
    ps = np.zeros(n)
    pc = np.zeros(n)
    eigvals = np.ones(n)
    eigvecs = np.eye(n)

    result = CmaesResult(x=mean.copy(), f=math.inf)
    for gen in range(1, max_iters + 1):
        sqrt_vals = np.sqrt(eigvals)
        Z = rng.standard_normal((lam, n))
        Y = (Z * sqrt_vals) @ eigvecs.T
        X = mean + sigma * Y
        f = np.empty(lam)
        for k in range(lam):
            val = objective(X[k])
            f[k] = val if np.isfinite(val) else math.inf
        result.evaluations += lam
        order = np.argsort(f, kind="stable")
        if f[order[0]] < result.f:
            result.f = float(f[order[0]])
            result.x = X[order[0]].copy()
        result.history.append(float(f[order[0]]))
        result.generations = gen
        if f_target is not None and result.f <= f_target:
            break

        sel = order[:mu]
        yw = w @ Y[sel]
        zw = w @ Z[sel]
        mean = mean + sigma * yw

        ps = (1.0 - c_sigma) * ps + math.sqrt(c_sigma * (2.0 - c_sigma) * mueff) * (eigvecs @ zw)
        ps_norm = float(np.linalg.norm(ps))
        denom = math.sqrt(1.0 - (1.0 - c_sigma) ** (2.0 * gen))
        hsig = 1.0 if ps_norm / denom / chiN < 1.4 + 2.0 / (n + 1.0) else 0.0
        pc = (1.0 - cc) * pc + hsig * math.sqrt(cc * (2.0 - cc) * mueff) * yw

        rank_mu = (Y[sel].T * w) @ Y[sel]
        C = (
            (1.0 - c1 - cmu) * C
            + c1 * (np.outer(pc, pc) + (1.0 - hsig) * cc * (2.0 - cc) * C)
            + cmu * rank_mu
        )
        C = 0.5 * (C + C.T)
        sigma *= math.exp((c_sigma / d_sigma) * (ps_norm / chiN - 1.0))

        eigvals, eigvecs = np.linalg.eigh(C)
        # Floor keeps C positive definite against accumulation error.
        eigvals = np.maximum(eigvals, max(EIGEN_FLOOR, 1e-14 * float(eigvals.max())))
        if sigma * math.sqrt(float(eigvals.max())) < 1e-14:
            break
    return result
