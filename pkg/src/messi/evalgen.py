"""Evaluation harness: error metrics, planted-subspace data, budget sweeps.

Comparisons between the clustered factorization and the single-SVD baseline
are made at equal parameter budgets, not equal ranks, because the two spend
a budget differently (n j + k j d versus j (n + d)). A sweep therefore maps
each (k, budget) cell to the largest feasible uniform dimension and records
the reconstruction error there; relative Frobenius error is the documented
stand-in for downstream task accuracy, which this package does not measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cluster import EmOptions, em_multi_restart
from .errors import ParameterError
from .factorization import build_factorization, equal_budget_j, reconstruct
from .io import ReportRow
from .linalg import as_matrix

SweepReport = list[ReportRow]


def frobenius_error(a, a_hat) -> tuple[float, float]:
    """(absolute, relative) Frobenius error between a matrix and its reconstruction."""
    a = as_matrix(a)
    a_hat = as_matrix(a_hat)
    if a.shape != a_hat.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {a_hat.shape}")
    absolute = float(np.linalg.norm(a - a_hat))
    denom = float(np.linalg.norm(a))
    if denom == 0.0:
        return absolute, 0.0 if absolute == 0.0 else math.inf
    return absolute, absolute / denom


@dataclass(frozen=True)
class SynthSpec:
    """Planted-subspace model: k_true random j_true-dim subspaces, rows round-robin.

    Each row is a uniform[-spread, spread] coefficient combination of its
    subspace's basis plus isotropic Gaussian noise of scale noise_sigma.
    """

    n: int
    d: int
    k_true: int
    j_true: int
    noise_sigma: float = 0.0
    spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ParameterError(f"need n >= 1 and d >= 1, got n={self.n}, d={self.d}")
        if self.k_true < 1:
            raise ParameterError(f"k_true must be >= 1, got {self.k_true}")
        if not 1 <= self.j_true <= self.d:
            raise ParameterError(f"j_true must lie in [1, {self.d}], got {self.j_true}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.spread > 0:
            raise ParameterError(f"spread must be > 0, got {self.spread}")


def generate_planted(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sample a planted-subspace matrix and its ground-truth assignment.

    Deterministic in spec.seed: one PCG64 stream drives basis, coefficient
    and noise draws in a fixed order, so the same spec reproduces the same
    matrix bit-for-bit.
    """
    rng = np.random.default_rng(spec.seed)
    bases = []
    for _ in range(spec.k_true):
        g = rng.standard_normal((spec.d, spec.j_true))
        q, r = np.linalg.qr(g)
        # Fix the sign ambiguity of QR so the basis depends only on the draw.
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        bases.append((q * signs).T)
    assignment = np.arange(spec.n, dtype=np.int64) % spec.k_true
    coeffs = rng.uniform(-spec.spread, spec.spread, size=(spec.n, spec.j_true))
    noise = rng.standard_normal((spec.n, spec.d)) * spec.noise_sigma
    a = np.empty((spec.n, spec.d))
    for c in range(spec.k_true):
        rows = assignment == c
        a[rows] = coeffs[rows] @ bases[c]
    a += noise
    return a, assignment


def rate_to_budget(rate: float, n: int, d: int) -> int:
    """Parameter budget for a target compression rate: ceil((1 - rate) * n * d)."""
    if not 0.0 < rate < 1.0:
        raise ParameterError(f"compression rate must lie in (0, 1), got {rate}")
    return math.ceil((1.0 - rate) * n * d)


@dataclass(frozen=True)
class SweepSpec:
    """Grid of (k, budget) cells to evaluate; exactly one budget/rate list is set."""

    k_list: tuple[int, ...]
    budget_list: tuple[int, ...] | None = None
    rate_list: tuple[float, ...] | None = None
    options: EmOptions = field(default_factory=EmOptions)
    include_baseline: bool = True

    def __post_init__(self):
        object.__setattr__(self, "k_list", tuple(int(k) for k in self.k_list))
        if not self.k_list or any(k < 1 for k in self.k_list):
            raise ParameterError("k_list must be a nonempty list of positive integers")
        if (self.budget_list is None) == (self.rate_list is None):
            raise ParameterError("exactly one of budget_list / rate_list must be given")
        if self.budget_list is not None:
            object.__setattr__(self, "budget_list", tuple(int(b) for b in self.budget_list))
            if not self.budget_list:
                raise ParameterError("budget_list must be nonempty")
        else:
            object.__setattr__(self, "rate_list", tuple(float(r) for r in self.rate_list))
            if not self.rate_list:
                raise ParameterError("rate_list must be nonempty")
            if any(not 0.0 < r < 1.0 for r in self.rate_list):
                raise ParameterError("rates must lie in (0, 1)")

    def budgets(self, n: int, d: int) -> tuple[int, ...]:
        if self.budget_list is not None:
            return self.budget_list
        return tuple(rate_to_budget(r, n, d) for r in self.rate_list)


def run_sweep(a, spec: SweepSpec, threads: int = 1, progress=None) -> SweepReport:
    """Evaluate every (k, budget) cell and return rows ordered by (k, budget).

    For each cell the uniform dimension is the largest fitting the budget;
    the clustering is the best of spec.options.restarts EM runs; the reported
    errors come from the materialized reconstruction. Cells whose budget
    cannot afford one dimension are recorded as warning rows (empty fields).
    Rows are a pure function of (a, spec) for any thread count.
    """
    a = as_matrix(a)
    n, d = a.shape
    opts = spec.options
    if opts.q != 2.0:
        raise ParameterError(f"sweeps report squared-error reconstructions, so q must be 2, got {opts.q}")
    budgets = sorted(set(spec.budgets(n, d)))
    k_values = set(spec.k_list)
    if spec.include_baseline:
        k_values.add(1)

    def cell(k: int, budget: int) -> ReportRow:
        try:
            j = min(equal_budget_j(n, d, k, budget), d)
        except ParameterError:
            if progress is not None:
                progress(f"skipping infeasible cell k={k} budget={budget}")
            return ReportRow(
                k=k, dims=None, params=None, compression_rate=None,
                frobenius_error=None, relative_error=None,
                iterations=0, converged=False, seed=opts.seed,
            )
        if progress is not None:
            progress(f"clustering k={k} j={j} (budget {budget})")
        clustering = em_multi_restart(a, k, j, opts, threads=threads)
        fact = build_factorization(a, clustering)
        absolute, relative = frobenius_error(a, reconstruct(fact))
        params = fact.param_count()
        return ReportRow(
            k=k,
            dims=fact.dims,
            params=params,
            compression_rate=1.0 - params / (n * d),
            frobenius_error=absolute,
            relative_error=relative,
            iterations=clustering.iterations,
            converged=clustering.converged,
            seed=opts.seed,
        )

    return [cell(k, budget) for k in sorted(k_values) for budget in budgets]
