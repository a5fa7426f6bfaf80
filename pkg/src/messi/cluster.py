"""(k, j)-projective clustering by Expectation-Maximization with restarts.

The objective: place k linear subspaces of dimension j so that the sum over
rows of (distance to the nearest subspace)^q is minimal. Finding the global
optimum is hard even in tiny dimensions, so `em_run` alternates a nearest-
subspace assignment step with a per-cluster SVD refit, which never increases
the q=2 cost, and `em_multi_restart` keeps the best of several seeded local
minima. `brute_force` enumerates all row partitions and serves as a ground-
truth oracle on small instances.

Randomness: every restart draws from its own PCG64 stream seeded with
SeedSequence([seed, restart_index]), so results are independent of execution
order and identical across thread counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SizeError
from .linalg import Subspace, as_matrix, best_fit_subspace

INIT_METHODS = ("random-partition", "sampled-rows")

# Floor for the denominator of the relative-improvement convergence test.
_COST_EPS = 1e-30

# Guard on the assignment-enumeration size of brute_force.
_BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True)
class EmOptions:
    """Hyperparameters of the EM search. The defaults are plumbing choices.

    init:
        "random-partition" assigns every row an independent uniform cluster id;
        "sampled-rows" seeds each subspace with the span of j sampled rows.
    q:
        cost exponent; the objective sums dist^q. Only q=2 has an exact refit
        solver (SVD), so EM monotonicity is guaranteed for q=2 only.
    """

    restarts: int = 16
    max_iters: int = 100
    rel_tol: float = 1e-6
    seed: int = 0
    init: str = "random-partition"
    q: float = 2.0

    def __post_init__(self):
        if self.restarts < 1:
            raise ParameterError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_iters < 1:
            raise ParameterError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.rel_tol > 0:
            raise ParameterError(f"rel_tol must be > 0, got {self.rel_tol}")
        if not 0 <= self.seed < 2**64:
            raise ParameterError("seed must fit in an unsigned 64-bit integer")
        if self.init not in INIT_METHODS:
            raise ParameterError(f"init must be one of {INIT_METHODS}, got {self.init!r}")
        if not self.q > 0:
            raise ParameterError(f"q must be > 0, got {self.q}")


@dataclass(frozen=True, eq=False)
class Clustering:
    """A partition of n rows among k subspaces together with its achieved cost.

    cost_history holds the objective after every completed EM iteration
    (index 0 is the post-initialization cost); it is nonincreasing for q=2.
    """

    k: int
    assignment: np.ndarray
    subspaces: tuple[Subspace, ...]
    cost: float
    q: float
    iterations: int
    converged: bool
    cost_history: tuple[float, ...] = ()

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        subspaces = tuple(self.subspaces)
        if len(subspaces) != self.k:
            raise ParameterError(f"expected {self.k} subspaces, got {len(subspaces)}")
        a = _check_assignment(self.assignment, np.asarray(self.assignment).shape[0], self.k)
        a = a.copy()
        a.flags.writeable = False
        object.__setattr__(self, "assignment", a)
        object.__setattr__(self, "subspaces", subspaces)
        object.__setattr__(self, "cost_history", tuple(self.cost_history))


def _check_assignment(assignment, n: int, k: int) -> np.ndarray:
    a = np.asarray(assignment, dtype=np.int64)
    if a.ndim != 1 or a.shape[0] != n:
        raise ParameterError(f"assignment must be a length-{n} id list, got shape {a.shape}")
    if a.size and (a.min() < 0 or a.max() >= k):
        raise ParameterError(f"assignment contains ids outside [0, {k})")
    return a


def _check_subspaces(subspaces, d: int) -> tuple[Subspace, ...]:
    subspaces = tuple(subspaces)
    if not subspaces:
        raise ParameterError("need at least one subspace")
    for s in subspaces:
        if s.ambient != d:
            raise ParameterError(f"subspace ambient {s.ambient} does not match point dimension {d}")
    return subspaces


def _dists_sq(points: np.ndarray, s: Subspace) -> np.ndarray:
    """distances_sq without revalidating points (EM inner loop)."""
    coeffs = points @ s.basis.T
    d2 = np.einsum("ij,ij->i", points, points) - np.einsum("ij,ij->i", coeffs, coeffs)
    return np.maximum(d2, 0.0)


def _cost(points: np.ndarray, a: np.ndarray, subspaces, q: float) -> float:
    total = 0.0
    for c, s in enumerate(subspaces):
        rows = points[a == c]
        if rows.shape[0] == 0:
            continue
        d2 = _dists_sq(rows, s)
        if q == 2.0:
            total += float(np.sum(d2))
        else:
            total += float(np.sum(d2 ** (q / 2.0)))
    return total


def _assign(points: np.ndarray, subspaces) -> np.ndarray:
    dists = np.stack([_dists_sq(points, s) for s in subspaces], axis=1)
    return np.argmin(dists, axis=1).astype(np.int64)


def clustering_cost(points, assignment, subspaces, q: float = 2.0) -> float:
    """Sum over rows of dist(row, subspaces[assignment[row]])^q."""
    points = as_matrix(points)
    n, d = points.shape
    subspaces = _check_subspaces(subspaces, d)
    a = _check_assignment(assignment, n, len(subspaces))
    if not q > 0:
        raise ParameterError(f"q must be > 0, got {q}")
    return _cost(points, a, subspaces, q)


def assign_step(points, subspaces) -> np.ndarray:
    """Map each row to its nearest subspace; ties go to the lowest index."""
    points = as_matrix(points)
    subspaces = _check_subspaces(subspaces, points.shape[1])
    return _assign(points, subspaces)


def _fit_cluster(rows: np.ndarray, dim: int, d: int) -> Subspace:
    if rows.shape[0] == 0:
        # Placeholder for a cluster with no rows: canonical axes, zero energy.
        return Subspace(np.eye(d)[:dim])
    return best_fit_subspace(rows, dim)


def _refit(points: np.ndarray, assignment: np.ndarray, dims: list[int]) -> list[Subspace]:
    """Per-cluster best-fit refit with farthest-point healing of empty clusters."""
    n, d = points.shape
    k = len(dims)
    subspaces: list[Subspace | None] = [None] * k
    empty = []
    for c in range(k):
        rows = points[assignment == c]
        if rows.shape[0] == 0:
            empty.append(c)
        else:
            subspaces[c] = best_fit_subspace(rows, dims[c])
    if empty:
        # Reseed each empty cluster from the rows farthest from their current
        # fit, excluding rows already consumed by a previous heal.
        dists = np.empty(n)
        for c in range(k):
            if subspaces[c] is None:
                continue
            mask = assignment == c
            dists[mask] = _dists_sq(points[mask], subspaces[c])
        order = np.argsort(-dists, kind="stable")
        cursor = 0
        for c in empty:
            take = order[cursor : cursor + dims[c]]
            cursor += dims[c]
            if take.size == 0:
                subspaces[c] = _fit_cluster(np.empty((0, d)), dims[c], d)
            else:
                subspaces[c] = best_fit_subspace(points[take], dims[c])
    return subspaces  # type: ignore[return-value]


def refit_step(points, assignment, k: int, j: int) -> list[Subspace]:
    """Best-fit j-dim subspace of each cluster's rows (the q=2 M-step).

    Never increases the q=2 cost for a fixed assignment. Empty clusters are
    reseeded from the rows currently farthest from their own fit; clusters
    with rank below j get deterministically padded bases with zero energy.
    """
    points = as_matrix(points)
    n, d = points.shape
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not 1 <= j <= d:
        raise ParameterError(f"j must lie in [1, {d}], got {j}")
    a = _check_assignment(assignment, n, k)
    return _refit(points, a, [j] * k)


def em_run(points, k: int, j: int, opts: EmOptions, restart_index: int = 0,
           initial_assignment=None) -> Clustering:
    """One seeded EM descent to a local minimum of the (k, j) clustering cost.

    Alternates assign_step and refit_step until the relative cost improvement
    drops below opts.rel_tol or opts.max_iters is reached. The returned
    assignment always comes from a final assign_step, so at convergence no row
    strictly improves by switching clusters.

    initial_assignment, when given, overrides opts.init (useful for warm
    starts and for reproducing planted partitions).
    """
    points = as_matrix(points)
    n, d = points.shape
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not 1 <= j <= d:
        raise ParameterError(f"j must lie in [1, {d}], got {j}")
    if n < k:
        raise ParameterError(f"need at least k={k} rows, got {n}")

    rng = np.random.default_rng(np.random.SeedSequence([opts.seed, restart_index]))
    if initial_assignment is not None:
        subspaces = _refit(points, _check_assignment(initial_assignment, n, k), [j] * k)
    elif opts.init == "random-partition":
        subspaces = _refit(points, rng.integers(0, k, size=n), [j] * k)
    else:  # sampled-rows
        subspaces = []
        for _ in range(k):
            idx = rng.choice(n, size=min(j, n), replace=False)
            subspaces.append(best_fit_subspace(points[idx], j))

    assignment = _assign(points, subspaces)
    cost = _cost(points, assignment, subspaces, opts.q)
    history = [cost]
    iterations = 0
    converged = False
    for _ in range(opts.max_iters):
        iterations += 1
        subspaces = _refit(points, assignment, [j] * k)
        assignment = _assign(points, subspaces)
        new_cost = _cost(points, assignment, subspaces, opts.q)
        history.append(new_cost)
        improvement = (cost - new_cost) / max(cost, _COST_EPS)
        cost = new_cost
        if improvement < opts.rel_tol:
            converged = True
            break
    return Clustering(
        k=k,
        assignment=assignment,
        subspaces=tuple(subspaces),
        cost=cost,
        q=opts.q,
        iterations=iterations,
        converged=converged,
        cost_history=tuple(history),
    )


def em_multi_restart(points, k: int, j: int, opts: EmOptions, threads: int = 1) -> Clustering:
    """Minimum-cost result of opts.restarts independent EM runs.

    Restart i uses the stream derived from (opts.seed, i), so the outcome is a
    pure function of (points, k, j, opts) no matter how many worker threads
    execute the restarts. Cost ties break toward the lowest restart index.
    """
    points = as_matrix(points)
    indices = range(opts.restarts)
    if threads > 1 and opts.restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: em_run(points, k, j, opts, i), indices))
    else:
        results = [em_run(points, k, j, opts, i) for i in indices]
    best = min(indices, key=lambda i: (results[i].cost, i))
    return results[best]


def _iter_partitions(n: int, k: int):
    """Restricted growth strings of length n with at most k labels.

    Yields each partition of rows into at most k clusters exactly once, with
    labels canonicalized by order of first appearance.
    """
    a = [0] * n
    maxes = [0] * n  # maxes[i] = max(a[:i+1])
    yield a
    while True:
        i = n - 1
        while i > 0 and a[i] >= min(maxes[i - 1] + 1, k - 1):
            i -= 1
        if i == 0:
            return
        a[i] += 1
        maxes[i] = max(maxes[i - 1], a[i])
        for z in range(i + 1, n):
            a[z] = 0
            maxes[z] = maxes[i]
        yield a


def brute_force(points, k: int, j: int) -> Clustering:
    """Globally optimal (k, j) clustering by exhaustive partition enumeration.

    Enumerates every assignment of n rows to k clusters up to relabeling and
    scores each cluster by the tail eigenvalue sum of its Gram matrix (the
    exact q=2 fit cost), memoized per row subset. Only feasible for k**n up
    to 10**7; larger instances raise SizeError.
    """
    points = as_matrix(points)
    n, d = points.shape
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if not 1 <= j <= d:
        raise ParameterError(f"j must lie in [1, {d}], got {j}")
    if k**n > _BRUTE_FORCE_LIMIT:
        raise SizeError(f"brute force infeasible: k^n = {k}^{n} exceeds {_BRUTE_FORCE_LIMIT}")

    cache: dict[bytes, float] = {}

    def block_cost(rows: np.ndarray) -> float:
        key = rows.tobytes()
        got = cache.get(key)
        if got is not None:
            return got
        block = points[rows]
        eig = np.linalg.eigvalsh(block.T @ block)  # ascending
        tail = float(np.sum(np.maximum(eig[: max(d - j, 0)], 0.0)))
        cache[key] = tail
        return tail

    best_cost = np.inf
    best_assignment: np.ndarray | None = None
    for labels in _iter_partitions(n, k):
        a = np.asarray(labels, dtype=np.int64)
        cost = 0.0
        for c in range(int(a.max()) + 1):
            cost += block_cost(np.flatnonzero(a == c))
            if cost >= best_cost:
                break
        if cost < best_cost:
            best_cost = cost
            best_assignment = a.copy()

    assert best_assignment is not None
    subspaces = _refit(points, best_assignment, [j] * k)
    cost = clustering_cost(points, best_assignment, subspaces, 2.0)
    return Clustering(
        k=k,
        assignment=best_assignment,
        subspaces=tuple(subspaces),
        cost=cost,
        q=2.0,
        iterations=0,
        converged=True,
        cost_history=(cost,),
    )


def allocate_dims(points, assignment, total_dims: int, k: int | None = None) -> list[int]:
    """Greedy split of a total dimension budget across clusters (q=2).

    Every cluster starts at one dimension; each remaining dimension goes to
    the cluster whose next unused squared singular value is largest (ties to
    the lowest cluster index), which is optimal because spectra are sorted.
    """
    points = as_matrix(points)
    n, d = points.shape
    a = np.asarray(assignment, dtype=np.int64)
    if a.ndim != 1 or a.shape[0] != n:
        raise ParameterError(f"assignment must be a length-{n} id list, got shape {a.shape}")
    if k is None:
        k = int(a.max()) + 1 if a.size else 1
    a = _check_assignment(a, n, k)
    if total_dims < k:
        raise ParameterError(f"total_dims {total_dims} cannot cover {k} clusters at one dim each")
    if total_dims > k * d:
        raise ParameterError(f"total_dims {total_dims} exceeds k*d = {k * d}")

    # Per-cluster squared singular values, descending, zero-padded to length d.
    spectra = np.zeros((k, d))
    for c in range(k):
        block = points[a == c]
        if block.shape[0] == 0:
            continue
        eig = np.maximum(np.linalg.eigvalsh(block.T @ block), 0.0)
        spectra[c] = eig[::-1]

    dims = [1] * k
    for _ in range(total_dims - k):
        gains = [spectra[c, dims[c]] if dims[c] < d else -np.inf for c in range(k)]
        c = int(np.argmax(gains))
        dims[c] += 1
    return dims
