"""Random undirected topologies and Metropolis-Hastings consensus weights."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GenerationFailure, InvalidDegreeError, NonConvergenceError

DEFAULT_RETRIES = 100


def _rng(seed: int, attempt: int) -> np.random.Generator:
    # one independent stream per (seed, attempt); masks negatives into uint64
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, attempt])


@dataclass(frozen=True)
class Topology:
    n: int
    edges: frozenset[tuple[int, int]]
    degrees: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            canon.add((min(i, j), max(i, j)))
        deg = [0] * self.n
        for i, j in canon:
            deg[i] += 1
            deg[j] += 1
        object.__setattr__(self, "edges", frozenset(canon))
        object.__setattr__(self, "degrees", tuple(deg))

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in sorted(self.edges):
            nbrs[i].append(j)
            nbrs[j].append(i)
        return nbrs

    def is_connected(self) -> bool:
        nbrs = self.neighbors()
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.n

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def save(self, path) -> None:
        lines = [f"{self.n} {self.m}"]
        lines += [f"{i} {j}" for i, j in sorted(self.edges)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "Topology":
        rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
        n, m = int(rows[0][0]), int(rows[0][1])
        edges = [(int(a), int(b)) for a, b in rows[1:]]
        if len(edges) != m:
            raise ValueError(f"header declares {m} edges, found {len(edges)}")
        return cls(n, frozenset(edges))


@dataclass(frozen=True, eq=False)
class ConsensusMatrix:
    w: np.ndarray
    sigma: float
    eta: float

    def __post_init__(self):
        self.w.setflags(write=False)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def save_csv(self, path) -> None:
        rows = (",".join(f"{v:.17g}" for v in row) for row in self.w)
        Path(path).write_text("\n".join(rows) + "\n")


def _pairing_attempt(n: int, d: int, rng: np.random.Generator) -> set | None:
    """One pass of stub pairing; returns None when it gets stuck."""
    edges: set[tuple[int, int]] = set()
    stubs = np.repeat(np.arange(n), d)
    while stubs.size:
        leftover: dict[int, int] = defaultdict(int)
        rng.shuffle(stubs)
        for u, v in zip(stubs[0::2].tolist(), stubs[1::2].tolist()):
            e = (min(u, v), max(u, v))
            if u == v or e in edges:
                leftover[u] += 1
                leftover[v] += 1
            else:
                edges.add(e)
        if not leftover:
            break
        # stuck when no pair of leftover nodes can still be joined
        nodes = list(leftover)
        if not any(
            (min(a, b), max(a, b)) not in edges
            for k, a in enumerate(nodes) for b in nodes[k + 1:]
        ):
            return None
        stubs = np.repeat(np.array(nodes), [leftover[u] for u in nodes])
    return edges


def gen_regular(n: int, d: int, seed: int, retries: int = DEFAULT_RETRIES) -> Topology:
    """Connected ``d``-regular graph on ``n`` nodes.

    Dense degrees are built as the complement of a sparse regular graph,
    since stub pairing gets stuck often once ``d`` exceeds ``(n-1)/2``.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if d < 1 or d >= n:
        raise InvalidDegreeError(f"degree {d} must satisfy 1 <= d < n={n}")
    if (n * d) % 2:
        raise InvalidDegreeError(f"n*d = {n * d} is odd")
    k = n - 1 - d
    complement = k < d
    base = k if complement else d
    for attempt in range(retries):
        rng = _rng(seed, attempt)
        edges = _pairing_attempt(n, base, rng) if base > 0 else set()
        if edges is None:
            continue
        if complement:
            edges = {(i, j) for i in range(n) for j in range(i + 1, n)} - edges
        topo = Topology(n, frozenset(edges))
        if topo.is_connected():
            return topo
    raise GenerationFailure(f"no connected {d}-regular graph on {n} nodes after {retries} attempts")


def gen_erdos_renyi(n: int, p: float, seed: int, retries: int = DEFAULT_RETRIES) -> Topology:
    if n < 2:
        raise ValueError("need at least 2 nodes")
    if not 0 < p <= 1:
        raise ValueError(f"edge probability {p} outside (0, 1]")
    iu, ju = np.triu_indices(n, k=1)
    for attempt in range(retries):
        keep = _rng(seed, attempt).random(iu.size) < p
        topo = Topology(n, frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))
        if topo.is_connected():
            return topo
    raise GenerationFailure(
        f"G({n}, {p}) not connected in {retries} attempts; p is likely too small"
    )


def spectral_quantities(w: np.ndarray, tol: float = 1e-10) -> tuple[float, float]:
    """Return ``(sigma, eta)``: spectral norms of ``W - 11^T/n`` and ``W - I``."""
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    if w.shape != (n, n):
        raise ValueError("weight matrix must be square")
    a = w - np.full((n, n), 1.0 / n)
    b = w - np.eye(n)
    if np.array_equal(w, w.T):
        sigma = np.max(np.abs(np.linalg.eigvalsh(a)))
        eta = np.max(np.abs(np.linalg.eigvalsh(b)))
    else:
        sigma = _spectral_norm_power(a, tol)
        eta = _spectral_norm_power(b, tol)
    return float(sigma), float(eta)


def _spectral_norm_power(a: np.ndarray, tol: float, max_iter: int = 100_000) -> float:
    g = a.T @ a
    # fixed random start: the all-ones vector is in the kernel of W - J
    v = np.random.default_rng(0).standard_normal(g.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        u = g @ v
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return 0.0
        v = u / nu
        if abs(nu - lam) <= tol * nu:
            return float(np.sqrt(nu))
        lam = nu
    raise NonConvergenceError("power iteration for the spectral norm did not converge")


def metropolis_weights(topo: Topology) -> ConsensusMatrix:
    n = topo.n
    w = np.zeros((n, n))
    deg = topo.degrees
    for i, j in topo.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    w[np.diag_indices(n)] = 1.0 - w.sum(axis=1)
    sigma, eta = spectral_quantities(w)
    return ConsensusMatrix(w, sigma, eta)
