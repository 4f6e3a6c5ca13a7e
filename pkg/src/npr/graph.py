"""Directed graphs, row-stochastic propagation operators and random generators.

The propagation operator ``W`` is the row-normalized adjacency matrix: row i
holds weight ``1/out_degree(i)`` on each out-neighbor of node i.  Nodes with
no out-edges get an all-zero row (they receive no propagated information),
so powers ``W^k`` stay row-substochastic.  Propagation of a covariate matrix
is computed iteratively as sparse-times-dense products; ``W^k`` itself is
never materialized.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse


@dataclass(frozen=True)
class DirectedGraph:
    """A simple directed graph on nodes ``0..n_nodes-1``.

    Self-loops and duplicate edges are rejected at construction time.
    """

    n_nodes: int
    edges: np.ndarray  # shape (m, 2) int64, rows are (source, target)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be positive")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", edges)
        if edges.size:
            if edges.min() < 0 or edges.max() >= self.n_nodes:
                raise ValueError("edge endpoint out of range [0, n_nodes)")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            codes = edges[:, 0] * self.n_nodes + edges[:, 1]
            if np.unique(codes).size != codes.size:
                raise ValueError("duplicate edges are not allowed")

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def density(self) -> float:
        possible = self.n_nodes * (self.n_nodes - 1)
        return self.n_edges / possible if possible else 0.0

    def summary(self) -> dict:
        """JSON-ready summary: node count, edge count and density."""
        return {
            "n_nodes": self.n_nodes,
            "n_edges": self.n_edges,
            "density": self.density,
        }


@dataclass(frozen=True)
class RowStochasticOperator:
    """Row-normalized adjacency operator stored in compressed sparse row form.

    Every row with at least one out-neighbor carries uniform weights summing
    to one; rows of isolated nodes are exactly zero.  Immutable after
    construction and safe to share across threads.
    """

    n_nodes: int
    csr: sparse.csr_matrix = field(repr=False)
    out_degrees: np.ndarray = field(repr=False)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Return ``W @ x`` for a vector or matrix with n_nodes rows."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n_nodes:
            raise ValueError(
                f"operand has {x.shape[0]} rows, operator expects {self.n_nodes}"
            )
        return self.csr @ x

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=1)).ravel()


def row_normalize(g: DirectedGraph) -> RowStochasticOperator:
    """Build the row-stochastic operator of a graph.

    Each existing edge (i, j) receives weight ``1/out_degree(i)``; nodes
    without out-edges keep an all-zero row.
    """
    n = g.n_nodes
    if g.n_edges:
        src = g.edges[:, 0]
        dst = g.edges[:, 1]
        out_deg = np.bincount(src, minlength=n)
        weights = 1.0 / out_deg[src]
        mat = sparse.csr_matrix((weights, (src, dst)), shape=(n, n))
    else:
        out_deg = np.zeros(n, dtype=np.int64)
        mat = sparse.csr_matrix((n, n), dtype=np.float64)
    mat.sum_duplicates()
    return RowStochasticOperator(n_nodes=n, csr=mat, out_degrees=out_deg)


def propagate(W: RowStochasticOperator, X: np.ndarray, K: int) -> list[np.ndarray]:
    """Return ``[X, WX, ..., W^K X]`` computed by repeated sparse products.

    ``result[0]`` is X itself (as float64); each further block is W applied
    to the previous one, costing O(|E| * d) per step.
    """
    if K < 0:
        raise ValueError("K must be non-negative")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != W.n_nodes:
        raise ValueError(
            f"X has {X.shape[0]} rows but operator has {W.n_nodes} nodes"
        )
    blocks = [X]
    for _ in range(K):
        blocks.append(W.csr @ blocks[-1])
    return blocks


def spectral_bound_check(W: RowStochasticOperator, k: int) -> float:
    """Largest eigenvalue of ``(W^k)' W^k``, i.e. the squared top singular
    value of ``W^k``.

    Intended for diagnostics and tests on small graphs; cost is O(k |E| n)
    plus one dense symmetric eigensolve.  For any row-normalized operator
    the returned value never exceeds n_nodes.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    Wk = np.eye(W.n_nodes)
    for _ in range(k):
        Wk = W.csr @ Wk
    gram = Wk.T @ Wk
    return float(np.linalg.eigvalsh(gram)[-1])


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _sample_ordered_pairs(rng: np.random.Generator, n: int, count: int) -> np.ndarray:
    """Sample ``count`` distinct ordered pairs (i, j), i != j, uniformly.

    Pairs are encoded as i*(n-1) + r with the r-th non-i column, so
    self-pairs never occur.  Rejection of duplicates is cheap because the
    target graphs are sparse.
    """
    total = n * (n - 1)
    if count > total:
        raise ValueError("cannot sample more pairs than exist")
    codes = np.empty(0, dtype=np.int64)
    while codes.size < count:
        need = count - codes.size
        batch = rng.integers(0, total, size=int(need * 1.1) + 16)
        codes = np.unique(np.concatenate([codes, batch]))
    # np.unique sorts; keep a uniformly random subset of exactly `count`
    codes = codes[rng.permutation(codes.size)[:count]]
    src = codes // (n - 1)
    rem = codes % (n - 1)
    dst = np.where(rem < src, rem, rem + 1)
    return np.column_stack([src, dst])


def gen_erdos_renyi(n: int, seed) -> DirectedGraph:
    """Erdős–Rényi directed graph with edge probability ``n**-0.8``.

    Every ordered pair (i, j), i != j, is included independently.  At
    n = 1000 this gives an expected density of about 0.4%.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = _as_rng(seed)
    p = float(n) ** -0.8
    total = n * (n - 1)
    m = rng.binomial(total, p)
    edges = _sample_ordered_pairs(rng, n, int(m))
    return DirectedGraph(n_nodes=n, edges=edges)


def gen_sbm(n: int, seed) -> tuple[DirectedGraph, np.ndarray]:
    """Three-block stochastic block model.

    Nodes join one of three blocks uniformly at random; within-block edge
    probability is ``n**-0.75`` and between-block probability ``n**-1``.
    Returns the graph together with the 0-based block labels so that
    downstream generators can reuse the community assignment.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = _as_rng(seed)
    labels = rng.integers(0, 3, size=n)
    p_within = float(n) ** -0.75
    p_between = 1.0 / n
    members = [np.flatnonzero(labels == b) for b in range(3)]
    chunks = []
    for a in range(3):
        for b in range(3):
            na, nb = members[a].size, members[b].size
            total = na * nb - (na if a == b else 0)
            if total <= 0:
                continue
            prob = p_within if a == b else p_between
            m = int(rng.binomial(total, prob))
            if m == 0:
                continue
            if a == b:
                pairs = _sample_ordered_pairs(rng, na, m)
                chunks.append(
                    np.column_stack([members[a][pairs[:, 0]], members[a][pairs[:, 1]]])
                )
            else:
                codes = np.empty(0, dtype=np.int64)
                while codes.size < m:
                    batch = rng.integers(0, na * nb, size=int((m - codes.size) * 1.1) + 16)
                    codes = np.unique(np.concatenate([codes, batch]))
                codes = codes[rng.permutation(codes.size)[:m]]
                chunks.append(
                    np.column_stack([members[a][codes // nb], members[b][codes % nb]])
                )
    edges = np.concatenate(chunks) if chunks else np.empty((0, 2), dtype=np.int64)
    return DirectedGraph(n_nodes=n, edges=edges), labels


def powerlaw_degree_pmf(n: int, exponent: float = 2.5) -> np.ndarray:
    """Normalized pmf proportional to ``k**-exponent`` on 1..n-1."""
    k = np.arange(1, n, dtype=np.float64)
    pmf = k ** -exponent
    return pmf / pmf.sum()


def sample_powerlaw_degrees(n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw in-degrees by inverse cdf from the truncated power-law pmf."""
    pmf = powerlaw_degree_pmf(n)
    cdf = np.cumsum(pmf)
    cdf[-1] = 1.0
    degrees = 1 + np.searchsorted(cdf, rng.random(size), side="right")
    return np.minimum(degrees, n - 1)


def gen_powerlaw(n: int, seed) -> DirectedGraph:
    """Heavy-tailed graph: in-degrees follow a discrete power law.

    Each node's in-degree is drawn from the pmf proportional to ``k**-2.5``
    truncated to [1, n-1]; its followers (edge sources) are then chosen
    uniformly without replacement among the other nodes.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rng = _as_rng(seed)
    in_degrees = sample_powerlaw_degrees(n, n, rng)
    chunks = []
    for i in range(n):
        m = int(in_degrees[i])
        followers = rng.choice(n - 1, size=m, replace=False)
        followers = np.where(followers < i, followers, followers + 1)
        chunks.append(np.column_stack([followers, np.full(m, i, dtype=np.int64)]))
    return DirectedGraph(n_nodes=n, edges=np.concatenate(chunks))


def read_edge_list(path, n_nodes: int | None = None) -> DirectedGraph:
    """Read a directed graph from a CSV file with header ``src,dst``.

    One 0-based integer edge per line.  When ``n_nodes`` is omitted it is
    inferred as one plus the largest node id.
    """
    edges = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["src", "dst"]:
            raise ValueError(f"{path}: expected header 'src,dst'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            try:
                edges.append((int(row[0]), int(row[1])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-integer node id") from exc
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if n_nodes is None:
        n_nodes = int(arr.max()) + 1 if arr.size else 1
    return DirectedGraph(n_nodes=n_nodes, edges=arr)


def write_edge_list(path, g: DirectedGraph) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src", "dst"])
        writer.writerows(g.edges.tolist())
