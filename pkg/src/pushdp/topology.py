"""Time-varying directed communication graphs and their mixing matrices.

Edges are ordered pairs (receiver, sender): (i, j) means node j transmits to
node i at that iteration.  Every node is always its own neighbor, so (i, i)
is present for all i.  Mixing matrices are column-stochastic: sender j splits
unit mass uniformly over its out-neighbors (self included), which is the
standard weight rule each node can compute from local information alone.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, OutOfRegimeError

COLUMN_SUM_TOL = 1e-12


@dataclass(frozen=True)
class DirectedEdgeSet:
    """Directed edge set for one iteration.

    edges holds (receiver, sender) pairs; self-loops are mandatory and are
    added on construction if missing.
    """

    n: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"node count must be >= 1, got {self.n}")
        full = set(self.edges)
        for (i, j) in full:
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range for n={self.n}")
        full.update((i, i) for i in range(self.n))
        object.__setattr__(self, "edges", frozenset(full))

    def out_neighbors(self, j: int) -> list:
        """Nodes that receive from j (self included), sorted."""
        return sorted(i for (i, s) in self.edges if s == j)

    def in_neighbors(self, i: int) -> list:
        """Nodes that transmit to i (self included), sorted."""
        return sorted(j for (r, j) in self.edges if r == i)

    def max_out_degree(self) -> int:
        return max(len(self.out_neighbors(j)) for j in range(self.n))


def build_mixing_matrix(edges: DirectedEdgeSet) -> np.ndarray:
    """Column-stochastic mixing matrix for one edge set.

    Column j carries 1/outdeg(j) at each out-neighbor of j and 0 elsewhere.
    """
    n = edges.n
    P = np.zeros((n, n))
    for j in range(n):
        outs = edges.out_neighbors(j)
        if not outs:  # unreachable: self-loop invariant guarantees outdeg >= 1
            raise ValueError(f"node {j} has zero out-degree")
        P[outs, j] = 1.0 / len(outs)
    sums = P.sum(axis=0)
    assert np.all(np.abs(sums - 1.0) <= COLUMN_SUM_TOL)
    return P


@dataclass(frozen=True)
class TopologySchedule:
    """Deterministic per-iteration edge-set generator.

    kind is one of:
      static-ring           each node receives from its k predecessors
      exponential-periodic  out-offsets {j * 2^(t mod log2 n)}, n a power of 2
      explicit-list         a fixed list of edge sets, cycled over t
    """

    kind: str
    n: int
    k: int = 1
    edge_sets: tuple = ()

    def __post_init__(self):
        if self.kind not in ("static-ring", "exponential-periodic", "explicit-list"):
            raise ConfigurationError(f"unknown topology kind {self.kind!r}")
        if self.kind == "static-ring" and not (1 <= self.k < self.n):
            raise ConfigurationError(f"static-ring needs 1 <= k < n, got k={self.k}, n={self.n}")
        if self.kind == "exponential-periodic":
            if self.n < 2 or (self.n & (self.n - 1)) != 0:
                raise ConfigurationError(
                    f"exponential-periodic topology needs a power-of-2 node count, got n={self.n}"
                )
        if self.kind == "explicit-list" and not self.edge_sets:
            raise ConfigurationError("explicit-list topology needs at least one edge set")

    def period(self) -> int:
        """Length after which the schedule repeats."""
        if self.kind == "static-ring":
            return 1
        if self.kind == "exponential-periodic":
            return int(np.log2(self.n))
        return len(self.edge_sets)


def topology_at(schedule: TopologySchedule, t: int) -> DirectedEdgeSet:
    """Edge set at iteration t; pure in (schedule, t)."""
    if t < 0:
        raise ValueError(f"iteration index must be >= 0, got {t}")
    n = schedule.n
    if schedule.kind == "static-ring":
        edges = {(i, (i - m) % n) for i in range(n) for m in range(1, schedule.k + 1)}
        return DirectedEdgeSet(n, frozenset(edges))
    if schedule.kind == "exponential-periodic":
        step = 2 ** (t % int(np.log2(n)))
        edges = {((i + j * step) % n, i) for i in range(n) for j in range(n // 2)}
        return DirectedEdgeSet(n, frozenset(edges))
    return schedule.edge_sets[t % len(schedule.edge_sets)]


def load_edge_list(path, n: int) -> TopologySchedule:
    """Read an explicit-list schedule from a plain-text file.

    One line per iteration; each whitespace-separated token "i<j" is an edge
    where j transmits to i.  Self-loops are implicit.  Blank lines and lines
    starting with '#' are skipped.
    """
    sets = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            edges = set()
            for token in line.split():
                try:
                    recv, sender = token.split("<")
                    edges.add((int(recv), int(sender)))
                except ValueError as exc:
                    raise ConfigurationError(
                        f"{path}:{lineno}: bad edge token {token!r}, expected i<j"
                    ) from exc
            sets.append(DirectedEdgeSet(n, frozenset(edges)))
    if not sets:
        raise ConfigurationError(f"{path}: no edge sets found")
    return TopologySchedule(kind="explicit-list", n=n, edge_sets=tuple(sets))


@dataclass(frozen=True)
class ConnectivityReport:
    """Result of the windowed joint-connectivity check."""

    window: int
    diameter_bound: int
    satisfied: bool
    witness: Optional[int] = None  # first violating window index


def _bfs_ecc(adj: Sequence[Sequence[int]], source: int) -> list:
    """Hop distances from source along sender->receiver arcs; -1 if unreachable."""
    dist = [-1] * len(adj)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def union_window(schedule: TopologySchedule, start: int, length: int) -> DirectedEdgeSet:
    """Union of the edge sets over iterations [start, start + length)."""
    edges = set()
    for t in range(start, start + length):
        edges |= topology_at(schedule, t).edges
    return DirectedEdgeSet(schedule.n, frozenset(edges))


def verify_joint_connectivity(
    schedule: TopologySchedule, J: int, kappa: int, horizon: int
) -> ConnectivityReport:
    """Check that every J-length window unions to a strongly connected graph
    of diameter at most kappa, over all complete windows within the horizon.
    """
    if J < 1 or kappa < 1:
        raise ValueError(f"need J >= 1 and kappa >= 1, got J={J}, kappa={kappa}")
    if horizon < J:
        raise ValueError(f"horizon {horizon} shorter than window J={J}")
    n = schedule.n
    for l in range(horizon // J):
        union = union_window(schedule, l * J, J)
        # sender -> receiver adjacency, self-loops dropped (they add no hops)
        adj = [[] for _ in range(n)]
        for (i, j) in union.edges:
            if i != j:
                adj[j].append(i)
        for src in range(n):
            dist = _bfs_ecc(adj, src)
            if min(dist) < 0 or max(dist) > kappa:
                return ConnectivityReport(J, kappa, satisfied=False, witness=l)
    return ConnectivityReport(J, kappa, satisfied=True)


def window_diameter(schedule: TopologySchedule, J: int) -> Optional[int]:
    """Largest diameter of any J-window union over one full schedule cycle,
    or None if some window union is not strongly connected."""
    period = schedule.period()
    cycle = period * J // np.gcd(period, J)
    worst = 0
    for l in range(cycle // J):
        union = union_window(schedule, l * J, J)
        adj = [[] for _ in range(schedule.n)]
        for (i, j) in union.edges:
            if i != j:
                adj[j].append(i)
        for src in range(schedule.n):
            dist = _bfs_ecc(adj, src)
            if min(dist) < 0:
                return None
            worst = max(worst, max(dist))
    return worst


@dataclass(frozen=True)
class PropagationParams:
    """Geometric-decay constants for node-to-average deviation.

    lam = 1 - n * U^(-kappa*J), q = lam^(1/(kappa*J + 1)); c_bound is the
    strict upper bound on the deviation constant, returned as the value
    itself, so everything downstream is an upper-bound evaluator.
    """

    lam: float
    q: float
    c_bound: float
    U: int


def propagation_params(n: int, U: int, kappa: int, J: int, d: int) -> PropagationParams:
    """Evaluate (lambda, q, C) from the network size, the maximum out-degree
    U (self-loop included), the connectivity window J, the window diameter
    kappa, and the model dimension d."""
    if min(n, U, kappa, J, d) < 1:
        raise ValueError("n, U, kappa, J, d must all be >= 1")
    kb = kappa * J
    lam = 1.0 - n * float(U) ** (-kb)
    if lam <= 0.0:
        raise OutOfRegimeError(
            f"lambda = 1 - n*U^(-kappa*J) = {lam:.6g} <= 0: "
            f"requires U^(kappa*J) > n, got U^(kappa*J) = {float(U)**kb:.6g}, n = {n}"
        )
    q = lam ** (1.0 / (kb + 1))
    c_bound = 2.0 * np.sqrt(d) * float(U) ** kb / lam ** ((kb + 2) / (kb + 1))
    return PropagationParams(lam=lam, q=q, c_bound=c_bound, U=U)


def max_out_degree(schedule: TopologySchedule, horizon: Optional[int] = None) -> int:
    """Maximum out-degree (self included) over one period or a horizon."""
    span = schedule.period() if horizon is None else horizon
    return max(topology_at(schedule, t).max_out_degree() for t in range(span))
