"""Communication topologies: Barabasi-Albert, Erdos-Renyi and a
distance-decayed (geographic) preferential-attachment variant."""

import json
from dataclasses import dataclass, field

import numpy as np

from . import seeding


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple  # sorted (u, v) pairs with u < v
    coords: np.ndarray | None = field(default=None, compare=False)
    _adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        adj = [[] for _ in range(self.n)]
        seen = set()
        for u, v in self.edges:
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    @classmethod
    def from_edges(cls, n, edges, coords=None):
        norm = sorted({(min(u, v), max(u, v)) for u, v in edges})
        if len(norm) != len(list(edges)):
            raise ValueError("duplicate edges")
        return cls(n=n, edges=tuple(norm), coords=coords)

    def _check(self, i):
        if not 0 <= i < self.n:
            raise IndexError(f"node {i} out of range for graph with {self.n} nodes")

    def open_neighborhood(self, i):
        self._check(i)
        return list(self._adj[i])

    def closed_neighborhood(self, i):
        self._check(i)
        return sorted(self._adj[i] + (i,))

    def has_edge(self, u, v):
        return v in self._adj[u]

    @property
    def degrees(self):
        return np.array([len(a) for a in self._adj], dtype=np.int64)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_directed(self):
        return 2 * len(self.edges)

    def to_edgelist(self, path):
        with open(path, "w", newline="\n") as fh:
            for u, v in self.edges:
                fh.write(f"{u} {v}\n")

    def to_dict(self):
        return {
            "n": self.n,
            "edges": [list(e) for e in self.edges],
            "degrees": self.degrees.tolist(),
            "coords": None if self.coords is None else np.asarray(self.coords).tolist(),
        }

    def to_json(self, path):
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_dict(), fh, indent=1)


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "ba"  # ba | er | geo_ba
    n: int = 16
    m: int = 2
    p: float = 0.1
    decay_len: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("ba", "er", "geo_ba"):
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.n < 3:
            raise ValueError("topology needs n >= 3")
        if self.m < 1:
            raise ValueError("topology needs m >= 1")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("edge probability must lie in [0, 1]")


def _attach(n, m, rng, weight_fn):
    if n <= m + 1:
        raise ValueError(f"preferential attachment needs n > m + 1 (got n={n}, m={m})")
    edges = [(u, v) for u in range(m + 1) for v in range(u + 1, m + 1)]
    deg = np.zeros(n)
    deg[: m + 1] = m
    for new in range(m + 1, n):
        existing = np.arange(new)
        w = weight_fn(new, existing) * deg[:new]
        targets = rng.choice(existing, size=m, replace=False, p=w / w.sum())
        for t in sorted(int(t) for t in targets):
            edges.append((t, new))
            deg[t] += 1
        deg[new] = m
    return edges


def gen_ba(n, m, seed):
    rng = seeding.stream(seed, seeding.TOPOLOGY, 0)
    edges = _attach(n, m, rng, lambda new, existing: np.ones(len(existing)))
    return Graph.from_edges(n, edges)


def gen_er(n, p, seed):
    if not 0.0 <= p <= 1.0:
        raise ValueError("edge probability must lie in [0, 1]")
    rng = seeding.stream(seed, seeding.TOPOLOGY, 1)
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(len(iu)) < p
    return Graph.from_edges(n, list(zip(iu[keep].tolist(), ju[keep].tolist())))


def gen_geo_ba(n, m, decay_len, seed):
    if decay_len <= 0:
        raise ValueError("decay_len must be positive")
    rng = seeding.stream(seed, seeding.TOPOLOGY, 2)
    coords = rng.random((n, 2))

    def weight(new, existing):
        dist = np.linalg.norm(coords[existing] - coords[new], axis=1)
        # floor keeps every candidate reachable when decay_len is tiny
        return np.maximum(np.exp(-dist / decay_len), 1e-300)

    edges = _attach(n, m, rng, weight)
    return Graph.from_edges(n, edges, coords=coords)


def make_graph(spec: TopologySpec):
    if spec.kind == "ba":
        return gen_ba(spec.n, spec.m, spec.seed)
    if spec.kind == "er":
        return gen_er(spec.n, spec.p, spec.seed)
    return gen_geo_ba(spec.n, spec.m, spec.decay_len, spec.seed)


def hub_nodes(graph, fraction=0.1):
    """Top-``fraction`` nodes by degree (at least one), ties to lower index."""
    k = max(1, int(np.ceil(fraction * graph.n)))
    order = sorted(range(graph.n), key=lambda i: (-graph.degrees[i], i))
    return sorted(order[:k])
