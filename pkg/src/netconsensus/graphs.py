"""Random topologies, role assignment, node placement and structural statistics.

Graphs are small (tens of nodes), so everything here is plain Python over
sorted adjacency lists; randomness always comes from an explicitly passed
``numpy.random.Generator``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

DEFAULT_MAX_DEGREE = 15
DEFAULT_ATTEMPTS = 10_000
UNREACHABLE = -1


class GenerationInfeasible(RuntimeError):
    """No sample satisfied the degree cap / connectivity within the attempt budget."""


class Role(enum.IntEnum):
    REGULAR = 0
    VISIBLE = 1
    ADVERSARIAL = 2

    @property
    def code(self) -> str:
        return "RVA"[self]

    @classmethod
    def from_code(cls, ch: str) -> "Role":
        try:
            return cls("RVA".index(ch))
        except ValueError:
            raise ValueError(f"unknown role code {ch!r}") from None


class Placement(str, enum.Enum):
    RANDOM = "random"
    GREEDY = "greedy"


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``."""

    n: int
    edges: tuple[tuple[int, int], ...]
    adjacency: tuple[tuple[int, ...], ...] = field(repr=False, compare=False)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        if n < 1:
            raise ValueError("graph needs at least one node")
        canon = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
            canon.add((min(u, v), max(u, v)))
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for u, v in canon:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return cls(n, tuple(sorted(canon)), tuple(tuple(sorted(a)) for a in nbrs))

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)

    def adjacency_matrix(self) -> np.ndarray:
        mat = np.zeros((self.n, self.n), dtype=bool)
        if self.edges:
            e = np.asarray(self.edges)
            mat[e[:, 0], e[:, 1]] = True
            mat[e[:, 1], e[:, 0]] = True
        return mat

    def is_connected(self) -> bool:
        return len(_component(self.adjacency, 0, None)) == self.n

    def to_edge_list(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges)

    @classmethod
    def from_edge_list(cls, n: int, text: str) -> "Graph":
        edges = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'u v', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
        return cls.from_edges(n, edges)


@dataclass(frozen=True)
class TopologySpec:
    kind: str  # "ER" | "BA" | "SmallWorld"
    n: int
    p: float = 0.0
    m: int = 1
    gamma: float = 1.0
    k: int = 2
    beta: float = 0.0
    max_degree: int = DEFAULT_MAX_DEGREE
    require_connected: bool = True

    def __post_init__(self):
        if self.kind not in ("ER", "BA", "SmallWorld"):
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "ER" and not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.kind == "BA" and not 1 <= self.m < self.n:
            raise ValueError(f"BA needs 1 <= m < n (m={self.m}, n={self.n})")
        if self.kind == "SmallWorld":
            if self.k % 2 or not 0 <= self.k < self.n:
                raise ValueError("small-world ring degree k must be even and < n")
            if not 0.0 <= self.beta <= 1.0:
                raise ValueError("beta must lie in [0, 1]")

    def with_n(self, n: int) -> "TopologySpec":
        return replace(self, n=n)


def er_probability(avg_degree: float, n: int = 20) -> float:
    """Edge probability giving ``avg_degree`` in expectation on ``n`` nodes."""
    return avg_degree / (n - 1)


# ---------------------------------------------------------------------------
# generators


def _acceptable(g: Graph, spec: TopologySpec) -> bool:
    if g.max_degree() > spec.max_degree:
        return False
    return not spec.require_connected or g.is_connected()


def _resample(sample, spec: TopologySpec, attempts: int) -> Graph:
    for _ in range(attempts):
        g = sample()
        if g is not None and _acceptable(g, spec):
            return g
    raise GenerationInfeasible(
        f"generation infeasible: no acceptable {spec.kind} graph in {attempts} attempts ({spec})"
    )


def gen_er(spec: TopologySpec, rng: np.random.Generator, attempts: int = DEFAULT_ATTEMPTS) -> Graph:
    if spec.kind != "ER":
        raise ValueError("gen_er needs an ER spec")
    n = spec.n
    iu, ju = np.triu_indices(n, k=1)

    def sample():
        keep = rng.random(iu.size) < spec.p
        return Graph.from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()))

    return _resample(sample, spec, attempts)


def gen_ba(spec: TopologySpec, rng: np.random.Generator, attempts: int = DEFAULT_ATTEMPTS) -> Graph:
    """Preferential attachment with target weight ``degree ** gamma``.

    Growth starts from a clique on the first ``m`` nodes. Nodes already at
    ``max_degree`` are dropped from the candidate pool; a newcomer that
    cannot find ``m`` eligible targets forces a fresh sample.
    """
    if spec.kind != "BA":
        raise ValueError("gen_ba needs a BA spec")
    n, m, cap = spec.n, spec.m, spec.max_degree

    def sample():
        deg = np.zeros(n, dtype=np.int64)
        edges = [(i, j) for i in range(m) for j in range(i + 1, m)]
        deg[:m] = m - 1
        for new in range(m, n):
            pool = np.flatnonzero(deg[:new] < cap)
            if pool.size < m:
                return None
            w = deg[pool].astype(float) ** spec.gamma
            total = w.sum()
            probs = np.full(pool.size, 1.0 / pool.size) if total <= 0 else w / total
            if np.count_nonzero(probs) < m:
                # zero-degree nodes get weight 0 for gamma > 0; fall back to uniform
                probs = np.full(pool.size, 1.0 / pool.size)
            targets = rng.choice(pool, size=m, replace=False, p=probs)
            for t in targets.tolist():
                edges.append((t, new))
                deg[t] += 1
            deg[new] = m
        return Graph.from_edges(n, edges)

    return _resample(sample, spec, attempts)


def gen_smallworld(
    spec: TopologySpec, rng: np.random.Generator, attempts: int = DEFAULT_ATTEMPTS
) -> Graph:
    """Ring lattice of even degree ``k`` with Watts-Strogatz rewiring.

    Each lattice edge ``(u, u+j)`` has its far end moved with probability
    ``beta`` to a uniformly chosen node that is neither ``u`` nor already a
    neighbour of ``u``, so the edge count never changes.
    """
    if spec.kind != "SmallWorld":
        raise ValueError("gen_smallworld needs a SmallWorld spec")
    n, half = spec.n, spec.k // 2

    def sample():
        nbrs = [set() for _ in range(n)]
        for u in range(n):
            for j in range(1, half + 1):
                v = (u + j) % n
                nbrs[u].add(v)
                nbrs[v].add(u)
        for j in range(1, half + 1):
            for u in range(n):
                v = (u + j) % n
                if v not in nbrs[u] or rng.random() >= spec.beta:
                    continue
                choices = [w for w in range(n) if w != u and w not in nbrs[u]]
                if not choices:
                    continue
                w = choices[int(rng.integers(len(choices)))]
                nbrs[u].discard(v)
                nbrs[v].discard(u)
                nbrs[u].add(w)
                nbrs[w].add(u)
        return Graph.from_edges(n, ((u, v) for u in range(n) for v in nbrs[u] if u < v))

    return _resample(sample, spec, attempts)


def generate(spec: TopologySpec, rng: np.random.Generator, attempts: int = DEFAULT_ATTEMPTS) -> Graph:
    gen = {"ER": gen_er, "BA": gen_ba, "SmallWorld": gen_smallworld}[spec.kind]
    return gen(spec, rng, attempts)


# ---------------------------------------------------------------------------
# roles and placement


def _check_counts(n: int, v: int, a: int) -> None:
    if v < 0 or a < 0:
        raise ValueError("role counts must be non-negative")
    if v + a > n:
        raise ValueError(f"cannot place {v} visible + {a} adversarial nodes on {n} nodes")


def roles_from_sets(n: int, visible: Iterable[int], adversarial: Iterable[int]) -> np.ndarray:
    roles = np.full(n, Role.REGULAR, dtype=np.int8)
    roles[list(visible)] = Role.VISIBLE
    adv = list(adversarial)
    if np.any(roles[adv] != Role.REGULAR):
        raise ValueError("visible and adversarial sets overlap")
    roles[adv] = Role.ADVERSARIAL
    return roles


def assign_roles_random(g: Graph, v: int, a: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random disjoint visible / adversarial sets; returns an int8 role vector."""
    _check_counts(g.n, v, a)
    order = rng.permutation(g.n)
    return roles_from_sets(g.n, order[:v].tolist(), order[v : v + a].tolist())


def coverage_gains(g: Graph, covered: set[int], eligible: Iterable[int]) -> dict[int, int]:
    return {u: sum(1 for w in g.adjacency[u] if w not in covered) for u in eligible}


def place_greedy(g: Graph, count: int, excluded: Iterable[int] = ()) -> list[int]:
    """Greedy max-coverage of open neighbourhoods; ties go to the lowest id."""
    excluded = set(excluded)
    if count > g.n - len(excluded):
        raise ValueError("not enough eligible nodes")
    chosen: list[int] = []
    covered: set[int] = set()
    for _ in range(count):
        eligible = [u for u in range(g.n) if u not in excluded and u not in chosen]
        gains = coverage_gains(g, covered, eligible)
        best = max(eligible, key=lambda u: (gains[u], -u))
        chosen.append(best)
        covered.update(g.adjacency[best])
    return chosen


def stackelberg_place(
    g: Graph,
    v: int,
    a: int,
    visible_strategy: Placement | str,
    adversary_strategy: Placement | str,
    rng: np.random.Generator,
) -> np.ndarray:
    """Place visible nodes first, then adversaries among the remaining nodes."""
    _check_counts(g.n, v, a)
    visible_strategy = Placement(visible_strategy)
    adversary_strategy = Placement(adversary_strategy)
    if visible_strategy is Placement.RANDOM and adversary_strategy is Placement.RANDOM:
        return assign_roles_random(g, v, a, rng)
    if visible_strategy is Placement.GREEDY:
        visible = place_greedy(g, v)
    else:
        visible = rng.permutation(g.n)[:v].tolist()
    if adversary_strategy is Placement.GREEDY:
        adversarial = place_greedy(g, a, excluded=visible)
    else:
        rest = np.array([u for u in range(g.n) if u not in set(visible)])
        adversarial = rng.permutation(rest)[:a].tolist()
    return roles_from_sets(g.n, visible, adversarial)


# ---------------------------------------------------------------------------
# structure


def _component(adjacency, start: int, blocked: set[int] | None) -> set[int]:
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in adjacency[u]:
            if w not in seen and (blocked is None or w not in blocked):
                seen.add(w)
                queue.append(w)
    return seen


def breaks_when_removed(g: Graph, roles) -> bool:
    """True iff the subgraph induced on non-adversarial nodes is disconnected."""
    roles = np.asarray(roles)
    adversarial = set(np.flatnonzero(roles == Role.ADVERSARIAL).tolist())
    team = [u for u in range(g.n) if u not in adversarial]
    if not team:
        raise ValueError("no non-adversarial nodes")
    return len(_component(g.adjacency, team[0], adversarial)) != len(team)


def pairwise_distances(g: Graph) -> np.ndarray:
    """All-pairs hop counts by BFS; unreachable pairs hold ``UNREACHABLE`` (-1)."""
    dist = np.full((g.n, g.n), UNREACHABLE, dtype=np.int64)
    for s in range(g.n):
        dist[s, s] = 0
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for w in g.adjacency[u]:
                if dist[s, w] == UNREACHABLE:
                    dist[s, w] = dist[s, u] + 1
                    queue.append(w)
    return dist


def avg_clustering(g: Graph) -> float:
    total = 0.0
    for u in range(g.n):
        nb = g.adjacency[u]
        d = len(nb)
        if d < 2:
            continue
        links = sum(1 for i, x in enumerate(nb) for y in nb[i + 1 :] if y in g.adjacency[x])
        total += links / (d * (d - 1) / 2)
    return total / g.n


def average_degree(g: Graph) -> float:
    return 2 * len(g.edges) / g.n
