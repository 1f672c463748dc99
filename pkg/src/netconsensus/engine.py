"""Discrete-time consensus game loop.

Every game owns a ``numpy`` PCG64 stream seeded from its 64-bit seed.  The
stream is consumed in a fixed pattern so that a trace depends on nothing but
the seed and the configuration:

* baseline mode only: ``n`` uniforms for the initial colours (``u < 0.5`` is red);
* then ``ticks x n x 2`` uniforms, tick-major, node ascending.  Slot 0 is the
  timing draw (initial pick or colour change), slot 1 the initial-colour draw.
  Both are consumed every tick whether or not they are used.

Games in a batch are simulated together as stacked arrays; each game's
arithmetic is independent of its batch-mates, which makes results invariant
to chunking and worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .behavior import FEATURES, KIND_FEATURES, Color, DecisionKind, ModelBank
from .graphs import DEFAULT_MAX_DEGREE, Graph, Placement, Role, TopologySpec, generate, stackelberg_place

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
CHUNK = 512
_Z_CLIP = 700.0


def splitmix64(x: int) -> int:
    """SplitMix64 output function applied to ``x + golden gamma``."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(master_seed: int, index: int) -> int:
    """Seed of replication ``index``: the ``index+1``-th output of SplitMix64 seeded with ``master_seed``."""
    return splitmix64((master_seed + index * GOLDEN_GAMMA) & MASK64)


@dataclass(frozen=True)
class Baseline:
    """Majority / follow-the-leader players with calibration delay ``delay``."""

    delay: int = 0

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError("delay must be >= 0")


@dataclass(eq=False)
class GameConfig:
    graph: Graph
    roles: np.ndarray
    behavior: ModelBank | Baseline
    ticks: int = 60
    seed: int = 0
    max_degree: int = DEFAULT_MAX_DEGREE

    def __post_init__(self):
        self.roles = np.asarray(self.roles, dtype=np.int8)
        if self.ticks < 1:
            raise ValueError("ticks must be >= 1")
        if self.roles.shape != (self.graph.n,):
            raise ValueError("roles must have one entry per node")
        if isinstance(self.behavior, Baseline) and np.any(self.roles == Role.ADVERSARIAL):
            raise ValueError("baseline behaviour supports no adversaries")
        if not 0 <= self.seed <= MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class GameState:
    tick: int
    colors: tuple[int, ...]

    def __str__(self):
        return "".join("WRG"[c] for c in self.colors)


@dataclass(eq=False)
class GameTrace:
    seed: int
    graph: Graph
    roles: np.ndarray
    colors: np.ndarray  # (length, n) int8, row t = state at tick t
    consensus_tick: int | None
    consensus_color: Color | None

    @property
    def reached_consensus(self) -> bool:
        return self.consensus_tick is not None

    @property
    def states(self) -> list[GameState]:
        return [GameState(t, tuple(int(c) for c in row)) for t, row in enumerate(self.colors)]

    @property
    def final_colors(self) -> np.ndarray:
        return self.colors[-1]

    def to_record(self, game_id=None) -> dict:
        return {
            "game": game_id if game_id is not None else str(self.seed),
            "seed": self.seed,
            "n": self.graph.n,
            "edges": [list(e) for e in self.graph.edges],
            "roles": "".join(Role(r).code for r in self.roles),
            "outcome": "consensus" if self.reached_consensus else "none",
            "consensus_color": self.consensus_color.code if self.consensus_color else None,
            "tick_of_consensus": self.consensus_tick,
            "colors": ["".join("WRG"[c] for c in row) for row in self.colors.tolist()],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "GameTrace":
        graph = Graph.from_edges(int(rec["n"]), [tuple(e) for e in rec["edges"]])
        roles = np.array([Role.from_code(c) for c in rec["roles"]], dtype=np.int8)
        colors = np.array([[Color.from_code(c) for c in row] for row in rec["colors"]], dtype=np.int8)
        if colors.ndim != 2 or colors.shape[1] != graph.n or roles.shape != (graph.n,):
            raise ValueError("trace record shape does not match its graph")
        cc = rec.get("consensus_color")
        return cls(
            seed=int(rec.get("seed", 0)),
            graph=graph,
            roles=roles,
            colors=colors,
            consensus_tick=rec.get("tick_of_consensus"),
            consensus_color=Color.from_code(cc) if cc else None,
        )


def write_traces(path, traces: Iterable[GameTrace], ids: Iterable | None = None) -> None:
    ids = list(ids) if ids is not None else None
    with open(path, "w") as fh:
        for i, tr in enumerate(traces):
            fh.write(json.dumps(tr.to_record(ids[i] if ids else None), separators=(",", ":")) + "\n")


def read_traces(path) -> list[GameTrace]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(GameTrace.from_record(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed trace record ({exc})") from None
    return out


# ---------------------------------------------------------------------------
# vectorised kernel


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(z, -_Z_CLIP, _Z_CLIP)))


def _matvec(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.matmul(a, x[..., None])[..., 0]


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


class _Arena:
    """Per-batch static structure: adjacency split by visibility, slots, team mask."""

    def __init__(self, adj: np.ndarray, roles: np.ndarray, max_degree: int):
        self.roles = roles
        vis = roles == Role.VISIBLE
        a = adj.astype(float)
        self.a = a
        self.a_vis = a * vis[:, None, :]
        self.a_inv = a - self.a_vis
        self.n_vis = self.a_vis.sum(axis=2)
        self.n_inv = self.a_inv.sum(axis=2)
        self.has_vis = self.n_vis > 0
        self.slot = 2 * roles.astype(np.int64) + self.has_vis
        self.team = roles != Role.ADVERSARIAL
        self.vis = vis
        self.max_degree = max_degree

    def features(self, cur: np.ndarray) -> dict[str, np.ndarray]:
        red = (cur == Color.RED).astype(float)
        green = (cur == Color.GREEN).astype(float)
        is_red = cur == Color.RED
        f = {}
        for suffix, mat, size in (("inv", self.a_inv, self.n_inv), ("vis", self.a_vis, self.n_vis)):
            fr = _ratio(_matvec(mat, red), size)
            fg = _ratio(_matvec(mat, green), size)
            f[f"D_{suffix}"] = np.abs(fr - fg)
            f[f"N_{suffix}"] = size / self.max_degree
            f[f"G_{suffix}"] = fg
            f[f"R_{suffix}"] = fr
            f[f"O_{suffix}"] = np.where(is_red, fg, fr)
            f[f"C_{suffix}"] = np.where(is_red, fr, fg)
        return f


class _CompiledBank:
    def __init__(self, bank: ModelBank):
        self.params = {}
        for kind in DecisionKind:
            b, w = bank.arrays(kind)
            cols = [(FEATURES.index(name), name) for name in KIND_FEATURES[kind]]
            self.params[kind] = (b, w, cols)

    def prob(self, kind: DecisionKind, arena: _Arena, feats: dict[str, np.ndarray]) -> np.ndarray:
        b, w, cols = self.params[kind]
        z = b[arena.slot]
        for j, name in cols:
            z = z + w[arena.slot, j] * feats[name]
        return _sigmoid(z)


def _decide_learned(cur, arena: _Arena, bank: _CompiledBank, u: np.ndarray) -> np.ndarray:
    feats = arena.features(cur)
    p_pick = bank.prob(DecisionKind.INITIAL_TIMING, arena, feats)
    p_red = bank.prob(DecisionKind.INITIAL_COLOR, arena, feats)
    p_change = bank.prob(DecisionKind.CHANGE_TIMING, arena, feats)
    white = cur == Color.WHITE
    pick = white & (u[..., 0] < p_pick)
    first = np.where(u[..., 1] < p_red, Color.RED, Color.GREEN).astype(np.int8)
    flip = ~white & (u[..., 0] < p_change)
    new = cur.copy()
    new[pick] = first[pick]
    new[flip] = 3 - cur[flip]
    return new


def _decide_baseline(cur, arena: _Arena, tick: int, delay: int) -> np.ndarray:
    colored = cur != Color.WHITE
    red = (cur == Color.RED).astype(float)
    green = (cur == Color.GREEN).astype(float)
    tally_r = _matvec(arena.a, red) + red
    tally_g = _matvec(arena.a, green) + green
    majority = np.where(tally_r > tally_g, Color.RED, np.where(tally_g > tally_r, Color.GREEN, cur))
    leaders = (arena.a_vis > 0) & colored[:, None, :]
    has_leader = leaders.any(axis=2)
    first_leader = leaders.argmax(axis=2)
    leader_color = np.take_along_axis(cur, first_leader, axis=1)
    choice = np.where(has_leader, leader_color, majority).astype(np.int8)
    gate = arena.vis | arena.has_vis | (tick >= delay)
    return np.where(gate, choice, cur).astype(np.int8)


def _consensus(colors: np.ndarray, team: np.ndarray) -> np.ndarray:
    """Consensus colour per game (0 = none)."""
    out = np.zeros(colors.shape[0], dtype=np.int8)
    for c in (Color.RED, Color.GREEN):
        agree = np.all((colors == c) | ~team, axis=1) & team.any(axis=1)
        out[agree] = c
    return out


def _simulate_block(configs: Sequence[GameConfig]) -> list[GameTrace]:
    first = configs[0]
    n, ticks, behavior = first.graph.n, first.ticks, first.behavior
    B = len(configs)
    adj = np.stack([c.graph.adjacency_matrix() for c in configs])
    roles = np.stack([c.roles for c in configs])
    arena = _Arena(adj, roles, first.max_degree)
    colors = np.zeros((ticks + 1, B, n), dtype=np.int8)
    uniforms = np.empty((B, ticks, n, 2))
    for b, c in enumerate(configs):
        rng = np.random.default_rng(c.seed)
        if isinstance(behavior, Baseline):
            colors[0, b] = np.where(rng.random(n) < 0.5, Color.RED, Color.GREEN)
        uniforms[b] = rng.random((ticks, n, 2))
    compiled = _CompiledBank(behavior) if isinstance(behavior, ModelBank) else None

    done = np.full(B, -1)
    color_at = np.zeros(B, dtype=np.int8)
    c0 = _consensus(colors[0], arena.team)
    done[c0 > 0] = 0
    color_at[:] = c0
    for t in range(ticks):
        active = done < 0
        if not active.any():
            colors[t + 1 :] = colors[t]
            break
        cur = colors[t]
        if compiled is not None:
            new = _decide_learned(cur, arena, compiled, uniforms[:, t])
        else:
            new = _decide_baseline(cur, arena, t, behavior.delay)
        colors[t + 1] = np.where(active[:, None], new, cur)
        ct = _consensus(colors[t + 1], arena.team)
        hit = active & (ct > 0)
        done[hit] = t + 1
        color_at[hit] = ct[hit]

    traces = []
    for b, c in enumerate(configs):
        end = done[b] if done[b] >= 0 else ticks
        traces.append(
            GameTrace(
                seed=c.seed,
                graph=c.graph,
                roles=c.roles,
                colors=np.ascontiguousarray(colors[: end + 1, b]),
                consensus_tick=int(done[b]) if done[b] >= 0 else None,
                consensus_color=Color(int(color_at[b])) if done[b] >= 0 else None,
            )
        )
    return traces


def _check_homogeneous(configs: Sequence[GameConfig]) -> None:
    c0 = configs[0]
    for c in configs[1:]:
        if c.ticks != c0.ticks or c.behavior is not c0.behavior and c.behavior != c0.behavior:
            raise ValueError("configs in one simulation call must share behaviour and ticks")


def simulate(configs: Sequence[GameConfig]) -> list[GameTrace]:
    """Run many games sharing behaviour and tick budget; order of results follows ``configs``."""
    configs = list(configs)
    if not configs:
        return []
    _check_homogeneous(configs)
    out: list[GameTrace | None] = [None] * len(configs)
    groups: dict[tuple[int, int], list[int]] = {}
    for i, c in enumerate(configs):
        groups.setdefault((c.graph.n, c.max_degree), []).append(i)
    for idx in groups.values():
        for s in range(0, len(idx), CHUNK):
            part = idx[s : s + CHUNK]
            for i, tr in zip(part, _simulate_block([configs[i] for i in part])):
                out[i] = tr
    return out  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# single-game API


def check_consensus(colors, roles) -> Color | None:
    colors = np.asarray(colors)[None, :]
    team = (np.asarray(roles) != Role.ADVERSARIAL)[None, :]
    c = int(_consensus(colors, team)[0])
    return Color(c) if c else None


def initial_state(config: GameConfig, rng: np.random.Generator) -> GameState:
    n = config.graph.n
    if isinstance(config.behavior, Baseline):
        colors = np.where(rng.random(n) < 0.5, Color.RED, Color.GREEN)
    else:
        colors = np.zeros(n, dtype=np.int8)
    return GameState(0, tuple(int(c) for c in colors))


def step(state: GameState, config: GameConfig, rng: np.random.Generator) -> GameState:
    """Advance one tick synchronously, consuming ``2 * n`` uniforms from ``rng``."""
    if state.tick >= config.ticks:
        raise ValueError("game is already at its tick budget")
    n = config.graph.n
    u = rng.random((n, 2))
    arena = _Arena(config.graph.adjacency_matrix()[None], config.roles[None], config.max_degree)
    cur = np.array(state.colors, dtype=np.int8)[None]
    if isinstance(config.behavior, Baseline):
        new = _decide_baseline(cur, arena, state.tick, config.behavior.delay)
    else:
        new = _decide_learned(cur, arena, _CompiledBank(config.behavior), u[None])
    return GameState(state.tick + 1, tuple(int(c) for c in new[0]))


def run_game(config: GameConfig) -> GameTrace:
    return simulate([config])[0]


# ---------------------------------------------------------------------------
# batches


@dataclass(eq=False)
class Scenario:
    """Template for a batch: a fixed arena, or a topology plus role-placement recipe."""

    behavior: ModelBank | Baseline
    topology: TopologySpec | None = None
    graph: Graph | None = None
    roles: np.ndarray | None = None
    visible: int = 0
    adversaries: int = 0
    visible_placement: Placement = Placement.RANDOM
    adversary_placement: Placement = Placement.RANDOM
    ticks: int = 60
    max_degree: int = field(default=DEFAULT_MAX_DEGREE)

    def __post_init__(self):
        if (self.topology is None) == (self.graph is None):
            raise ValueError("scenario needs exactly one of topology or graph")

    def with_behavior(self, behavior) -> "Scenario":
        return replace(self, behavior=behavior)

    def realize(self, seed: int) -> GameConfig:
        """Game config for one replication; structure draws use the stream seeded by ``mix(seed, 0)``."""
        srng = np.random.default_rng(mix(seed, 0))
        graph = self.graph if self.graph is not None else generate(self.topology, srng)
        if self.roles is not None:
            roles = self.roles
        else:
            roles = stackelberg_place(
                graph, self.visible, self.adversaries, self.visible_placement, self.adversary_placement, srng
            )
        return GameConfig(graph, roles, self.behavior, self.ticks, seed, self.max_degree)


def replication_seeds(master_seed: int, replications: int, start: int = 0) -> list[int]:
    return [mix(master_seed, i) for i in range(start, start + replications)]


def _run_range(scenario: Scenario, seeds: list[int]) -> list[GameTrace]:
    return simulate([scenario.realize(s) for s in seeds])


def run_batch(
    scenario: Scenario, replications: int, master_seed: int, jobs: int = 1
) -> list[GameTrace]:
    """Replication ``i`` uses seed ``mix(master_seed, i)``; output order is by ``i``."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    seeds = replication_seeds(master_seed, replications)
    jobs = max(1, min(jobs, replications))
    if jobs == 1:
        return _run_range(scenario, seeds)
    size = -(-replications // jobs)
    parts = [seeds[i : i + size] for i in range(0, replications, size)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        results = pool.map(_run_range, [scenario] * len(parts), parts)
    return [tr for part in results for tr in part]
