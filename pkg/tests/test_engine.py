from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netconsensus import metrics
from netconsensus.behavior import (
    Color,
    DecisionKind,
    LogisticModel,
    all_slots,
    baseline_gate,
    decide_follow_leader,
    decide_majority,
    decision_prob,
    paper_model_bank,
    sigmoid,
    zero_model_bank,
)
from netconsensus.engine import (
    MASK64,
    Baseline,
    GameConfig,
    GameState,
    GameTrace,
    Scenario,
    check_consensus,
    initial_state,
    mix,
    read_traces,
    run_batch,
    run_game,
    simulate,
    splitmix64,
    step,
    write_traces,
)
from netconsensus.graphs import Graph, Role, TopologySpec, er_probability, gen_er

R, G, W = Color.RED, Color.GREEN, Color.WHITE
BANK = paper_model_bank()


def complete(n):
    return Graph.from_edges(n, itertools.combinations(range(n), 2))


def reference_game(config: GameConfig) -> list[list[int]]:
    """Scalar re-implementation of the game loop built on the per-node behaviour API."""
    g, roles, n = config.graph, config.roles, config.graph.n
    rng = np.random.default_rng(config.seed)
    if isinstance(config.behavior, Baseline):
        colors = [R if x < 0.5 else G for x in rng.random(n)]
    else:
        colors = [W] * n
    u = rng.random((config.ticks, n, 2))
    history = [list(colors)]
    if check_consensus(colors, roles) is not None:
        return history
    for t in range(config.ticks):
        new = list(colors)
        for node in range(n):
            if isinstance(config.behavior, Baseline):
                if baseline_gate(node, roles, g, t, config.behavior.delay):
                    lead = decide_follow_leader(colors, g, roles, node)
                    new[node] = lead if lead is not None else decide_majority(colors, g, node)
            elif colors[node] == W:
                if u[t, node, 0] < decision_prob(config.behavior, colors, g, roles, node, DecisionKind.INITIAL_TIMING):
                    p_red = decision_prob(config.behavior, colors, g, roles, node, DecisionKind.INITIAL_COLOR)
                    new[node] = R if u[t, node, 1] < p_red else G
            elif u[t, node, 0] < decision_prob(config.behavior, colors, g, roles, node, DecisionKind.CHANGE_TIMING):
                new[node] = Color(colors[node]).opposite()
        colors = new
        history.append(list(colors))
        if check_consensus(colors, roles) is not None:
            break
    return history


def random_configs(count, seed, behavior=BANK, adversaries=True, ticks=60):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(3, 12))
        g = gen_er(TopologySpec("ER", n, p=0.4), rng)
        roles = rng.choice([0, 0, 0, 1, 2] if adversaries else [0, 0, 1], size=n).astype(np.int8)
        out.append(GameConfig(g, roles, behavior, ticks=ticks, seed=int(rng.integers(0, 2**63))))
    return out


# -- seeding ----------------------------------------------------------------------


def test_splitmix_reference_values():
    # first outputs of the SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert mix(0, 0) == 0xE220A8397B1DCDAF
    assert mix(0, 1) == 0x6E789E6AA1B965F4
    assert mix(0, 2) == 0x06C45D188009454F
    assert all(0 <= mix(s, i) <= MASK64 for s in (0, 1, MASK64) for i in range(5))


# -- kernel vs scalar reference ---------------------------------------------------------


def test_kernel_matches_scalar_reference_learned():
    configs = random_configs(60, 1)
    for cfg, tr in zip(configs, simulate(configs)):
        assert tr.colors.tolist() == reference_game(cfg)


def test_kernel_matches_scalar_reference_baseline():
    for delay in (0, 3):
        configs = random_configs(60, 2 + delay, behavior=Baseline(delay), adversaries=False)
        for cfg, tr in zip(configs, simulate(configs)):
            assert tr.colors.tolist() == reference_game(cfg)


def test_run_game_equals_step_loop():
    for cfg in random_configs(30, 3) + random_configs(10, 4, behavior=Baseline(2), adversaries=False):
        tr = run_game(cfg)
        rng = np.random.default_rng(cfg.seed)
        state = initial_state(cfg, rng)
        states = [state]
        while check_consensus(state.colors, cfg.roles) is None and state.tick < cfg.ticks:
            state = step(state, cfg, rng)
            states.append(state)
        assert [s.colors for s in tr.states] == [s.colors for s in states]


def test_batch_independent_of_chunking():
    configs = random_configs(40, 5)
    together = simulate(configs)
    alone = [run_game(c) for c in configs]
    for a, b in zip(together, alone):
        assert a.colors.tolist() == b.colors.tolist()


# -- game semantics -------------------------------------------------------------------


def test_never_reverts_to_white_and_consensus_absorbing():
    scen = Scenario(BANK, topology=TopologySpec("ER", 22, p=er_probability(5.1)), visible=2, adversaries=2)
    for tr in run_batch(scen, 500, 6):
        c = tr.colors
        assert not ((c[:-1] != W) & (c[1:] == W)).any()
        verdicts = [check_consensus(row, tr.roles) for row in c]
        if tr.reached_consensus:
            assert verdicts[-1] == tr.consensus_color
            assert all(v is None for v in verdicts[:-1])
            assert len(c) == tr.consensus_tick + 1
        else:
            assert all(v is None for v in verdicts)
            assert len(c) == 61


def test_check_consensus_examples():
    roles = [0, 0, 2, 1]
    assert check_consensus([R, R, G, R], roles) == R
    assert check_consensus([R, W, G, R], roles) is None
    assert check_consensus([R, G, R, R], roles) is None


def test_frozen_change_timing_gives_fixed_points():
    frozen = BANK.replace({k: LogisticModel(-1e6) for k in all_slots() if k[2] is DecisionKind.CHANGE_TIMING})
    rng = np.random.default_rng(7)
    g = gen_er(TopologySpec("ER", 15, p=0.3), rng)
    roles = np.zeros(15, dtype=np.int8)
    roles[:2] = Role.ADVERSARIAL
    cfg = GameConfig(g, roles, frozen, seed=1)
    for _ in range(50):
        state = GameState(0, tuple(int(c) for c in rng.choice([R, G], 15)))
        assert step(state, cfg, rng).colors == state.colors


def test_isolated_white_node_pick_probability():
    cfg = GameConfig(Graph.from_edges(1, []), [0], BANK, ticks=1)
    p = decision_prob(BANK, [W], cfg.graph, cfg.roles, 0, DecisionKind.INITIAL_TIMING)
    assert p == pytest.approx(0.1243, abs=1e-4)


def test_initial_pick_rate_matches_intercept():
    g = complete(3)
    cfgs = [GameConfig(g, [0, 0, 0], BANK, ticks=1, seed=mix(123, i)) for i in range(33_334)]
    picks = sum(int((tr.colors[1] != W).sum()) for tr in simulate(cfgs))
    rate = picks / (3 * len(cfgs))
    model = BANK[(Role.REGULAR, False, DecisionKind.INITIAL_TIMING)]
    assert model.coef("N_inv") == 0.0
    assert abs(rate - sigmoid(model.intercept)) < 0.01


def test_two_node_game_can_reach_consensus():
    g = Graph.from_edges(2, [(0, 1)])
    cfgs = [GameConfig(g, [0, 0], BANK, seed=mix(5, i)) for i in range(10_000)]
    assert sum(t.reached_consensus for t in simulate(cfgs)) > 0


def test_degenerate_unanimous_start():
    # a single baseline player is unanimous at tick 0
    tr = run_game(GameConfig(Graph.from_edges(1, []), [0], Baseline(), ticks=1, seed=3))
    assert tr.consensus_tick == 0 and len(tr.colors) == 1


def test_baseline_gate_holds_colours():
    # path 0-1-2-3-4 with visible node 0: nodes 2..4 are frozen while tick < D
    g = Graph.from_edges(5, [(i, i + 1) for i in range(4)])
    cfg = GameConfig(g, [1, 0, 0, 0, 0], Baseline(5), seed=0)
    state = GameState(2, (R, G, R, G, R))
    nxt = step(state, cfg, np.random.default_rng(0))
    assert nxt.colors[2:] == state.colors[2:]
    assert nxt.colors[1] == R


def test_config_validation():
    g = complete(3)
    with pytest.raises(ValueError):
        GameConfig(g, [0, 0, 0], BANK, ticks=0)
    with pytest.raises(ValueError):
        GameConfig(g, [0, 0, 2], Baseline())
    with pytest.raises(ValueError):
        GameConfig(g, [0, 0], BANK)
    with pytest.raises(ValueError):
        Baseline(-1)


def test_adversaries_change_colour_more_often():
    # same arenas for both roles: adversaries versus regular players in 10,000 games
    scen = Scenario(BANK, topology=TopologySpec("ER", 25, p=er_probability(5.1)), adversaries=5)
    traces = run_batch(scen, 10_000, 8)
    adv, reg = [], []
    for tr in traces:
        ch = metrics.color_changes(tr.colors)
        adv.extend(ch[tr.roles == Role.ADVERSARIAL].tolist())
        reg.extend(ch[tr.roles == Role.REGULAR].tolist())
    adv, reg = np.array(adv, float), np.array(reg, float)
    z = (adv.mean() - reg.mean()) / math.sqrt(adv.var() / adv.size + reg.var() / reg.size)
    assert z > 3


def test_zero_bank_flips_are_fair_coins():
    bank = zero_model_bank(0.0)
    cfgs = [GameConfig(complete(4), [0] * 4, bank, ticks=1, seed=mix(9, i)) for i in range(5000)]
    first = np.concatenate([t.colors[1] for t in simulate(cfgs)])
    assert abs((first != W).mean() - 0.5) < 0.02
    assert abs((first[first != W] == R).mean() - 0.5) < 0.02


# -- batches ----------------------------------------------------------------------------


def test_single_replication_is_run_game():
    scen = Scenario(BANK, topology=TopologySpec("ER", 20, p=er_probability(5.1)), visible=1)
    (tr,) = run_batch(scen, 1, 77)
    alone = run_game(scen.realize(mix(77, 0)))
    assert tr.colors.tolist() == alone.colors.tolist()
    assert tr.seed == mix(77, 0)


def test_different_master_seeds_differ():
    scen = Scenario(BANK, topology=TopologySpec("ER", 20, p=er_probability(5.1)))
    a = run_batch(scen, 20, 1)
    b = run_batch(scen, 20, 2)
    assert any(x.colors.tolist() != y.colors.tolist() for x, y in zip(a, b))


def test_parallel_batch_identical(tmp_path):
    scen = Scenario(BANK, topology=TopologySpec("BA", 22, m=3), visible=2, adversaries=2)
    serial = run_batch(scen, 60, 4, jobs=1)
    parallel = run_batch(scen, 60, 4, jobs=3)
    write_traces(tmp_path / "a.jsonl", serial)
    write_traces(tmp_path / "b.jsonl", parallel)
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_batch_rejects_zero_replications():
    scen = Scenario(BANK, topology=TopologySpec("ER", 20, p=0.3))
    with pytest.raises(ValueError):
        run_batch(scen, 0, 1)


def test_fixed_arena_scenario():
    g = complete(4)
    scen = Scenario(BANK, graph=g, roles=np.array([0, 1, 0, 2], dtype=np.int8))
    for tr in run_batch(scen, 5, 3):
        assert tr.graph == g and tr.roles.tolist() == [0, 1, 0, 2]


# -- trace I/O -------------------------------------------------------------------------


def test_trace_roundtrip(tmp_path):
    scen = Scenario(BANK, topology=TopologySpec("ER", 22, p=0.25), visible=1, adversaries=2)
    traces = run_batch(scen, 30, 12)
    path = tmp_path / "t.jsonl"
    write_traces(path, traces)
    back = read_traces(path)
    for a, b in zip(traces, back):
        assert a.colors.tolist() == b.colors.tolist()
        assert a.roles.tolist() == b.roles.tolist()
        assert a.graph == b.graph
        assert (a.consensus_tick, a.consensus_color) == (b.consensus_tick, b.consensus_color)
    rec = json.loads(path.read_text().splitlines()[0])
    assert set(rec) >= {"seed", "outcome", "tick_of_consensus", "colors"}


def test_malformed_trace_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = run_batch(Scenario(BANK, topology=TopologySpec("ER", 20, p=0.3)), 1, 1)[0]
    path.write_text(json.dumps(good.to_record()) + "\n" + '{"n": 2}\n')
    with pytest.raises(ValueError, match=":2:"):
        read_traces(path)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, MASK64), st.integers(0, 1000))
def test_state_string(seed, _):
    cfg = GameConfig(complete(3), [0, 1, 2], BANK, ticks=5, seed=seed)
    tr = run_game(cfg)
    for s in tr.states:
        assert set(str(s)) <= set("WRG") and len(str(s)) == 3
    assert isinstance(tr, GameTrace)
