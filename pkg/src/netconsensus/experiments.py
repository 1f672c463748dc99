"""Campaign orchestration: expand configs into cells, run batches, build result tables."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import metrics
from .config import BaselineCampaign, BehaviorEntry, Campaign, FitCampaign, SweepCampaign, TuneCampaign
from .engine import Baseline, GameTrace, Scenario, run_batch
from .fitting import FitConfig, compare_banks, load_logs, refit_bank
from .graphs import Placement, avg_clustering
from .tuning import TuneConfig, TuneResult, coordinate_greedy

BASELINE_COLUMNS = ("D", "v", "rate", "ci_lo", "ci_hi", "replications")
SWEEP_COLUMNS = ("sweep", "parameter", "setting", "measured", "a", "v", "rate", "ci_lo", "ci_hi", "replications")


def _behavior(entry: BehaviorEntry):
    return Baseline(entry.delay) if entry.type == "baseline" else entry.load_bank()


@dataclass
class CellResult:
    cell: dict
    traces: list[GameTrace]
    summary: metrics.BatchSummary


def run_campaign(c: Campaign, jobs: int = 1) -> list[CellResult]:
    behavior = _behavior(c.behavior)
    out = []
    for cell in c.cells():
        vis_s, adv_s = cell["strategies"]
        scenario = Scenario(
            behavior,
            topology=cell["entry"].spec(cell["n"]),
            visible=cell["v"],
            adversaries=cell["a"],
            visible_placement=Placement(vis_s),
            adversary_placement=Placement(adv_s),
            ticks=c.ticks,
            max_degree=cell["entry"].max_degree,
        )
        traces = run_batch(scenario, c.replications, c.master_seed, jobs)
        out.append(CellResult(cell, traces, metrics.summarize(traces, c.min_instances)))
    return out


def campaign_rows(results: list[CellResult]) -> list[dict]:
    return [row for r in results for row in metrics.summary_rows(r.cell, r.summary)]


def run_baseline(c: BaselineCampaign, jobs: int = 1) -> list[dict]:
    """Consensus rate for every (D, v); v=0 runs with D=0 since the gate cannot open early."""
    spec = c.topology.spec(c.team_size)
    cache: dict[tuple[int, int], metrics.Rate] = {}
    rows = []
    for d in c.delays:
        for v in c.visible:
            eff = d if v > 0 else 0
            if (eff, v) not in cache:
                scenario = Scenario(
                    Baseline(eff), topology=spec, visible=v, ticks=c.ticks, max_degree=c.topology.max_degree
                )
                cache[eff, v] = metrics.consensus_rate(run_batch(scenario, c.replications, c.master_seed, jobs))
            r = cache[eff, v]
            rows.append({"D": d, "v": v, "rate": r.value, "ci_lo": r.ci_lo, "ci_hi": r.ci_hi,
                         "replications": r.total})  # fmt: skip
    return rows


def run_sweep(c: SweepCampaign, jobs: int = 1) -> list[dict]:
    """One row per (setting, a, v); ``measured`` is the realised structural parameter."""
    behavior = _behavior(c.behavior)
    param = c.parameter()
    rows = []
    for value in c.values:
        cast = int(value) if param == "m" else float(value)
        entry = replace(c.topology, **{param: cast})
        for a in c.adversaries:
            spec = entry.spec(c.team_size + a)
            for v in c.visible:
                scenario = Scenario(behavior, topology=spec, visible=v, adversaries=a, ticks=c.ticks,
                                    max_degree=entry.max_degree)  # fmt: skip
                traces = run_batch(scenario, c.replications, c.master_seed, jobs)
                r = metrics.consensus_rate(traces)
                if c.kind == "clustering":
                    measured = float(np.mean([avg_clustering(t.graph) for t in traces]))
                elif c.kind == "density":
                    measured = float(np.mean([2 * len(t.graph.edges) / t.graph.n for t in traces]))
                else:
                    measured = float(cast)
                rows.append({
                    "sweep": c.kind, "parameter": param, "setting": cast, "measured": measured,
                    "a": a, "v": v, "rate": r.value, "ci_lo": r.ci_lo, "ci_hi": r.ci_hi, "replications": r.total,
                })  # fmt: skip
    return rows


def run_tune(c: TuneCampaign, jobs: int = 1) -> tuple[TuneResult, TuneConfig]:
    bank = BehaviorEntry(bank=c.bank).load_bank()
    scenario = Scenario(
        bank,
        topology=c.topology.spec(c.team_size + c.adversaries),
        visible=c.visible,
        adversaries=c.adversaries,
        ticks=c.ticks,
        max_degree=c.topology.max_degree,
    )
    cfg = TuneConfig(
        epsilon=c.epsilon,
        scenario=scenario,
        passes=c.passes,
        grid_step=c.grid_step,
        candidate_range=c.candidate_range,
        reps_per_eval=c.replications,
        seed=c.master_seed,
        tune_intercepts=c.tune_intercepts,
        jobs=jobs,
    )
    return coordinate_greedy(cfg, bank), cfg


def run_fit(c: FitCampaign):
    logs = load_logs(c.logs, c.edges_dir)
    cfg = FitConfig(
        lambda_grid=tuple(c.lambda_grid),
        folds=c.folds,
        max_iters=c.max_iters,
        tolerance=c.tolerance,
        fixed_lambda=c.fixed_lambda,
    )
    bank, slots = refit_bank(logs, cfg, np.random.default_rng(c.master_seed))
    report = {"games": len(logs), "slots": [s.record() for s in slots]}
    if c.reference_bank is not None:
        reference = BehaviorEntry(bank=c.reference_bank).load_bank()
        report["comparison"] = compare_banks(bank, reference)
    return bank, report
