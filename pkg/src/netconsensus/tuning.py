"""Coordinate Greedy search over colour-change coefficients inside an l1 ball."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .behavior import ROLE_NAMES, DecisionKind, ModelBank, slot_features
from .engine import Scenario, run_batch
from .graphs import Role

INTERCEPT = "Intercept"

DEFAULT_TARGETS = tuple(
    (role, has_visible, DecisionKind.CHANGE_TIMING)
    for role in (Role.REGULAR, Role.VISIBLE)
    for has_visible in (False, True)
)

Coordinate = tuple[tuple[Role, bool, DecisionKind], str]


def project_l1(delta, epsilon: float) -> np.ndarray:
    """Euclidean projection onto ``{x : ||x||_1 <= epsilon}`` by sign-preserving soft thresholding."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    x = np.asarray(delta, dtype=float)
    a = np.abs(x)
    if a.sum() <= epsilon:
        return x.copy()
    if epsilon == 0:
        return np.zeros_like(x)
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    # index 0 always qualifies in exact arithmetic; a tiny epsilon can round it away
    hits = np.flatnonzero(u - (css - epsilon) / k > 0)
    rho = hits[-1] if hits.size else 0
    theta = (css[rho] - epsilon) / (rho + 1)
    return np.sign(x) * np.maximum(a - theta, 0.0)


def estimate_rate(bank: ModelBank, scenario: Scenario, reps: int, seed: int, jobs: int = 1) -> float:
    """Consensus rate over ``reps`` games; the same ``seed`` gives common random numbers."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    traces = run_batch(scenario.with_behavior(bank), reps, seed, jobs=jobs)
    return sum(t.reached_consensus for t in traces) / reps


@dataclass
class TuneConfig:
    epsilon: float
    scenario: Scenario | None = None
    passes: int = 1
    grid_step: float = 0.02
    candidate_range: float = 0.5
    reps_per_eval: int = 500
    seed: int = 0
    targets: Sequence[tuple[Role, bool, DecisionKind]] = DEFAULT_TARGETS
    tune_intercepts: bool = True
    jobs: int = 1

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be > 0")
        if self.reps_per_eval < 1:
            raise ValueError("reps_per_eval must be >= 1")
        if self.passes < 0:
            raise ValueError("passes must be >= 0")

    def coordinates(self) -> list[Coordinate]:
        """Tunable (slot, name) pairs; visible-side features are skipped in slots where they are always 0."""
        coords = []
        for slot in self.targets:
            role, has_visible, kind = slot
            names = ([INTERCEPT] if self.tune_intercepts else []) + list(slot_features(kind, has_visible))
            coords.extend(((Role(role), bool(has_visible), DecisionKind(kind)), n) for n in names)
        return coords

    def grid(self) -> np.ndarray:
        steps = int(round(self.candidate_range / self.grid_step))
        values = np.round(np.arange(-steps, steps + 1) * self.grid_step, 10)
        return np.array(sorted(values, key=lambda v: (abs(v), v)))


@dataclass
class TuneResult:
    delta: dict[Coordinate, float]
    objective_trace: list[float]
    baseline_rate: float
    final_rate: float
    bank: ModelBank | None = field(default=None, repr=False)

    def l1(self) -> float:
        return float(sum(abs(v) for v in self.delta.values()))

    def report(self, config: TuneConfig) -> dict:
        return {
            "epsilon": config.epsilon,
            "passes": config.passes,
            "grid_step": config.grid_step,
            "baseline_rate": self.baseline_rate,
            "final_rate": self.final_rate,
            "delta": [
                {
                    "role": ROLE_NAMES[slot[0]],
                    "has_visible": slot[1],
                    "decision": slot[2].value,
                    "feature": name,
                    "value": value,
                }
                for (slot, name), value in self.delta.items()
            ],
            "objective_trace": list(self.objective_trace),
        }


def apply_delta(bank: ModelBank, coords: Sequence[Coordinate], vec) -> ModelBank:
    per_slot: dict = {}
    for (slot, name), d in zip(coords, vec):
        if d != 0:
            per_slot.setdefault(slot, {})[name] = float(d)
    return bank.replace({slot: bank[slot].shifted(ch) for slot, ch in per_slot.items()})


def coordinate_greedy(
    config: TuneConfig,
    bank: ModelBank | None = None,
    evaluate: Callable[[np.ndarray], float] | None = None,
) -> TuneResult:
    """Greedy coordinate search over additive coefficient changes.

    Each pass visits every coordinate in order and tries every grid value for
    it, projecting the whole change vector onto the l1 ball before it is
    evaluated, so every evaluated point is feasible.  The best candidate is
    accepted only if it strictly beats the current estimate; among equal
    estimates the smaller change wins.  ``evaluate`` maps a change vector to
    an objective and defaults to the simulated consensus rate with common
    random numbers.
    """
    coords = config.coordinates()
    if evaluate is None:
        if bank is None or config.scenario is None:
            raise ValueError("need a bank and a scenario, or an explicit evaluate callable")

        def evaluate(vec):
            return estimate_rate(
                apply_delta(bank, coords, vec), config.scenario, config.reps_per_eval, config.seed, config.jobs
            )

    cache: dict[tuple, float] = {}

    def value(vec: np.ndarray) -> float:
        key = tuple(np.round(vec, 12).tolist())
        if key not in cache:
            cache[key] = float(evaluate(vec))
        return cache[key]

    delta = np.zeros(len(coords))
    current = value(delta)
    baseline = current
    trace = [current]
    grid = config.grid()
    for _ in range(config.passes):
        for i in range(len(coords)):
            best_vec, best_val = None, current
            for c in grid:
                cand = delta.copy()
                cand[i] = c
                cand = project_l1(cand, config.epsilon)
                if np.allclose(cand, delta, rtol=0, atol=1e-12):
                    continue
                v = value(cand)
                if v > best_val:
                    best_vec, best_val = cand, v
            if best_vec is not None:
                delta, current = best_vec, best_val
                trace.append(current)

    out = {coords[i]: float(delta[i]) for i in np.flatnonzero(delta)}
    return TuneResult(
        delta=out,
        objective_trace=trace,
        baseline_rate=baseline,
        final_rate=current,
        bank=apply_delta(bank, coords, delta) if bank is not None else None,
    )


def write_report(path, result: TuneResult, config: TuneConfig) -> None:
    with open(path, "w") as fh:
        json.dump(result.report(config), fh, indent=2)
        fh.write("\n")
