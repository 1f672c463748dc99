"""Outcome measures aggregated over batches of game traces."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .behavior import Color
from .engine import GameTrace
from .graphs import Role, breaks_when_removed, pairwise_distances

Z95 = 1.959963984540054

SUMMARY_COLUMNS = ("topology", "n", "a", "v", "placement", "metric", "value", "ci_lo", "ci_hi", "replications")


@dataclass(frozen=True)
class Rate:
    value: float
    ci_lo: float
    ci_hi: float
    successes: int
    total: int


def wilson_interval(successes: int, total: int, z: float = Z95) -> tuple[float, float]:
    if total <= 0:
        raise ValueError("total must be positive")
    p = successes / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    # clamp so rounding never pushes the bounds past the estimate or out of [0, 1]
    return max(0.0, min(p, center - half)), min(1.0, max(p, center + half))


def rate(successes: int, total: int) -> Rate:
    lo, hi = wilson_interval(successes, total)
    return Rate(successes / total, lo, hi, successes, total)


def consensus_rate(traces: Sequence[GameTrace]) -> Rate:
    if not traces:
        raise ValueError("consensus_rate needs at least one trace")
    return rate(sum(t.reached_consensus for t in traces), len(traces))


def agreement_counts(traces: Iterable[GameTrace]) -> dict[int, tuple[int, int]]:
    """Per hop distance: (agreeing consensus-team pairs, all consensus-team pairs) at game end."""
    agree: dict[int, int] = {}
    total: dict[int, int] = {}
    for tr in traces:
        dist = pairwise_distances(tr.graph)
        team = np.flatnonzero(tr.roles != Role.ADVERSARIAL)
        final = tr.final_colors[team]
        d = dist[np.ix_(team, team)]
        iu = np.triu_indices(team.size, k=1)
        dd = d[iu]
        same = (final[iu[0]] == final[iu[1]]) & (final[iu[0]] != Color.WHITE)
        ok = dd > 0
        for k, hit in zip(dd[ok].tolist(), same[ok].tolist()):
            total[k] = total.get(k, 0) + 1
            agree[k] = agree.get(k, 0) + hit
    return {k: (agree[k], total[k]) for k in sorted(total)}


def agreement_by_distance(traces: Iterable[GameTrace], min_instances: int = 100) -> dict[int, float]:
    """Fraction of consensus-team pairs at each hop distance sharing a final non-white colour."""
    return {k: a / t for k, (a, t) in agreement_counts(traces).items() if t >= min_instances}


def color_changes(colors: np.ndarray) -> np.ndarray:
    """Red<->green flips per node over a ``(ticks, n)`` colour history."""
    prev, nxt = colors[:-1], colors[1:]
    return ((prev != Color.WHITE) & (nxt != Color.WHITE) & (prev != nxt)).sum(axis=0)


def color_changes_by_role(traces: Iterable[GameTrace]) -> dict[Role, float]:
    sums = {r: 0 for r in Role}
    counts = {r: 0 for r in Role}
    for tr in traces:
        changes = color_changes(tr.colors)
        for r in Role:
            mask = tr.roles == r
            sums[r] += int(changes[mask].sum())
            counts[r] += int(mask.sum())
    return {r: sums[r] / counts[r] for r in Role if counts[r]}


def breakage_flags(traces: Iterable[GameTrace]) -> list[bool]:
    return [breaks_when_removed(tr.graph, tr.roles) for tr in traces]


def breakage_rate(traces: Sequence[GameTrace]) -> Rate:
    if not traces:
        raise ValueError("breakage_rate needs at least one trace")
    return rate(sum(breakage_flags(traces)), len(traces))


@dataclass
class BatchSummary:
    consensus: Rate
    breakage: Rate
    mean_color_changes_by_role: dict[Role, float]
    agreement_by_distance: dict[int, float] = field(default_factory=dict)
    agreement_instances: dict[int, int] = field(default_factory=dict)


def summarize(traces: Sequence[GameTrace], min_instances: int = 100) -> BatchSummary:
    counts = agreement_counts(traces)
    kept = {k: v for k, v in counts.items() if v[1] >= min_instances}
    return BatchSummary(
        consensus=consensus_rate(traces),
        breakage=breakage_rate(traces),
        mean_color_changes_by_role=color_changes_by_role(traces),
        agreement_by_distance={k: a / t for k, (a, t) in kept.items()},
        agreement_instances={k: t for k, (_, t) in kept.items()},
    )


def summary_rows(cell: dict, summary: BatchSummary) -> list[dict]:
    """Long-format rows (one per metric) for the summary CSV."""
    base = {k: cell[k] for k in ("topology", "n", "a", "v", "placement")}
    reps = summary.consensus.total

    def row(metric, value, lo=None, hi=None):
        return {**base, "metric": metric, "value": value, "ci_lo": lo, "ci_hi": hi, "replications": reps}

    c, b = summary.consensus, summary.breakage
    rows = [row("consensus_rate", c.value, c.ci_lo, c.ci_hi), row("breakage_rate", b.value, b.ci_lo, b.ci_hi)]
    for role, mean in summary.mean_color_changes_by_role.items():
        rows.append(row(f"color_changes_{role.name.lower()}", mean))
    for k, frac in summary.agreement_by_distance.items():
        rows.append(row(f"agreement_d{k}", frac))
    return rows


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_csv(path, rows: Iterable[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c)) for c in columns])
