"""Recover behaviour models from game logs with l1-regularised logistic regression."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .behavior import (
    FEATURES,
    KIND_FEATURES,
    ROLE_NAMES,
    Color,
    DecisionKind,
    LogisticModel,
    ModelBank,
    all_slots,
)
from .engine import GameTrace, _Arena
from .graphs import DEFAULT_MAX_DEGREE, Graph, Role


@dataclass(eq=False)
class GameLog:
    game_id: str
    graph: Graph
    roles: np.ndarray
    colors: np.ndarray  # (ticks + 1, n)

    def __post_init__(self):
        self.roles = np.asarray(self.roles, dtype=np.int8)
        self.colors = np.asarray(self.colors, dtype=np.int8)
        if self.colors.ndim != 2 or self.colors.shape[1] != self.graph.n:
            raise ValueError(f"game {self.game_id}: colour history does not match graph size")
        colored = self.colors != Color.WHITE
        if np.any(colored[:-1] & ~colored[1:]):
            raise ValueError(f"game {self.game_id}: a node reverts to white")

    @classmethod
    def from_trace(cls, trace: GameTrace, game_id=None) -> "GameLog":
        return cls(str(game_id if game_id is not None else trace.seed), trace.graph, trace.roles, trace.colors)


def load_jsonl(path) -> list[GameLog]:
    logs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                logs.append(GameLog.from_trace(GameTrace.from_record(rec), rec.get("game")))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return logs


_ROLE_WORDS = {"regular": Role.REGULAR, "visible": Role.VISIBLE, "adversarial": Role.ADVERSARIAL}


def load_csv(path, edges_dir) -> list[GameLog]:
    """Long-format logs: columns game, tick, node, color, role, visible_flag.

    ``color`` is W/R/G; ``role`` is regular/visible/adversarial and a
    ``visible_flag`` of 1 marks a regular player as visible.  Each game's
    edges live in ``<edges_dir>/<game>.edges`` as ``u v`` lines.
    """
    rows: dict[str, list] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"game", "tick", "node", "color", "role", "visible_flag"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, rec in enumerate(reader, 2):
            try:
                role = _ROLE_WORDS[rec["role"].strip().lower()]
                if rec["visible_flag"].strip() in ("1", "true", "True") and role is Role.REGULAR:
                    role = Role.VISIBLE
                rows[rec["game"]].append(
                    (int(rec["tick"]), int(rec["node"]), Color.from_code(rec["color"].strip().upper()), role)
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    logs = []
    for game, entries in rows.items():
        n = max(e[1] for e in entries) + 1
        ticks = max(e[0] for e in entries) + 1
        colors = np.full((ticks, n), -1, dtype=np.int8)
        roles = np.full(n, -1, dtype=np.int8)
        for tick, node, color, role in entries:
            colors[tick, node] = color
            roles[node] = role
        if np.any(colors < 0):
            raise ValueError(f"{path}: game {game} has missing (tick, node) cells")
        graph = Graph.from_edge_list(n, (Path(edges_dir) / f"{game}.edges").read_text())
        logs.append(GameLog(game, graph, roles, colors))
    return logs


def load_logs(path, edges_dir=None) -> list[GameLog]:
    path = Path(path)
    if path.suffix == ".csv":
        if edges_dir is None:
            raise ValueError("CSV logs need an edge-list directory")
        return load_csv(path, edges_dir)
    return load_jsonl(path)


# ---------------------------------------------------------------------------
# training rows


@dataclass
class Rows:
    """Training rows for one model slot; ``X`` columns follow ``features``."""

    features: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    games: np.ndarray
    weight: np.ndarray | None = None

    def __len__(self):
        return len(self.y)

    def subset(self, mask) -> "Rows":
        w = None if self.weight is None else self.weight[mask]
        return Rows(self.features, self.X[mask], self.y[mask], self.games[mask], w)

    @property
    def w(self) -> np.ndarray:
        return np.ones(len(self.y)) if self.weight is None else self.weight


def _game_rows(log: GameLog, max_degree: int):
    """Feature arrays for every decision tick of one game: (ticks, n) per feature name."""
    arena = _Arena(log.graph.adjacency_matrix()[None], log.roles[None], max_degree)
    cur = log.colors[:-1]
    feats = arena.features(cur)
    return arena, {k: np.broadcast_to(v, cur.shape) for k, v in feats.items()}


def build_rows(
    logs: Sequence[GameLog],
    role: Role,
    has_visible: bool,
    kind: DecisionKind,
    max_degree: int = DEFAULT_MAX_DEGREE,
) -> Rows:
    """Hazard / choice rows for one (role, has_visible, kind) slot.

    A row at tick ``t`` holds the features of the state at ``t`` and the
    label says what the node did between ``t`` and ``t + 1``.
    """
    kind = DecisionKind(kind)
    names = KIND_FEATURES[kind]
    xs, ys, gs = [], [], []
    for gi, log in enumerate(logs):
        if len(log.colors) < 2:
            continue
        arena, feats = _game_rows(log, max_degree)
        node_ok = (log.roles == role) & (arena.has_vis[0] == has_visible)
        if not node_ok.any():
            continue
        cur, nxt = log.colors[:-1], log.colors[1:]
        white = cur == Color.WHITE
        if kind is DecisionKind.INITIAL_TIMING:
            mask, label = white, nxt != Color.WHITE
        elif kind is DecisionKind.INITIAL_COLOR:
            mask, label = white & (nxt != Color.WHITE), nxt == Color.RED
        else:
            mask, label = ~white, nxt != cur
        mask = mask & node_ok[None, :]
        if not mask.any():
            continue
        xs.append(np.column_stack([feats[f][mask] for f in names]))
        ys.append(label[mask])
        gs.append(np.full(int(mask.sum()), gi))
    if not xs:
        return Rows(names, np.zeros((0, len(names))), np.zeros(0, dtype=bool), np.zeros(0, dtype=int))
    return Rows(names, np.vstack(xs), np.concatenate(ys), np.concatenate(gs))


def compress(rows: Rows) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse duplicate feature vectors into (unique X, positive weight, negative weight)."""
    uniq, inv = np.unique(rows.X, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    w = rows.w
    pos = np.bincount(inv, weights=w * rows.y, minlength=len(uniq))
    neg = np.bincount(inv, weights=w * ~rows.y.astype(bool), minlength=len(uniq))
    return uniq, pos, neg


# ---------------------------------------------------------------------------
# l1-regularised logistic regression


def _softplus(z):
    return np.logaddexp(0.0, z)


class _Problem:
    """Mean weighted logistic loss over compressed rows; column 0 is the intercept."""

    def __init__(self, X, pos, neg):
        self.A = np.column_stack([np.ones(len(X)), X])
        self.pos, self.neg = pos, neg
        self.total = pos.sum() + neg.sum()

    def loss(self, w) -> float:
        z = self.A @ w
        return float((self.pos @ _softplus(-z) + self.neg @ _softplus(z)) / self.total)

    def grad(self, w) -> np.ndarray:
        z = self.A @ w
        p = 1.0 / (1.0 + np.exp(-z))
        r = (self.pos + self.neg) * p - self.pos
        return self.A.T @ r / self.total

    def lipschitz(self) -> float:
        c = (self.pos + self.neg) / self.total
        h = (self.A * c[:, None]).T @ self.A
        return 0.25 * float(np.linalg.eigvalsh(h)[-1])


def kkt_residual(problem: _Problem, w: np.ndarray, lam: float) -> np.ndarray:
    """Per-coordinate violation of the l1 optimality conditions (intercept first)."""
    g = problem.grad(w)
    res = np.empty_like(g)
    res[0] = abs(g[0])
    nz = w[1:] != 0
    res[1:] = np.where(nz, np.abs(g[1:] + lam * np.sign(w[1:])), np.maximum(np.abs(g[1:]) - lam, 0.0))
    return res


@dataclass
class FitResult:
    model: LogisticModel
    weights: np.ndarray
    iterations: int
    converged: bool
    objective_history: list[float] = field(default_factory=list)
    kkt: np.ndarray | None = None


def fit_l1_logistic_detailed(
    rows: Rows, lam: float, max_iters: int = 50_000, tol: float = 1e-8
) -> FitResult:
    """Monotone FISTA on mean logistic loss + ``lam * ||coefficients||_1``.

    Stops once every optimality residual is below ``tol``.
    """
    if len(rows) == 0:
        raise ValueError("no training rows")
    y = rows.y.astype(bool)
    if y.all() or not y.any():
        raise ValueError("training rows contain a single class")
    X, pos, neg = compress(rows)
    prob = _Problem(X, pos, neg)
    L = max(prob.lipschitz(), 1e-12)
    d = prob.A.shape[1]

    def objective(w):
        return prob.loss(w) + lam * np.abs(w[1:]).sum()

    def prox(v):
        out = v.copy()
        out[1:] = np.sign(v[1:]) * np.maximum(np.abs(v[1:]) - lam / L, 0.0)
        return out

    x = np.zeros(d)
    base = pos.sum() / (pos.sum() + neg.sum())
    x[0] = math.log(base / (1 - base))
    fx = objective(x)
    yk, t = x.copy(), 1.0
    history = [fx]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        z = prox(yk - prob.grad(yk) / L)
        fz = objective(z)
        if fz <= fx:
            x_prev, x, fx = x, z, fz
            t_next = (1 + math.sqrt(1 + 4 * t * t)) / 2
            yk = x + ((t - 1) / t_next) * (x - x_prev)
            t = t_next
        else:
            # momentum overshot: restart from the last accepted point
            yk, t = x.copy(), 1.0
        if it % 10 == 0:
            history.append(fx)
            if kkt_residual(prob, x, lam).max() <= tol:
                converged = True
                break
    names = rows.features
    model = LogisticModel(float(x[0]), {names[j]: float(x[j + 1]) for j in range(len(names))})
    return FitResult(model, x, it, converged, history, kkt_residual(prob, x, lam))


def fit_l1_logistic(rows: Rows, lam: float, max_iters: int = 50_000, tol: float = 1e-8) -> LogisticModel:
    return fit_l1_logistic_detailed(rows, lam, max_iters, tol).model


def mean_log_loss(model: LogisticModel, rows: Rows) -> float:
    z = model.intercept + sum(model.coef(f) * rows.X[:, j] for j, f in enumerate(rows.features))
    y = rows.y.astype(bool)
    w = rows.w
    return float((w * np.where(y, _softplus(-z), _softplus(z))).sum() / w.sum())


# ---------------------------------------------------------------------------
# model selection


@dataclass
class FitConfig:
    lambda_grid: Sequence[float] = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2)
    folds: int = 5
    max_iters: int = 50_000
    tolerance: float = 1e-8
    fixed_lambda: float | None = None
    max_degree: int = DEFAULT_MAX_DEGREE

    def __post_init__(self):
        if not self.lambda_grid:
            raise ValueError("lambda_grid must not be empty")
        if any(v <= 0 for v in self.lambda_grid):
            raise ValueError("lambda values must be positive")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


def cross_validate(rows: Rows, config: FitConfig, rng: np.random.Generator) -> tuple[float, dict[float, float]]:
    """K-fold by game; returns the largest lambda whose mean held-out loss ties the best.

    Two losses tie when they differ by less than one standard error of the best
    lambda's fold losses, so noise in the held-out estimate resolves toward sparsity.
    """
    grid = sorted(set(float(v) for v in config.lambda_grid))
    if len(grid) == 1:
        return grid[0], {grid[0]: float("nan")}
    games = np.unique(rows.games)
    if len(games) < config.folds:
        raise ValueError(f"need at least {config.folds} games for {config.folds}-fold CV, got {len(games)}")
    fold_of = dict(zip(rng.permutation(games).tolist(), np.arange(len(games)) % config.folds))
    fold = np.array([fold_of[g] for g in rows.games.tolist()])
    losses: dict[float, float] = {}
    errors: dict[float, float] = {}
    for lam in grid:
        scores = []
        for k in range(config.folds):
            train, test = rows.subset(fold != k), rows.subset(fold == k)
            if len(test) == 0:
                continue
            try:
                model = fit_l1_logistic(train, lam, config.max_iters, config.tolerance)
            except ValueError:
                model = _base_rate_model(train)
            scores.append(mean_log_loss(model, test))
        losses[lam] = float(np.mean(scores))
        errors[lam] = float(np.std(scores, ddof=1) / math.sqrt(len(scores))) if len(scores) > 1 else 0.0
    best = min(losses, key=lambda lam: (losses[lam], -lam))
    cutoff = losses[best] + errors[best] + 1e-12
    chosen = max(lam for lam, v in losses.items() if v <= cutoff)
    return chosen, losses


def _base_rate_model(rows: Rows) -> LogisticModel:
    if len(rows) == 0:
        return LogisticModel(0.0)
    w = rows.w
    p = (float((w * rows.y).sum()) + 0.5) / (float(w.sum()) + 1.0)
    return LogisticModel(math.log(p / (1 - p)))


@dataclass
class SlotFit:
    role: Role
    has_visible: bool
    kind: DecisionKind
    rows: int
    positives: int
    lam: float | None
    placeholder: bool
    converged: bool
    max_kkt: float | None
    cv_loss: dict[float, float] = field(default_factory=dict)

    def record(self) -> dict:
        return {
            "role": ROLE_NAMES[self.role],
            "has_visible": self.has_visible,
            "decision": self.kind.value,
            "rows": self.rows,
            "positives": self.positives,
            "lambda": self.lam,
            "placeholder": self.placeholder,
            "converged": self.converged,
            "max_kkt_residual": self.max_kkt,
            "cv_loss": {repr(k): v for k, v in self.cv_loss.items()},
        }


def refit_bank(
    logs: Sequence[GameLog], config: FitConfig, rng: np.random.Generator | None = None
) -> tuple[ModelBank, list[SlotFit]]:
    """Fit all 18 slots; slots without usable rows get a flagged base-rate placeholder."""
    rng = rng if rng is not None else np.random.default_rng(0)
    models = {}
    report = []
    for role, has_visible, kind in all_slots():
        rows = build_rows(logs, role, has_visible, kind, config.max_degree)
        positives = int(rows.y.sum())
        if len(rows) == 0 or positives in (0, len(rows)):
            models[(role, has_visible, kind)] = _base_rate_model(rows)
            report.append(SlotFit(role, has_visible, kind, len(rows), positives, None, True, False, None))
            continue
        # features that are structurally zero in this slot stay out of the fit
        live = [j for j, f in enumerate(rows.features) if has_visible or not f.endswith("_vis")]
        rows = Rows(tuple(rows.features[j] for j in live), rows.X[:, live], rows.y, rows.games)
        cv_loss: dict[float, float] = {}
        if config.fixed_lambda is not None:
            lam = float(config.fixed_lambda)
        else:
            lam, cv_loss = cross_validate(rows, config, rng)
        fit = fit_l1_logistic_detailed(rows, lam, config.max_iters, config.tolerance)
        models[(role, has_visible, kind)] = fit.model
        report.append(
            SlotFit(
                role, has_visible, kind, len(rows), positives, lam, False, fit.converged,
                float(fit.kkt.max()), cv_loss,
            )
        )  # fmt: skip
    return ModelBank(models), report


def compare_banks(fitted: ModelBank, reference: ModelBank, threshold: float = 0.5) -> dict:
    """Sign agreement on reference coefficients with ``|value| > threshold`` plus overall correlation."""
    ref_vals, fit_vals, checked, mismatches = [], [], 0, []
    for slot in all_slots():
        r, f = reference[slot], fitted[slot]
        for name in ("Intercept",) + FEATURES:
            rv = r.intercept if name == "Intercept" else r.coef(name)
            fv = f.intercept if name == "Intercept" else f.coef(name)
            if name != "Intercept" and name not in KIND_FEATURES[slot[2]]:
                continue
            ref_vals.append(rv)
            fit_vals.append(fv)
            if name != "Intercept" and abs(rv) > threshold:
                checked += 1
                if np.sign(rv) != np.sign(fv):
                    mismatches.append(
                        {"role": ROLE_NAMES[slot[0]], "has_visible": slot[1], "decision": slot[2].value,
                         "feature": name, "reference": rv, "fitted": fv}
                    )  # fmt: skip
    corr = float(np.corrcoef(ref_vals, fit_vals)[0, 1])
    return {"checked": checked, "sign_mismatches": mismatches, "correlation": corr}
